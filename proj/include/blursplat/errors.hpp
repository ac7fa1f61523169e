// Copyright Contributors to the blursplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace blursplat {

/// Bad argument to a library call (shape mismatch, out-of-range scalar, ...).
class InvalidArgument : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// log_se3 was asked to invert a rotation too close to angle pi.
class SingularityError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

/// Missing or inconsistent training/evaluation data.
class InvalidInput : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class UnsupportedFormat : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed text record. Carries the 1-based line number.
class ParseError : public std::runtime_error {
  public:
    ParseError(const std::string &file, std::size_t line, const std::string &what)
        : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), mLine(line) {}

    std::size_t line() const noexcept { return mLine; }

  private:
    std::size_t mLine;
};

/// A loss or gradient became non-finite. `observation` is the offending
/// training image index, or -1 when not tied to one.
class NumericalError : public std::runtime_error {
  public:
    NumericalError(const std::string &what, long observation = -1)
        : std::runtime_error(what), mObservation(observation) {}

    long observation() const noexcept { return mObservation; }

  private:
    long mObservation;
};

} // namespace blursplat
