// Copyright Contributors to the blursplat Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace blursplat {

/// Runs fn(i) for i in [0, count) on up to `workers` threads. Items are handed
/// out dynamically, so callers must make fn(i) write only to slot i for the
/// result to be independent of the worker count.
template <typename Fn>
void parallelFor(std::size_t count, int workers, Fn &&fn) {
    const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), count);
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i)
            fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex errorMutex;
    auto body = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(errorMutex);
                if (!error)
                    error = std::current_exception();
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        pool.reserve(threads - 1);
        for (std::size_t t = 1; t < threads; ++t)
            pool.emplace_back(body);
        body();
    }
    if (error)
        std::rethrow_exception(error);
}

} // namespace blursplat
