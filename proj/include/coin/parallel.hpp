// Copyright Contributors to the coinsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace coin {

/// Fixed-size worker pool running index-parallel loops. Work items are
/// claimed dynamically, so callers must make each index write only its own
/// outputs; results are then independent of thread count and scheduling.
class ThreadPool {
public:
    explicit ThreadPool(int threads = 1) : size_(std::max(threads, 1)) {
        for (int i = 1; i < size_; ++i) {
            workers_.emplace_back([this] { worker_loop(); });
        }
    }

    ThreadPool(const ThreadPool&) = delete;
    ThreadPool& operator=(const ThreadPool&) = delete;

    ~ThreadPool() {
        {
            std::lock_guard lock(mutex_);
            stopping_ = true;
        }
        wake_.notify_all();
        for (auto& w : workers_) {
            w.join();
        }
    }

    int size() const { return size_; }

    /// Calls fn(i) for i in [0, n). Blocks until done; rethrows the first
    /// exception raised by any item.
    void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
        if (n == 0) {
            return;
        }
        if (size_ == 1 || n == 1) {
            for (std::size_t i = 0; i < n; ++i) {
                fn(i);
            }
            return;
        }
        std::unique_lock lock(mutex_);
        job_ = &fn;
        job_size_ = n;
        next_.store(0);
        pending_workers_ = static_cast<int>(workers_.size());
        error_ = nullptr;
        ++generation_;
        lock.unlock();
        wake_.notify_all();

        run_items();

        lock.lock();
        done_.wait(lock, [this] { return pending_workers_ == 0; });
        job_ = nullptr;
        if (error_) {
            std::rethrow_exception(error_);
        }
    }

private:
    void run_items() {
        for (;;) {
            const std::size_t i = next_.fetch_add(1);
            if (i >= job_size_) {
                return;
            }
            try {
                (*job_)(i);
            } catch (...) {
                std::lock_guard lock(error_mutex_);
                if (!error_) {
                    error_ = std::current_exception();
                }
                next_.store(job_size_);
            }
        }
    }

    void worker_loop() {
        std::uint64_t seen = 0;
        for (;;) {
            {
                std::unique_lock lock(mutex_);
                wake_.wait(lock, [&] { return stopping_ || generation_ != seen; });
                if (stopping_) {
                    return;
                }
                seen = generation_;
            }
            run_items();
            {
                std::lock_guard lock(mutex_);
                --pending_workers_;
            }
            done_.notify_one();
        }
    }

    int size_;
    std::vector<std::thread> workers_;
    std::mutex mutex_;
    std::mutex error_mutex_;
    std::condition_variable wake_;
    std::condition_variable done_;
    const std::function<void(std::size_t)>* job_ = nullptr;
    std::size_t job_size_ = 0;
    std::atomic<std::size_t> next_{0};
    int pending_workers_ = 0;
    std::uint64_t generation_ = 0;
    bool stopping_ = false;
    std::exception_ptr error_;
};

/// Thread count from COIN_THREADS, falling back to 1.
inline int default_thread_count() {
    if (const char* env = std::getenv("COIN_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n >= 1) {
                return n;
            }
        } catch (...) {
        }
    }
    return 1;
}

} // namespace coin
