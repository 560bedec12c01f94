#pragma once

// Fixed-size pool that splits an index range into one static chunk per thread.
// Chunk boundaries depend only on (n, size()), so any reduction done by the
// caller over per-index results is independent of scheduling.

#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

namespace gpi {

class ThreadPool {
public:
    explicit ThreadPool(std::size_t threads = 1) {
        if (threads == 0) threads = 1;
        workers_.reserve(threads - 1);
        for (std::size_t i = 1; i < threads; ++i) workers_.emplace_back([this, i] { worker_loop(i); });
    }

    ThreadPool(const ThreadPool&) = delete;
    ThreadPool& operator=(const ThreadPool&) = delete;

    ~ThreadPool() {
        {
            std::lock_guard lock(mutex_);
            stop_ = true;
        }
        wake_.notify_all();
        for (auto& w : workers_) w.join();
    }

    [[nodiscard]] std::size_t size() const noexcept { return workers_.size() + 1; }

    /// Calls fn(begin, end) over a partition of [0, n); blocks until all chunks finish.
    void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
        if (workers_.empty() || n < 2) {
            if (n > 0) fn(0, n);
            return;
        }
        {
            std::lock_guard lock(mutex_);
            job_ = &fn;
            n_ = n;
            pending_ = workers_.size();
            error_ = nullptr;
            ++generation_;
        }
        wake_.notify_all();
        std::exception_ptr local;
        try {
            auto [b, e] = chunk(0, n);
            if (b < e) fn(b, e);
        } catch (...) {
            local = std::current_exception();
        }
        std::unique_lock lock(mutex_);
        done_.wait(lock, [this] { return pending_ == 0; });
        job_ = nullptr;
        if (local) std::rethrow_exception(local);
        if (error_) std::rethrow_exception(error_);
    }

private:
    [[nodiscard]] std::pair<std::size_t, std::size_t> chunk(std::size_t index, std::size_t n) const noexcept {
        const std::size_t parts = size();
        const std::size_t base = n / parts, extra = n % parts;
        const std::size_t begin = index * base + std::min(index, extra);
        return {begin, begin + base + (index < extra ? 1 : 0)};
    }

    void worker_loop(std::size_t index) {
        std::size_t seen = 0;
        for (;;) {
            const std::function<void(std::size_t, std::size_t)>* job = nullptr;
            std::size_t n = 0;
            {
                std::unique_lock lock(mutex_);
                wake_.wait(lock, [&] { return stop_ || generation_ != seen; });
                if (stop_) return;
                seen = generation_;
                job = job_;
                n = n_;
            }
            std::exception_ptr err;
            try {
                auto [b, e] = chunk(index, n);
                if (b < e) (*job)(b, e);
            } catch (...) {
                err = std::current_exception();
            }
            std::lock_guard lock(mutex_);
            if (err && !error_) error_ = err;
            if (--pending_ == 0) done_.notify_one();
        }
    }

    std::vector<std::thread> workers_;
    std::mutex mutex_;
    std::condition_variable wake_;
    std::condition_variable done_;
    const std::function<void(std::size_t, std::size_t)>* job_ = nullptr;
    std::size_t n_ = 0;
    std::size_t pending_ = 0;
    std::size_t generation_ = 0;
    std::exception_ptr error_;
    bool stop_ = false;
};

}  // namespace gpi
