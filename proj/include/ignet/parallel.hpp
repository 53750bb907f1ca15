#pragma once

// Persistent worker pool. Workers are created once and sleep between stages;
// a stage wakes all of them at the same moment, each processes a static block
// of item indices, and the caller returns only after the last one is done.

#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "error.hpp"

namespace ignet {

// Item range [begin, end) handled by one worker under static block partitioning.
struct BlockRange {
    std::size_t begin = 0;
    std::size_t end = 0;
};

inline BlockRange block_range(std::size_t item_count, std::size_t worker_count, std::size_t worker)
{
    const std::size_t base = item_count / worker_count;
    const std::size_t extra = item_count % worker_count;
    const std::size_t begin = worker * base + (worker < extra ? worker : extra);
    return {begin, begin + base + (worker < extra ? 1 : 0)};
}

namespace detail {
inline thread_local bool inside_worker = false;
}

class WorkerPool {
public:
    // worker_count 0 selects the hardware concurrency.
    explicit WorkerPool(std::size_t worker_count = 1)
    {
        if (worker_count == 0) {
            worker_count = std::thread::hardware_concurrency();
            if (worker_count == 0)
                worker_count = 1;
        }
        stage_counts_.assign(worker_count, 0);
        thread_ids_.resize(worker_count);
        if (worker_count == 1) {
            thread_ids_[0] = std::this_thread::get_id();
            return;
        }
        threads_.reserve(worker_count);
        for (std::size_t w = 0; w < worker_count; ++w)
            threads_.emplace_back([this, w] { worker_loop(w); });
        std::unique_lock lock(mutex_);
        started_cv_.wait(lock, [this] { return started_ == threads_.size(); });
    }

    WorkerPool(const WorkerPool&) = delete;
    WorkerPool& operator=(const WorkerPool&) = delete;

    ~WorkerPool()
    {
        {
            std::lock_guard lock(mutex_);
            shutdown_ = true;
            ++generation_;
        }
        wake_cv_.notify_all();
        for (auto& t : threads_)
            t.join();
    }

    std::size_t worker_count() const { return stage_counts_.size(); }

    // Stages each worker has taken part in (observable proof of reuse).
    std::size_t stages_run(std::size_t worker) const
    {
        std::lock_guard lock(mutex_);
        return stage_counts_.at(worker);
    }

    std::thread::id worker_id(std::size_t worker) const
    {
        std::lock_guard lock(mutex_);
        return thread_ids_.at(worker);
    }

    // Runs work(i) for every i in [0, item_count) exactly once and waits for all
    // workers. work(i) must write only the output owned by item i. If any item
    // throws, the remaining items of that worker are skipped and a StageError is
    // raised after the barrier. Calls from inside a worker run inline.
    void execute_stage(std::size_t item_count, const std::function<void(std::size_t)>& work)
    {
        if (item_count == 0)
            return;
        if (threads_.empty() || detail::inside_worker) {
            if (threads_.empty()) {
                std::lock_guard lock(mutex_);
                ++stage_counts_[0];
            }
            for (std::size_t i = 0; i < item_count; ++i)
                work(i);
            return;
        }

        std::lock_guard stage_lock(stage_mutex_);
        {
            std::lock_guard lock(mutex_);
            work_ = &work;
            item_count_ = item_count;
            pending_ = threads_.size();
            failure_ = nullptr;
            ++generation_;
        }
        wake_cv_.notify_all();

        std::unique_lock lock(mutex_);
        done_cv_.wait(lock, [this] { return pending_ == 0; });
        work_ = nullptr;
        if (failure_) {
            std::exception_ptr failure = failure_;
            failure_ = nullptr;
            lock.unlock();
            try {
                std::rethrow_exception(failure);
            } catch (const std::exception& e) {
                throw StageError(std::string("worker failed: ") + e.what());
            } catch (...) {
                throw StageError("worker failed with a non-standard exception");
            }
        }
    }

private:
    void worker_loop(std::size_t index)
    {
        detail::inside_worker = true;
        std::size_t seen = 0;
        {
            std::lock_guard lock(mutex_);
            thread_ids_[index] = std::this_thread::get_id();
            seen = generation_;
            ++started_;
        }
        started_cv_.notify_all();

        for (;;) {
            const std::function<void(std::size_t)>* work = nullptr;
            std::size_t count = 0;
            {
                std::unique_lock lock(mutex_);
                wake_cv_.wait(lock, [&] { return generation_ != seen; });
                seen = generation_;
                if (shutdown_)
                    return;
                work = work_;
                count = item_count_;
                ++stage_counts_[index];
            }

            std::exception_ptr failure;
            const BlockRange range = block_range(count, threads_.size(), index);
            try {
                for (std::size_t i = range.begin; i < range.end; ++i)
                    (*work)(i);
            } catch (...) {
                failure = std::current_exception();
            }

            {
                std::lock_guard lock(mutex_);
                if (failure && !failure_)
                    failure_ = failure;
                --pending_;
                if (pending_ == 0)
                    done_cv_.notify_one();
            }
        }
    }

    mutable std::mutex mutex_;
    std::mutex stage_mutex_;
    std::condition_variable wake_cv_;
    std::condition_variable done_cv_;
    std::condition_variable started_cv_;
    std::vector<std::thread> threads_;
    std::vector<std::size_t> stage_counts_;
    std::vector<std::thread::id> thread_ids_;
    const std::function<void(std::size_t)>* work_ = nullptr;
    std::size_t item_count_ = 0;
    std::size_t pending_ = 0;
    std::size_t generation_ = 0;
    std::size_t started_ = 0;
    std::exception_ptr failure_;
    bool shutdown_ = false;
};

// Runs work over [0, item_count) on pool, or serially when pool is null.
inline void execute_stage(WorkerPool* pool, std::size_t item_count,
                          const std::function<void(std::size_t)>& work)
{
    if (pool) {
        pool->execute_stage(item_count, work);
        return;
    }
    for (std::size_t i = 0; i < item_count; ++i)
        work(i);
}

} // namespace ignet
