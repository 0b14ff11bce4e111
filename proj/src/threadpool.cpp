#include "rmap/threadpool.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace rmap {
namespace {

std::size_t resolve_worker_count() {
    std::size_t n = std::thread::hardware_concurrency();
    if (n == 0) n = 1;
    if (const char* env = std::getenv("RMAP_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && v >= 1) n = std::min<std::size_t>(n, static_cast<std::size_t>(v));
    }
    return n;
}

// Persistent pool; workers sleep between jobs. Callers serialize on job_mu_,
// which matches how the tensor engine issues kernels (one at a time).
class Pool {
public:
    Pool() : count_(resolve_worker_count()) {
        for (std::size_t i = 1; i < count_; ++i) {
            threads_.emplace_back([this] { worker_loop(); });
        }
    }

    ~Pool() {
        {
            std::lock_guard lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    std::size_t size() const { return count_; }

    void run(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
        if (n == 0) return;
        if (count_ <= 1 || n == 1) {
            fn(0, n);
            return;
        }
        std::lock_guard job_lk(job_mu_);
        job_fn_ = &fn;
        job_n_ = n;
        chunk_ = (n + count_ - 1) / count_;
        next_chunk_.store(0, std::memory_order_relaxed);
        first_error_ = nullptr;
        {
            std::lock_guard lk(mu_);
            pending_ = static_cast<int>(threads_.size());
            ++epoch_;
        }
        cv_.notify_all();
        run_chunks();
        {
            std::unique_lock lk(mu_);
            done_cv_.wait(lk, [this] { return pending_ == 0; });
        }
        job_fn_ = nullptr;
        if (first_error_) std::rethrow_exception(first_error_);
    }

private:
    void worker_loop() {
        std::uint64_t seen = 0;
        for (;;) {
            {
                std::unique_lock lk(mu_);
                cv_.wait(lk, [&] { return stop_ || epoch_ != seen; });
                if (stop_) return;
                seen = epoch_;
            }
            run_chunks();
            {
                std::lock_guard lk(mu_);
                if (--pending_ == 0) done_cv_.notify_all();
            }
        }
    }

    void run_chunks() {
        for (;;) {
            const std::size_t i = next_chunk_.fetch_add(1, std::memory_order_relaxed);
            const std::size_t begin = i * chunk_;
            if (begin >= job_n_) break;
            const std::size_t end = std::min(job_n_, begin + chunk_);
            try {
                (*job_fn_)(begin, end);
            } catch (...) {
                std::lock_guard lk(mu_);
                if (!first_error_) first_error_ = std::current_exception();
            }
        }
    }

    const std::size_t count_;
    std::vector<std::thread> threads_;

    std::mutex job_mu_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    std::uint64_t epoch_ = 0;
    int pending_ = 0;
    bool stop_ = false;

    const std::function<void(std::size_t, std::size_t)>* job_fn_ = nullptr;
    std::size_t job_n_ = 0;
    std::size_t chunk_ = 1;
    std::atomic<std::size_t> next_chunk_{0};
    std::exception_ptr first_error_;
};

Pool& pool() {
    static Pool p;
    return p;
}

}  // namespace

std::size_t worker_count() { return pool().size(); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
    pool().run(n, fn);
}

}  // namespace rmap
