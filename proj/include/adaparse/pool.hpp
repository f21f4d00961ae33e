#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

#include "adaparse/parsers.hpp"

// Bounded worker pool for one parser. Warm workers initialize once per
// worker lifetime and serve many documents; cold ones pay initialization
// per document. A crashing worker respawns, retries the in-flight document
// once, and reports it failed on the second crash. Submissions block on a
// full queue (backpressure); no result is ever dropped.

namespace adaparse::parsers {

struct PoolStats {
  std::uint64_t initializations = 0;
  std::uint64_t submitted = 0;
  std::uint64_t served = 0;
  std::uint64_t retried = 0;
  std::uint64_t failed_after_retry = 0;
  std::uint64_t peak_in_flight = 0;
};

class ParserPool {
 public:
  using Callback = std::function<void(ParseResult)>;

  ParserPool(ParserProfile profile, std::size_t workers,
             std::size_t queue_capacity = 128)
      : profile_(std::move(profile)),
        queue_capacity_(queue_capacity ? queue_capacity : 1) {
    if (workers == 0) throw std::invalid_argument("pool needs >= 1 worker");
    profile_.validate();
    threads_.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
      threads_.emplace_back([this] { worker_loop(); });
  }

  ParserPool(const ParserPool&) = delete;
  ParserPool& operator=(const ParserPool&) = delete;

  ~ParserPool() { close(); }

  const ParserProfile& profile() const { return profile_; }
  std::size_t worker_count() const { return threads_.size(); }
  std::size_t queue_capacity() const { return queue_capacity_; }

  // Blocks while the queue is at capacity. Throws after close().
  void submit(const corpus::DocumentRecord* doc, Callback done) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock,
                   [this] { return queue_.size() < queue_capacity_ || closed_; });
    if (closed_) throw std::runtime_error("pool is closed");
    queue_.push_back(Task{doc, std::move(done), 0});
    ++stats_.submitted;
    ++in_flight_;
    stats_.peak_in_flight = std::max<std::uint64_t>(stats_.peak_in_flight, in_flight_);
    lock.unlock();
    not_empty_.notify_one();
  }

  // Asks one worker to crash on its next document (fault injection).
  void kill_worker() { pending_kills_.fetch_add(1); }

  void wait_idle() {
    std::unique_lock lock(mu_);
    idle_.wait(lock, [this] { return in_flight_ == 0; });
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      if (closed_) return;
      closed_ = true;
    }
    not_empty_.notify_all();
    not_full_.notify_all();
    for (auto& t : threads_)
      if (t.joinable()) t.join();
  }

  PoolStats stats() const {
    std::lock_guard lock(mu_);
    return stats_;
  }

 private:
  struct Task {
    const corpus::DocumentRecord* doc;
    Callback done;
    int attempts;
  };

  void initialize_worker() {
    if (profile_.init_ms > 0.0) detail::spin_for(profile_.init_ms);
    std::lock_guard lock(mu_);
    ++stats_.initializations;
  }

  void worker_loop() {
    if (profile_.warm_start) initialize_worker();
    for (;;) {
      Task task;
      {
        std::unique_lock lock(mu_);
        not_empty_.wait(lock, [this] { return !queue_.empty() || closed_; });
        if (queue_.empty()) {
          if (closed_) return;
          continue;
        }
        task = std::move(queue_.front());
        queue_.pop_front();
      }
      not_full_.notify_one();

      if (!profile_.warm_start) initialize_worker();

      bool crashed = false;
      ParseResult result;
      int kills = pending_kills_.load();
      while (kills > 0 &&
             !pending_kills_.compare_exchange_weak(kills, kills - 1)) {
      }
      if (kills > 0) {
        crashed = true;  // externally injected fault
      } else {
        try {
          result = parse(profile_, *task.doc);
        } catch (const ParserCrash&) {
          crashed = true;
        } catch (const std::exception& e) {
          result.doc_id = task.doc->doc_id;
          result.parser_id = profile_.parser_id;
          result.status = ParseStatus::failed;
          log_note(std::string("pool: unexpected parser error: ") + e.what());
        }
      }

      if (crashed) {
        // Respawn: a warm worker reloads its state before carrying on.
        if (profile_.warm_start) initialize_worker();
        bool retry = task.attempts == 0;
        {
          std::lock_guard lock(mu_);
          if (retry) {
            ++stats_.retried;
            // Retries bypass the capacity gate; blocking here could wedge
            // every worker against a full queue.
            queue_.push_back(Task{task.doc, std::move(task.done), 1});
          }
        }
        if (retry) {
          not_empty_.notify_one();
          continue;
        }
        result = ParseResult{};
        result.doc_id = task.doc->doc_id;
        result.parser_id = profile_.parser_id;
        result.status = ParseStatus::failed;
        std::lock_guard lock(mu_);
        ++stats_.failed_after_retry;
      }

      if (task.done) task.done(std::move(result));
      {
        std::lock_guard lock(mu_);
        ++stats_.served;
        --in_flight_;
      }
      idle_.notify_all();
    }
  }

  ParserProfile profile_;
  const std::size_t queue_capacity_;

  mutable std::mutex mu_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
  std::condition_variable idle_;
  std::deque<Task> queue_;
  std::uint64_t in_flight_ = 0;
  bool closed_ = false;
  PoolStats stats_;
  std::atomic<int> pending_kills_{0};

  std::vector<std::thread> threads_;
};

}  // namespace adaparse::parsers
