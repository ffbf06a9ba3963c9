#pragma once

// Two-level thread budget and deterministic batch dispatch.
//
// Level 1 runs independent objective evaluations (or inversions) side by
// side; level 2 is the concurrency available inside each of them. Results
// are always collected by slot index so that downstream arithmetic never
// depends on the schedule.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "pinla/common.hpp"

namespace pinla {

struct ThreadBudget {
  int l1 = 1;
  int l2 = 1;

  int total() const { return l1 * l2; }
  bool operator==(const ThreadBudget&) const = default;
};

// Parses "A:B" with A, B positive integers.
ThreadBudget parse_budget(std::string_view text);
std::string to_string(const ThreadBudget& budget);

unsigned hardware_threads();

// l1 = min(2d+1, cores), l2 = cores / l1 (at least 1).
ThreadBudget default_budget(Index n_hyper, unsigned cores = hardware_threads());

// Honors PINLA_THREADS="A:B" when set, otherwise returns `fallback`.
ThreadBudget budget_from_env(const ThreadBudget& fallback);

// Handed to every level-1 task.
struct TaskContext {
  Index slot = 0;
  int l2 = 1;
};

class BatchError : public Error {
 public:
  BatchError(Index slot, const std::string& what, std::exception_ptr cause)
      : Error("task " + std::to_string(slot) + " failed: " + what), slot_(slot), cause_(std::move(cause)) {}
  Index slot() const { return slot_; }
  // Rethrows the original exception.
  [[noreturn]] void rethrow_cause() const { std::rethrow_exception(cause_); }

 private:
  Index slot_;
  std::exception_ptr cause_;
};

namespace instrumentation {

int active_workers();
int peak_workers();
void reset_peak();

struct BatchCounters {
  long long batches = 0;
  long long tasks = 0;
  double wall_seconds = 0.0;
};
BatchCounters batch_counters();
void reset_batch_counters();
void record_batch(Index tasks, double seconds);

// Marks the current thread as busy for the lifetime of the scope.
class WorkerScope {
 public:
  WorkerScope();
  ~WorkerScope();
  WorkerScope(const WorkerScope&) = delete;
  WorkerScope& operator=(const WorkerScope&) = delete;
};

}  // namespace instrumentation

namespace detail {
std::string describe(const std::exception_ptr& e);
}

// Executes `tasks` with at most `budget.l1` of them in flight. The calling
// thread takes part in the work. When a task throws, tasks that have not
// started yet are skipped and the failure with the lowest slot is rethrown
// as a BatchError.
template <typename R>
std::vector<R> run_batch(const std::vector<std::function<R(const TaskContext&)>>& tasks,
                         const ThreadBudget& budget) {
  const Index n = static_cast<Index>(tasks.size());
  std::vector<std::optional<R>> slots(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<Index> next{0};
  std::atomic<bool> cancelled{false};
  const auto start = std::chrono::steady_clock::now();

  auto worker = [&] {
    instrumentation::WorkerScope busy;
    for (;;) {
      const Index i = next.fetch_add(1);
      if (i >= n || cancelled.load()) return;
      try {
        slots[i].emplace(tasks[i](TaskContext{i, budget.l2}));
      } catch (...) {
        errors[i] = std::current_exception();
        cancelled.store(true);
      }
    }
  };

  const Index workers = std::max<Index>(1, std::min<Index>(budget.l1, n));
  {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers - 1));
    for (Index w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
  }
  instrumentation::record_batch(
      n, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());

  for (Index i = 0; i < n; ++i)
    if (errors[i]) throw BatchError(i, detail::describe(errors[i]), errors[i]);

  std::vector<R> out;
  out.reserve(tasks.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// Runs `left` on a helper thread and `right` on the caller when `fork` is
// true, otherwise both in order on the caller. Exceptions from either side
// are rethrown after both have finished (left's first).
template <typename Left, typename Right>
void fork_join(bool fork, Left&& left, Right&& right) {
  if (!fork) {
    left();
    right();
    return;
  }
  std::exception_ptr left_error, right_error;
  {
    std::jthread helper([&] {
      instrumentation::WorkerScope busy;
      try {
        left();
      } catch (...) {
        left_error = std::current_exception();
      }
    });
    try {
      right();
    } catch (...) {
      right_error = std::current_exception();
    }
  }
  if (left_error) std::rethrow_exception(left_error);
  if (right_error) std::rethrow_exception(right_error);
}

}  // namespace pinla
