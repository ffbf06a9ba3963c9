#include "pinla/parallel.hpp"

#include <charconv>
#include <cstdlib>
#include <mutex>

namespace pinla {

namespace {

int parse_positive(std::string_view part, std::string_view text) {
  int value = 0;
  const auto* first = part.data();
  const auto* last = part.data() + part.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (part.empty() || ec != std::errc() || ptr != last)
    throw ConfigError("threads", "malformed budget '" + std::string(text) + "', expected A:B");
  if (value < 1)
    throw ConfigError("threads", "budget entries must be >= 1 in '" + std::string(text) + "'");
  return value;
}

std::atomic<int> g_active{0};
std::atomic<int> g_peak{0};

std::mutex g_batch_mutex;
instrumentation::BatchCounters g_batches;

}  // namespace

ThreadBudget parse_budget(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos || text.find(':', colon + 1) != std::string_view::npos)
    throw ConfigError("threads", "malformed budget '" + std::string(text) + "', expected A:B");
  return ThreadBudget{parse_positive(text.substr(0, colon), text), parse_positive(text.substr(colon + 1), text)};
}

std::string to_string(const ThreadBudget& budget) {
  return std::to_string(budget.l1) + ":" + std::to_string(budget.l2);
}

unsigned hardware_threads() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1u : n;
}

ThreadBudget default_budget(Index n_hyper, unsigned cores) {
  cores = std::max(1u, cores);
  const auto wanted = static_cast<unsigned>(2 * std::max<Index>(n_hyper, 0) + 1);
  const unsigned l1 = std::max(1u, std::min(wanted, cores));
  const unsigned l2 = std::max(1u, cores / l1);
  return ThreadBudget{static_cast<int>(l1), static_cast<int>(l2)};
}

ThreadBudget budget_from_env(const ThreadBudget& fallback) {
  const char* env = std::getenv("PINLA_THREADS");
  if (env == nullptr || *env == '\0') return fallback;
  return parse_budget(env);
}

namespace instrumentation {

int active_workers() { return g_active.load(); }
int peak_workers() { return g_peak.load(); }
void reset_peak() { g_peak.store(g_active.load()); }

WorkerScope::WorkerScope() {
  const int now = g_active.fetch_add(1) + 1;
  int peak = g_peak.load();
  while (now > peak && !g_peak.compare_exchange_weak(peak, now)) {
  }
}

WorkerScope::~WorkerScope() { g_active.fetch_sub(1); }

BatchCounters batch_counters() {
  std::lock_guard lock(g_batch_mutex);
  return g_batches;
}

void reset_batch_counters() {
  std::lock_guard lock(g_batch_mutex);
  g_batches = {};
}

void record_batch(Index tasks, double seconds) {
  std::lock_guard lock(g_batch_mutex);
  ++g_batches.batches;
  g_batches.tasks += tasks;
  g_batches.wall_seconds += seconds;
}

}  // namespace instrumentation

namespace detail {

std::string describe(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const std::exception& ex) {
    return ex.what();
  } catch (...) {
    return "unknown error";
  }
}

}  // namespace detail

}  // namespace pinla
