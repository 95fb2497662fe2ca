#include "medsim/support.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace medsim {

namespace {

std::mutex& asset_mutex() {
  static std::mutex m;
  return m;
}

std::filesystem::path& asset_override() {
  static std::filesystem::path p;
  return p;
}

}  // namespace

std::filesystem::path asset_dir() {
  {
    std::lock_guard lock(asset_mutex());
    if (!asset_override().empty()) return asset_override();
  }
  if (const char* env = std::getenv("MEDSIM_ASSETS"); env && *env) return env;
  return MEDSIM_DEFAULT_ASSET_DIR;
}

void set_asset_dir(std::filesystem::path dir) {
  std::lock_guard lock(asset_mutex());
  asset_override() = std::move(dir);
}

std::uint64_t Rng::below(std::uint64_t n) {
  // Rejection sampling over the largest multiple of n.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

std::int64_t SystemClock::now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

std::int64_t FixedClock::now_ms() {
  auto v = next_;
  next_ += step_;
  return v;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  if (workers <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  workers = std::min(workers, n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          auto i = next.fetch_add(1);
          if (i >= n) return;
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
          }
        }
      });
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace medsim
