#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>

namespace medsim {

// Asset root: $MEDSIM_ASSETS if set, else the directory baked in at build time.
std::filesystem::path asset_dir();
void set_asset_dir(std::filesystem::path dir);

// mt19937_64 with a bounded draw that does not depend on the standard
// library's distribution implementation, so seeded runs match across
// toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  // Uniform in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::int64_t now_ms() = 0;
};

class SystemClock final : public Clock {
 public:
  std::int64_t now_ms() override;
};

// Starts at `start_ms` and advances by `step_ms` per reading.
class FixedClock final : public Clock {
 public:
  explicit FixedClock(std::int64_t start_ms = 0, std::int64_t step_ms = 0)
      : next_(start_ms), step_(step_ms) {}
  std::int64_t now_ms() override;

 private:
  std::int64_t next_;
  std::int64_t step_;
};

// Runs fn(0..n-1) on up to `workers` threads. The first exception thrown by
// any task is rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace medsim
