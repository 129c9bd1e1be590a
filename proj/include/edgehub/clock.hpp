#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>

namespace edgehub {

/// Millisecond clock injected into everything that needs time. The hub runs
/// on SystemClock in the field; tests and the fleet driver share one
/// SimulatedClock so accounting is exact.
class Clock {
public:
  virtual ~Clock() = default;
  virtual int64_t now_ms() = 0;
};

class SystemClock final : public Clock {
public:
  int64_t now_ms() override {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
  }
};

class SimulatedClock final : public Clock {
public:
  explicit SimulatedClock(int64_t startMs = 0) : now_(startMs) {}

  int64_t now_ms() override { return now_.load(std::memory_order_relaxed); }
  void set_ms(int64_t t) { now_.store(t, std::memory_order_relaxed); }

private:
  std::atomic<int64_t> now_;
};

}  // namespace edgehub
