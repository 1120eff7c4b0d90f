#pragma once

#include <chrono>
#include <mutex>
#include <thread>
#include <vector>

namespace edits::clients {

class Clock {
public:
    virtual ~Clock() = default;
    virtual void sleep_for(std::chrono::milliseconds d) = 0;
};

class SystemClock final : public Clock {
public:
    void sleep_for(std::chrono::milliseconds d) override { std::this_thread::sleep_for(d); }
};

/// Records requested sleeps instead of sleeping.
class FakeClock final : public Clock {
public:
    void sleep_for(std::chrono::milliseconds d) override {
        std::lock_guard lock(mutex_);
        sleeps_.push_back(d);
    }
    std::vector<std::chrono::milliseconds> sleeps() const {
        std::lock_guard lock(mutex_);
        return sleeps_;
    }

private:
    mutable std::mutex mutex_;
    std::vector<std::chrono::milliseconds> sleeps_;
};

}  // namespace edits::clients
