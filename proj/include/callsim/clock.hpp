#pragma once

#include <atomic>
#include <cstdint>
#include <string>

namespace callsim {

/// Millisecond time source. Injected wherever timestamps or durations are
/// recorded so tests can pin them.
class Clock {
public:
    virtual ~Clock() = default;
    /// Milliseconds since the Unix epoch.
    virtual std::int64_t now_ms() const = 0;
};

class SystemClock final : public Clock {
public:
    std::int64_t now_ms() const override;
};

/// Clock that only moves when told to.
class ManualClock final : public Clock {
public:
    explicit ManualClock(std::int64_t start_ms = 0) : now_(start_ms) {}
    std::int64_t now_ms() const override { return now_.load(); }
    void set(std::int64_t ms) { now_.store(ms); }
    void advance(std::int64_t ms) { now_.fetch_add(ms); }

private:
    std::atomic<std::int64_t> now_;
};

const Clock& system_clock();

/// "YYYY-MM-DDTHH:MM:SS.mmmZ"
std::string format_utc(std::int64_t epoch_ms);

}  // namespace callsim
