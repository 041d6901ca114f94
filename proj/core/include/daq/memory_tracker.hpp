#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>

namespace daq {

/// Byte counters over every CPU tensor allocation made after `install()`.
///
/// The tracker wraps the default CPU allocator and is registered with a high
/// priority, so it stays in place for the rest of the process. Allocations made
/// before installation are not counted.
class MemoryTracker {
public:
    static MemoryTracker& instance();

    /// Registers the tracking allocator. Returns false if the runtime did not
    /// route a probe allocation through it.
    bool install();
    bool installed() const;

    int64_t current_bytes() const;
    int64_t peak_bytes() const;
    /// Sets the peak to the current value.
    void reset_peak();

private:
    MemoryTracker() = default;
};

/// Peak memory of one call to a closure.
struct PeakMemory {
    int64_t baseline_bytes = 0;  // live tracked bytes before the call
    int64_t peak_bytes = 0;      // high-water mark during the call
    int64_t delta_bytes() const { return peak_bytes - baseline_bytes; }
};

/// Runs `step` once with freshly reset counters. Returns nullopt when the
/// tracking allocator cannot be installed ("unsupported"), never a zero.
std::optional<PeakMemory> measure_peak_memory(const std::function<void()>& step);

}  // namespace daq
