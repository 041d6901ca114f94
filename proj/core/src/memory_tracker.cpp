#include "daq/memory_tracker.hpp"

#include <c10/core/Allocator.h>
#include <c10/core/CPUAllocator.h>
#include <torch/torch.h>

#include <atomic>
#include <cstring>
#include <mutex>
#include <unordered_map>

namespace daq {

namespace {

std::atomic<int64_t> g_current{0};
std::atomic<int64_t> g_peak{0};
std::atomic<bool> g_installed{false};

// Sizes of live allocations, keyed by address. The data pointer doubles as
// the deleter context so raw_allocate/raw_deallocate keep working.
std::mutex g_mutex;
std::unordered_map<void*, int64_t> g_sizes;
c10::Allocator* g_base = nullptr;

void release(void* ptr) {
    if (!ptr) return;
    int64_t bytes = 0;
    {
        std::lock_guard<std::mutex> lock(g_mutex);
        auto it = g_sizes.find(ptr);
        if (it != g_sizes.end()) {
            bytes = it->second;
            g_sizes.erase(it);
        }
    }
    g_current.fetch_sub(bytes, std::memory_order_relaxed);
    g_base->raw_deallocate(ptr);
}

class TrackingAllocator final : public c10::Allocator {
public:
    c10::DataPtr allocate(size_t n) override {
        void* data = g_base->raw_allocate(n);
        const auto bytes = static_cast<int64_t>(n);
        {
            std::lock_guard<std::mutex> lock(g_mutex);
            g_sizes[data] = bytes;
        }
        const auto now = g_current.fetch_add(bytes, std::memory_order_relaxed) + bytes;
        auto peak = g_peak.load(std::memory_order_relaxed);
        while (now > peak && !g_peak.compare_exchange_weak(peak, now, std::memory_order_relaxed)) {
        }
        return {data, data, &release, c10::Device(c10::DeviceType::CPU)};
    }

    c10::DeleterFnPtr raw_deleter() const override { return &release; }

    void copy_data(void* dest, const void* src, std::size_t count) const override {
        if (count) std::memcpy(dest, src, count);
    }
};

}  // namespace

MemoryTracker& MemoryTracker::instance() {
    static MemoryTracker tracker;
    return tracker;
}

bool MemoryTracker::install() {
    static std::once_flag once;
    std::call_once(once, [] {
        g_base = c10::GetDefaultCPUAllocator();
        if (!g_base->raw_deleter()) return;
        static TrackingAllocator alloc;
        c10::SetCPUAllocator(&alloc, /*priority=*/200);
        const auto before = g_current.load();
        auto probe = torch::empty({1024}, torch::kFloat32);
        g_installed = g_current.load() >= before + 4096;
    });
    return g_installed;
}

bool MemoryTracker::installed() const { return g_installed; }
int64_t MemoryTracker::current_bytes() const { return g_current.load(); }
int64_t MemoryTracker::peak_bytes() const { return g_peak.load(); }
void MemoryTracker::reset_peak() { g_peak.store(g_current.load()); }

std::optional<PeakMemory> measure_peak_memory(const std::function<void()>& step) {
    auto& tracker = MemoryTracker::instance();
    if (!tracker.install()) return std::nullopt;
    PeakMemory m;
    tracker.reset_peak();
    m.baseline_bytes = tracker.current_bytes();
    step();
    m.peak_bytes = tracker.peak_bytes();
    return m;
}

}  // namespace daq
