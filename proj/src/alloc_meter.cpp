#include "xdlm/alloc_meter.hpp"

#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <new>

namespace {

constinit std::atomic<std::uint64_t> g_current{0};
constinit std::atomic<std::uint64_t> g_peak{0};
constinit std::atomic<std::uint64_t> g_count{0};

// Each block is prefixed with its size so deallocation can decrement the live
// counter without relying on sized-delete being called.  The header preserves
// max_align_t alignment (16 bytes on x86-64); over-aligned allocations go
// through the default aligned operators and simply are not counted.
constexpr std::size_t header = alignof(std::max_align_t);
static_assert(header >= sizeof(std::size_t));

void note_alloc(std::size_t size) noexcept {
    g_count.fetch_add(1, std::memory_order_relaxed);
    std::uint64_t cur = g_current.fetch_add(size, std::memory_order_relaxed) + size;
    std::uint64_t peak = g_peak.load(std::memory_order_relaxed);
    while (cur > peak && !g_peak.compare_exchange_weak(peak, cur, std::memory_order_relaxed)) {
    }
}

void* metered_alloc(std::size_t size) noexcept {
    void* raw = std::malloc(size + header);
    if (raw == nullptr) return nullptr;
    *static_cast<std::size_t*>(raw) = size;
    note_alloc(size);
    return static_cast<char*>(raw) + header;
}

void metered_free(void* p) noexcept {
    if (p == nullptr) return;
    void* raw = static_cast<char*>(p) - header;
    g_current.fetch_sub(*static_cast<std::size_t*>(raw), std::memory_order_relaxed);
    std::free(raw);
}

}  // namespace

namespace xdlm::allocmeter {

void reset() {
    g_current.store(0, std::memory_order_relaxed);
    g_peak.store(0, std::memory_order_relaxed);
    g_count.store(0, std::memory_order_relaxed);
}

std::uint64_t current_bytes() { return g_current.load(std::memory_order_relaxed); }
std::uint64_t peak_bytes() { return g_peak.load(std::memory_order_relaxed); }
std::uint64_t alloc_count() { return g_count.load(std::memory_order_relaxed); }

}  // namespace xdlm::allocmeter

void* operator new(std::size_t size) {
    void* p = metered_alloc(size);
    if (p == nullptr) throw std::bad_alloc();
    return p;
}

void* operator new[](std::size_t size) {
    void* p = metered_alloc(size);
    if (p == nullptr) throw std::bad_alloc();
    return p;
}

void* operator new(std::size_t size, const std::nothrow_t&) noexcept { return metered_alloc(size); }
void* operator new[](std::size_t size, const std::nothrow_t&) noexcept { return metered_alloc(size); }

void operator delete(void* p) noexcept { metered_free(p); }
void operator delete[](void* p) noexcept { metered_free(p); }
void operator delete(void* p, std::size_t) noexcept { metered_free(p); }
void operator delete[](void* p, std::size_t) noexcept { metered_free(p); }
void operator delete(void* p, const std::nothrow_t&) noexcept { metered_free(p); }
void operator delete[](void* p, const std::nothrow_t&) noexcept { metered_free(p); }
