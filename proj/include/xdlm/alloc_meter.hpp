#pragma once

#include <cstdint>

// Process-wide allocation counters, fed by replacement operator new/delete in
// alloc_meter.cpp.  Linking that translation unit instruments every ordinary
// (non-overaligned) allocation in the binary; the overhead is a couple of
// relaxed atomics per call.
namespace xdlm::allocmeter {

void reset();                  // zeroes current/peak/count
std::uint64_t current_bytes();
std::uint64_t peak_bytes();    // high-water mark of live bytes since reset
std::uint64_t alloc_count();

}  // namespace xdlm::allocmeter
