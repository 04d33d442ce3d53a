#include <cstdint>
#include <stdexcept>
#include <string>

#include <doctest.h>
#include <json.hpp>

#include "xdlm/alloc_meter.hpp"
#include "xdlm/bench.hpp"

using namespace xdlm;

TEST_CASE("allocation meter tracks live bytes, peak, and count") {
    // Measure first, assert afterwards: the assertions themselves may touch
    // the (instrumented) global allocator.
    allocmeter::reset();
    std::uint64_t c0 = allocmeter::current_bytes();
    std::uint64_t p0 = allocmeter::peak_bytes();

    double* block = new double[1000];
    // Escape the pointer so the optimizer cannot elide the new/delete pair
    // (allocation elision is legal and would leave the counters untouched).
    asm volatile("" : : "g"(block) : "memory");
    std::uint64_t live = allocmeter::current_bytes();
    std::uint64_t peak = allocmeter::peak_bytes();
    std::uint64_t count = allocmeter::alloc_count();
    delete[] block;
    std::uint64_t after_free = allocmeter::current_bytes();
    std::uint64_t peak_after = allocmeter::peak_bytes();

    allocmeter::reset();
    std::uint64_t c1 = allocmeter::current_bytes();
    std::uint64_t p1 = allocmeter::peak_bytes();
    std::uint64_t n1 = allocmeter::alloc_count();

    CHECK(c0 == 0);
    CHECK(p0 == 0);
    CHECK(live >= 8000);
    CHECK(peak >= live);
    CHECK(count >= 1);
    CHECK(after_free < live);
    CHECK(peak_after == peak);  // high-water mark persists across frees
    CHECK(c1 == 0);
    CHECK(p1 == 0);
    CHECK(n1 == 0);
}

TEST_CASE("run_bench gates on correctness and reports sane rows") {
    bench_report rep = run_bench({8, 32}, 4, 2);
    CHECK(rep.gate_ok);
    CHECK(rep.gate_max_err <= 1e-8);
    CHECK(rep.batch == 4);
    CHECK(rep.reps == 2);
    REQUIRE(rep.rows.size() == 2);
    for (const bench_row& row : rep.rows) {
        CHECK(row.scalar_ms_mean > 0.0);
        CHECK(row.oracle_ms_mean > 0.0);
        CHECK(row.scalar_ms_min <= row.scalar_ms_mean);
        CHECK(row.oracle_ms_min <= row.oracle_ms_mean);
        CHECK(row.scalar_peak_bytes > 0);
        CHECK(row.oracle_peak_bytes > 0);
    }
    // The dense path must allocate far more transient memory per call.
    CHECK(rep.rows[1].oracle_peak_bytes > rep.rows[1].scalar_peak_bytes);

    nlohmann::json j = nlohmann::json::parse(rep.to_json());
    CHECK(j.at("gate_ok").get<bool>());
    CHECK(j.at("rows").size() == 2);
    CHECK(rep.to_table().find("scaling exponents") != std::string::npos);
}

TEST_CASE("run_bench input validation") {
    CHECK_THROWS_AS(run_bench({64}, 4, 2), std::invalid_argument);  // slope needs >= 2 sizes
    CHECK_THROWS_AS(run_bench({8, 32}, 0, 2), std::invalid_argument);
    CHECK_THROWS_AS(run_bench({8, 32}, 4, 0), std::invalid_argument);
    CHECK_THROWS_AS(run_bench({1, 8}, 4, 2), std::invalid_argument);  // vocab too small
}

TEST_CASE("run_bench works at tiny sizes") {
    bench_report rep = run_bench({2, 4}, 2, 1);
    CHECK(rep.gate_ok);
}
