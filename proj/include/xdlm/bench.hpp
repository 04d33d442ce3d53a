#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace xdlm {

struct bench_row {
    int n = 0;
    // Wall time normalized to 1e4 posterior+KL evaluations, milliseconds.
    double scalar_ms_mean = 0.0, scalar_ms_min = 0.0;
    double oracle_ms_mean = 0.0, oracle_ms_min = 0.0;
    // Peak transient allocation of a single posterior+KL evaluation, bytes.
    std::uint64_t scalar_peak_bytes = 0, oracle_peak_bytes = 0;
};

struct bench_report {
    std::vector<bench_row> rows;
    int batch = 0;  // evaluations per timed repetition
    int reps = 0;   // timed repetitions (after one warmup)
    // Log-log slopes of the metrics against n.
    double scalar_time_exp = 0.0, oracle_time_exp = 0.0;
    double scalar_alloc_exp = 0.0, oracle_alloc_exp = 0.0;
    // Scalar and oracle must agree on probe inputs before anything is timed.
    bool gate_ok = false;
    double gate_max_err = 0.0;

    std::string to_json() const;
    std::string to_table() const;
};

// Times the scalar path against the dense oracle on identical random-but-
// fixed inputs for each vocabulary size, with one warmup repetition and
// reps timed ones (mean and min reported), and measures per-evaluation peak
// allocation via the allocation meter.  Single-threaded.
bench_report run_bench(const std::vector<int>& sizes, int batch, int reps);

}  // namespace xdlm
