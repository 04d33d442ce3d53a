#pragma once

#include <cstdint>
#include <string>

#include "xdlm/denoiser.hpp"

namespace xdlm {

// Run configuration, read from a small sectioned key=value file:
//
//   [kernel]            # k
//   [schedule]          # kind = linear | log_linear
//   [train]             # corpus, steps, batch, lr, seq_len, hidden_dim,
//                       # seed, t_sampling = stratified | uniform
//   [sample]            # steps, num_samples, mode = ancestral | confidence,
//                       # seed
//
// Blank lines and full-line comments (# or ;) are ignored.  Unknown sections
// or keys are rejected with a file:line diagnostic, as are out-of-range
// values (named by section.key).
struct run_config {
    // [kernel]
    double k = 0.1;
    // [schedule]
    schedule::kind_t sched = schedule::kind_t::linear;
    // [train]
    std::string corpus;
    int steps = 2000;
    int batch = 32;
    double lr = 1e-2;
    int seq_len = 64;
    int hidden_dim = 64;
    std::uint64_t train_seed = 1;
    time_sampling t_mode = time_sampling::stratified;
    // [sample]
    int sample_steps = 32;
    int num_samples = 16;
    std::string mode = "ancestral";  // or "confidence"
    std::uint64_t sample_seed = 7;

    train_config to_train_config() const;
};

// origin is used in diagnostics ("demo.cfg:7: ...").
run_config parse_config(const std::string& text, const std::string& origin);
run_config load_config(const std::string& path);

}  // namespace xdlm
