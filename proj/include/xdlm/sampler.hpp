#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <vector>

#include "xdlm/denoiser.hpp"
#include "xdlm/scalar.hpp"

namespace xdlm {

// What happened to one position in one reverse step.
enum class transition_tag { absorb_fill, uniform_refine, remask, keep };
const char* tag_name(transition_tag tag);  // "ABSORB_FILL" etc.

struct trace_event {
    int pos = 0;
    token_id from = 0;
    token_id to = 0;
    transition_tag tag = transition_tag::keep;
    // Confidence-sampler bookkeeping, kept in memory for audits; not part of
    // the serialized trace.  NaN when not applicable.
    double pred_conf = std::numeric_limits<double>::quiet_NaN();
    double cur_conf = std::numeric_limits<double>::quiet_NaN();
};

struct trace_step {
    int step = 0;
    double t = 0.0;
    std::vector<trace_event> events;
};

struct sample_trace {
    std::vector<trace_step> steps;
    int count(transition_tag tag) const;
};

// One JSON object per line:
// {"step":i,"t":...,"events":[{"pos":..,"from":..,"to":..,"tag":"..."}]}
void write_trace_jsonl(const sample_trace& trace, std::ostream& out);

struct sample_result {
    token_seq tokens;
    sample_trace trace;
};

// Ancestral reverse diffusion: start from the stationary distribution at
// t = 1 and walk the time grid t_i = 1 - i/steps, redrawing every free
// position from the scalar posterior with the model prediction as the clean
// distribution.  An optional prompt pins a prefix that is never redrawn.
// Deterministic in (seed, step, position).
sample_result ancestral_sample(const scalar_context& ctx, const denoiser& model,
                               int seq_len, int steps, std::uint64_t seed,
                               const token_seq* prompt = nullptr);

// Per-step update budgets for confidence-ranked generation.
struct gen_schedule {
    std::vector<int> topk_absorb;   // masked positions to fill per step
    std::vector<int> topk_uniform;  // unmasked positions eligible to revise per step

    // Even split of fill_total over steps, with revision budgets scaled by
    // the uniform-noise weight: topk_uniform[i] = round(k * topk_absorb[i]).
    static gen_schedule even(int steps, int fill_total, double k);
};

// Confidence-ranked generation: start fully masked, and per step fill the
// topk_absorb[i] masked positions whose (Gumbel-perturbed argmax) prediction
// is most confident.  When k > 0, additionally revise up to topk_uniform[i]
// already-filled positions where the model now prefers a different token at
// least as confidently as the current one.  The schedule's fill budgets must
// sum to the number of initially masked positions, which guarantees no mask
// survives to the end.
sample_result confidence_generate(const denoiser& model, double k,
                                  const gen_schedule& sched, int seq_len,
                                  std::uint64_t seed, const token_seq* prompt = nullptr);

struct gen_eval {
    double token_entropy = 0.0;  // nats, over the pooled sample tokens
    double ngram_tv = 0.0;       // total variation between bigram frequencies
};

// Cheap distributional comparison of samples against a reference corpus:
// unigram entropy of the samples and total-variation distance between
// within-sequence bigram frequencies.
gen_eval eval_generation(const std::vector<token_seq>& samples,
                         const std::vector<token_seq>& reference, int n_vocab);

}  // namespace xdlm
