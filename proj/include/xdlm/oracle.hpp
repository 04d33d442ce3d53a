#pragma once

#include "xdlm/kernel.hpp"
#include "xdlm/scalar.hpp"
#include "xdlm/simplex.hpp"

// Exact reference implementations, deliberately naive: these build dense
// transition matrices (O(n^2) time and memory) and evaluate definitions
// directly.  The fast scalar path is tested against them, never the other
// way around.  Vocabulary sizes are capped at max_n.
namespace xdlm::oracle {

inline constexpr int max_n = 4096;

struct dense_posterior {
    std::vector<double> probs;  // posterior over z_s, length n
    double denom = 0.0;         // normalizing mass f_t(x, z_t)
};

// Posterior by the definition: elementwise product of the z_t-column of
// Q_{t|s} with Q_{s|0}^T x, normalized by z_t^T Q_{t|0}^T x.
dense_posterior posterior_matrix(const mixed_kernel& kernel, const schedule& sched,
                                 double s, double t, token_id zt, const token_dist& x);

// KL between the two dense posteriors (data-conditioned vs. model-predicted)
// by direct summation.  q = 0 terms are skipped; the p side is floored at
// eps_log, matching the scalar path's flooring convention.
double kl_matrix(const mixed_kernel& kernel, const schedule& sched, double s,
                 double t, token_id zt, const token_dist& x, const token_dist& x_pred,
                 double eps_log = 1e-30);

// Textbook absorbing-state (k = 0) posterior, written independently as the
// usual three-case table: carry-over for unmasked z_t; for masked z_t, stay
// masked with (1 - alpha_s) / (1 - alpha_t), otherwise fill from x_pred.
simplex mdlm_posterior(const schedule& sched, double s, double t, token_id zt,
                       int n, token_id mask_id, const simplex& x_pred);

// Closed-form uniform-noise (k = 1) posterior KL, written independently of
// the scalar path and cross-checked against brute-force summation at small n.
// x and x_pred must carry no mask mass.
double udlm_kl(const schedule& sched, double s, double t, token_id zt, int n,
               const token_dist& x, const simplex& x_pred);

}  // namespace xdlm::oracle
