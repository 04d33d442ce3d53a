#pragma once

#include <span>

#include "xdlm/kernel.hpp"
#include "xdlm/simplex.hpp"

namespace xdlm {

// Everything the closed-form scalar path needs.  All operations below run in
// O(n) time and O(n) memory per call; none of them ever builds an n-by-n
// matrix.  The exact dense-matrix counterparts live in oracle.hpp.
struct scalar_context {
    mixed_kernel kernel;
    schedule sched = schedule::linear();
    // Log arguments below this floor are an error (reported, never silently
    // clamped past the floor).
    double eps_log = 1e-30;
};

// Stationary / noise rate r(e) = k/n + mu * [e == mask].
double noise_rate(const scalar_context& ctx, token_id e);

// Marginal mass f_t(x, e) = alpha_t * p_x(e) + (1 - alpha_t) * r(e): the
// probability that a token that started as x looks like e at time t.
double f_map(const scalar_context& ctx, double t, const token_dist& x, token_id e);

// True posterior q(z_s = e | z_t, x) for s <= t, computed without matrices:
//
//   q(e) = f_s(x, e) * f_{t|s}(e, z_t) / f_t(x, z_t),
//   f_{t|s}(e, z_t) = alpha_{t|s} [e == z_t] + (1 - alpha_{t|s}) r(z_t).
//
// s == t returns a point mass at z_t.  Raises degenerate_denominator when
// f_t(x, z_t) == 0 (z_t unreachable from x).
simplex posterior(const scalar_context& ctx, double s, double t, token_id zt,
                  const token_dist& x);

// The bracketed four-term factor h of the exact posterior KL, for a strict
// gap s < t.  x_pred (and a distribution-valued x) are stripped of mask mass
// first; see strip_mask_mass.  Unbounded when r(z_t) == 0 (pure absorbing
// noise with unmasked z_t), which is reported as a domain error; kl_scalar
// handles that case exactly instead.
double h_exact(const scalar_context& ctx, double s, double t, token_id zt,
               const token_dist& x, const simplex& x_pred);

// s -> t limit of h_exact; t must lie strictly inside (0, 1).
double h_limit(const scalar_context& ctx, double t, token_id zt,
               const token_dist& x, const simplex& x_pred);

// KL(q(z_s | z_t, x) || q(z_s | z_t, x_pred)) in closed form:
// (1 - alpha_{t|s}) * alpha_s * r(z_t) / f_t(x, z_t) times h_exact, with the
// r(z_t) factor cancelled analytically so the k = 0 unmasked case comes out
// as an exact 0 instead of 0 * inf.
double kl_scalar(const scalar_context& ctx, double s, double t, token_id zt,
                 const token_dist& x, const simplex& x_pred);

// Per-position diffusion loss term
//   (-alpha'_t) * r(z_t) / f_t(x, z_t) * h_limit(t, z_t, x, x_pred),
// the infinitesimal-step limit of the KL ladder.  With the linear schedule
// the weight is r(z_t) / f_t(x, z_t).  Returns exactly 0 whenever the weight
// is 0 (e.g. k = 0 with z_t unmasked).
double loss_term(const scalar_context& ctx, double t, token_id zt, token_id x,
                 const simplex& x_pred);

// Accumulates scale * d(loss_term)/d(x_pred[e]) into grad[e] for all e.
// Derived by hand from the limit form; verified against central differences.
// No-op (and no gradient) when the loss weight is 0.
void loss_term_grad(const scalar_context& ctx, double t, token_id zt, token_id x,
                    const simplex& x_pred, double scale, std::span<double> grad);

}  // namespace xdlm
