#pragma once

#include <cstdint>
#include <vector>

namespace xdlm {

using token_id = int;
using token_seq = std::vector<token_id>;

// Mixed uniform/absorbing transition kernel over a vocabulary of n tokens
// (mask included).  The one-step kernel is
//
//   K = (k / n) * J + mu * M,     mu = 1 - k,
//
// where J is all-ones and M puts every token on mask.  K is rank one:
// every row equals the stationary distribution pi with
// pi(e) = k / n + mu * [e == mask], hence K * K = K.
struct mixed_kernel {
    int n = 0;        // vocabulary size, mask included
    int mask_id = 0;  // index of the mask token
    double k = 0.0;   // uniform-noise weight in [0, 1]
    double mu = 0.0;  // absorbing weight, always 1 - k

    // Stationary probability of token e; also the "noise rate" r(e).
    double pi(token_id e) const;
};

// Validates n >= 2, 0 <= mask_id < n, k in [0, 1].
mixed_kernel build_kernel(int n, int mask_id, double k);

// Retention schedule alpha(t) on t in [0, 1] with alpha(0) = 1, alpha(1) = 0,
// monotone non-increasing.  The marginal at time t keeps the clean token with
// probability alpha(t) and draws from pi otherwise.
class schedule {
public:
    enum class kind_t { linear, log_linear };

    static schedule linear();
    // alpha(t) = 1 - (1 - eps) * t with eps = 1e-13: the "total noise is the
    // log of a linear function" schedule, with its endpoint clipping tightened
    // until alpha(1) = 0 holds within 1e-12.
    static schedule log_linear();

    double alpha(double t) const;        // t in [0, 1]
    double alpha_prime(double t) const;  // d alpha / dt, <= 0
    // Conditional retention alpha(t) / alpha(s) for s <= t; by convention 1
    // when s == t (including s == t == 1, where the ratio is 0/0).
    double alpha_cond(double s, double t) const;

    kind_t kind() const { return kind_; }

private:
    explicit schedule(kind_t k) : kind_(k) {}
    kind_t kind_;
};

// Square dense matrix, row major.  Only the exact-reference code paths build
// these; everything on the fast path stays O(n) per call.
struct dense_mat {
    int n = 0;
    std::vector<double> a;  // n * n entries

    dense_mat() = default;
    explicit dense_mat(int size) : n(size), a(static_cast<std::size_t>(size) * size, 0.0) {}
    double& at(int i, int j) { return a[static_cast<std::size_t>(i) * n + j]; }
    double at(int i, int j) const { return a[static_cast<std::size_t>(i) * n + j]; }
};

// One-step kernel K as a dense matrix.
dense_mat dense_K(const mixed_kernel& kernel);

// Conditional transition matrix Q_{t|s} = alpha_{t|s} I + (1 - alpha_{t|s}) K
// for 0 <= s <= t <= 1.  Rejects t < s; s == t yields the identity.
dense_mat dense_Q(const mixed_kernel& kernel, const schedule& sched, double s, double t);

// Forward corruption of a clean sequence at time t: each position keeps its
// token with probability alpha(t), otherwise redraws from pi.  Deterministic
// in (seed, position).
token_seq corrupt(const mixed_kernel& kernel, const schedule& sched,
                  const token_seq& x0, double t, std::uint64_t seed);

}  // namespace xdlm
