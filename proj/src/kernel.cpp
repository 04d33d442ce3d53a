#include "xdlm/kernel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "xdlm/rng.hpp"

namespace xdlm {

double mixed_kernel::pi(token_id e) const {
    return k / n + (e == mask_id ? mu : 0.0);
}

mixed_kernel build_kernel(int n, int mask_id, double k) {
    if (n < 2) throw std::invalid_argument("kernel: vocabulary size must be >= 2, got " + std::to_string(n));
    if (mask_id < 0 || mask_id >= n)
        throw std::invalid_argument("kernel: mask_id " + std::to_string(mask_id) +
                                    " out of range for vocabulary of " + std::to_string(n));
    if (!(k >= 0.0 && k <= 1.0))
        throw std::invalid_argument("kernel: mixing weight k must be in [0, 1], got " + std::to_string(k));
    return mixed_kernel{n, mask_id, k, 1.0 - k};
}

namespace {
constexpr double log_linear_eps = 1e-13;

void check_time(double t, const char* who) {
    if (!(t >= 0.0 && t <= 1.0))
        throw std::domain_error(std::string(who) + ": time must be in [0, 1], got " + std::to_string(t));
}
}  // namespace

schedule schedule::linear() { return schedule(kind_t::linear); }
schedule schedule::log_linear() { return schedule(kind_t::log_linear); }

double schedule::alpha(double t) const {
    check_time(t, "schedule::alpha");
    switch (kind_) {
        case kind_t::linear: return 1.0 - t;
        case kind_t::log_linear: return 1.0 - (1.0 - log_linear_eps) * t;
    }
    return 0.0;  // unreachable
}

double schedule::alpha_prime(double t) const {
    check_time(t, "schedule::alpha_prime");
    switch (kind_) {
        case kind_t::linear: return -1.0;
        case kind_t::log_linear: return -(1.0 - log_linear_eps);
    }
    return 0.0;  // unreachable
}

double schedule::alpha_cond(double s, double t) const {
    if (t < s) throw std::domain_error("schedule::alpha_cond: needs s <= t");
    if (s == t) return 1.0;  // covers s == t == 1, where alpha(s) == 0
    double as = alpha(s);
    if (as <= 0.0) throw std::domain_error("schedule::alpha_cond: alpha(s) == 0 with s < t");
    return alpha(t) / as;
}

dense_mat dense_K(const mixed_kernel& kernel) {
    dense_mat m(kernel.n);
    // Rank one: every row is the stationary distribution.
    for (int i = 0; i < kernel.n; ++i)
        for (int j = 0; j < kernel.n; ++j) m.at(i, j) = kernel.pi(j);
    return m;
}

dense_mat dense_Q(const mixed_kernel& kernel, const schedule& sched, double s, double t) {
    if (t < s) throw std::domain_error("dense_Q: needs s <= t");
    check_time(s, "dense_Q");
    check_time(t, "dense_Q");
    dense_mat m(kernel.n);
    double a = sched.alpha_cond(s, t);
    double b = 1.0 - a;
    for (int i = 0; i < kernel.n; ++i) {
        for (int j = 0; j < kernel.n; ++j) m.at(i, j) = b * kernel.pi(j);
        m.at(i, i) += a;
    }
    return m;
}

token_seq corrupt(const mixed_kernel& kernel, const schedule& sched,
                  const token_seq& x0, double t, std::uint64_t seed) {
    check_time(t, "corrupt");
    double a = sched.alpha(t);
    token_seq z(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) {
        token_id x = x0[i];
        if (x < 0 || x >= kernel.n)
            throw std::out_of_range("corrupt: token " + std::to_string(x) + " out of range");
        if (keyed_uniform(seed, stream_corrupt, i, 0) < a) {
            z[i] = x;
        } else if (keyed_uniform(seed, stream_corrupt, i, 1) < kernel.k) {
            z[i] = keyed_below(seed, kernel.n, stream_corrupt, i, 2);
        } else {
            z[i] = kernel.mask_id;
        }
    }
    return z;
}

}  // namespace xdlm
