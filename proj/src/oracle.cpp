#include "xdlm/oracle.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "xdlm/errors.hpp"

namespace xdlm::oracle {

namespace {

void check_n(int n) {
    if (n > max_n)
        throw std::invalid_argument("oracle: vocabulary size " + std::to_string(n) +
                                    " exceeds the dense-matrix cap of " + std::to_string(max_n));
}

}  // namespace

dense_posterior posterior_matrix(const mixed_kernel& kernel, const schedule& sched,
                                 double s, double t, token_id zt, const token_dist& x) {
    check_n(kernel.n);
    if (zt < 0 || zt >= kernel.n) throw std::out_of_range("posterior_matrix: z_t out of range");
    int n = kernel.n;

    // Definitional: q(e) proportional to (Q_{t|s} z_t)(e) * (Q_{s|0}^T x)(e),
    // with all three transition matrices materialized.
    dense_mat q_ts = dense_Q(kernel, sched, s, t);
    dense_mat q_0s = dense_Q(kernel, sched, 0.0, s);
    dense_mat q_0t = dense_Q(kernel, sched, 0.0, t);

    std::vector<double> carry(static_cast<std::size_t>(n));  // column z_t of Q_{t|s}
    for (int e = 0; e < n; ++e) carry[static_cast<std::size_t>(e)] = q_ts.at(e, zt);

    std::vector<double> reach(static_cast<std::size_t>(n), 0.0);  // Q_{s|0}^T x
    for (int e = 0; e < n; ++e) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) total += x.p(i) * q_0s.at(i, e);
        reach[static_cast<std::size_t>(e)] = total;
    }

    double denom = 0.0;
    for (int i = 0; i < n; ++i) denom += x.p(i) * q_0t.at(i, zt);
    if (denom == 0.0)
        throw degenerate_denominator("posterior_matrix: z_t has zero marginal mass under x");

    dense_posterior out;
    out.denom = denom;
    out.probs.resize(static_cast<std::size_t>(n));
    for (int e = 0; e < n; ++e)
        out.probs[static_cast<std::size_t>(e)] =
            carry[static_cast<std::size_t>(e)] * reach[static_cast<std::size_t>(e)] / denom;
    return out;
}

double kl_matrix(const mixed_kernel& kernel, const schedule& sched, double s,
                 double t, token_id zt, const token_dist& x, const token_dist& x_pred,
                 double eps_log) {
    dense_posterior q = posterior_matrix(kernel, sched, s, t, zt, x);
    dense_posterior p = posterior_matrix(kernel, sched, s, t, zt, x_pred);
    double kl = 0.0;
    for (int e = 0; e < kernel.n; ++e) {
        double qe = q.probs[static_cast<std::size_t>(e)];
        if (qe == 0.0) continue;
        double pe = std::max(p.probs[static_cast<std::size_t>(e)], eps_log);
        kl += qe * std::log(qe / pe);
    }
    return kl;
}

simplex mdlm_posterior(const schedule& sched, double s, double t, token_id zt,
                       int n, token_id mask_id, const simplex& x_pred) {
    if (n < 2) throw std::invalid_argument("mdlm_posterior: vocabulary size must be >= 2");
    check_n(n);
    if (zt < 0 || zt >= n) throw std::out_of_range("mdlm_posterior: z_t out of range");
    if (x_pred.size() != n) throw std::invalid_argument("mdlm_posterior: prediction size mismatch");
    if (!(s >= 0.0 && s <= t && t <= 1.0))
        throw std::domain_error("mdlm_posterior: needs 0 <= s <= t <= 1");

    if (zt != mask_id) return simplex::point_mass(n, zt);

    double as = sched.alpha(s);
    double at = sched.alpha(t);
    if (at >= 1.0) throw std::domain_error("mdlm_posterior: masked z_t is impossible at alpha_t == 1");

    simplex pred = strip_mask_mass(x_pred, mask_id);
    std::vector<double> q(static_cast<std::size_t>(n));
    double stay = (1.0 - as) / (1.0 - at);
    double fill = (as - at) / (1.0 - at);
    for (token_id e = 0; e < n; ++e) q[static_cast<std::size_t>(e)] = fill * pred[e];
    q[static_cast<std::size_t>(mask_id)] = stay;
    return simplex(std::move(q));
}

double udlm_kl(const schedule& sched, double s, double t, token_id zt, int n,
               const token_dist& x, const simplex& x_pred) {
    if (n < 2) throw std::invalid_argument("udlm_kl: vocabulary size must be >= 2");
    check_n(n);
    if (zt < 0 || zt >= n) throw std::out_of_range("udlm_kl: z_t out of range");
    if (!(s >= 0.0 && s < t && t <= 1.0)) throw std::domain_error("udlm_kl: needs 0 <= s < t <= 1");

    double as = sched.alpha(s);
    double at = sched.alpha(t);
    if (at <= 0.0) throw std::domain_error("udlm_kl: needs alpha(t) > 0");
    double b_ts = 1.0 - at / as;

    // Uniform-noise marginals: f_t(y, e) = alpha_t p_y(e) + (1 - alpha_t) / n.
    std::vector<double> fx(static_cast<std::size_t>(n)), fp(static_cast<std::size_t>(n));
    for (token_id e = 0; e < n; ++e) {
        fx[static_cast<std::size_t>(e)] = at * x.p(e) + (1.0 - at) / n;
        fp[static_cast<std::size_t>(e)] = at * x_pred[e] + (1.0 - at) / n;
    }
    double fxz = fx[static_cast<std::size_t>(zt)];
    double fpz = fp[static_cast<std::size_t>(zt)];

    double sum = 0.0;
    for (token_id e = 0; e < n; ++e) {
        double fxe = fx[static_cast<std::size_t>(e)];
        double fpe = fp[static_cast<std::size_t>(e)];
        sum += (fxe / fxz) * std::log(fpz * fxe / (fpe * fxz));
    }
    return (-b_ts * as / (n * at)) * (1.0 / fxz - 1.0 / fpz - sum);
}

}  // namespace xdlm::oracle
