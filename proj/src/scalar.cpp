#include "xdlm/scalar.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include "xdlm/errors.hpp"

namespace xdlm {

namespace {

void check_token(const scalar_context& ctx, token_id e, const char* who) {
    if (e < 0 || e >= ctx.kernel.n)
        throw std::out_of_range(std::string(who) + ": token " + std::to_string(e) +
                                " out of range for vocabulary of " + std::to_string(ctx.kernel.n));
}

void check_x(const scalar_context& ctx, const token_dist& x, const char* who) {
    if (x.is_token()) {
        check_token(ctx, x.token(), who);
    } else if (x.dist().size() != ctx.kernel.n) {
        throw std::invalid_argument(std::string(who) + ": distribution size " +
                                    std::to_string(x.dist().size()) + " != vocabulary size " +
                                    std::to_string(ctx.kernel.n));
    }
}

// Log arguments must sit strictly above the floor; anything at or below it is
// reported rather than clamped into a finite lie.
double checked(const scalar_context& ctx, double v, const char* what) {
    if (!(v > ctx.eps_log))
        throw numeric_error(std::string(what) + " = " + std::to_string(v) +
                            " is at or below the log floor");
    return v;
}

// The closed-form h / KL / loss algebra assumes neither the clean data nor
// the prediction carries mask mass.  Token-valued x must not be the mask;
// distributions are stripped (copying only when needed).
const simplex& mask_free(const scalar_context& ctx, const simplex& d,
                         std::optional<simplex>& storage) {
    if (d[ctx.kernel.mask_id] == 0.0) return d;
    storage.emplace(strip_mask_mass(d, ctx.kernel.mask_id));
    return *storage;
}

token_dist mask_free_x(const scalar_context& ctx, const token_dist& x,
                       std::optional<simplex>& storage, const char* who) {
    if (x.is_token()) {
        if (x.token() == ctx.kernel.mask_id)
            throw std::domain_error(std::string(who) + ": clean data cannot be the mask token");
        return x;
    }
    return token_dist(mask_free(ctx, x.dist(), storage));
}

// f over the whole vocabulary is needed by the sum term; this evaluates one
// entry without validation (hot loop).
inline double f_raw(const scalar_context& ctx, double alpha_t, const token_dist& x, token_id e) {
    return alpha_t * x.p(e) + (1.0 - alpha_t) * ctx.kernel.pi(e);
}

// Shared tail of h_exact / h_limit: the time-u sum
//   sum_e (p_x(e) + k * beta_u / (n * alpha_u)) * log(f_u(x, e) / f_u(x_pred, e)).
// Zero-weight entries are skipped before any log is taken, so unreachable
// tokens (weight 0, f == 0) cost nothing and raise nothing.
double log_ratio_sum(const scalar_context& ctx, double u, const token_dist& x,
                     const token_dist& xp) {
    double au = ctx.sched.alpha(u);
    double c = ctx.kernel.k * (1.0 - au) / (ctx.kernel.n * au);
    double total = 0.0;
    for (token_id e = 0; e < ctx.kernel.n; ++e) {
        double w = x.p(e) + c;
        if (w == 0.0) continue;
        double fx = checked(ctx, f_raw(ctx, au, x, e), "log-ratio sum: f(x, e)");
        double fp = checked(ctx, f_raw(ctx, au, xp, e), "log-ratio sum: f(x_pred, e)");
        total += w * std::log(fx / fp);
    }
    return total;
}

}  // namespace

double noise_rate(const scalar_context& ctx, token_id e) {
    check_token(ctx, e, "noise_rate");
    return ctx.kernel.pi(e);
}

double f_map(const scalar_context& ctx, double t, const token_dist& x, token_id e) {
    check_token(ctx, e, "f_map");
    check_x(ctx, x, "f_map");
    return f_raw(ctx, ctx.sched.alpha(t), x, e);
}

simplex posterior(const scalar_context& ctx, double s, double t, token_id zt,
                  const token_dist& x) {
    check_token(ctx, zt, "posterior");
    check_x(ctx, x, "posterior");
    if (!(s >= 0.0 && s <= t && t <= 1.0))
        throw std::domain_error("posterior: needs 0 <= s <= t <= 1");
    int n = ctx.kernel.n;
    if (s == t) return simplex::point_mass(n, zt);

    double a_ts = ctx.sched.alpha_cond(s, t);
    double b_ts = 1.0 - a_ts;
    double rz = ctx.kernel.pi(zt);
    double as = ctx.sched.alpha(s);
    double at = ctx.sched.alpha(t);
    double denom = at * x.p(zt) + (1.0 - at) * rz;
    if (denom == 0.0)
        throw degenerate_denominator("posterior: f_t(x, z_t) == 0; z_t is unreachable from x");

    // q(e) = f_s(x, e) * (alpha_{t|s} [e == z_t] + beta_{t|s} r(z_t)) / f_t(x, z_t)
    std::vector<double> q(static_cast<std::size_t>(n));
    double off = b_ts * rz / denom;
    for (token_id e = 0; e < n; ++e) q[static_cast<std::size_t>(e)] = f_raw(ctx, as, x, e) * off;
    q[static_cast<std::size_t>(zt)] += f_raw(ctx, as, x, zt) * a_ts / denom;
    return simplex(std::move(q));
}

double h_exact(const scalar_context& ctx, double s, double t, token_id zt,
               const token_dist& x, const simplex& x_pred) {
    check_token(ctx, zt, "h_exact");
    check_x(ctx, x, "h_exact");
    check_x(ctx, token_dist(x_pred), "h_exact");
    if (!(s >= 0.0 && s < t && t <= 1.0))
        throw std::domain_error("h_exact: needs 0 <= s < t <= 1");

    std::optional<simplex> xs, ps;
    token_dist xc = mask_free_x(ctx, x, xs, "h_exact");
    token_dist pc(mask_free(ctx, x_pred, ps));

    double rz = ctx.kernel.pi(zt);
    if (rz == 0.0)
        throw std::domain_error(
            "h_exact: r(z_t) == 0 (pure absorbing noise, z_t unmasked); the h factor alone is "
            "unbounded here even though the weighted KL is 0 -- use kl_scalar");

    double as = ctx.sched.alpha(s);
    double at = ctx.sched.alpha(t);
    double a_ts = at / as;
    double b_ts = 1.0 - a_ts;

    double fs_x = checked(ctx, f_raw(ctx, as, xc, zt), "h_exact: f_s(x, z_t)");
    double ft_x = f_raw(ctx, at, xc, zt);
    if (ft_x == 0.0)
        throw degenerate_denominator("h_exact: f_t(x, z_t) == 0; z_t is unreachable from x");
    checked(ctx, ft_x, "h_exact: f_t(x, z_t)");
    double fs_p = checked(ctx, f_raw(ctx, as, pc, zt), "h_exact: f_s(x_pred, z_t)");
    double ft_p = checked(ctx, f_raw(ctx, at, pc, zt), "h_exact: f_t(x_pred, z_t)");

    double t1 = (fs_x / rz) * (a_ts / (b_ts * as)) * std::log(fs_x * ft_p / (ft_x * fs_p));
    double t2 = -std::log(ft_x / ft_p) / as;
    return t1 + t2 + log_ratio_sum(ctx, s, xc, pc);
}

double h_limit(const scalar_context& ctx, double t, token_id zt,
               const token_dist& x, const simplex& x_pred) {
    check_token(ctx, zt, "h_limit");
    check_x(ctx, x, "h_limit");
    check_x(ctx, token_dist(x_pred), "h_limit");
    if (!(t > 0.0 && t < 1.0)) throw std::domain_error("h_limit: needs t strictly inside (0, 1)");

    std::optional<simplex> xs, ps;
    token_dist xc = mask_free_x(ctx, x, xs, "h_limit");
    token_dist pc(mask_free(ctx, x_pred, ps));

    double at = ctx.sched.alpha(t);
    double ft_x = f_raw(ctx, at, xc, zt);
    if (ft_x == 0.0)
        throw degenerate_denominator("h_limit: f_t(x, z_t) == 0; z_t is unreachable from x");
    checked(ctx, ft_x, "h_limit: f_t(x, z_t)");
    double ft_p = checked(ctx, f_raw(ctx, at, pc, zt), "h_limit: f_t(x_pred, z_t)");

    double t1 = (xc.p(zt) - pc.p(zt)) / ft_p;
    double t2 = -std::log(ft_x / ft_p) / at;
    return t1 + t2 + log_ratio_sum(ctx, t, xc, pc);
}

double kl_scalar(const scalar_context& ctx, double s, double t, token_id zt,
                 const token_dist& x, const simplex& x_pred) {
    check_token(ctx, zt, "kl_scalar");
    check_x(ctx, x, "kl_scalar");
    check_x(ctx, token_dist(x_pred), "kl_scalar");
    if (!(s >= 0.0 && s < t && t <= 1.0))
        throw std::domain_error("kl_scalar: needs 0 <= s < t <= 1");

    std::optional<simplex> xs, ps;
    token_dist xc = mask_free_x(ctx, x, xs, "kl_scalar");
    token_dist pc(mask_free(ctx, x_pred, ps));

    double rz = ctx.kernel.pi(zt);
    double as = ctx.sched.alpha(s);
    double at = ctx.sched.alpha(t);
    double a_ts = at / as;
    double b_ts = 1.0 - a_ts;

    double ft_x = f_raw(ctx, at, xc, zt);
    if (ft_x == 0.0)
        throw degenerate_denominator("kl_scalar: f_t(x, z_t) == 0; z_t is unreachable from x");
    checked(ctx, ft_x, "kl_scalar: f_t(x, z_t)");
    double fs_x = checked(ctx, f_raw(ctx, as, xc, zt), "kl_scalar: f_s(x, z_t)");
    double fs_p = checked(ctx, f_raw(ctx, as, pc, zt), "kl_scalar: f_s(x_pred, z_t)");
    double ft_p = checked(ctx, f_raw(ctx, at, pc, zt), "kl_scalar: f_t(x_pred, z_t)");

    // KL = prefactor * h with prefactor = beta_{t|s} alpha_s r(z_t) / f_t(x, z_t).
    // The r(z_t) in the prefactor cancels the 1/r(z_t) inside h's first term;
    // multiplying the cancelled forms keeps the r(z_t) == 0 case finite (the
    // remaining terms then carry weight 0 and the first term's log vanishes
    // on-support, giving the exact 0).
    double term1 = a_ts * (fs_x / ft_x) * std::log(fs_x * ft_p / (ft_x * fs_p));
    double weight = b_ts * as * rz / ft_x;
    if (weight == 0.0) return term1;
    double t2 = -std::log(ft_x / ft_p) / as;
    return term1 + weight * (t2 + log_ratio_sum(ctx, s, xc, pc));
}

double loss_term(const scalar_context& ctx, double t, token_id zt, token_id x,
                 const simplex& x_pred) {
    check_token(ctx, zt, "loss_term");
    check_token(ctx, x, "loss_term");
    if (!(t > 0.0 && t < 1.0)) throw std::domain_error("loss_term: needs t strictly inside (0, 1)");
    if (x == ctx.kernel.mask_id)
        throw std::domain_error("loss_term: clean data cannot be the mask token");

    double rz = ctx.kernel.pi(zt);
    double at = ctx.sched.alpha(t);
    double ft_x = at * (x == zt ? 1.0 : 0.0) + (1.0 - at) * rz;
    if (ft_x == 0.0)
        throw degenerate_denominator("loss_term: f_t(x, z_t) == 0; z_t is unreachable from x");
    double weight = -ctx.sched.alpha_prime(t) * rz / ft_x;
    if (weight == 0.0) return 0.0;
    return weight * h_limit(ctx, t, zt, token_dist(x), x_pred);
}

void loss_term_grad(const scalar_context& ctx, double t, token_id zt, token_id x,
                    const simplex& x_pred, double scale, std::span<double> grad) {
    check_token(ctx, zt, "loss_term_grad");
    check_token(ctx, x, "loss_term_grad");
    if (!(t > 0.0 && t < 1.0))
        throw std::domain_error("loss_term_grad: needs t strictly inside (0, 1)");
    if (grad.size() != static_cast<std::size_t>(ctx.kernel.n))
        throw std::invalid_argument("loss_term_grad: gradient span has wrong size");

    double rz = ctx.kernel.pi(zt);
    double at = ctx.sched.alpha(t);
    double ft_x = at * (x == zt ? 1.0 : 0.0) + (1.0 - at) * rz;
    if (ft_x == 0.0)
        throw degenerate_denominator("loss_term_grad: f_t(x, z_t) == 0");
    double weight = -ctx.sched.alpha_prime(t) * rz / ft_x;
    if (weight == 0.0) return;

    std::optional<simplex> ps;
    token_dist pc(mask_free(ctx, x_pred, ps));
    double ft_p = checked(ctx, f_raw(ctx, at, pc, zt), "loss_term_grad: f_t(x_pred, z_t)");
    double w = weight * scale;

    // d h / d p(z_t) from the first two terms: 1/f_t(p, z_t) - f_t(x, z_t)/f_t(p, z_t)^2.
    grad[static_cast<std::size_t>(zt)] += w * (1.0 / ft_p - ft_x / (ft_p * ft_p));

    // Sum term: -(delta_{e,x} + k beta_t / (n alpha_t)) * alpha_t / f_t(p, e).
    double c = ctx.kernel.k * (1.0 - at) / (ctx.kernel.n * at);
    for (token_id e = 0; e < ctx.kernel.n; ++e) {
        double coeff = (e == x ? 1.0 : 0.0) + c;
        if (coeff == 0.0) continue;
        double fp = checked(ctx, f_raw(ctx, at, pc, e), "loss_term_grad: f_t(x_pred, e)");
        grad[static_cast<std::size_t>(e)] -= w * coeff * at / fp;
    }
}

}  // namespace xdlm
