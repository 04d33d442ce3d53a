#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <doctest.h>

#include "xdlm/errors.hpp"
#include "xdlm/oracle.hpp"
#include "xdlm/scalar.hpp"
#include "xdlm/testgen.hpp"

using namespace xdlm;

namespace {

scalar_context make_ctx(int n, double k, schedule sched = schedule::linear()) {
    scalar_context ctx;
    ctx.kernel = build_kernel(n, n - 1, k);
    ctx.sched = sched;
    return ctx;
}

simplex uniform_no_mask(int n) {
    std::vector<double> p(static_cast<std::size_t>(n), 1.0 / (n - 1));
    p[static_cast<std::size_t>(n - 1)] = 0.0;
    return simplex(std::move(p));
}

}  // namespace

TEST_CASE("simplex validation") {
    CHECK_NOTHROW(simplex({0.5, 0.5}));
    CHECK_THROWS_AS(simplex({0.5, 0.6}), std::invalid_argument);
    CHECK_THROWS_AS(simplex({1.5, -0.5}), std::invalid_argument);
    CHECK_THROWS_AS(simplex(std::vector<double>{}), std::invalid_argument);
    simplex pm = simplex::point_mass(4, 2);
    CHECK(pm[2] == 1.0);
    CHECK(pm[0] == 0.0);
}

TEST_CASE("strip_mask_mass renormalizes over non-mask tokens") {
    simplex x({0.2, 0.3, 0.5});
    simplex stripped = strip_mask_mass(x, 2);
    CHECK(stripped[2] == 0.0);
    CHECK(stripped[0] == doctest::Approx(0.4));
    CHECK(stripped[1] == doctest::Approx(0.6));

    // Already mask-free: returned unchanged.
    simplex clean({0.25, 0.75, 0.0});
    simplex same = strip_mask_mass(clean, 2);
    CHECK(same[0] == 0.25);
    CHECK(same[1] == 0.75);

    CHECK_THROWS_AS(strip_mask_mass(simplex::point_mass(3, 2), 2), std::domain_error);
}

TEST_CASE("noise_rate mirrors the stationary distribution") {
    scalar_context ctx = make_ctx(10, 0.1);
    CHECK(noise_rate(ctx, 0) == doctest::Approx(0.01));
    CHECK(noise_rate(ctx, 9) == doctest::Approx(0.91));
    double sum = 0.0;
    for (int e = 0; e < 10; ++e) sum += noise_rate(ctx, e);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
    CHECK_THROWS_AS(noise_rate(ctx, 10), std::out_of_range);
    CHECK_THROWS_AS(noise_rate(ctx, -1), std::out_of_range);
}

TEST_CASE("f_map endpoints and hand value") {
    scalar_context ctx = make_ctx(10, 0.1);
    std::vector<double> raw(10, 0.1);
    raw[0] = 0.2;
    raw[9] = 0.0;
    simplex x(std::move(raw));

    CHECK(f_map(ctx, 0.0, token_dist(x), 0) == doctest::Approx(0.2));
    CHECK(f_map(ctx, 1.0, token_dist(x), 0) == doctest::Approx(0.01));
    CHECK(f_map(ctx, 1.0, token_dist(3), 9) == doctest::Approx(0.91));
    // alpha = 0.5, p = 0.2, r = 0.01 -> 0.105
    CHECK(f_map(ctx, 0.5, token_dist(x), 0) == doctest::Approx(0.105).epsilon(1e-14));
    CHECK(f_map(ctx, 0.5, token_dist(2), 2) == doctest::Approx(0.5 + 0.5 * 0.01));
}

TEST_CASE("posterior hand example at n = 2, k = 1") {
    scalar_context ctx = make_ctx(2, 1.0);
    // s = 0.25, t = 0.75: alpha_s = 0.75, alpha_t = 0.25, alpha_{t|s} = 1/3.
    // f_s(x=0, 0) = 0.875, f_{t|s}(0, 0) = 2/3, f_t(x, 0) = 0.625.
    simplex q = posterior(ctx, 0.25, 0.75, 0, token_dist(0));
    CHECK(q[0] == doctest::Approx(14.0 / 15.0).epsilon(1e-13));
    CHECK(q[1] == doctest::Approx(1.0 / 15.0).epsilon(1e-13));
    CHECK(f_map(ctx, 0.75, token_dist(0), 0) == doctest::Approx(0.625));
}

TEST_CASE("posterior degenerate cases") {
    scalar_context ctx = make_ctx(5, 0.3);
    simplex pm = posterior(ctx, 0.4, 0.4, 2, token_dist(0));
    CHECK(pm[2] == 1.0);

    // k = 0 with unmasked z_t: a point mass at z_t (the carried-over token).
    scalar_context mdlm = make_ctx(5, 0.0);
    simplex carry = posterior(mdlm, 0.2, 0.7, 1, token_dist(1));
    CHECK(carry[1] == doctest::Approx(1.0).epsilon(1e-13));
    for (int e = 0; e < 5; ++e)
        if (e != 1) CHECK(carry[e] == 0.0);

    // k = 0 with z_t neither mask nor x: unreachable state.
    CHECK_THROWS_AS(posterior(mdlm, 0.2, 0.7, 1, token_dist(0)), degenerate_denominator);
    CHECK_THROWS_AS(posterior(ctx, 0.7, 0.2, 1, token_dist(0)), std::domain_error);
    CHECK_THROWS_AS(posterior(ctx, 0.2, 0.7, 9, token_dist(0)), std::out_of_range);
}

TEST_CASE("normalization identity: sum_e f_s(x,e) f_{t|s}(e,zt) = f_t(x,zt)") {
    for (int trial = 0; trial < 200; ++trial) {
        double k = (trial % 5) * 0.25;
        int n = 2 + trial % 17;
        scalar_context ctx = make_ctx(n, k);
        double t = 0.05 + 0.9 * keyed_uniform(5, 1, trial, 0);
        double s = t * keyed_uniform(5, 1, trial, 1);
        simplex x = testgen::rand_simplex_no_mask(5, 2, trial, 0, n, n - 1);
        for (int zt = 0; zt < n; ++zt) {
            double a_ts = ctx.sched.alpha_cond(s, t);
            double rz = ctx.kernel.pi(zt);
            double sum = 0.0;
            for (int e = 0; e < n; ++e)
                sum += f_map(ctx, s, token_dist(x), e) *
                       (a_ts * (e == zt ? 1.0 : 0.0) + (1.0 - a_ts) * rz);
            CHECK(sum == doctest::Approx(f_map(ctx, t, token_dist(x), zt)).epsilon(1e-12));
        }
    }
}

TEST_CASE("posterior equals the dense oracle at n = 5, k = 0.3, every zt") {
    scalar_context ctx = make_ctx(5, 0.3);
    for (int trial = 0; trial < 100; ++trial) {
        double t = 0.05 + 0.9 * keyed_uniform(8, 1, trial, 0);
        double s = t * (0.999 * keyed_uniform(8, 1, trial, 1));
        simplex x = testgen::rand_simplex_no_mask(8, 2, trial, 0, 5, 4);
        for (int zt = 0; zt < 5; ++zt) {
            simplex fast = posterior(ctx, s, t, zt, token_dist(x));
            oracle::dense_posterior slow =
                oracle::posterior_matrix(ctx.kernel, ctx.sched, s, t, zt, token_dist(x));
            for (int e = 0; e < 5; ++e)
                CHECK(std::abs(fast[e] - slow.probs[static_cast<std::size_t>(e)]) <= 1e-12);
        }
    }
}

TEST_CASE("h_exact is zero for a perfect prediction") {
    scalar_context ctx = make_ctx(6, 0.4);
    simplex x = testgen::rand_simplex_no_mask(11, 1, 0, 0, 6, 5);
    CHECK(std::abs(h_exact(ctx, 0.3, 0.6, 2, token_dist(x), x)) <= 1e-12);
    CHECK(std::abs(h_limit(ctx, 0.6, 2, token_dist(x), x)) <= 1e-12);
    CHECK(std::abs(kl_scalar(ctx, 0.3, 0.6, 2, token_dist(x), x)) <= 1e-12);
}

TEST_CASE("h_exact equals oracle KL divided by the prefactor") {
    scalar_context ctx = make_ctx(5, 0.3);
    for (int trial = 0; trial < 200; ++trial) {
        double t = 0.1 + 0.8 * keyed_uniform(21, 1, trial, 0);
        double s = t * (0.2 + 0.7 * keyed_uniform(21, 1, trial, 1));
        simplex x = testgen::rand_simplex_no_mask(21, 2, trial, 0, 5, 4);
        simplex xp = testgen::rand_simplex_no_mask(21, 2, trial, 1, 5, 4);
        token_id zt = testgen::draw_from_marginal(21, 3, trial, 2, ctx.kernel,
                                                  ctx.sched.alpha(t), token_dist(x));
        double as = ctx.sched.alpha(s);
        double at = ctx.sched.alpha(t);
        double pref = (1.0 - at / as) * as * ctx.kernel.pi(zt) /
                      f_map(ctx, t, token_dist(x), zt);
        double via_h = pref * h_exact(ctx, s, t, zt, token_dist(x), xp);
        double direct = oracle::kl_matrix(ctx.kernel, ctx.sched, s, t, zt, token_dist(x),
                                          token_dist(xp), ctx.eps_log);
        CHECK(std::abs(via_h - direct) <= 1e-8);
    }
}

TEST_CASE("h_exact rejects the unbounded pure-absorbing case") {
    scalar_context mdlm = make_ctx(4, 0.0);
    simplex xp = uniform_no_mask(4);
    // r(z_t) == 0: the h factor alone diverges even though the KL is 0.
    CHECK_THROWS_AS(h_exact(mdlm, 0.2, 0.5, 1, token_dist(1), xp), std::domain_error);
    // kl_scalar handles the same inputs exactly.
    CHECK(std::abs(kl_scalar(mdlm, 0.2, 0.5, 1, token_dist(1), xp)) <= 1e-14);
}

TEST_CASE("clean data must not be the mask token") {
    scalar_context ctx = make_ctx(4, 0.5);
    simplex xp = uniform_no_mask(4);
    CHECK_THROWS_AS(h_exact(ctx, 0.2, 0.5, 1, token_dist(3), xp), std::domain_error);
    CHECK_THROWS_AS(h_limit(ctx, 0.5, 1, token_dist(3), xp), std::domain_error);
    CHECK_THROWS_AS(kl_scalar(ctx, 0.2, 0.5, 1, token_dist(3), xp), std::domain_error);
    CHECK_THROWS_AS(loss_term(ctx, 0.5, 1, 3, xp), std::domain_error);
}

TEST_CASE("mask mass in distributions is stripped before the algebra") {
    scalar_context ctx = make_ctx(3, 0.6);
    // x with mask mass vs the pre-stripped equivalent: identical results.
    simplex dirty({0.3, 0.2, 0.5});
    simplex clean({0.6, 0.4, 0.0});
    simplex xp({0.7, 0.3, 0.0});
    CHECK(h_exact(ctx, 0.2, 0.6, 1, token_dist(dirty), xp) ==
          doctest::Approx(h_exact(ctx, 0.2, 0.6, 1, token_dist(clean), xp)).epsilon(1e-15));
    simplex xp_dirty({0.35, 0.15, 0.5});
    CHECK(kl_scalar(ctx, 0.2, 0.6, 1, token_dist(clean), xp_dirty) ==
          doctest::Approx(kl_scalar(ctx, 0.2, 0.6, 1, token_dist(clean), xp)).epsilon(1e-15));
}

TEST_CASE("h_limit is the s -> t limit at first order") {
    scalar_context ctx = make_ctx(7, 0.5);
    simplex x = testgen::rand_simplex_no_mask(31, 1, 0, 0, 7, 6);
    simplex xp = testgen::rand_simplex_no_mask(31, 1, 0, 1, 7, 6);
    for (token_id zt : {0, 3, 6}) {
        double t = 0.55;
        double hl = h_limit(ctx, t, zt, token_dist(x), xp);
        double e2 = std::abs(h_exact(ctx, t - 1e-2, t, zt, token_dist(x), xp) - hl);
        double e3 = std::abs(h_exact(ctx, t - 1e-3, t, zt, token_dist(x), xp) - hl);
        double e4 = std::abs(h_exact(ctx, t - 1e-4, t, zt, token_dist(x), xp) - hl);
        CHECK(e2 / e3 >= 5.0);
        CHECK(e2 / e3 <= 20.0);
        CHECK(e3 / e4 >= 5.0);
        CHECK(e3 / e4 <= 20.0);
    }
    CHECK_THROWS_AS(h_limit(ctx, 0.0, 1, token_dist(0), xp), std::domain_error);
    CHECK_THROWS_AS(h_limit(ctx, 1.0, 1, token_dist(0), xp), std::domain_error);
}

TEST_CASE("kl_scalar equals the oracle and stays nonnegative") {
    double min_kl = 0.0;
    for (int trial = 0; trial < 300; ++trial) {
        int n = 2 + trial % 11;
        double k = (trial % 4) * (1.0 / 3.0);
        scalar_context ctx = make_ctx(n, k);
        double t = 0.1 + 0.8 * keyed_uniform(41, 1, trial, 0);
        double s = t * (0.1 + 0.85 * keyed_uniform(41, 1, trial, 1));
        simplex x = testgen::rand_simplex_no_mask(41, 2, trial, 0, n, n - 1);
        simplex xp = testgen::rand_simplex_no_mask(41, 2, trial, 1, n, n - 1);
        token_id zt = testgen::draw_from_marginal(41, 3, trial, 2, ctx.kernel,
                                                  ctx.sched.alpha(t), token_dist(x));
        double fast = kl_scalar(ctx, s, t, zt, token_dist(x), xp);
        double slow = oracle::kl_matrix(ctx.kernel, ctx.sched, s, t, zt, token_dist(x),
                                        token_dist(xp), ctx.eps_log);
        CHECK(std::abs(fast - slow) <= 1e-8);
        min_kl = std::min(min_kl, fast);
    }
    CHECK(min_kl >= -1e-9);
}

TEST_CASE("kl_scalar is exactly finite-zero in the k = 0 carried-token case") {
    scalar_context mdlm = make_ctx(8, 0.0);
    for (int trial = 0; trial < 50; ++trial) {
        simplex xp = testgen::rand_simplex_no_mask(51, 1, trial, 0, 8, 7);
        token_id x = trial % 7;
        CHECK(std::abs(kl_scalar(mdlm, 0.3, 0.7, x, token_dist(x), xp)) <= 1e-14);
    }
}

TEST_CASE("loss_term weight and reductions") {
    // Linear schedule: weight is r(zt) / f_t(x, zt) exactly.
    scalar_context ctx = make_ctx(6, 0.4);
    simplex xp = testgen::rand_simplex_no_mask(61, 1, 0, 0, 6, 5);
    double t = 0.45;
    token_id x = 2, zt = 4;
    double weight = ctx.kernel.pi(zt) / f_map(ctx, t, token_dist(x), zt);
    double expect = weight * h_limit(ctx, t, zt, token_dist(x), xp);
    CHECK(loss_term(ctx, t, zt, x, xp) == doctest::Approx(expect).epsilon(1e-14));

    // Near-perfect prediction: loss close to zero.
    std::vector<double> sharp(6, 1e-7);
    sharp[5] = 0.0;
    sharp[2] = 1.0 - 4e-7;
    double tiny = loss_term(ctx, t, 5, 2, simplex(std::move(sharp)));
    CHECK(std::abs(tiny) <= 1e-4);

    // k = 0, masked z_t, linear schedule: the masked cross-entropy, weighted 1/beta_t.
    scalar_context mdlm = make_ctx(6, 0.0);
    simplex pred = testgen::rand_simplex_no_mask(61, 1, 1, 0, 6, 5);
    double got = loss_term(mdlm, t, 5, 2, pred);
    double want = -std::log(pred[2]) / t;
    CHECK(std::abs(got - want) <= 1e-10);

    // k = 0, carried token: exactly zero weight, exactly zero loss.
    CHECK(loss_term(mdlm, t, 2, 2, pred) == 0.0);

    // Prediction that gives the clean token zero mass at k = 0: reported.
    CHECK_THROWS_AS(loss_term(mdlm, t, 5, 0, simplex::point_mass(6, 1)), numeric_error);
}

TEST_CASE("loss_term_grad matches pairwise finite differences") {
    for (double k : {0.0, 0.3, 1.0}) {
        scalar_context ctx = make_ctx(7, k);
        double t = 0.35;
        token_id x = 1;
        token_id zt = (k == 0.0) ? 6 : 3;  // keep the instance on-support
        simplex xp = testgen::rand_simplex_no_mask(71, 1, static_cast<int>(10 * k), 0, 7, 6);

        std::vector<double> grad(7, 0.0);
        loss_term_grad(ctx, t, zt, x, xp, 1.0, grad);

        const double delta = 1e-7;
        for (int e = 0; e < 6; ++e) {
            int donor = (e + 1) % 6;
            std::vector<double> up = xp.probs(), dn = xp.probs();
            up[static_cast<std::size_t>(e)] += delta;
            up[static_cast<std::size_t>(donor)] -= delta;
            dn[static_cast<std::size_t>(e)] -= delta;
            dn[static_cast<std::size_t>(donor)] += delta;
            double fd = (loss_term(ctx, t, zt, x, simplex(std::move(up))) -
                         loss_term(ctx, t, zt, x, simplex(std::move(dn)))) /
                        (2.0 * delta);
            double an = grad[static_cast<std::size_t>(e)] - grad[static_cast<std::size_t>(donor)];
            CHECK(std::abs(an - fd) <= 1e-4 * std::max({std::abs(an), std::abs(fd), 1.0}));
        }

        // scale folds linearly into the accumulation.
        std::vector<double> twice(7, 0.0);
        loss_term_grad(ctx, t, zt, x, xp, 2.0, twice);
        for (int e = 0; e < 7; ++e)
            CHECK(twice[static_cast<std::size_t>(e)] ==
                  doctest::Approx(2.0 * grad[static_cast<std::size_t>(e)]).epsilon(1e-14));
    }
}

TEST_CASE("loss_term_grad is a no-op at zero weight") {
    scalar_context mdlm = make_ctx(5, 0.0);
    simplex xp = uniform_no_mask(5);
    std::vector<double> grad(5, 0.0);
    loss_term_grad(mdlm, 0.4, 2, 2, xp, 1.0, grad);  // carried token, weight 0
    for (double g : grad) CHECK(g == 0.0);
    CHECK_THROWS_AS(loss_term_grad(mdlm, 0.4, 4, 2, xp, 1.0, std::span<double>(grad.data(), 3)),
                    std::invalid_argument);
}

TEST_CASE("log-floor violations are reported, not clamped") {
    // k = 0 and a prediction with a zero where the sum needs a log.
    scalar_context mdlm = make_ctx(4, 0.0);
    bool threw = false;
    try {
        h_limit(mdlm, 0.5, 3, token_dist(0), simplex::point_mass(4, 1));
    } catch (const numeric_error& e) {
        threw = true;
        CHECK(std::string(e.what()).find("log floor") != std::string::npos);
    }
    CHECK(threw);
}
