#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "xdlm/rng.hpp"
#include "xdlm/simplex.hpp"

// Deterministic random problem instances for verification suites, benches
// and tests.  All draws are keyed on (seed, tag, trial, slot-derived
// counters), so a (seed, trial) pair always denotes the same instance.
namespace xdlm::testgen {

// Dirichlet(1) draw over the non-mask tokens (mask entry exactly 0):
// exponential variates, normalized.
inline simplex rand_simplex_no_mask(std::uint64_t seed, std::uint64_t tag,
                                    std::uint64_t trial, std::uint64_t slot, int n,
                                    token_id mask_id) {
    std::vector<double> p(static_cast<std::size_t>(n), 0.0);
    double total = 0.0;
    for (int e = 0; e < n; ++e) {
        if (e == mask_id) continue;
        double g = -std::log(keyed_uniform(seed, tag, trial * 8 + slot, static_cast<std::uint64_t>(e)));
        p[static_cast<std::size_t>(e)] = g;
        total += g;
    }
    for (double& v : p) v /= total;
    return simplex(std::move(p));
}

// Draws z_t from the forward marginal f_t(x, .) so generated instances are
// always on-support (important at k == 0, where most states are unreachable).
inline token_id draw_from_marginal(std::uint64_t seed, std::uint64_t tag,
                                   std::uint64_t trial, std::uint64_t slot,
                                   const mixed_kernel& kernel, double alpha_t,
                                   const token_dist& x) {
    double u = keyed_uniform(seed, tag, trial * 8 + slot, 0);
    if (u < alpha_t) {
        // Keep the clean token: categorical draw from x.
        if (x.is_token()) return x.token();
        double v = keyed_uniform(seed, tag, trial * 8 + slot, 1);
        double acc = 0.0;
        for (int e = 0; e < kernel.n; ++e) {
            acc += x.p(e);
            if (v < acc) return e;
        }
        return kernel.n - 1;
    }
    // Redraw from the stationary distribution.
    if (keyed_uniform(seed, tag, trial * 8 + slot, 2) < kernel.k)
        return keyed_below(seed, kernel.n, tag, trial * 8 + slot, 3);
    return kernel.mask_id;
}

}  // namespace xdlm::testgen
