#include "xdlm/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "xdlm/alloc_meter.hpp"
#include "xdlm/oracle.hpp"
#include "xdlm/scalar.hpp"
#include "xdlm/testgen.hpp"

namespace xdlm {

namespace {

volatile double g_sink = 0.0;  // defeats dead-code elimination in timed loops

struct probe_input {
    double s = 0.0, t = 0.0;
    token_id zt = 0;
    simplex x;
    simplex x_pred;
};

std::vector<probe_input> make_inputs(int n, int batch, std::uint64_t seed,
                                     const scalar_context& ctx) {
    std::vector<probe_input> inputs;
    inputs.reserve(static_cast<std::size_t>(batch));
    for (int j = 0; j < batch; ++j) {
        std::uint64_t trial = static_cast<std::uint64_t>(j);
        double u1 = keyed_uniform(seed, stream_bench, trial, 100);
        double u2 = keyed_uniform(seed, stream_bench, trial, 101);
        double s = 0.1 + 0.6 * u1;
        double t = std::min(0.95, s + 0.05 + 0.2 * u2);
        simplex x = testgen::rand_simplex_no_mask(seed, stream_bench, trial, 0, n, ctx.kernel.mask_id);
        simplex xp = testgen::rand_simplex_no_mask(seed, stream_bench, trial, 1, n, ctx.kernel.mask_id);
        token_id zt = testgen::draw_from_marginal(seed, stream_bench, trial, 2, ctx.kernel,
                                                  ctx.sched.alpha(t), token_dist(x));
        inputs.push_back({s, t, zt, std::move(x), std::move(xp)});
    }
    return inputs;
}

void eval_scalar(const scalar_context& ctx, const probe_input& in) {
    simplex post = posterior(ctx, in.s, in.t, in.zt, token_dist(in.x));
    g_sink = g_sink + post[0] + kl_scalar(ctx, in.s, in.t, in.zt, token_dist(in.x), in.x_pred);
}

void eval_oracle(const scalar_context& ctx, const probe_input& in) {
    oracle::dense_posterior post =
        oracle::posterior_matrix(ctx.kernel, ctx.sched, in.s, in.t, in.zt, token_dist(in.x));
    g_sink = g_sink + post.probs[0] +
             oracle::kl_matrix(ctx.kernel, ctx.sched, in.s, in.t, in.zt, token_dist(in.x),
                               token_dist(in.x_pred), ctx.eps_log);
}

// Least-squares slope of ln(metric) against ln(n).
double fit_slope(const std::vector<std::pair<int, double>>& points) {
    double mx = 0.0, my = 0.0;
    for (const auto& [n, v] : points) {
        mx += std::log(static_cast<double>(n));
        my += std::log(v);
    }
    mx /= static_cast<double>(points.size());
    my /= static_cast<double>(points.size());
    double num = 0.0, den = 0.0;
    for (const auto& [n, v] : points) {
        double dx = std::log(static_cast<double>(n)) - mx;
        num += dx * (std::log(v) - my);
        den += dx * dx;
    }
    return num / den;
}

}  // namespace

bench_report run_bench(const std::vector<int>& sizes, int batch, int reps) {
    if (sizes.size() < 2) throw std::invalid_argument("bench: need at least two vocabulary sizes");
    if (batch < 1 || reps < 1) throw std::invalid_argument("bench: batch and reps must be >= 1");

    bench_report report;
    report.batch = batch;
    report.reps = reps;
    report.gate_ok = true;

    const std::uint64_t seed = 42;
    for (int n : sizes) {
        if (n < 2 || n > oracle::max_n)
            throw std::invalid_argument("bench: size " + std::to_string(n) + " outside [2, " +
                                        std::to_string(oracle::max_n) + "]");
        scalar_context ctx;
        ctx.kernel = build_kernel(n, n - 1, 0.5);
        std::vector<probe_input> inputs = make_inputs(n, batch, seed, ctx);

        // Correctness gate on a handful of probe inputs before timing anything.
        int probes = std::min(batch, 8);
        for (int j = 0; j < probes; ++j) {
            const probe_input& in = inputs[static_cast<std::size_t>(j)];
            simplex fast = posterior(ctx, in.s, in.t, in.zt, token_dist(in.x));
            oracle::dense_posterior slow =
                oracle::posterior_matrix(ctx.kernel, ctx.sched, in.s, in.t, in.zt, token_dist(in.x));
            for (int e = 0; e < n; ++e)
                report.gate_max_err = std::max(
                    report.gate_max_err, std::abs(fast[e] - slow.probs[static_cast<std::size_t>(e)]));
            double kf = kl_scalar(ctx, in.s, in.t, in.zt, token_dist(in.x), in.x_pred);
            double ks = oracle::kl_matrix(ctx.kernel, ctx.sched, in.s, in.t, in.zt, token_dist(in.x),
                                          token_dist(in.x_pred), ctx.eps_log);
            report.gate_max_err = std::max(report.gate_max_err, std::abs(kf - ks));
        }
        if (report.gate_max_err > 1e-8) report.gate_ok = false;

        bench_row row;
        row.n = n;

        auto time_loop = [&](auto&& eval) {
            std::vector<double> times;
            for (int r = 0; r < reps + 1; ++r) {  // first repetition is warmup
                auto start = std::chrono::steady_clock::now();
                for (const probe_input& in : inputs) eval(ctx, in);
                auto stop = std::chrono::steady_clock::now();
                if (r == 0) continue;
                double ms = std::chrono::duration<double, std::milli>(stop - start).count();
                times.push_back(ms * (1e4 / batch));
            }
            double mean = 0.0;
            for (double v : times) mean += v;
            mean /= static_cast<double>(times.size());
            return std::pair(mean, *std::min_element(times.begin(), times.end()));
        };

        auto [sm, smin] = time_loop([](const scalar_context& c, const probe_input& in) { eval_scalar(c, in); });
        row.scalar_ms_mean = sm;
        row.scalar_ms_min = smin;
        auto [om, omin] = time_loop([](const scalar_context& c, const probe_input& in) { eval_oracle(c, in); });
        row.oracle_ms_mean = om;
        row.oracle_ms_min = omin;

        auto peak_of = [&](auto&& eval) {
            std::uint64_t peak = 0;
            for (int j = 0; j < std::min(batch, 3); ++j) {
                allocmeter::reset();
                eval(ctx, inputs[static_cast<std::size_t>(j)]);
                peak = std::max(peak, allocmeter::peak_bytes());
            }
            return peak;
        };
        row.scalar_peak_bytes = peak_of([](const scalar_context& c, const probe_input& in) { eval_scalar(c, in); });
        row.oracle_peak_bytes = peak_of([](const scalar_context& c, const probe_input& in) { eval_oracle(c, in); });

        report.rows.push_back(row);
    }

    std::vector<std::pair<int, double>> st, ot, sa, oa;
    for (const bench_row& r : report.rows) {
        st.emplace_back(r.n, r.scalar_ms_mean);
        ot.emplace_back(r.n, r.oracle_ms_mean);
        sa.emplace_back(r.n, static_cast<double>(r.scalar_peak_bytes));
        oa.emplace_back(r.n, static_cast<double>(r.oracle_peak_bytes));
    }
    report.scalar_time_exp = fit_slope(st);
    report.oracle_time_exp = fit_slope(ot);
    report.scalar_alloc_exp = fit_slope(sa);
    report.oracle_alloc_exp = fit_slope(oa);
    return report;
}

std::string bench_report::to_json() const {
    nlohmann::json j;
    j["batch"] = batch;
    j["reps"] = reps;
    j["gate_ok"] = gate_ok;
    j["gate_max_err"] = gate_max_err;
    j["scalar_time_exp"] = scalar_time_exp;
    j["oracle_time_exp"] = oracle_time_exp;
    j["scalar_alloc_exp"] = scalar_alloc_exp;
    j["oracle_alloc_exp"] = oracle_alloc_exp;
    j["rows"] = nlohmann::json::array();
    for (const bench_row& r : rows)
        j["rows"].push_back({{"n", r.n},
                             {"scalar_ms_mean", r.scalar_ms_mean},
                             {"scalar_ms_min", r.scalar_ms_min},
                             {"oracle_ms_mean", r.oracle_ms_mean},
                             {"oracle_ms_min", r.oracle_ms_min},
                             {"scalar_peak_bytes", r.scalar_peak_bytes},
                             {"oracle_peak_bytes", r.oracle_peak_bytes}});
    return j.dump(2);
}

std::string bench_report::to_table() const {
    std::ostringstream out;
    out << "gate: " << (gate_ok ? "ok" : "FAILED") << " (max err " << gate_max_err << ")\n";
    out << "times are ms per 1e4 posterior+KL evaluations (mean/min over " << reps << " reps)\n";
    out << "     n   scalar mean/min        oracle mean/min        scalar peakB   oracle peakB\n";
    for (const bench_row& r : rows) {
        out << "  " << r.n << "   " << r.scalar_ms_mean << " / " << r.scalar_ms_min << "   "
            << r.oracle_ms_mean << " / " << r.oracle_ms_min << "   " << r.scalar_peak_bytes
            << "   " << r.oracle_peak_bytes << "\n";
    }
    out << "scaling exponents: scalar time " << scalar_time_exp << ", oracle time " << oracle_time_exp
        << ", scalar alloc " << scalar_alloc_exp << ", oracle alloc " << oracle_alloc_exp << "\n";
    return out.str();
}

}  // namespace xdlm
