#include "xdlm/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "xdlm/rng.hpp"

namespace xdlm {

const char* tag_name(transition_tag tag) {
    switch (tag) {
        case transition_tag::absorb_fill: return "ABSORB_FILL";
        case transition_tag::uniform_refine: return "UNIFORM_REFINE";
        case transition_tag::remask: return "REMASK";
        case transition_tag::keep: return "KEEP";
    }
    return "?";
}

int sample_trace::count(transition_tag tag) const {
    int total = 0;
    for (const trace_step& st : steps)
        for (const trace_event& ev : st.events)
            if (ev.tag == tag) ++total;
    return total;
}

void write_trace_jsonl(const sample_trace& trace, std::ostream& out) {
    for (const trace_step& st : trace.steps) {
        nlohmann::json events = nlohmann::json::array();
        for (const trace_event& ev : st.events)
            events.push_back({{"pos", ev.pos}, {"from", ev.from}, {"to", ev.to}, {"tag", tag_name(ev.tag)}});
        nlohmann::json line = {{"step", st.step}, {"t", st.t}, {"events", std::move(events)}};
        out << line.dump() << '\n';
    }
}

namespace {

transition_tag classify(token_id from, token_id to, token_id mask_id) {
    if (from == to) return transition_tag::keep;
    if (from == mask_id) return transition_tag::absorb_fill;
    if (to == mask_id) return transition_tag::remask;
    return transition_tag::uniform_refine;
}

void check_prompt(const token_seq* prompt, int seq_len, int n, token_id mask_id) {
    if (prompt == nullptr) return;
    if (static_cast<int>(prompt->size()) > seq_len)
        throw std::invalid_argument("sampler: prompt longer than the sequence");
    for (token_id tok : *prompt) {
        if (tok < 0 || tok >= n) throw std::out_of_range("sampler: prompt token out of range");
        if (tok == mask_id) throw std::invalid_argument("sampler: prompt must not contain the mask token");
    }
}

int argmax_prob(const simplex& p) {
    int best = 0;
    for (int e = 1; e < p.size(); ++e)
        if (p[e] > p[best]) best = e;
    return best;
}

}  // namespace

sample_result ancestral_sample(const scalar_context& ctx, const denoiser& model,
                               int seq_len, int steps, std::uint64_t seed,
                               const token_seq* prompt) {
    if (seq_len < 1) throw std::invalid_argument("ancestral_sample: seq_len must be >= 1");
    if (steps < 1) throw std::invalid_argument("ancestral_sample: steps must be >= 1");
    int n = ctx.kernel.n;
    token_id mask_id = ctx.kernel.mask_id;
    if (model.vocab_size() != n || model.mask_token() != mask_id)
        throw std::invalid_argument("ancestral_sample: model and kernel vocabulary disagree");
    check_prompt(prompt, seq_len, n, mask_id);
    int pinned = prompt ? static_cast<int>(prompt->size()) : 0;

    // z_1: every free position from the stationary distribution.
    token_seq z(static_cast<std::size_t>(seq_len));
    for (int j = 0; j < seq_len; ++j) {
        if (j < pinned) {
            z[static_cast<std::size_t>(j)] = (*prompt)[static_cast<std::size_t>(j)];
        } else if (keyed_uniform(seed, stream_init_state, static_cast<std::uint64_t>(j), 0) < ctx.kernel.k) {
            z[static_cast<std::size_t>(j)] =
                keyed_below(seed, n, stream_init_state, static_cast<std::uint64_t>(j), 1);
        } else {
            z[static_cast<std::size_t>(j)] = mask_id;
        }
    }

    sample_result res;
    res.trace.steps.reserve(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) {
        double t = 1.0 - static_cast<double>(i) / steps;
        double s = 1.0 - static_cast<double>(i + 1) / steps;
        if (i + 1 == steps) s = 0.0;  // exact, not 1 - T/T with rounding
        std::vector<simplex> preds = model.predict(z, t);

        trace_step st;
        st.step = i;
        st.t = t;
        st.events.reserve(static_cast<std::size_t>(seq_len - pinned));
        for (int j = pinned; j < seq_len; ++j) {
            token_id cur = z[static_cast<std::size_t>(j)];
            simplex post = posterior(ctx, s, t, cur, preds[static_cast<std::size_t>(j)]);

            // Gumbel-max draw keyed by (seed, step, position, candidate).
            std::uint64_t cell = (static_cast<std::uint64_t>(i) << 32) | static_cast<std::uint64_t>(j);
            int pick = -1;
            double best = -std::numeric_limits<double>::infinity();
            for (int e = 0; e < n; ++e) {
                if (post[e] <= 0.0) continue;
                double score = std::log(post[e]) +
                               keyed_gumbel(seed, stream_ancestral, cell, static_cast<std::uint64_t>(e));
                if (score > best) {
                    best = score;
                    pick = e;
                }
            }
            if (pick < 0) throw std::logic_error("ancestral_sample: empty posterior support");
            // The s = 0 posterior puts zero mass on mask, so this is pure
            // belt-and-braces for the final step.
            if (i + 1 == steps && pick == mask_id) pick = argmax_prob(preds[static_cast<std::size_t>(j)]);

            st.events.push_back({j, cur, pick, classify(cur, pick, mask_id)});
            z[static_cast<std::size_t>(j)] = pick;
        }
        res.trace.steps.push_back(std::move(st));
    }
    res.tokens = std::move(z);
    return res;
}

gen_schedule gen_schedule::even(int steps, int fill_total, double k) {
    if (steps < 1) throw std::invalid_argument("gen_schedule: steps must be >= 1");
    if (fill_total < 0) throw std::invalid_argument("gen_schedule: fill_total must be >= 0");
    gen_schedule g;
    g.topk_absorb.resize(static_cast<std::size_t>(steps));
    g.topk_uniform.resize(static_cast<std::size_t>(steps));
    int base = fill_total / steps;
    int extra = fill_total % steps;
    for (int i = 0; i < steps; ++i) {
        g.topk_absorb[static_cast<std::size_t>(i)] = base + (i < extra ? 1 : 0);
        g.topk_uniform[static_cast<std::size_t>(i)] =
            static_cast<int>(std::lround(k * g.topk_absorb[static_cast<std::size_t>(i)]));
    }
    return g;
}

sample_result confidence_generate(const denoiser& model, double k,
                                  const gen_schedule& sched, int seq_len,
                                  std::uint64_t seed, const token_seq* prompt) {
    if (seq_len < 1) throw std::invalid_argument("confidence_generate: seq_len must be >= 1");
    int steps = static_cast<int>(sched.topk_absorb.size());
    if (steps < 1) throw std::invalid_argument("confidence_generate: empty schedule");
    if (sched.topk_uniform.size() != sched.topk_absorb.size())
        throw std::invalid_argument("confidence_generate: schedule arrays differ in length");
    if (!(k >= 0.0 && k <= 1.0)) throw std::invalid_argument("confidence_generate: k must be in [0, 1]");
    int n = model.vocab_size();
    token_id mask_id = model.mask_token();
    check_prompt(prompt, seq_len, n, mask_id);
    int pinned = prompt ? static_cast<int>(prompt->size()) : 0;

    int fill_total = seq_len - pinned;
    int budget = std::accumulate(sched.topk_absorb.begin(), sched.topk_absorb.end(), 0);
    for (int v : sched.topk_absorb)
        if (v < 0) throw std::invalid_argument("confidence_generate: negative fill budget");
    for (int v : sched.topk_uniform) {
        if (v < 0) throw std::invalid_argument("confidence_generate: negative revision budget");
        if (k == 0.0 && v > 0)
            throw std::invalid_argument(
                "confidence_generate: revision budget must be 0 when k == 0 (no uniform noise, "
                "nothing to revise)");
    }
    if (budget != fill_total)
        throw std::invalid_argument("confidence_generate: fill budgets sum to " +
                                    std::to_string(budget) + " but " + std::to_string(fill_total) +
                                    " positions start masked");

    token_seq z(static_cast<std::size_t>(seq_len), mask_id);
    for (int j = 0; j < pinned; ++j) z[static_cast<std::size_t>(j)] = (*prompt)[static_cast<std::size_t>(j)];

    sample_result res;
    res.trace.steps.reserve(static_cast<std::size_t>(steps));

    std::vector<int> pred_tok(static_cast<std::size_t>(seq_len));
    std::vector<double> pred_conf(static_cast<std::size_t>(seq_len));
    std::vector<double> cur_conf(static_cast<std::size_t>(seq_len));
    for (int i = 0; i < steps; ++i) {
        double t = 1.0 - static_cast<double>(i) / steps;
        std::vector<simplex> preds = model.predict(z, t);

        // Gumbel-perturbed argmax prediction and its unperturbed confidence.
        for (int j = pinned; j < seq_len; ++j) {
            const simplex& p = preds[static_cast<std::size_t>(j)];
            std::uint64_t cell = (static_cast<std::uint64_t>(i) << 32) | static_cast<std::uint64_t>(j);
            int pick = -1;
            double best = -std::numeric_limits<double>::infinity();
            for (int e = 0; e < n; ++e) {
                if (p[e] <= 0.0) continue;
                double score = std::log(p[e]) +
                               keyed_gumbel(seed, stream_confidence, cell, static_cast<std::uint64_t>(e));
                if (score > best) {
                    best = score;
                    pick = e;
                }
            }
            if (pick < 0) throw std::logic_error("confidence_generate: prediction has empty support");
            pred_tok[static_cast<std::size_t>(j)] = pick;
            pred_conf[static_cast<std::size_t>(j)] = p[pick];
            cur_conf[static_cast<std::size_t>(j)] =
                z[static_cast<std::size_t>(j)] == mask_id ? 0.0 : p[z[static_cast<std::size_t>(j)]];
        }

        // Highest-priority indices first; ties break toward lower positions.
        auto top_of = [&](const std::vector<int>& cand, int want) {
            std::vector<int> order = cand;
            std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
                double pa = pred_conf[static_cast<std::size_t>(a)];
                double pb = pred_conf[static_cast<std::size_t>(b)];
                if (pa != pb) return pa > pb;
                return a < b;
            });
            if (static_cast<int>(order.size()) > want) order.resize(static_cast<std::size_t>(want));
            return order;
        };

        std::vector<int> masked, revisable;
        for (int j = pinned; j < seq_len; ++j) {
            if (z[static_cast<std::size_t>(j)] == mask_id) {
                masked.push_back(j);
            } else if (k > 0.0 && pred_tok[static_cast<std::size_t>(j)] != z[static_cast<std::size_t>(j)] &&
                       pred_conf[static_cast<std::size_t>(j)] >= cur_conf[static_cast<std::size_t>(j)]) {
                revisable.push_back(j);
            }
        }

        std::vector<bool> update(static_cast<std::size_t>(seq_len), false);
        for (int j : top_of(masked, sched.topk_absorb[static_cast<std::size_t>(i)]))
            update[static_cast<std::size_t>(j)] = true;
        if (k > 0.0)
            for (int j : top_of(revisable, sched.topk_uniform[static_cast<std::size_t>(i)]))
                update[static_cast<std::size_t>(j)] = true;

        trace_step st;
        st.step = i;
        st.t = t;
        st.events.reserve(static_cast<std::size_t>(seq_len - pinned));
        for (int j = pinned; j < seq_len; ++j) {
            token_id cur = z[static_cast<std::size_t>(j)];
            token_id next = update[static_cast<std::size_t>(j)] ? pred_tok[static_cast<std::size_t>(j)] : cur;
            trace_event ev{j, cur, next, classify(cur, next, mask_id), pred_conf[static_cast<std::size_t>(j)],
                           cur == mask_id ? std::numeric_limits<double>::quiet_NaN()
                                          : cur_conf[static_cast<std::size_t>(j)]};
            st.events.push_back(ev);
            z[static_cast<std::size_t>(j)] = next;
        }
        res.trace.steps.push_back(std::move(st));
    }

    for (token_id tok : z)
        if (tok == mask_id) throw std::logic_error("confidence_generate: mask survived a full schedule");
    res.tokens = std::move(z);
    return res;
}

gen_eval eval_generation(const std::vector<token_seq>& samples,
                         const std::vector<token_seq>& reference, int n_vocab) {
    if (samples.empty()) throw std::invalid_argument("eval_generation: no samples");
    if (reference.empty()) throw std::invalid_argument("eval_generation: no reference sequences");

    auto check_tokens = [n_vocab](const std::vector<token_seq>& seqs) {
        for (const token_seq& s : seqs)
            for (token_id tok : s)
                if (tok < 0 || tok >= n_vocab)
                    throw std::out_of_range("eval_generation: token out of range");
    };
    check_tokens(samples);
    check_tokens(reference);

    gen_eval out;

    std::unordered_map<int, std::int64_t> uni;
    std::int64_t total = 0;
    for (const token_seq& s : samples)
        for (token_id tok : s) {
            ++uni[tok];
            ++total;
        }
    for (const auto& [tok, c] : uni) {
        double p = static_cast<double>(c) / static_cast<double>(total);
        out.token_entropy -= p * std::log(p);
    }

    auto bigrams = [](const std::vector<token_seq>& seqs) {
        std::unordered_map<std::uint64_t, std::int64_t> counts;
        std::int64_t n = 0;
        for (const token_seq& s : seqs)
            for (std::size_t i = 0; i + 1 < s.size(); ++i) {
                std::uint64_t key = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(s[i])) << 32) |
                                    static_cast<std::uint32_t>(s[i + 1]);
                ++counts[key];
                ++n;
            }
        return std::pair(std::move(counts), n);
    };
    auto [sc, sn] = bigrams(samples);
    auto [rc, rn] = bigrams(reference);
    if (sn == 0 || rn == 0)
        throw std::invalid_argument("eval_generation: sequences too short for bigrams");

    double tv = 0.0;
    for (const auto& [key, c] : sc) {
        auto it = rc.find(key);
        double pr = it == rc.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(rn);
        tv += std::abs(static_cast<double>(c) / static_cast<double>(sn) - pr);
    }
    for (const auto& [key, c] : rc)
        if (sc.find(key) == sc.end()) tv += static_cast<double>(c) / static_cast<double>(rn);
    out.ngram_tv = 0.5 * tv;
    return out;
}

}  // namespace xdlm
