#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <doctest.h>
#include <json.hpp>

#include "xdlm/denoiser.hpp"
#include "xdlm/rng.hpp"
#include "xdlm/sampler.hpp"

using namespace xdlm;

namespace {

scalar_context make_ctx(int n, double k) {
    scalar_context ctx;
    ctx.kernel = build_kernel(n, n - 1, k);
    return ctx;
}

bool no_mask_left(const token_seq& z, token_id mask_id) {
    for (token_id tok : z)
        if (tok == mask_id) return false;
    return true;
}

}  // namespace

TEST_CASE("ancestral at k = 0: pure absorbing chains only unmask") {
    scalar_context ctx = make_ctx(8, 0.0);
    toy_denoiser model(8, 7, 4, 12, 1);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        sample_result res = ancestral_sample(ctx, model, 12, 8, seed);
        CHECK(res.trace.count(transition_tag::remask) == 0);
        CHECK(res.trace.count(transition_tag::uniform_refine) == 0);
        CHECK(no_mask_left(res.tokens, 7));
        // Once a position leaves the mask it never changes again.
        for (const trace_step& st : res.trace.steps)
            for (const trace_event& ev : st.events)
                CHECK((ev.from == ev.to || ev.from == 7));
    }
}

TEST_CASE("ancestral sampling is deterministic in the seed") {
    scalar_context ctx = make_ctx(6, 0.4);
    toy_denoiser model(6, 5, 4, 10, 2);
    sample_result a = ancestral_sample(ctx, model, 10, 6, 99);
    sample_result b = ancestral_sample(ctx, model, 10, 6, 99);
    CHECK(a.tokens == b.tokens);
    REQUIRE(a.trace.steps.size() == b.trace.steps.size());
    for (std::size_t i = 0; i < a.trace.steps.size(); ++i) {
        const trace_step& sa = a.trace.steps[i];
        const trace_step& sb = b.trace.steps[i];
        CHECK(sa.t == sb.t);
        REQUIRE(sa.events.size() == sb.events.size());
        for (std::size_t j = 0; j < sa.events.size(); ++j) {
            CHECK(sa.events[j].from == sb.events[j].from);
            CHECK(sa.events[j].to == sb.events[j].to);
            CHECK(sa.events[j].tag == sb.events[j].tag);
        }
    }
    sample_result c = ancestral_sample(ctx, model, 10, 6, 100);
    CHECK(a.tokens != c.tokens);
}

TEST_CASE("ancestral with a single step jumps straight to the prediction") {
    scalar_context ctx = make_ctx(5, 0.5);
    toy_denoiser model(5, 4, 4, 6, 3);
    sample_result res = ancestral_sample(ctx, model, 6, 1, 17);
    REQUIRE(res.trace.steps.size() == 1);
    CHECK(res.trace.steps[0].t == 1.0);
    for (token_id tok : res.tokens) {
        CHECK(tok >= 0);
        CHECK(tok < 5);
        CHECK(tok != 4);
    }
}

TEST_CASE("ancestral at k = 0.5 finishes mask-free") {
    scalar_context ctx = make_ctx(9, 0.5);
    toy_denoiser model(9, 8, 4, 16, 4);
    for (std::uint64_t seed = 0; seed < 10; ++seed)
        CHECK(no_mask_left(ancestral_sample(ctx, model, 16, 4, seed).tokens, 8));
}

TEST_CASE("ancestral prompts pin a prefix") {
    scalar_context ctx = make_ctx(6, 0.3);
    toy_denoiser model(6, 5, 4, 8, 5);
    token_seq prompt = {0, 1, 2};
    sample_result res = ancestral_sample(ctx, model, 8, 5, 21, &prompt);
    CHECK(res.tokens[0] == 0);
    CHECK(res.tokens[1] == 1);
    CHECK(res.tokens[2] == 2);
    for (const trace_step& st : res.trace.steps)
        for (const trace_event& ev : st.events) CHECK(ev.pos >= 3);

    token_seq with_mask = {0, 5};
    CHECK_THROWS_AS(ancestral_sample(ctx, model, 8, 5, 21, &with_mask), std::invalid_argument);
    token_seq too_long(9, 0);
    CHECK_THROWS_AS(ancestral_sample(ctx, model, 8, 5, 21, &too_long), std::invalid_argument);
    token_seq bad_tok = {0, 9};
    CHECK_THROWS_AS(ancestral_sample(ctx, model, 8, 5, 21, &bad_tok), std::out_of_range);
    CHECK_THROWS_AS(ancestral_sample(ctx, model, 0, 5, 21), std::invalid_argument);
    CHECK_THROWS_AS(ancestral_sample(ctx, model, 8, 0, 21), std::invalid_argument);

    scalar_context wrong = make_ctx(7, 0.3);
    CHECK_THROWS_AS(ancestral_sample(wrong, model, 8, 5, 21), std::invalid_argument);
}

TEST_CASE("gen_schedule::even splits fills and scales revisions by k") {
    gen_schedule g = gen_schedule::even(5, 12, 0.5);
    CHECK(g.topk_absorb == std::vector<int>{3, 3, 2, 2, 2});
    CHECK(g.topk_uniform == std::vector<int>{2, 2, 1, 1, 1});

    gen_schedule z = gen_schedule::even(4, 8, 0.0);
    CHECK(z.topk_absorb == std::vector<int>{2, 2, 2, 2});
    CHECK(z.topk_uniform == std::vector<int>{0, 0, 0, 0});

    CHECK_THROWS_AS(gen_schedule::even(0, 8, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(gen_schedule::even(4, -1, 0.5), std::invalid_argument);
}

TEST_CASE("confidence generation at k = 0 fills exactly and never revises") {
    toy_denoiser model(6, 5, 4, 12, 6);
    gen_schedule g = gen_schedule::even(4, 12, 0.0);
    sample_result res = confidence_generate(model, 0.0, g, 12, 33);
    CHECK(no_mask_left(res.tokens, 5));
    CHECK(res.trace.count(transition_tag::absorb_fill) == 12);
    CHECK(res.trace.count(transition_tag::uniform_refine) == 0);
    CHECK(res.trace.count(transition_tag::remask) == 0);
}

TEST_CASE("confidence generation validates its schedule") {
    toy_denoiser model(6, 5, 4, 12, 6);
    CHECK_THROWS_AS(confidence_generate(model, 0.0, gen_schedule::even(4, 8, 0.0), 12, 1),
                    std::invalid_argument);  // budgets must cover every masked position
    CHECK_THROWS_AS(confidence_generate(model, 0.0, gen_schedule{}, 12, 1),
                    std::invalid_argument);  // empty schedule

    gen_schedule ragged;
    ragged.topk_absorb = {6, 6};
    ragged.topk_uniform = {0};
    CHECK_THROWS_AS(confidence_generate(model, 0.0, ragged, 12, 1), std::invalid_argument);

    gen_schedule negative;
    negative.topk_absorb = {6, -6};
    negative.topk_uniform = {0, 0};
    CHECK_THROWS_AS(confidence_generate(model, 0.0, negative, 12, 1), std::invalid_argument);

    // A positive revision budget is meaningless without uniform noise.
    gen_schedule revise;
    revise.topk_absorb = {6, 6};
    revise.topk_uniform = {1, 0};
    CHECK_THROWS_AS(confidence_generate(model, 0.0, revise, 12, 1), std::invalid_argument);
    // The same schedule is fine once k > 0.
    CHECK_NOTHROW(confidence_generate(model, 0.5, revise, 12, 1));

    CHECK_THROWS_AS(confidence_generate(model, 1.5, gen_schedule::even(4, 12, 0.0), 12, 1),
                    std::invalid_argument);
}

TEST_CASE("confidence revisions only fire when the model is more confident") {
    toy_denoiser model(10, 9, 6, 32, 8);
    model.randomize_all(7, 0.8);  // varied predictions so revisions can trigger
    gen_schedule g = gen_schedule::even(8, 32, 0.5);
    int total_refines = 0;
    for (std::uint64_t seed : {1, 2, 3}) {
        sample_result res = confidence_generate(model, 0.5, g, 32, seed);
        CHECK(no_mask_left(res.tokens, 9));
        CHECK(res.trace.count(transition_tag::remask) == 0);
        for (const trace_step& st : res.trace.steps) {
            for (const trace_event& ev : st.events) {
                if (ev.tag != transition_tag::uniform_refine) continue;
                ++total_refines;
                CHECK(ev.from != 9);
                CHECK(ev.to != 9);
                CHECK(ev.from != ev.to);
                CHECK(std::isfinite(ev.pred_conf));
                CHECK(std::isfinite(ev.cur_conf));
                CHECK(ev.pred_conf >= ev.cur_conf);
            }
        }
    }
    CHECK(total_refines >= 1);
}

TEST_CASE("confidence generation is deterministic and honors prompts") {
    toy_denoiser model(7, 6, 4, 10, 9);
    gen_schedule g = gen_schedule::even(5, 10, 0.4);
    sample_result a = confidence_generate(model, 0.4, g, 10, 55);
    sample_result b = confidence_generate(model, 0.4, g, 10, 55);
    CHECK(a.tokens == b.tokens);
    sample_result c = confidence_generate(model, 0.4, g, 10, 56);
    CHECK(a.tokens != c.tokens);

    token_seq prompt = {3, 2};
    gen_schedule gp = gen_schedule::even(4, 8, 0.4);
    sample_result with = confidence_generate(model, 0.4, gp, 10, 55, &prompt);
    CHECK(with.tokens[0] == 3);
    CHECK(with.tokens[1] == 2);
    for (const trace_step& st : with.trace.steps)
        for (const trace_event& ev : st.events) CHECK(ev.pos >= 2);
}

TEST_CASE("a one-step schedule fills everything at once") {
    toy_denoiser model(5, 4, 4, 6, 10);
    gen_schedule g;
    g.topk_absorb = {6};
    g.topk_uniform = {0};
    sample_result res = confidence_generate(model, 0.0, g, 6, 77);
    REQUIRE(res.trace.steps.size() == 1);
    CHECK(res.trace.count(transition_tag::absorb_fill) == 6);
    CHECK(no_mask_left(res.tokens, 4));
}

TEST_CASE("trace serialization is line-delimited JSON without confidences") {
    scalar_context ctx = make_ctx(5, 0.3);
    toy_denoiser model(5, 4, 4, 4, 11);
    sample_result res = ancestral_sample(ctx, model, 4, 3, 5);

    std::ostringstream out;
    write_trace_jsonl(res.trace, out);
    std::istringstream in(out.str());
    std::string line;
    std::set<std::string> valid_tags = {"ABSORB_FILL", "UNIFORM_REFINE", "REMASK", "KEEP"};
    int lines = 0;
    while (std::getline(in, line)) {
        nlohmann::json j = nlohmann::json::parse(line);
        CHECK(j.at("step").get<int>() == lines);
        CHECK(j.at("t").get<double>() == doctest::Approx(1.0 - lines / 3.0).epsilon(1e-12));
        REQUIRE(j.at("events").is_array());
        CHECK(j.at("events").size() == 4);
        for (const nlohmann::json& ev : j.at("events")) {
            CHECK(ev.size() == 4);  // pos, from, to, tag; confidences stay in memory
            CHECK(ev.contains("pos"));
            CHECK(ev.contains("from"));
            CHECK(ev.contains("to"));
            CHECK(valid_tags.count(ev.at("tag").get<std::string>()) == 1);
        }
        ++lines;
    }
    CHECK(lines == 3);
}

TEST_CASE("eval_generation on matching and random inputs") {
    std::vector<token_seq> constant = {{0, 0, 0, 0}, {0, 0, 0, 0}};
    gen_eval same = eval_generation(constant, constant, 3);
    CHECK(same.token_entropy == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(same.ngram_tv == doctest::Approx(0.0).epsilon(1e-12));

    // Uniform random tokens over 10 symbols: entropy near log(10).
    std::vector<token_seq> random_samples(200, token_seq(50));
    for (std::size_t i = 0; i < random_samples.size(); ++i)
        for (std::size_t p = 0; p < random_samples[i].size(); ++p)
            random_samples[i][p] = keyed_below(123, 10, 1, i, p);
    std::vector<token_seq> reference = {{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}};
    gen_eval rnd = eval_generation(random_samples, reference, 11);
    CHECK(std::abs(rnd.token_entropy - std::log(10.0)) <= 0.02 * std::log(10.0));
    CHECK(rnd.ngram_tv > 0.0);
    CHECK(rnd.ngram_tv <= 1.0);

    CHECK_THROWS_AS(eval_generation({}, constant, 3), std::invalid_argument);
    CHECK_THROWS_AS(eval_generation(constant, {}, 3), std::invalid_argument);
    std::vector<token_seq> short_seqs = {{0}};
    CHECK_THROWS_AS(eval_generation(short_seqs, constant, 3), std::invalid_argument);
    std::vector<token_seq> bad = {{0, 99}};
    CHECK_THROWS_AS(eval_generation(bad, constant, 3), std::out_of_range);
}
