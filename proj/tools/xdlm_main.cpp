// Command-line front end: verify | train | sample | bench.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "xdlm/bench.hpp"
#include "xdlm/config.hpp"
#include "xdlm/corpus.hpp"
#include "xdlm/denoiser.hpp"
#include "xdlm/errors.hpp"
#include "xdlm/rng.hpp"
#include "xdlm/sampler.hpp"
#include "xdlm/verify.hpp"

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << content;
    if (!out) throw std::runtime_error("write to " + path + " failed");
}

int cmd_verify(std::uint64_t seed, int trials, bool json, const std::string& fault) {
    xdlm::verify_options opts;
    opts.seed = seed;
    opts.trials = trials;
    opts.fault_negate_h_limit = (fault == "h_limit_sign");
    xdlm::verify_report report = xdlm::run_verify(opts);
    std::cout << (json ? report.to_json() + "\n" : report.to_text());
    return report.all_pass() ? 0 : 1;
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
    xdlm::run_config cfg = xdlm::load_config(config_path);
    if (cfg.corpus.empty()) throw xdlm::config_error(config_path + ": train.corpus is required");

    std::string text = read_file(cfg.corpus);
    xdlm::char_vocab vocab = xdlm::build_vocab(text);
    std::vector<xdlm::token_seq> corpus = xdlm::pack(text, vocab, cfg.seq_len);
    if (corpus.empty())
        throw std::runtime_error(cfg.corpus + ": shorter than one sequence of train.seq_len");

    std::cout << "corpus: " << corpus.size() << " sequences of " << cfg.seq_len
              << " tokens, vocabulary " << vocab.n << " (mask id " << vocab.mask_id << ")\n";

    fs::create_directories(out_dir);
    std::string ckpt = (fs::path(out_dir) / "model.ckpt").string();

    xdlm::train_config tc = cfg.to_train_config();
    xdlm::train_result result = xdlm::train(tc, corpus, vocab.n, vocab.mask_id, ckpt);
    for (const auto& [step, loss] : result.history)
        std::cout << "step " << step << "  loss " << loss << "\n";

    xdlm::save_vocab(vocab, (fs::path(out_dir) / "vocab.json").string());

    nlohmann::json side;
    side["n"] = vocab.n;
    side["mask_id"] = vocab.mask_id;
    side["k"] = cfg.k;
    side["schedule"] = cfg.sched == xdlm::schedule::kind_t::linear ? "linear" : "log_linear";
    side["seq_len"] = cfg.seq_len;
    side["hidden_dim"] = cfg.hidden_dim;
    side["steps"] = cfg.steps;
    side["batch"] = cfg.batch;
    side["lr"] = cfg.lr;
    side["seed"] = cfg.train_seed;
    side["t_sampling"] = cfg.t_mode == xdlm::time_sampling::stratified ? "stratified" : "uniform";
    side["corpus"] = cfg.corpus;
    side["vocab_file"] = "vocab.json";
    side["param_count"] = result.model.param_count();
    side["history"] = nlohmann::json::array();
    for (const auto& [step, loss] : result.history) side["history"].push_back({step, loss});
    write_file(ckpt + ".json", side.dump(2) + "\n");

    std::cout << "checkpoint: " << ckpt << " (" << result.model.param_count() << " parameters)\n";
    return 0;
}

int cmd_sample(const std::string& checkpoint, const std::string& mode_flag, int steps_flag,
               int num_flag, std::uint64_t seed_flag, bool seed_set, const std::string& out_dir) {
    nlohmann::json side = nlohmann::json::parse(read_file(checkpoint + ".json"));
    int mask_id = side.at("mask_id").get<int>();
    double k = side.at("k").get<double>();
    xdlm::schedule sched = side.at("schedule").get<std::string>() == "log_linear"
                               ? xdlm::schedule::log_linear()
                               : xdlm::schedule::linear();
    int seq_len = side.at("seq_len").get<int>();

    xdlm::toy_denoiser model = xdlm::toy_denoiser::load(checkpoint, mask_id);

    std::string mode = mode_flag;
    int steps = steps_flag > 0 ? steps_flag : 32;
    int num = num_flag > 0 ? num_flag : 16;
    std::uint64_t seed = seed_set ? seed_flag : 7;

    xdlm::scalar_context ctx;
    ctx.kernel = xdlm::build_kernel(model.vocab_size(), mask_id, k);
    ctx.sched = sched;

    fs::create_directories(out_dir);
    fs::create_directories(fs::path(out_dir) / "traces");

    // Vocabulary for detokenized output; fall back to raw ids without one.
    bool have_vocab = false;
    xdlm::char_vocab vocab;
    if (side.contains("vocab_file")) {
        fs::path vp = fs::path(checkpoint).parent_path() / side["vocab_file"].get<std::string>();
        if (fs::exists(vp)) {
            vocab = xdlm::load_vocab(vp.string());
            have_vocab = vocab.n == model.vocab_size();
        }
    }

    std::vector<xdlm::token_seq> samples;
    nlohmann::json rendered = nlohmann::json::array();
    for (int i = 0; i < num; ++i) {
        std::uint64_t sample_seed = xdlm::keyed_bits(seed, 0x5a5a, static_cast<std::uint64_t>(i));
        xdlm::sample_result res;
        if (mode == "confidence") {
            xdlm::gen_schedule gs = xdlm::gen_schedule::even(steps, seq_len, k);
            res = xdlm::confidence_generate(model, k, gs, seq_len, sample_seed);
        } else {
            res = xdlm::ancestral_sample(ctx, model, seq_len, steps, sample_seed);
        }
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%04d.jsonl", i);
        std::ofstream tr(fs::path(out_dir) / "traces" / name);
        xdlm::write_trace_jsonl(res.trace, tr);

        if (have_vocab) rendered.push_back(xdlm::detokenize(res.tokens, vocab));
        else rendered.push_back(res.tokens);
        samples.push_back(std::move(res.tokens));
    }
    write_file((fs::path(out_dir) / "samples.json").string(), rendered.dump(2) + "\n");

    // Distribution summary against the training corpus when it is available.
    if (side.contains("corpus") && have_vocab) {
        std::string corpus_path = side["corpus"].get<std::string>();
        if (fs::exists(corpus_path)) {
            std::vector<xdlm::token_seq> reference =
                xdlm::pack(read_file(corpus_path), vocab, seq_len);
            if (!reference.empty()) {
                xdlm::gen_eval ev = xdlm::eval_generation(samples, reference, model.vocab_size());
                std::cout << "token_entropy " << ev.token_entropy << "  ngram_tv " << ev.ngram_tv
                          << "\n";
            }
        }
    }
    std::cout << num << " samples (" << mode << ", " << steps << " steps) written to " << out_dir
              << "\n";
    return 0;
}

int cmd_bench(const std::vector<int>& sizes, int batch, int reps, bool json) {
    xdlm::bench_report report = xdlm::run_bench(sizes, batch, reps);
    std::cout << (json ? report.to_json() + "\n" : report.to_table());
    return report.gate_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mixed uniform/absorbing discrete diffusion toolkit"};
    app.require_subcommand(1);

    // verify
    auto* verify = app.add_subcommand("verify", "run scalar-vs-oracle and reduction suites");
    std::uint64_t vseed = 1;
    int vtrials = 1000;
    bool vjson = false;
    std::string vfault = "none";
    verify->add_option("--seed", vseed, "base seed for instance generation");
    verify->add_option("--trials", vtrials, "instances for the main sweeps")
        ->check(CLI::PositiveNumber);
    verify->add_flag("--json", vjson, "emit a JSON report");
    verify->add_option("--inject-fault", vfault, "test hook: none | h_limit_sign")
        ->check(CLI::IsMember({"none", "h_limit_sign"}));

    // train
    auto* train = app.add_subcommand("train", "train the toy denoiser from a config file");
    std::string tconfig, tout = "out";
    train->add_option("--config", tconfig, "run configuration file")->required();
    train->add_option("--out", tout, "output directory");

    // sample
    auto* sample = app.add_subcommand("sample", "generate sequences from a checkpoint");
    std::string sckpt = "out/model.ckpt", smode = "ancestral", sout = "out";
    int ssteps = 0, snum = 0;
    std::uint64_t sseed = 0;
    std::string sconfig;
    sample->add_option("--config", sconfig, "optional config file for [sample] defaults");
    sample->add_option("--checkpoint", sckpt, "model checkpoint path");
    sample->add_option("--mode", smode, "ancestral | confidence")
        ->check(CLI::IsMember({"ancestral", "confidence"}));
    sample->add_option("--steps", ssteps, "reverse steps T");
    sample->add_option("--num", snum, "number of samples");
    auto* seed_opt = sample->add_option("--seed", sseed, "sampling seed");
    sample->add_option("--out", sout, "output directory");

    // bench
    auto* bench = app.add_subcommand("bench", "time the scalar path against the dense oracle");
    std::vector<int> bsizes = {64, 256, 1024};
    int bbatch = 32, breps = 5;
    bool bjson = false;
    bench->add_option("--sizes", bsizes, "vocabulary sizes to sweep");
    bench->add_option("--batch", bbatch, "evaluations per repetition")->check(CLI::PositiveNumber);
    bench->add_option("--reps", breps, "timed repetitions")->check(CLI::PositiveNumber);
    bench->add_flag("--json", bjson, "emit a JSON report");

    CLI11_PARSE(app, argc, argv);

    try {
        if (verify->parsed()) return cmd_verify(vseed, vtrials, vjson, vfault);
        if (train->parsed()) return cmd_train(tconfig, tout);
        if (sample->parsed()) {
            if (!sconfig.empty()) {
                xdlm::run_config cfg = xdlm::load_config(sconfig);
                if (sample->count("--mode") == 0) smode = cfg.mode;
                if (ssteps == 0) ssteps = cfg.sample_steps;
                if (snum == 0) snum = cfg.num_samples;
                if (seed_opt->count() == 0) {
                    sseed = cfg.sample_seed;
                }
            }
            return cmd_sample(sckpt, smode, ssteps, snum, sseed,
                              seed_opt->count() > 0 || !sconfig.empty(), sout);
        }
        if (bench->parsed()) return cmd_bench(bsizes, bbatch, breps, bjson);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
