#include "xdlm/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "xdlm/errors.hpp"

namespace xdlm {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

struct parse_site {
    const std::string& origin;
    int line;
    [[noreturn]] void fail(const std::string& msg) const {
        throw config_error(origin + ":" + std::to_string(line) + ": " + msg);
    }
};

double to_double(const parse_site& at, const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return d;
    } catch (const std::exception&) {
        at.fail("value '" + v + "' for " + key + " is not a number");
    }
}

long long to_int(const parse_site& at, const std::string& key, const std::string& v) {
    long long out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        at.fail("value '" + v + "' for " + key + " is not an integer");
    return out;
}

std::uint64_t to_u64(const parse_site& at, const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        at.fail("value '" + v + "' for " + key + " is not an unsigned integer");
    return out;
}

}  // namespace

train_config run_config::to_train_config() const {
    train_config t;
    t.k = k;
    t.sched = sched;
    t.steps = steps;
    t.batch = batch;
    t.lr = lr;
    t.seq_len = seq_len;
    t.hidden_dim = hidden_dim;
    t.seed = train_seed;
    t.t_mode = t_mode;
    return t;
}

run_config parse_config(const std::string& text, const std::string& origin) {
    run_config cfg;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        parse_site at{origin, line_no};
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;

        if (line.front() == '[') {
            if (line.back() != ']') at.fail("unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section != "kernel" && section != "schedule" && section != "train" && section != "sample")
                at.fail("unknown section [" + section + "]");
            continue;
        }

        std::size_t eq = line.find('=');
        if (eq == std::string::npos) at.fail("expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) at.fail("empty key");
        if (section.empty()) at.fail("key '" + key + "' appears before any section");
        std::string full = section + "." + key;

        if (full == "kernel.k") {
            cfg.k = to_double(at, full, value);
            if (!(cfg.k >= 0.0 && cfg.k <= 1.0)) at.fail("kernel.k out of range (must be in [0, 1])");
        } else if (full == "schedule.kind") {
            if (value == "linear") cfg.sched = schedule::kind_t::linear;
            else if (value == "log_linear") cfg.sched = schedule::kind_t::log_linear;
            else at.fail("schedule.kind must be linear or log_linear, got '" + value + "'");
        } else if (full == "train.corpus") {
            cfg.corpus = value;
        } else if (full == "train.steps") {
            long long v = to_int(at, full, value);
            if (v < 0) at.fail("train.steps out of range (must be >= 0)");
            cfg.steps = static_cast<int>(v);
        } else if (full == "train.batch") {
            long long v = to_int(at, full, value);
            if (v < 1) at.fail("train.batch out of range (must be >= 1)");
            cfg.batch = static_cast<int>(v);
        } else if (full == "train.lr") {
            cfg.lr = to_double(at, full, value);
            if (!(cfg.lr > 0.0)) at.fail("train.lr out of range (must be > 0)");
        } else if (full == "train.seq_len") {
            long long v = to_int(at, full, value);
            if (v < 1) at.fail("train.seq_len out of range (must be >= 1)");
            cfg.seq_len = static_cast<int>(v);
        } else if (full == "train.hidden_dim") {
            long long v = to_int(at, full, value);
            if (v < 1) at.fail("train.hidden_dim out of range (must be >= 1)");
            cfg.hidden_dim = static_cast<int>(v);
        } else if (full == "train.seed") {
            cfg.train_seed = to_u64(at, full, value);
        } else if (full == "train.t_sampling") {
            if (value == "stratified") cfg.t_mode = time_sampling::stratified;
            else if (value == "uniform") cfg.t_mode = time_sampling::uniform;
            else at.fail("train.t_sampling must be stratified or uniform, got '" + value + "'");
        } else if (full == "sample.steps") {
            long long v = to_int(at, full, value);
            if (v < 1) at.fail("sample.steps out of range (must be >= 1)");
            cfg.sample_steps = static_cast<int>(v);
        } else if (full == "sample.num_samples") {
            long long v = to_int(at, full, value);
            if (v < 1) at.fail("sample.num_samples out of range (must be >= 1)");
            cfg.num_samples = static_cast<int>(v);
        } else if (full == "sample.mode") {
            if (value != "ancestral" && value != "confidence")
                at.fail("sample.mode must be ancestral or confidence, got '" + value + "'");
            cfg.mode = value;
        } else if (full == "sample.seed") {
            cfg.sample_seed = to_u64(at, full, value);
        } else {
            at.fail("unknown key '" + full + "'");
        }
    }
    return cfg;
}

run_config load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t slash = path.find_last_of('/');
    std::string origin = slash == std::string::npos ? path : path.substr(slash + 1);
    return parse_config(text, origin);
}

}  // namespace xdlm
