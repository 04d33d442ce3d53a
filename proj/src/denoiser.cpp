#include "xdlm/denoiser.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "xdlm/kernel.hpp"
#include "xdlm/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace xdlm {

namespace {

constexpr char ckpt_magic[4] = {'X', 'D', 'L', 'M'};
constexpr std::uint32_t ckpt_version = 1;

void fill_uniform(std::vector<double>& v, std::uint64_t seed, std::uint64_t tensor_tag,
                  double scale) {
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = scale * (2.0 * keyed_uniform(seed, stream_param_init, tensor_tag, i) - 1.0);
}

void check_same_shape(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("tensors: shape mismatch");
}

}  // namespace

void toy_denoiser::tensors::axpy(double a, const tensors& g) {
    check_same_shape(tok, g.tok);
    check_same_shape(pos, g.pos);
    check_same_shape(time, g.time);
    check_same_shape(hidden, g.hidden);
    check_same_shape(out, g.out);
    auto upd = [a](std::vector<double>& dst, const std::vector<double>& src) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += a * src[i];
    };
    upd(tok, g.tok);
    upd(pos, g.pos);
    upd(time, g.time);
    upd(hidden, g.hidden);
    upd(out, g.out);
}

void toy_denoiser::tensors::scale(double a) {
    for (std::vector<double>* v : {&tok, &pos, &time, &hidden, &out})
        for (double& x : *v) x *= a;
}

double toy_denoiser::tensors::max_abs_diff(const tensors& o) const {
    double worst = 0.0;
    auto scan = [&worst](const std::vector<double>& a, const std::vector<double>& b) {
        check_same_shape(a, b);
        for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    };
    scan(tok, o.tok);
    scan(pos, o.pos);
    scan(time, o.time);
    scan(hidden, o.hidden);
    scan(out, o.out);
    return worst;
}

toy_denoiser::toy_denoiser(int n, int mask_id, int dim, int max_len, std::uint64_t seed)
    : n_(n), mask_id_(mask_id), d_(dim), len_(max_len) {
    if (n < 2) throw std::invalid_argument("toy_denoiser: vocabulary size must be >= 2");
    if (mask_id < 0 || mask_id >= n) throw std::invalid_argument("toy_denoiser: mask_id out of range");
    if (dim < 1 || max_len < 1) throw std::invalid_argument("toy_denoiser: dim and max_len must be >= 1");
    params_.tok.resize(static_cast<std::size_t>(n) * dim);
    params_.pos.resize(static_cast<std::size_t>(max_len) * dim);
    params_.time.resize(static_cast<std::size_t>(dim));
    params_.hidden.resize(static_cast<std::size_t>(dim) * dim);
    params_.out.assign(static_cast<std::size_t>(dim) * n, 0.0);  // zero: uniform at init
    double scale = 0.1;
    fill_uniform(params_.tok, seed, 0, scale);
    fill_uniform(params_.pos, seed, 1, scale);
    fill_uniform(params_.time, seed, 2, scale);
    fill_uniform(params_.hidden, seed, 3, scale);
}

void toy_denoiser::randomize_all(std::uint64_t seed, double scale) {
    fill_uniform(params_.tok, seed, 0, scale);
    fill_uniform(params_.pos, seed, 1, scale);
    fill_uniform(params_.time, seed, 2, scale);
    fill_uniform(params_.hidden, seed, 3, scale);
    fill_uniform(params_.out, seed, 4, scale);
}

std::size_t toy_denoiser::param_count() const {
    return params_.tok.size() + params_.pos.size() + params_.time.size() +
           params_.hidden.size() + params_.out.size();
}

toy_denoiser::tensors toy_denoiser::zero_like() const {
    tensors g;
    g.tok.assign(params_.tok.size(), 0.0);
    g.pos.assign(params_.pos.size(), 0.0);
    g.time.assign(params_.time.size(), 0.0);
    g.hidden.assign(params_.hidden.size(), 0.0);
    g.out.assign(params_.out.size(), 0.0);
    return g;
}

toy_denoiser::activations toy_denoiser::forward(const token_seq& zt, double t) const {
    int len = static_cast<int>(zt.size());
    if (len < 1 || len > len_)
        throw std::invalid_argument("toy_denoiser: sequence length " + std::to_string(len) +
                                    " outside [1, " + std::to_string(len_) + "]");
    activations act;
    act.zt = zt;
    act.t = t;
    act.input.resize(static_cast<std::size_t>(len) * d_);
    act.hidden.resize(static_cast<std::size_t>(len) * d_);
    act.probs.reserve(static_cast<std::size_t>(len));

    std::vector<double> logits(static_cast<std::size_t>(n_));
    for (int i = 0; i < len; ++i) {
        token_id z = zt[static_cast<std::size_t>(i)];
        if (z < 0 || z >= n_) throw std::out_of_range("toy_denoiser: token out of range");
        double* in = &act.input[static_cast<std::size_t>(i) * d_];
        const double* te = &params_.tok[static_cast<std::size_t>(z) * d_];
        const double* pe = &params_.pos[static_cast<std::size_t>(i) * d_];
        for (int a = 0; a < d_; ++a) in[a] = te[a] + pe[a] + t * params_.time[static_cast<std::size_t>(a)];

        double* hid = &act.hidden[static_cast<std::size_t>(i) * d_];
        for (int j = 0; j < d_; ++j) {
            double pre = 0.0;
            for (int a = 0; a < d_; ++a) pre += in[a] * params_.hidden[static_cast<std::size_t>(a) * d_ + j];
            hid[j] = std::tanh(pre);
        }

        for (int e = 0; e < n_; ++e) {
            double v = 0.0;
            for (int j = 0; j < d_; ++j) v += hid[j] * params_.out[static_cast<std::size_t>(j) * n_ + e];
            logits[static_cast<std::size_t>(e)] = v;
        }

        // Softmax over non-mask tokens only; the mask slot stays exactly 0.
        double mx = -1e300;
        for (int e = 0; e < n_; ++e)
            if (e != mask_id_) mx = std::max(mx, logits[static_cast<std::size_t>(e)]);
        double z_sum = 0.0;
        std::vector<double> p(static_cast<std::size_t>(n_), 0.0);
        for (int e = 0; e < n_; ++e) {
            if (e == mask_id_) continue;
            double w = std::exp(logits[static_cast<std::size_t>(e)] - mx);
            p[static_cast<std::size_t>(e)] = w;
            z_sum += w;
        }
        for (int e = 0; e < n_; ++e)
            if (e != mask_id_) p[static_cast<std::size_t>(e)] /= z_sum;
        act.probs.emplace_back(std::move(p));
    }
    return act;
}

std::vector<simplex> toy_denoiser::predict(const token_seq& zt, double t) const {
    return forward(zt, t).probs;
}

void toy_denoiser::backward(const activations& act, const std::vector<std::vector<double>>& dprob,
                            tensors& grad) const {
    int len = static_cast<int>(act.zt.size());
    if (dprob.size() != static_cast<std::size_t>(len))
        throw std::invalid_argument("toy_denoiser::backward: dprob size mismatch");

    std::vector<double> dlogit(static_cast<std::size_t>(n_));
    std::vector<double> dpre(static_cast<std::size_t>(d_));
    std::vector<double> din(static_cast<std::size_t>(d_));
    for (int i = 0; i < len; ++i) {
        const auto& g = dprob[static_cast<std::size_t>(i)];
        if (g.size() != static_cast<std::size_t>(n_))
            throw std::invalid_argument("toy_denoiser::backward: dprob row size mismatch");
        const simplex& p = act.probs[static_cast<std::size_t>(i)];

        // Masked-softmax Jacobian: dlogit_e = p_e (g_e - sum_e' p_e' g_e').
        double inner = 0.0;
        for (int e = 0; e < n_; ++e)
            if (e != mask_id_) inner += p[e] * g[static_cast<std::size_t>(e)];
        for (int e = 0; e < n_; ++e)
            dlogit[static_cast<std::size_t>(e)] =
                (e == mask_id_) ? 0.0 : p[e] * (g[static_cast<std::size_t>(e)] - inner);

        const double* hid = &act.hidden[static_cast<std::size_t>(i) * d_];
        const double* in = &act.input[static_cast<std::size_t>(i) * d_];

        for (int j = 0; j < d_; ++j) {
            double dh = 0.0;
            for (int e = 0; e < n_; ++e) {
                double dl = dlogit[static_cast<std::size_t>(e)];
                if (dl != 0.0) {
                    grad.out[static_cast<std::size_t>(j) * n_ + e] += hid[j] * dl;
                    dh += params_.out[static_cast<std::size_t>(j) * n_ + e] * dl;
                }
            }
            dpre[static_cast<std::size_t>(j)] = dh * (1.0 - hid[j] * hid[j]);
        }

        for (int a = 0; a < d_; ++a) {
            double di = 0.0;
            for (int j = 0; j < d_; ++j) {
                grad.hidden[static_cast<std::size_t>(a) * d_ + j] += in[a] * dpre[static_cast<std::size_t>(j)];
                di += params_.hidden[static_cast<std::size_t>(a) * d_ + j] * dpre[static_cast<std::size_t>(j)];
            }
            din[static_cast<std::size_t>(a)] = di;
        }

        token_id z = act.zt[static_cast<std::size_t>(i)];
        for (int a = 0; a < d_; ++a) {
            grad.tok[static_cast<std::size_t>(z) * d_ + a] += din[static_cast<std::size_t>(a)];
            grad.pos[static_cast<std::size_t>(i) * d_ + a] += din[static_cast<std::size_t>(a)];
            grad.time[static_cast<std::size_t>(a)] += act.t * din[static_cast<std::size_t>(a)];
        }
    }
}

void toy_denoiser::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    out.write(ckpt_magic, 4);
    auto put_u32 = [&out](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    put_u32(ckpt_version);
    put_u32(static_cast<std::uint32_t>(n_));
    put_u32(static_cast<std::uint32_t>(d_));
    put_u32(static_cast<std::uint32_t>(len_));
    auto put_tensor = [&out](const std::vector<double>& v) {
        out.write(reinterpret_cast<const char*>(v.data()),
                  static_cast<std::streamsize>(v.size() * sizeof(double)));
    };
    put_tensor(params_.tok);
    put_tensor(params_.pos);
    put_tensor(params_.time);
    put_tensor(params_.hidden);
    put_tensor(params_.out);
    if (!out) throw std::runtime_error("checkpoint: write to " + path + " failed");
}

toy_denoiser toy_denoiser::load(const std::string& path, int mask_id) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, ckpt_magic, 4) != 0)
        throw std::runtime_error("checkpoint: " + path + " has a bad magic header");
    auto get_u32 = [&in, &path]() {
        std::uint32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 4);
        if (!in) throw std::runtime_error("checkpoint: " + path + " truncated header");
        return v;
    };
    std::uint32_t version = get_u32();
    if (version != ckpt_version)
        throw std::runtime_error("checkpoint: " + path + " has version " + std::to_string(version) +
                                 ", expected " + std::to_string(ckpt_version));
    int n = static_cast<int>(get_u32());
    int d = static_cast<int>(get_u32());
    int len = static_cast<int>(get_u32());
    if (n < 2 || d < 1 || len < 1 || n > (1 << 20) || d > (1 << 20) || len > (1 << 20))
        throw std::runtime_error("checkpoint: " + path + " has implausible dimensions");
    if (mask_id < 0) mask_id = n - 1;

    toy_denoiser model(n, mask_id, d, len, /*seed=*/0);
    auto get_tensor = [&in, &path](std::vector<double>& v) {
        in.read(reinterpret_cast<char*>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(double)));
        if (!in) throw std::runtime_error("checkpoint: " + path + " truncated tensor data");
    };
    get_tensor(model.params_.tok);
    get_tensor(model.params_.pos);
    get_tensor(model.params_.time);
    get_tensor(model.params_.hidden);
    get_tensor(model.params_.out);
    in.peek();
    if (!in.eof()) throw std::runtime_error("checkpoint: " + path + " has trailing bytes");
    return model;
}

batch_stats batch_loss(const scalar_context& ctx, const toy_denoiser& model,
                       const std::vector<token_seq>& x0_batch, std::uint64_t seed,
                       int step, time_sampling mode) {
    if (x0_batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
    int b = static_cast<int>(x0_batch.size());

    batch_stats stats;
    stats.grad = model.zero_like();

    // Shared stratification offset: item i covers the slice [i/b, (i+1)/b).
    double shared_u = keyed_uniform(seed, stream_time, static_cast<std::uint64_t>(step), 0);

    double total = 0.0;
    std::size_t positions = 0;
    std::vector<std::vector<double>> dprob;
    for (int i = 0; i < b; ++i) {
        const token_seq& x0 = x0_batch[static_cast<std::size_t>(i)];
        double t = (mode == time_sampling::stratified)
                       ? (i + shared_u) / b
                       : keyed_uniform(seed, stream_time, static_cast<std::uint64_t>(step),
                                       static_cast<std::uint64_t>(i) + 1);

        std::uint64_t item_seed =
            keyed_bits(seed, stream_step_draw, static_cast<std::uint64_t>(step),
                       static_cast<std::uint64_t>(i));
        token_seq z = corrupt(ctx.kernel, ctx.sched, x0, t, item_seed);
        toy_denoiser::activations act = model.forward(z, t);

        int len = static_cast<int>(x0.size());
        positions += static_cast<std::size_t>(len);
        dprob.assign(static_cast<std::size_t>(len),
                     std::vector<double>(static_cast<std::size_t>(model.vocab_size()), 0.0));
        for (int p = 0; p < len; ++p) {
            total += loss_term(ctx, t, z[static_cast<std::size_t>(p)], x0[static_cast<std::size_t>(p)],
                               act.probs[static_cast<std::size_t>(p)]);
            loss_term_grad(ctx, t, z[static_cast<std::size_t>(p)], x0[static_cast<std::size_t>(p)],
                           act.probs[static_cast<std::size_t>(p)], 1.0, dprob[static_cast<std::size_t>(p)]);
        }
        model.backward(act, dprob, stats.grad);
    }

    // Average over every position in the batch; fold the same factor into the
    // accumulated gradients.
    double inv = 1.0 / static_cast<double>(positions);
    stats.loss = total * inv;
    stats.grad.scale(inv);
    return stats;
}

train_result train(const train_config& cfg, const std::vector<token_seq>& corpus,
                   int n_vocab, int mask_id, const std::string& checkpoint_path) {
    if (corpus.empty()) throw std::invalid_argument("train: empty corpus");
    if (cfg.steps < 0) throw std::invalid_argument("train: steps must be >= 0");
    if (cfg.batch < 1) throw std::invalid_argument("train: batch must be >= 1");
    if (!(cfg.lr > 0.0)) throw std::invalid_argument("train: lr must be > 0");
    for (const token_seq& s : corpus)
        if (static_cast<int>(s.size()) != cfg.seq_len)
            throw std::invalid_argument("train: corpus sequence length does not match seq_len");

    scalar_context ctx;
    ctx.kernel = build_kernel(n_vocab, mask_id, cfg.k);
    ctx.sched = (cfg.sched == schedule::kind_t::linear) ? schedule::linear() : schedule::log_linear();

    train_result res{toy_denoiser(n_vocab, mask_id, cfg.hidden_dim, cfg.seq_len, cfg.seed), {}};
    int num_seqs = static_cast<int>(corpus.size());
    std::vector<token_seq> batch(static_cast<std::size_t>(cfg.batch));
    for (int step = 0; step < cfg.steps; ++step) {
        for (int i = 0; i < cfg.batch; ++i)
            batch[static_cast<std::size_t>(i)] =
                corpus[static_cast<std::size_t>(keyed_below(cfg.seed, num_seqs, stream_batch_pick,
                                                            static_cast<std::uint64_t>(step),
                                                            static_cast<std::uint64_t>(i)))];
        batch_stats stats = batch_loss(ctx, res.model, batch, cfg.seed, step, cfg.t_mode);
        res.model.params().axpy(-cfg.lr, stats.grad);
        if (cfg.log_every > 0 && (step + 1) % cfg.log_every == 0)
            res.history.emplace_back(step + 1, stats.loss);
    }

    if (!checkpoint_path.empty()) res.model.save(checkpoint_path);
    return res;
}

}  // namespace xdlm
