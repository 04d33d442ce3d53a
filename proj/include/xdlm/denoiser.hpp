#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "xdlm/scalar.hpp"
#include "xdlm/simplex.hpp"

namespace xdlm {

// Prediction contract the samplers depend on: map a noisy sequence at time t
// to a per-position distribution over clean tokens, with zero mass on mask.
class denoiser {
public:
    virtual ~denoiser() = default;
    virtual std::vector<simplex> predict(const token_seq& zt, double t) const = 0;
    virtual int vocab_size() const = 0;
    virtual int mask_token() const = 0;
};

// Deliberately small per-position MLP, trainable on a desk CPU in minutes.
// Per position: input = token embedding + position embedding + t * time
// embedding; one tanh hidden layer; linear output; softmax over non-mask
// tokens.  No biases.  The output layer starts at zero, so an untrained
// model predicts exactly uniform over the n-1 non-mask tokens.
class toy_denoiser final : public denoiser {
public:
    // Parameter tensors, fixed order (also the checkpoint serialization order).
    struct tensors {
        std::vector<double> tok;     // n x d token embedding
        std::vector<double> pos;     // max_len x d position embedding
        std::vector<double> time;    // d; enters the input as t * time
        std::vector<double> hidden;  // d x d
        std::vector<double> out;     // d x n

        void axpy(double a, const tensors& g);  // this += a * g
        void scale(double a);
        double max_abs_diff(const tensors& o) const;
    };

    toy_denoiser(int n, int mask_id, int dim, int max_len, std::uint64_t seed);

    // Re-draws every tensor, including the normally-zero output layer; used
    // by gradient checks that need a generic point in parameter space.
    void randomize_all(std::uint64_t seed, double scale);

    int vocab_size() const override { return n_; }
    int mask_token() const override { return mask_id_; }
    int dim() const { return d_; }
    int max_len() const { return len_; }
    std::size_t param_count() const;

    std::vector<simplex> predict(const token_seq& zt, double t) const override;

    // Forward pass keeping the intermediates the backward pass needs.
    struct activations {
        token_seq zt;
        double t = 0.0;
        std::vector<double> input;   // L x d embedding sums
        std::vector<double> hidden;  // L x d tanh outputs
        std::vector<simplex> probs;
    };
    activations forward(const token_seq& zt, double t) const;

    // Accumulates parameter gradients from d(loss)/d(probs) per position.
    // Applies the masked-softmax Jacobian internally; the mask logit is dead
    // and receives no gradient.
    void backward(const activations& act, const std::vector<std::vector<double>>& dprob,
                  tensors& grad) const;

    tensors& params() { return params_; }
    const tensors& params() const { return params_; }
    tensors zero_like() const;

    // Flat little-endian binary: magic "XDLM", u32 version, u32 n, u32 d,
    // u32 max_len, then the tensors in declared order as f64.
    void save(const std::string& path) const;
    // mask_id < 0 selects the default convention (last index, n - 1).
    static toy_denoiser load(const std::string& path, int mask_id = -1);

private:
    int n_, mask_id_, d_, len_;
    tensors params_;
};

enum class time_sampling { stratified, uniform };

struct train_config {
    double k = 0.1;
    schedule::kind_t sched = schedule::kind_t::linear;
    int steps = 2000;
    int batch = 32;
    double lr = 1e-2;
    int seq_len = 64;
    int hidden_dim = 64;
    std::uint64_t seed = 1;
    time_sampling t_mode = time_sampling::stratified;
    int log_every = 10;
};

struct batch_stats {
    double loss = 0.0;  // mean per-position loss over the batch
    toy_denoiser::tensors grad;
};

// One training batch: draws a time per sequence (stratified: t_i = (i + u)/B
// with one shared u per step; uniform: independent draws), corrupts each
// sequence, and evaluates the diffusion loss and its parameter gradients.
// Every random draw is keyed by (seed, step, item), so the batch is a pure
// function of its arguments.
batch_stats batch_loss(const scalar_context& ctx, const toy_denoiser& model,
                       const std::vector<token_seq>& x0_batch, std::uint64_t seed,
                       int step, time_sampling mode);

struct train_result {
    toy_denoiser model;
    std::vector<std::pair<int, double>> history;  // (step, batch loss) every log_every steps
};

// Plain SGD over batch_loss.  Deterministic for a fixed config and corpus;
// writes a checkpoint to checkpoint_path unless it is empty.
train_result train(const train_config& cfg, const std::vector<token_seq>& corpus,
                   int n_vocab, int mask_id, const std::string& checkpoint_path = "");

}  // namespace xdlm
