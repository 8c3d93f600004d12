#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tasla/fsq.hpp"
#include "tasla/mat.hpp"
#include "tasla/mlda.hpp"

namespace tasla::train {

struct Mask {
    std::vector<int> m;  // entries in {0,1}

    static Mask ones(std::size_t n) { return Mask{std::vector<int>(n, 1)}; }
    int count() const;
    void validate(std::size_t expected_len) const;
};

// Mean over masked-in positions of -log softmax(logits)[target], natural log.
double ce_loss(const Mat& logits, const std::vector<int>& targets, const Mask& mask);

// Masked row MSE: sum of squared row differences over masked-in rows, divided
// by the number of valid rows.
double recon_loss(const Mat& z, const Mat& z_q, const Mask& mask);

struct LossBreakdown {
    double ce = 0.0;
    double recon = 0.0;
    double lambda = 0.0;
    double total = 0.0;
};

LossBreakdown total_loss(double ce, double recon, double lambda);

double unit_accuracy(const std::vector<int>& pred, const std::vector<int>& target,
                     const Mask& mask);

// Desk-scale configuration for the synthetic end-to-end run.
struct ToyConfig {
    int frames = 32;        // T
    int text_len = 8;       // N
    int feat_width = 16;    // d_h
    std::vector<int> layer_ids = {8, 16, 24, 32};
    int mlp_hidden = 64;
    int fsq_dim = 8;        // d
    int fsq_levels = 8;     // L
    int unit_vocab = 16;    // V
    int text_vocab = 32;
    int decoder_width = 32;
    int utterances = 16;
    int steps = 500;
    double lambda = 1.0;
    double lr = 0.05;
    std::uint64_t seed = 0;

    int n_layers() const { return static_cast<int>(layer_ids.size()); }
    void validate() const;
};

// Single-step-conditioned autoregressive unit decoder: the previous-unit
// embedding, the current text-token embedding and a projection of the
// mean-pooled quantized latent are summed, passed through one tanh layer and
// projected to unit logits.
struct ToyModel {
    mlda::MixturePredictor predictor;
    Mat embedding;  // text_vocab x d_h (MLDA queries)
    fsq::FsqParams fsq;
    Mat unit_emb;   // (V+1) x decoder_width, last row is the start token
    Mat text_emb;   // text_vocab x decoder_width
    Mat z_proj;     // fsq_dim x decoder_width
    Mat w_h;        // decoder_width x decoder_width
    std::vector<double> b_h;
    Mat w_o;        // decoder_width x V
    std::vector<double> b_o;
};

ToyModel init_toy_model(const ToyConfig& cfg);

// One synthetic utterance: the stack hides a per-utterance dominant layer
// (a fixed marker direction added to that layer plus a cue in the last
// layer); the unit targets mix the dominant layer index with the text token,
// so they are fully predictable only when the speech path transmits the
// marker through MLDA and the FSQ bottleneck.
struct ToyExample {
    std::vector<int> tokens;
    int dominant_layer = 0;
    mlda::LayerStack stack;
    std::vector<int> units;
};

std::vector<ToyExample> make_toy_dataset(const ToyConfig& cfg);

struct ToyGradients {
    mlda::MldaGradients mlda;
    Mat d_enc, d_dec;
    std::vector<double> d_scale, d_shift;
    Mat d_unit_emb, d_text_emb, d_z_proj, d_w_h, d_w_o;
    std::vector<double> d_b_h, d_b_o;
};

struct PipelineResult {
    LossBreakdown loss;
    double accuracy = 0.0;
    Mat feature;       // MLDA output (pre-FSQ), N x d_h
    Mat latent;        // pre-squash latents, N x fsq_dim
    Mat squashed;      // N x fsq_dim
    Mat quant_gap;     // q - squashed, the detached part of the STE
    Mat ste;           // quantized latents used downstream, N x fsq_dim
    Mat reconstructed; // dec(ste), N x d_h
    std::vector<std::vector<int>> code_indices;
};

// Full forward pass. When frozen_gap is non-null the quantizer is replaced by
// "add this fixed gap", which is how finite-difference checks freeze the
// quantized values at their forward-pass positions.
PipelineResult toy_forward(const ToyModel& model, const ToyExample& ex,
                           const ToyConfig& cfg, const Mat* frozen_gap = nullptr);

// Forward + hand-derived backward. Gradients are accumulated into *grads
// (which must be zero-initialized or hold a running sum).
PipelineResult toy_forward_backward(const ToyModel& model, const ToyExample& ex,
                                    const ToyConfig& cfg, ToyGradients* grads);

struct StepStats {
    int step = 0;
    double ce = 0.0;
    double recon = 0.0;
    double total = 0.0;
    double accuracy = 0.0;
};

struct TrainingHistory {
    std::vector<StepStats> steps;  // steps+1 rows; row 0 is the untrained model
};

// Plain full-batch gradient descent on all trainable tensors. Deterministic
// given the config; throws (with the step index) if the loss goes non-finite.
TrainingHistory train_toy(const ToyConfig& cfg, ToyModel* trained = nullptr);

// Named gradient-vs-finite-difference checks over every differentiable block
// (mixture MLP, fusion, attention, embeddings, FSQ straight-through path,
// CE, reconstruction, and the full pipeline). Used by tests and the CLI.
struct GradSuiteEntry {
    std::string name;
    double max_relative_error = 0.0;
};

std::vector<GradSuiteEntry> gradient_suite(std::uint64_t seed = 42);

}  // namespace tasla::train
