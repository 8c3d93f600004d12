#pragma once

#include <cstdint>
#include <vector>

#include "tasla/mat.hpp"

namespace tasla::mlda {

// Per-layer frame-level hidden states from a (real or synthetic) speech
// encoder. The last entry doubles as the cross-attention key source and the
// mixture predictor input.
struct LayerStack {
    std::vector<int> layer_ids;  // e.g. {8, 16, 24, 32}
    std::vector<Mat> layers;     // each T x d_h

    int frames() const { return layers.empty() ? 0 : layers.front().rows; }
    int width() const { return layers.empty() ? 0 : layers.front().cols; }
    int num_layers() const { return static_cast<int>(layers.size()); }
    const Mat& last_layer() const { return layers.back(); }

    void validate() const;
};

// One-hidden-layer MLP (tanh) that maps a frame of the last hidden state to
// one logit per value layer.
struct MixturePredictor {
    Mat w1;                  // d_h x hidden
    std::vector<double> b1;  // hidden
    Mat w2;                  // hidden x n_layers
    std::vector<double> b2;  // n_layers

    int hidden() const { return w1.cols; }
    int n_layers() const { return w2.cols; }

    static MixturePredictor init(int d_h, int n_layers, int hidden = 64,
                                 std::uint64_t seed = 0);
};

// Column-stochastic n_layers x T weights: one softmax per frame.
struct MixtureWeights {
    Mat w;
};

struct TextQueries {
    Mat embedding_table;         // vocab x d_q
    std::vector<int> token_ids;  // length N

    // Q = E(v), gathered rows.
    Mat queries() const;
};

struct AggregatedTokens {
    Mat z;  // N x d_v
};

MixtureWeights predict_mixture_weights(const MixturePredictor& p, const Mat& h_last);

// Frame-wise weighted combination of the value layers.
Mat fuse_values(const LayerStack& stack, const MixtureWeights& w);

// Single-head scaled dot-product attention, scale 1/sqrt(d_k).
AggregatedTokens cross_attend(const Mat& q, const Mat& k, const Mat& v_fused);

// Forward pass with every intermediate kept for backprop and diagnostics.
struct MldaActivations {
    Mat queries;             // N x d_q
    Mat hidden_act;          // T x hidden, tanh outputs of the mixture MLP
    MixtureWeights weights;  // n_layers x T
    Mat fused;               // T x d_v
    Mat attention;           // N x T, row-stochastic
    AggregatedTokens tokens;
};

MldaActivations mlda_forward(const TextQueries& text, const LayerStack& stack,
                             const MixturePredictor& p);

struct MldaGradients {
    Mat d_embedding;  // vocab x d_q
    Mat d_w1;
    std::vector<double> d_b1;
    Mat d_w2;
    std::vector<double> d_b2;
    std::vector<Mat> d_layers;  // per value layer, T x d_h
};

// Backprop of d(loss)/dz through attention, fusion and the mixture MLP.
// The last layer accumulates its key-path, MLP-path and value-path gradients.
MldaGradients mlda_backward(const MldaActivations& acts, const TextQueries& text,
                            const LayerStack& stack, const MixturePredictor& p,
                            const Mat& dz);

}  // namespace tasla::mlda
