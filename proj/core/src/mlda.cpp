#include "tasla/mlda.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace tasla::mlda {

void LayerStack::validate() const {
    if (layers.empty()) throw std::invalid_argument("LayerStack: no layers");
    if (layer_ids.size() != layers.size())
        throw std::invalid_argument("LayerStack: " + std::to_string(layer_ids.size()) +
                                    " layer ids for " + std::to_string(layers.size()) +
                                    " layers");
    const int t = layers.front().rows;
    const int d = layers.front().cols;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].rows != t || layers[i].cols != d)
            throw std::invalid_argument("LayerStack: layer " + std::to_string(i) + " is " +
                                        layers[i].shape_str() + ", expected " +
                                        std::to_string(t) + "x" + std::to_string(d));
        layers[i].check_finite("LayerStack layer " + std::to_string(i));
    }
}

MixturePredictor MixturePredictor::init(int d_h, int n_layers, int hidden,
                                        std::uint64_t seed) {
    if (d_h < 1 || n_layers < 1 || hidden < 1)
        throw std::invalid_argument("MixturePredictor::init: bad dimensions");
    MixturePredictor p;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    p.w1 = Mat(d_h, hidden);
    for (double& x : p.w1.v) x = u(rng);
    p.b1.assign(static_cast<std::size_t>(hidden), 0.0);
    p.w2 = Mat(hidden, n_layers);
    for (double& x : p.w2.v) x = u(rng);
    p.b2.assign(static_cast<std::size_t>(n_layers), 0.0);
    return p;
}

Mat TextQueries::queries() const {
    if (token_ids.empty()) throw std::invalid_argument("TextQueries: empty token sequence");
    Mat q(static_cast<int>(token_ids.size()), embedding_table.cols);
    for (std::size_t i = 0; i < token_ids.size(); ++i) {
        const int id = token_ids[i];
        if (id < 0 || id >= embedding_table.rows)
            throw std::invalid_argument("TextQueries: token id " + std::to_string(id) +
                                        " outside vocab of " +
                                        std::to_string(embedding_table.rows));
        for (int c = 0; c < embedding_table.cols; ++c)
            q(static_cast<int>(i), c) = embedding_table(id, c);
    }
    return q;
}

MixtureWeights predict_mixture_weights(const MixturePredictor& p, const Mat& h_last) {
    if (h_last.cols != p.w1.rows)
        throw std::invalid_argument("predict_mixture_weights: frame width " +
                                    std::to_string(h_last.cols) + " vs MLP input " +
                                    std::to_string(p.w1.rows));
    const int t_frames = h_last.rows;
    const int hidden = p.hidden();
    const int n_layers = p.n_layers();
    MixtureWeights mw;
    mw.w = Mat(n_layers, t_frames);
    std::vector<double> act(static_cast<std::size_t>(hidden));
    std::vector<double> logits(static_cast<std::size_t>(n_layers));
    for (int t = 0; t < t_frames; ++t) {
        for (int h = 0; h < hidden; ++h) {
            double acc = p.b1[static_cast<std::size_t>(h)];
            for (int c = 0; c < h_last.cols; ++c) acc += h_last(t, c) * p.w1(c, h);
            act[static_cast<std::size_t>(h)] = std::tanh(acc);
        }
        for (int l = 0; l < n_layers; ++l) {
            double acc = p.b2[static_cast<std::size_t>(l)];
            for (int h = 0; h < hidden; ++h) acc += act[static_cast<std::size_t>(h)] * p.w2(h, l);
            logits[static_cast<std::size_t>(l)] = acc;
        }
        softmax_inplace(logits);
        for (int l = 0; l < n_layers; ++l) mw.w(l, t) = logits[static_cast<std::size_t>(l)];
    }
    return mw;
}

Mat fuse_values(const LayerStack& stack, const MixtureWeights& w) {
    const int t_frames = stack.frames();
    if (w.w.cols != t_frames)
        throw std::invalid_argument("fuse_values: weights cover " + std::to_string(w.w.cols) +
                                    " frames, stack has " + std::to_string(t_frames));
    if (w.w.rows != stack.num_layers())
        throw std::invalid_argument("fuse_values: " + std::to_string(w.w.rows) +
                                    " weight rows for " + std::to_string(stack.num_layers()) +
                                    " layers");
    Mat fused(t_frames, stack.width());
    for (int t = 0; t < t_frames; ++t) {
        for (int l = 0; l < stack.num_layers(); ++l) {
            const double wl = w.w(l, t);
            const double* src = stack.layers[static_cast<std::size_t>(l)].row(t);
            double* dst = fused.row(t);
            for (int c = 0; c < stack.width(); ++c) dst[c] += wl * src[c];
        }
    }
    return fused;
}

namespace {

Mat attention_matrix(const Mat& q, const Mat& k) {
    if (q.cols != k.cols)
        throw std::invalid_argument("cross_attend: query width " + std::to_string(q.cols) +
                                    " vs key width " + std::to_string(k.cols));
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols));
    Mat scores = matmul(q, k.transposed());
    for (double& s : scores.v) s *= scale;
    return softmax_rows(scores);
}

}  // namespace

AggregatedTokens cross_attend(const Mat& q, const Mat& k, const Mat& v_fused) {
    if (k.rows != v_fused.rows)
        throw std::invalid_argument("cross_attend: " + std::to_string(k.rows) + " key rows vs " +
                                    std::to_string(v_fused.rows) + " value rows");
    Mat attn = attention_matrix(q, k);
    return AggregatedTokens{matmul(attn, v_fused)};
}

MldaActivations mlda_forward(const TextQueries& text, const LayerStack& stack,
                             const MixturePredictor& p) {
    stack.validate();
    MldaActivations acts;
    acts.queries = text.queries();
    const Mat& h_last = stack.last_layer();
    if (acts.queries.cols != h_last.cols)
        throw std::invalid_argument("mlda_forward: embedding width " +
                                    std::to_string(acts.queries.cols) +
                                    " must equal key width " + std::to_string(h_last.cols));

    // Mixture MLP, keeping the tanh activations for backprop.
    const int t_frames = h_last.rows;
    const int hidden = p.hidden();
    const int n_layers = p.n_layers();
    if (n_layers != stack.num_layers())
        throw std::invalid_argument("mlda_forward: predictor emits " + std::to_string(n_layers) +
                                    " logits for " + std::to_string(stack.num_layers()) +
                                    " layers");
    acts.hidden_act = Mat(t_frames, hidden);
    acts.weights.w = Mat(n_layers, t_frames);
    std::vector<double> logits(static_cast<std::size_t>(n_layers));
    for (int t = 0; t < t_frames; ++t) {
        for (int h = 0; h < hidden; ++h) {
            double acc = p.b1[static_cast<std::size_t>(h)];
            for (int c = 0; c < h_last.cols; ++c) acc += h_last(t, c) * p.w1(c, h);
            acts.hidden_act(t, h) = std::tanh(acc);
        }
        for (int l = 0; l < n_layers; ++l) {
            double acc = p.b2[static_cast<std::size_t>(l)];
            for (int h = 0; h < hidden; ++h) acc += acts.hidden_act(t, h) * p.w2(h, l);
            logits[static_cast<std::size_t>(l)] = acc;
        }
        softmax_inplace(logits);
        for (int l = 0; l < n_layers; ++l) acts.weights.w(l, t) = logits[static_cast<std::size_t>(l)];
    }

    acts.fused = fuse_values(stack, acts.weights);
    acts.attention = attention_matrix(acts.queries, h_last);
    acts.tokens.z = matmul(acts.attention, acts.fused);
    return acts;
}

MldaGradients mlda_backward(const MldaActivations& acts, const TextQueries& text,
                            const LayerStack& stack, const MixturePredictor& p,
                            const Mat& dz) {
    if (!dz.same_shape(acts.tokens.z))
        throw std::invalid_argument("mlda_backward: dz is " + dz.shape_str() + ", expected " +
                                    acts.tokens.z.shape_str());
    const Mat& h_last = stack.last_layer();
    const int t_frames = h_last.rows;
    const int d = h_last.cols;
    const int n = dz.rows;
    const int hidden = p.hidden();
    const int n_layers = p.n_layers();
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));

    MldaGradients g;
    g.d_embedding = Mat(text.embedding_table.rows, text.embedding_table.cols);
    g.d_w1 = Mat(p.w1.rows, p.w1.cols);
    g.d_b1.assign(p.b1.size(), 0.0);
    g.d_w2 = Mat(p.w2.rows, p.w2.cols);
    g.d_b2.assign(p.b2.size(), 0.0);
    g.d_layers.assign(static_cast<std::size_t>(n_layers), Mat(t_frames, d));

    // z = A * fused
    Mat d_attn = matmul(dz, acts.fused.transposed());  // N x T
    Mat d_fused = matmul(acts.attention.transposed(), dz);  // T x d

    // Softmax backward per attention row.
    Mat d_scores(n, t_frames);
    for (int i = 0; i < n; ++i) {
        double dot = 0.0;
        for (int t = 0; t < t_frames; ++t) dot += d_attn(i, t) * acts.attention(i, t);
        for (int t = 0; t < t_frames; ++t)
            d_scores(i, t) = acts.attention(i, t) * (d_attn(i, t) - dot);
    }

    // scores = Q K^T * scale with K = h_last.
    Mat d_q(n, d);
    Mat d_h_last(t_frames, d);
    for (int i = 0; i < n; ++i)
        for (int t = 0; t < t_frames; ++t) {
            const double ds = d_scores(i, t) * scale;
            for (int c = 0; c < d; ++c) {
                d_q(i, c) += ds * h_last(t, c);
                d_h_last(t, c) += ds * acts.queries(i, c);
            }
        }
    for (int i = 0; i < n; ++i) {
        const int id = text.token_ids[static_cast<std::size_t>(i)];
        for (int c = 0; c < d; ++c) g.d_embedding(id, c) += d_q(i, c);
    }

    // Fusion backward: value-path gradients and per-frame weight gradients.
    Mat d_weights(n_layers, t_frames);
    for (int t = 0; t < t_frames; ++t)
        for (int l = 0; l < n_layers; ++l) {
            const Mat& layer = stack.layers[static_cast<std::size_t>(l)];
            double dot = 0.0;
            const double wl = acts.weights.w(l, t);
            for (int c = 0; c < d; ++c) {
                dot += d_fused(t, c) * layer(t, c);
                g.d_layers[static_cast<std::size_t>(l)](t, c) += wl * d_fused(t, c);
            }
            d_weights(l, t) = dot;
        }

    // Mixture MLP backward, frame by frame.
    std::vector<double> d_logits(static_cast<std::size_t>(n_layers));
    std::vector<double> d_pre1(static_cast<std::size_t>(hidden));
    for (int t = 0; t < t_frames; ++t) {
        double dot = 0.0;
        for (int l = 0; l < n_layers; ++l) dot += d_weights(l, t) * acts.weights.w(l, t);
        for (int l = 0; l < n_layers; ++l)
            d_logits[static_cast<std::size_t>(l)] =
                acts.weights.w(l, t) * (d_weights(l, t) - dot);
        for (int l = 0; l < n_layers; ++l) {
            g.d_b2[static_cast<std::size_t>(l)] += d_logits[static_cast<std::size_t>(l)];
            for (int h = 0; h < hidden; ++h)
                g.d_w2(h, l) += acts.hidden_act(t, h) * d_logits[static_cast<std::size_t>(l)];
        }
        for (int h = 0; h < hidden; ++h) {
            double da = 0.0;
            for (int l = 0; l < n_layers; ++l)
                da += p.w2(h, l) * d_logits[static_cast<std::size_t>(l)];
            const double a = acts.hidden_act(t, h);
            d_pre1[static_cast<std::size_t>(h)] = da * (1.0 - a * a);
        }
        for (int h = 0; h < hidden; ++h) {
            const double dp = d_pre1[static_cast<std::size_t>(h)];
            g.d_b1[static_cast<std::size_t>(h)] += dp;
            for (int c = 0; c < d; ++c) g.d_w1(c, h) += h_last(t, c) * dp;
        }
        for (int c = 0; c < d; ++c) {
            double acc = 0.0;
            for (int h = 0; h < hidden; ++h)
                acc += p.w1(c, h) * d_pre1[static_cast<std::size_t>(h)];
            d_h_last(t, c) += acc;
        }
    }

    // The last layer is simultaneously a value source, the key matrix and the
    // MLP input; fold the key/MLP contributions into its value gradient.
    Mat& last = g.d_layers.back();
    for (std::size_t i = 0; i < last.v.size(); ++i) last.v[i] += d_h_last.v[i];
    return g;
}

}  // namespace tasla::mlda
