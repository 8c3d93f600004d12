#include "tasla/training.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "tasla/gradcheck.hpp"
#include "tasla/synth.hpp"

namespace tasla::train {

namespace {

void add_into(Mat& dst, const Mat& src) {
    for (std::size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += src.v[i];
}

void add_into(std::vector<double>& dst, const std::vector<double>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

int argmax_row(const Mat& m, int row) {
    int best = 0;
    for (int c = 1; c < m.cols; ++c)
        if (m(row, c) > m(row, best)) best = c;
    return best;
}

double log_sum_exp(const double* row, int n) {
    double mx = row[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, row[i]);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::exp(row[i] - mx);
    return mx + std::log(s);
}

}  // namespace

int Mask::count() const {
    int n = 0;
    for (int x : m) n += x;
    return n;
}

void Mask::validate(std::size_t expected_len) const {
    if (m.size() != expected_len)
        throw std::invalid_argument("Mask: length " + std::to_string(m.size()) +
                                    ", expected " + std::to_string(expected_len));
    for (int x : m)
        if (x != 0 && x != 1) throw std::invalid_argument("Mask: entries must be 0 or 1");
}

double ce_loss(const Mat& logits, const std::vector<int>& targets, const Mask& mask) {
    if (static_cast<int>(targets.size()) != logits.rows)
        throw std::invalid_argument("ce_loss: " + std::to_string(targets.size()) +
                                    " targets for " + std::to_string(logits.rows) + " steps");
    mask.validate(targets.size());
    const int valid = mask.count();
    if (valid == 0) throw std::invalid_argument("ce_loss: all positions masked out");
    double acc = 0.0;
    for (int t = 0; t < logits.rows; ++t) {
        if (!mask.m[static_cast<std::size_t>(t)]) continue;
        const int y = targets[static_cast<std::size_t>(t)];
        if (y < 0 || y >= logits.cols)
            throw std::invalid_argument("ce_loss: target " + std::to_string(y) +
                                        " outside vocab of " + std::to_string(logits.cols));
        acc += log_sum_exp(logits.row(t), logits.cols) - logits(t, y);
    }
    return acc / valid;
}

double recon_loss(const Mat& z, const Mat& z_q, const Mask& mask) {
    if (!z.same_shape(z_q))
        throw std::invalid_argument("recon_loss: shape mismatch " + z.shape_str() + " vs " +
                                    z_q.shape_str());
    mask.validate(static_cast<std::size_t>(z.rows));
    const int valid = mask.count();
    if (valid == 0) throw std::invalid_argument("recon_loss: all rows masked out");
    double acc = 0.0;
    for (int r = 0; r < z.rows; ++r) {
        if (!mask.m[static_cast<std::size_t>(r)]) continue;
        for (int c = 0; c < z.cols; ++c) {
            const double d = z(r, c) - z_q(r, c);
            acc += d * d;
        }
    }
    return acc / valid;
}

LossBreakdown total_loss(double ce, double recon, double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("total_loss: lambda must be >= 0");
    return LossBreakdown{ce, recon, lambda, ce + lambda * recon};
}

double unit_accuracy(const std::vector<int>& pred, const std::vector<int>& target,
                     const Mask& mask) {
    if (pred.size() != target.size())
        throw std::invalid_argument("unit_accuracy: length mismatch");
    mask.validate(pred.size());
    const int valid = mask.count();
    if (valid == 0) throw std::invalid_argument("unit_accuracy: no valid positions");
    int hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (mask.m[i] && pred[i] == target[i]) ++hits;
    return static_cast<double>(hits) / valid;
}

void ToyConfig::validate() const {
    if (frames < 1 || text_len < 1 || feat_width < 1)
        throw std::invalid_argument("ToyConfig: frames, text_len, feat_width must be >= 1");
    if (layer_ids.empty()) throw std::invalid_argument("ToyConfig: empty layer set");
    if (fsq_dim < 1 || fsq_levels < 2)
        throw std::invalid_argument("ToyConfig: need fsq_dim >= 1 and fsq_levels >= 2");
    if (unit_vocab < 1 || text_vocab < 1 || decoder_width < 1 || mlp_hidden < 1)
        throw std::invalid_argument("ToyConfig: vocab/width fields must be >= 1");
    if (utterances < 1 || steps < 1) throw std::invalid_argument("ToyConfig: need data and steps");
    if (lambda < 0.0 || lr <= 0.0) throw std::invalid_argument("ToyConfig: bad lambda or lr");
}

ToyModel init_toy_model(const ToyConfig& cfg) {
    cfg.validate();
    ToyModel m;
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    auto fill = [&](Mat& mat, int r, int c) {
        mat = Mat(r, c);
        for (double& x : mat.v) x = u(rng);
    };
    m.predictor = mlda::MixturePredictor::init(cfg.feat_width, cfg.n_layers(), cfg.mlp_hidden,
                                               cfg.seed + 1);
    fill(m.embedding, cfg.text_vocab, cfg.feat_width);
    fsq::FsqConfig fc{cfg.feat_width, cfg.fsq_dim, cfg.fsq_levels, 1.0};
    m.fsq = fsq::FsqParams::init(fc, cfg.seed + 2);
    fill(m.unit_emb, cfg.unit_vocab + 1, cfg.decoder_width);
    fill(m.text_emb, cfg.text_vocab, cfg.decoder_width);
    fill(m.z_proj, cfg.fsq_dim, cfg.decoder_width);
    fill(m.w_h, cfg.decoder_width, cfg.decoder_width);
    m.b_h.assign(static_cast<std::size_t>(cfg.decoder_width), 0.0);
    fill(m.w_o, cfg.decoder_width, cfg.unit_vocab);
    m.b_o.assign(static_cast<std::size_t>(cfg.unit_vocab), 0.0);
    return m;
}

std::vector<ToyExample> make_toy_dataset(const ToyConfig& cfg) {
    cfg.validate();
    const int n_layers = cfg.n_layers();
    // Fixed marker directions per layer, shared across the dataset.
    std::mt19937_64 dir_rng(cfg.seed + 1000);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto unit_dirs = [&](int count, int width) {
        std::vector<std::vector<double>> dirs(static_cast<std::size_t>(count));
        for (auto& d : dirs) {
            d.resize(static_cast<std::size_t>(width));
            double norm = 0.0;
            for (double& x : d) {
                x = gauss(dir_rng);
                norm += x * x;
            }
            norm = std::sqrt(norm);
            for (double& x : d) x /= norm;
        }
        return dirs;
    };
    const auto markers = unit_dirs(n_layers, cfg.feat_width);
    const auto cues = unit_dirs(n_layers, cfg.feat_width);
    constexpr double kMarkerAmp = 1.5;
    constexpr double kCueAmp = 1.0;
    const int stride = std::max(1, cfg.unit_vocab / n_layers);

    std::vector<ToyExample> data;
    data.reserve(static_cast<std::size_t>(cfg.utterances));
    for (int i = 0; i < cfg.utterances; ++i) {
        std::mt19937_64 rng(cfg.seed * 6364136223846793005ULL + 1442695040888963407ULL +
                            static_cast<std::uint64_t>(i));
        ToyExample ex;
        ex.tokens.resize(static_cast<std::size_t>(cfg.text_len));
        for (int& t : ex.tokens) t = static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.text_vocab));
        ex.dominant_layer = static_cast<int>(rng() % static_cast<std::uint64_t>(n_layers));
        ex.stack = synth::layer_stack(cfg.layer_ids, cfg.frames, cfg.feat_width,
                                      cfg.seed * 31 + static_cast<std::uint64_t>(i));
        Mat& dominant = ex.stack.layers[static_cast<std::size_t>(ex.dominant_layer)];
        Mat& last = ex.stack.layers.back();
        const auto& mark = markers[static_cast<std::size_t>(ex.dominant_layer)];
        const auto& cue = cues[static_cast<std::size_t>(ex.dominant_layer)];
        for (int t = 0; t < cfg.frames; ++t)
            for (int c = 0; c < cfg.feat_width; ++c) {
                dominant(t, c) += kMarkerAmp * mark[static_cast<std::size_t>(c)];
                last(t, c) += kCueAmp * cue[static_cast<std::size_t>(c)];
            }
        ex.units.resize(static_cast<std::size_t>(cfg.text_len));
        for (int t = 0; t < cfg.text_len; ++t)
            ex.units[static_cast<std::size_t>(t)] =
                (stride * ex.dominant_layer + ex.tokens[static_cast<std::size_t>(t)]) %
                cfg.unit_vocab;
        data.push_back(std::move(ex));
    }
    return data;
}

namespace {

struct PipelineCache {
    mlda::MldaActivations acts;
    std::vector<double> pooled;  // mean of ste rows
    std::vector<double> z_feat;  // pooled @ z_proj
    Mat dec_in;                  // N x decoder_width
    Mat dec_hidden;              // N x decoder_width (tanh)
    Mat logits;                  // N x V
    std::vector<int> prev_units; // decoder inputs (BOS = V)
};

PipelineResult run_forward(const ToyModel& model, const ToyExample& ex, const ToyConfig& cfg,
                           const Mat* frozen_gap, PipelineCache* cache) {
    const int n = cfg.text_len;
    const int d = cfg.fsq_dim;
    const int width = cfg.feat_width;

    mlda::TextQueries text{model.embedding, ex.tokens};
    mlda::MldaActivations acts = mlda_forward(text, ex.stack, model.predictor);

    PipelineResult res;
    res.feature = acts.tokens.z;
    res.latent = Mat(n, d);
    res.squashed = Mat(n, d);
    res.quant_gap = Mat(n, d);
    res.ste = Mat(n, d);
    res.reconstructed = Mat(n, width);
    res.code_indices.resize(static_cast<std::size_t>(n));

    fsq::FsqConfig fc{width, d, cfg.fsq_levels, 1.0};
    for (int t = 0; t < n; ++t) {
        for (int j = 0; j < d; ++j) {
            double acc = 0.0;
            for (int c = 0; c < width; ++c) acc += res.feature(t, c) * model.fsq.enc(c, j);
            res.latent(t, j) = acc;
        }
        auto ubar = fsq::squash(res.latent.row_span(t), model.fsq, fc);
        for (int j = 0; j < d; ++j) res.squashed(t, j) = ubar[static_cast<std::size_t>(j)];
        if (frozen_gap != nullptr) {
            for (int j = 0; j < d; ++j) {
                res.quant_gap(t, j) = (*frozen_gap)(t, j);
                res.ste(t, j) = res.squashed(t, j) + res.quant_gap(t, j);
            }
        } else {
            auto code = fsq::quantize(ubar, cfg.fsq_levels);
            res.code_indices[static_cast<std::size_t>(t)] = code.indices;
            for (int j = 0; j < d; ++j) {
                res.quant_gap(t, j) = code.dequantized[static_cast<std::size_t>(j)] -
                                      res.squashed(t, j);
                res.ste(t, j) = res.squashed(t, j) + res.quant_gap(t, j);
            }
        }
        for (int c = 0; c < width; ++c) {
            double acc = 0.0;
            for (int j = 0; j < d; ++j) acc += res.ste(t, j) * model.fsq.dec(j, c);
            res.reconstructed(t, c) = acc;
        }
    }

    // Mean-pooled quantized latent conditions every decoder step.
    std::vector<double> pooled(static_cast<std::size_t>(d), 0.0);
    for (int t = 0; t < n; ++t)
        for (int j = 0; j < d; ++j) pooled[static_cast<std::size_t>(j)] += res.ste(t, j) / n;
    const int dw = cfg.decoder_width;
    std::vector<double> z_feat(static_cast<std::size_t>(dw), 0.0);
    for (int c = 0; c < dw; ++c) {
        double acc = 0.0;
        for (int j = 0; j < d; ++j) acc += pooled[static_cast<std::size_t>(j)] * model.z_proj(j, c);
        z_feat[static_cast<std::size_t>(c)] = acc;
    }

    Mat dec_in(n, dw), dec_hidden(n, dw), logits(n, cfg.unit_vocab);
    std::vector<int> prev_units(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) {
        const int prev = t == 0 ? cfg.unit_vocab : ex.units[static_cast<std::size_t>(t) - 1];
        prev_units[static_cast<std::size_t>(t)] = prev;
        const int tok = ex.tokens[static_cast<std::size_t>(t)];
        for (int c = 0; c < dw; ++c)
            dec_in(t, c) = model.unit_emb(prev, c) + model.text_emb(tok, c) +
                           z_feat[static_cast<std::size_t>(c)];
        for (int h = 0; h < dw; ++h) {
            double acc = model.b_h[static_cast<std::size_t>(h)];
            for (int c = 0; c < dw; ++c) acc += dec_in(t, c) * model.w_h(c, h);
            dec_hidden(t, h) = std::tanh(acc);
        }
        for (int v = 0; v < cfg.unit_vocab; ++v) {
            double acc = model.b_o[static_cast<std::size_t>(v)];
            for (int h = 0; h < dw; ++h) acc += dec_hidden(t, h) * model.w_o(h, v);
            logits(t, v) = acc;
        }
    }

    const Mask mask = Mask::ones(static_cast<std::size_t>(n));
    const double ce = ce_loss(logits, ex.units, mask);
    const double rec = recon_loss(res.feature, res.reconstructed, mask);
    res.loss = total_loss(ce, rec, cfg.lambda);
    std::vector<int> pred(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) pred[static_cast<std::size_t>(t)] = argmax_row(logits, t);
    res.accuracy = unit_accuracy(pred, ex.units, mask);

    if (cache != nullptr) {
        cache->acts = std::move(acts);
        cache->pooled = std::move(pooled);
        cache->z_feat = std::move(z_feat);
        cache->dec_in = std::move(dec_in);
        cache->dec_hidden = std::move(dec_hidden);
        cache->logits = std::move(logits);
        cache->prev_units = std::move(prev_units);
    }
    return res;
}

ToyGradients zero_gradients(const ToyModel& m, const mlda::LayerStack& stack) {
    ToyGradients g;
    g.mlda.d_embedding = Mat(m.embedding.rows, m.embedding.cols);
    g.mlda.d_w1 = Mat(m.predictor.w1.rows, m.predictor.w1.cols);
    g.mlda.d_b1.assign(m.predictor.b1.size(), 0.0);
    g.mlda.d_w2 = Mat(m.predictor.w2.rows, m.predictor.w2.cols);
    g.mlda.d_b2.assign(m.predictor.b2.size(), 0.0);
    g.mlda.d_layers.assign(stack.layers.size(), Mat(stack.frames(), stack.width()));
    g.d_enc = Mat(m.fsq.enc.rows, m.fsq.enc.cols);
    g.d_dec = Mat(m.fsq.dec.rows, m.fsq.dec.cols);
    g.d_scale.assign(m.fsq.scale.size(), 0.0);
    g.d_shift.assign(m.fsq.shift.size(), 0.0);
    g.d_unit_emb = Mat(m.unit_emb.rows, m.unit_emb.cols);
    g.d_text_emb = Mat(m.text_emb.rows, m.text_emb.cols);
    g.d_z_proj = Mat(m.z_proj.rows, m.z_proj.cols);
    g.d_w_h = Mat(m.w_h.rows, m.w_h.cols);
    g.d_b_h.assign(m.b_h.size(), 0.0);
    g.d_w_o = Mat(m.w_o.rows, m.w_o.cols);
    g.d_b_o.assign(m.b_o.size(), 0.0);
    return g;
}

}  // namespace

PipelineResult toy_forward(const ToyModel& model, const ToyExample& ex, const ToyConfig& cfg,
                           const Mat* frozen_gap) {
    return run_forward(model, ex, cfg, frozen_gap, nullptr);
}

PipelineResult toy_forward_backward(const ToyModel& model, const ToyExample& ex,
                                    const ToyConfig& cfg, ToyGradients* grads) {
    PipelineCache cache;
    PipelineResult res = run_forward(model, ex, cfg, nullptr, &cache);

    const int n = cfg.text_len;
    const int d = cfg.fsq_dim;
    const int width = cfg.feat_width;
    const int dw = cfg.decoder_width;
    const int vocab = cfg.unit_vocab;

    // CE backward through the decoder.
    std::vector<double> d_z_feat(static_cast<std::size_t>(dw), 0.0);
    std::vector<double> probs(static_cast<std::size_t>(vocab));
    std::vector<double> d_hidden(static_cast<std::size_t>(dw));
    std::vector<double> d_pre(static_cast<std::size_t>(dw));
    for (int t = 0; t < n; ++t) {
        for (int v = 0; v < vocab; ++v) probs[static_cast<std::size_t>(v)] = cache.logits(t, v);
        softmax_inplace(probs);
        probs[static_cast<std::size_t>(ex.units[static_cast<std::size_t>(t)])] -= 1.0;
        for (double& p : probs) p /= n;  // mean over the (all-ones) mask

        for (int v = 0; v < vocab; ++v) {
            const double dl = probs[static_cast<std::size_t>(v)];
            grads->d_b_o[static_cast<std::size_t>(v)] += dl;
            for (int h = 0; h < dw; ++h) grads->d_w_o(h, v) += cache.dec_hidden(t, h) * dl;
        }
        for (int h = 0; h < dw; ++h) {
            double acc = 0.0;
            for (int v = 0; v < vocab; ++v) acc += model.w_o(h, v) * probs[static_cast<std::size_t>(v)];
            const double a = cache.dec_hidden(t, h);
            d_pre[static_cast<std::size_t>(h)] = acc * (1.0 - a * a);
        }
        for (int h = 0; h < dw; ++h) {
            const double dp = d_pre[static_cast<std::size_t>(h)];
            grads->d_b_h[static_cast<std::size_t>(h)] += dp;
            for (int c = 0; c < dw; ++c) grads->d_w_h(c, h) += cache.dec_in(t, c) * dp;
        }
        for (int c = 0; c < dw; ++c) {
            double acc = 0.0;
            for (int h = 0; h < dw; ++h) acc += model.w_h(c, h) * d_pre[static_cast<std::size_t>(h)];
            d_hidden[static_cast<std::size_t>(c)] = acc;  // gradient of dec_in row
        }
        const int prev = cache.prev_units[static_cast<std::size_t>(t)];
        const int tok = ex.tokens[static_cast<std::size_t>(t)];
        for (int c = 0; c < dw; ++c) {
            grads->d_unit_emb(prev, c) += d_hidden[static_cast<std::size_t>(c)];
            grads->d_text_emb(tok, c) += d_hidden[static_cast<std::size_t>(c)];
            d_z_feat[static_cast<std::size_t>(c)] += d_hidden[static_cast<std::size_t>(c)];
        }
    }

    // z_feat = pooled @ z_proj
    std::vector<double> d_pooled(static_cast<std::size_t>(d), 0.0);
    for (int j = 0; j < d; ++j) {
        double acc = 0.0;
        for (int c = 0; c < dw; ++c) {
            acc += model.z_proj(j, c) * d_z_feat[static_cast<std::size_t>(c)];
            grads->d_z_proj(j, c) += cache.pooled[static_cast<std::size_t>(j)] *
                                     d_z_feat[static_cast<std::size_t>(c)];
        }
        d_pooled[static_cast<std::size_t>(j)] = acc;
    }

    // Per-row gradients: CE path (through the pooled latent) + recon path.
    Mat d_feature(n, width);
    const double recon_w = 2.0 * cfg.lambda / n;
    std::vector<double> d_ste(static_cast<std::size_t>(d));
    std::vector<double> d_tilde(static_cast<std::size_t>(d));
    for (int t = 0; t < n; ++t) {
        // Reconstruction: L += lambda/n * ||feature_t - recon_t||^2
        for (int j = 0; j < d; ++j) d_ste[static_cast<std::size_t>(j)] =
            d_pooled[static_cast<std::size_t>(j)] / n;
        for (int c = 0; c < width; ++c) {
            const double diff = res.feature(t, c) - res.reconstructed(t, c);
            d_feature(t, c) += recon_w * diff;
            const double d_rec = -recon_w * diff;
            for (int j = 0; j < d; ++j) {
                grads->d_dec(j, c) += res.ste(t, j) * d_rec;
                d_ste[static_cast<std::size_t>(j)] += model.fsq.dec(j, c) * d_rec;
            }
        }
        // Straight-through: d/d squashed is the identity; then the squash.
        for (int j = 0; j < d; ++j) {
            const double ub = res.squashed(t, j);
            d_tilde[static_cast<std::size_t>(j)] =
                d_ste[static_cast<std::size_t>(j)] * (1.0 - ub * ub);  // tau == 1
            grads->d_scale[static_cast<std::size_t>(j)] +=
                d_tilde[static_cast<std::size_t>(j)] * res.latent(t, j);
            grads->d_shift[static_cast<std::size_t>(j)] += d_tilde[static_cast<std::size_t>(j)];
        }
        for (int c = 0; c < width; ++c) {
            double acc = 0.0;
            for (int j = 0; j < d; ++j) {
                const double dl = d_tilde[static_cast<std::size_t>(j)] *
                                  model.fsq.scale[static_cast<std::size_t>(j)];
                acc += model.fsq.enc(c, j) * dl;
                grads->d_enc(c, j) += res.feature(t, c) * dl;
            }
            d_feature(t, c) += acc;
        }
    }

    mlda::TextQueries text{model.embedding, ex.tokens};
    mlda::MldaGradients mg =
        mlda_backward(cache.acts, text, ex.stack, model.predictor, d_feature);
    add_into(grads->mlda.d_embedding, mg.d_embedding);
    add_into(grads->mlda.d_w1, mg.d_w1);
    add_into(grads->mlda.d_b1, mg.d_b1);
    add_into(grads->mlda.d_w2, mg.d_w2);
    add_into(grads->mlda.d_b2, mg.d_b2);
    for (std::size_t l = 0; l < mg.d_layers.size(); ++l)
        add_into(grads->mlda.d_layers[l], mg.d_layers[l]);
    return res;
}

TrainingHistory train_toy(const ToyConfig& cfg, ToyModel* trained) {
    cfg.validate();
    ToyModel model = init_toy_model(cfg);
    const std::vector<ToyExample> data = make_toy_dataset(cfg);
    const double inv_n = 1.0 / static_cast<double>(data.size());

    TrainingHistory history;
    history.steps.reserve(static_cast<std::size_t>(cfg.steps) + 1);
    for (int step = 0; step <= cfg.steps; ++step) {
        ToyGradients grads = zero_gradients(model, data.front().stack);
        StepStats stats;
        stats.step = step;
        for (const ToyExample& ex : data) {
            const PipelineResult res = toy_forward_backward(model, ex, cfg, &grads);
            stats.ce += res.loss.ce * inv_n;
            stats.recon += res.loss.recon * inv_n;
            stats.total += res.loss.total * inv_n;
            stats.accuracy += res.accuracy * inv_n;
        }
        if (!std::isfinite(stats.total))
            throw std::runtime_error("train_toy: non-finite loss at step " +
                                     std::to_string(step));
        history.steps.push_back(stats);
        if (step == cfg.steps) break;

        const double lr = cfg.lr * inv_n;  // grads hold sums over the dataset
        auto apply = [lr](Mat& param, const Mat& grad) {
            for (std::size_t i = 0; i < param.v.size(); ++i) param.v[i] -= lr * grad.v[i];
        };
        auto apply_vec = [lr](std::vector<double>& param, const std::vector<double>& grad) {
            for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * grad[i];
        };
        apply(model.embedding, grads.mlda.d_embedding);
        apply(model.predictor.w1, grads.mlda.d_w1);
        apply_vec(model.predictor.b1, grads.mlda.d_b1);
        apply(model.predictor.w2, grads.mlda.d_w2);
        apply_vec(model.predictor.b2, grads.mlda.d_b2);
        apply(model.fsq.enc, grads.d_enc);
        apply(model.fsq.dec, grads.d_dec);
        apply_vec(model.fsq.scale, grads.d_scale);
        apply_vec(model.fsq.shift, grads.d_shift);
        apply(model.unit_emb, grads.d_unit_emb);
        apply(model.text_emb, grads.d_text_emb);
        apply(model.z_proj, grads.d_z_proj);
        apply(model.w_h, grads.d_w_h);
        apply_vec(model.b_h, grads.d_b_h);
        apply(model.w_o, grads.d_w_o);
        apply_vec(model.b_o, grads.d_b_o);
    }
    if (trained != nullptr) *trained = std::move(model);
    return history;
}

namespace {

// Per-tensor finite-difference check for the MLDA block under L = 0.5*sum(z^2).
double mlda_block_error(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto dim = [&](int lo, int hi) {
        return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
    };
    const int t_frames = dim(2, 8);
    const int n = dim(1, 8);
    const int width = dim(2, 16);
    const int n_layers = dim(2, 4);
    const int hidden = dim(2, 8);
    const int vocab = dim(n, n + 4);

    mlda::LayerStack stack = synth::layer_stack(std::vector<int>(static_cast<std::size_t>(n_layers), 0),
                                                t_frames, width, seed + 5);
    for (int l = 0; l < n_layers; ++l) stack.layer_ids[static_cast<std::size_t>(l)] = l;
    mlda::MixturePredictor pred = mlda::MixturePredictor::init(width, n_layers, hidden, seed + 6);
    // Nonzero biases so their gradients are exercised away from the origin.
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (double& b : pred.b1) b = u(rng);
    for (double& b : pred.b2) b = u(rng);
    Mat table(vocab, width);
    for (double& x : table.v) x = u(rng);
    std::vector<int> ids(static_cast<std::size_t>(n));
    for (int& id : ids) id = static_cast<int>(rng() % static_cast<std::uint64_t>(vocab));

    auto loss_with = [&](const mlda::TextQueries& tq, const mlda::LayerStack& st,
                         const mlda::MixturePredictor& p) {
        const Mat z = mlda_forward(tq, st, p).tokens.z;
        double acc = 0.0;
        for (double x : z.v) acc += 0.5 * x * x;
        return acc;
    };

    mlda::TextQueries text{table, ids};
    mlda::MldaActivations acts = mlda_forward(text, stack, pred);
    mlda::MldaGradients g = mlda_backward(acts, text, stack, pred, acts.tokens.z);

    double worst = 0.0;
    auto check = [&](const std::vector<double>& x0, const std::vector<double>& analytic,
                     const std::function<double(const std::vector<double>&)>& f) {
        worst = std::max(worst, grad_check(f, x0, analytic).max_relative_error);
    };

    check(table.v, g.d_embedding.v, [&](const std::vector<double>& v) {
        mlda::TextQueries tq{table, ids};
        tq.embedding_table.v = v;
        return loss_with(tq, stack, pred);
    });
    check(pred.w1.v, g.d_w1.v, [&](const std::vector<double>& v) {
        mlda::MixturePredictor p = pred;
        p.w1.v = v;
        return loss_with(text, stack, p);
    });
    check(pred.b1, g.d_b1, [&](const std::vector<double>& v) {
        mlda::MixturePredictor p = pred;
        p.b1 = v;
        return loss_with(text, stack, p);
    });
    check(pred.w2.v, g.d_w2.v, [&](const std::vector<double>& v) {
        mlda::MixturePredictor p = pred;
        p.w2.v = v;
        return loss_with(text, stack, p);
    });
    check(pred.b2, g.d_b2, [&](const std::vector<double>& v) {
        mlda::MixturePredictor p = pred;
        p.b2 = v;
        return loss_with(text, stack, p);
    });
    for (int l = 0; l < n_layers; ++l) {
        check(stack.layers[static_cast<std::size_t>(l)].v,
              g.d_layers[static_cast<std::size_t>(l)].v, [&](const std::vector<double>& v) {
                  mlda::LayerStack st = stack;
                  st.layers[static_cast<std::size_t>(l)].v = v;
                  return loss_with(text, st, pred);
              });
    }
    return worst;
}

double fsq_block_error(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const int width = 6;
    const int d = 4;
    fsq::FsqConfig fc{width, d, 8, 1.0};
    fsq::FsqParams params = fsq::FsqParams::init(fc, seed + 1);
    for (double& s : params.scale) s = 1.0 + 0.3 * u(rng);
    for (double& b : params.shift) b = 0.2 * u(rng);
    std::vector<double> x(static_cast<std::size_t>(width));
    for (double& xi : x) xi = u(rng);

    // Freeze the quantization gap at the base point, then L = 0.5*||dec(zq)||^2.
    const auto base = fsq::fsq_roundtrip(x, params, fc);
    std::vector<double> gap(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j)
        gap[static_cast<std::size_t>(j)] = base.code.dequantized[static_cast<std::size_t>(j)] -
                                           base.squashed[static_cast<std::size_t>(j)];

    auto forward = [&](std::span<const double> xin, const fsq::FsqParams& p) {
        std::vector<double> latent(static_cast<std::size_t>(d), 0.0);
        for (int j = 0; j < d; ++j) {
            double acc = 0.0;
            for (int c = 0; c < width; ++c) acc += xin[static_cast<std::size_t>(c)] * p.enc(c, j);
            latent[static_cast<std::size_t>(j)] = acc;
        }
        auto ub = fsq::squash(latent, p, fc);
        std::vector<double> zq(static_cast<std::size_t>(d));
        for (int j = 0; j < d; ++j)
            zq[static_cast<std::size_t>(j)] = ub[static_cast<std::size_t>(j)] +
                                              gap[static_cast<std::size_t>(j)];
        double loss = 0.0;
        for (int c = 0; c < width; ++c) {
            double acc = 0.0;
            for (int j = 0; j < d; ++j) acc += zq[static_cast<std::size_t>(j)] * p.dec(j, c);
            loss += 0.5 * acc * acc;
        }
        return loss;
    };

    // Analytic gradients for that loss.
    std::vector<double> xhat(static_cast<std::size_t>(width), 0.0);
    for (int c = 0; c < width; ++c)
        for (int j = 0; j < d; ++j) xhat[static_cast<std::size_t>(c)] +=
            base.ste[static_cast<std::size_t>(j)] * params.dec(j, c);
    std::vector<double> d_zq(static_cast<std::size_t>(d), 0.0);
    Mat d_dec(d, width);
    for (int c = 0; c < width; ++c)
        for (int j = 0; j < d; ++j) {
            d_zq[static_cast<std::size_t>(j)] += params.dec(j, c) * xhat[static_cast<std::size_t>(c)];
            d_dec(j, c) = base.ste[static_cast<std::size_t>(j)] * xhat[static_cast<std::size_t>(c)];
        }
    std::vector<double> d_x(static_cast<std::size_t>(width), 0.0);
    std::vector<double> d_scale(static_cast<std::size_t>(d)), d_shift(static_cast<std::size_t>(d));
    Mat d_enc(width, d);
    for (int j = 0; j < d; ++j) {
        const double ub = base.squashed[static_cast<std::size_t>(j)];
        const double dt = d_zq[static_cast<std::size_t>(j)] * (1.0 - ub * ub);
        d_scale[static_cast<std::size_t>(j)] = dt * base.latent[static_cast<std::size_t>(j)];
        d_shift[static_cast<std::size_t>(j)] = dt;
        const double dl = dt * params.scale[static_cast<std::size_t>(j)];
        for (int c = 0; c < width; ++c) {
            d_x[static_cast<std::size_t>(c)] += params.enc(c, j) * dl;
            d_enc(c, j) = x[static_cast<std::size_t>(c)] * dl;
        }
    }

    double worst = 0.0;
    auto check = [&](const std::vector<double>& x0, const std::vector<double>& analytic,
                     const std::function<double(const std::vector<double>&)>& f) {
        worst = std::max(worst, grad_check(f, x0, analytic).max_relative_error);
    };
    check(x, d_x, [&](const std::vector<double>& v) { return forward(v, params); });
    check(params.enc.v, d_enc.v, [&](const std::vector<double>& v) {
        fsq::FsqParams p = params;
        p.enc.v = v;
        return forward(x, p);
    });
    check(params.dec.v, d_dec.v, [&](const std::vector<double>& v) {
        fsq::FsqParams p = params;
        p.dec.v = v;
        return forward(x, p);
    });
    check(params.scale, d_scale, [&](const std::vector<double>& v) {
        fsq::FsqParams p = params;
        p.scale = v;
        return forward(x, p);
    });
    check(params.shift, d_shift, [&](const std::vector<double>& v) {
        fsq::FsqParams p = params;
        p.shift = v;
        return forward(x, p);
    });
    return worst;
}

double ce_block_error(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    const int steps = 6, vocab = 10;
    Mat logits(steps, vocab);
    for (double& x : logits.v) x = u(rng);
    std::vector<int> targets(static_cast<std::size_t>(steps));
    for (int& t : targets) t = static_cast<int>(rng() % vocab);
    Mask mask = Mask::ones(static_cast<std::size_t>(steps));
    mask.m[2] = 0;

    const int valid = mask.count();
    Mat analytic(steps, vocab);
    std::vector<double> probs(static_cast<std::size_t>(vocab));
    for (int t = 0; t < steps; ++t) {
        if (!mask.m[static_cast<std::size_t>(t)]) continue;
        for (int v = 0; v < vocab; ++v) probs[static_cast<std::size_t>(v)] = logits(t, v);
        softmax_inplace(probs);
        probs[static_cast<std::size_t>(targets[static_cast<std::size_t>(t)])] -= 1.0;
        for (int v = 0; v < vocab; ++v) analytic(t, v) = probs[static_cast<std::size_t>(v)] / valid;
    }
    auto f = [&](const std::vector<double>& v) {
        Mat l = logits;
        l.v = v;
        return ce_loss(l, targets, mask);
    };
    return grad_check(f, logits.v, analytic.v).max_relative_error;
}

double recon_block_error(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const int n = 5, d = 7;
    Mat z(n, d), zq(n, d);
    for (double& x : z.v) x = u(rng);
    for (double& x : zq.v) x = u(rng);
    Mask mask = Mask::ones(static_cast<std::size_t>(n));
    mask.m[1] = 0;
    const int valid = mask.count();
    Mat dz(n, d), dzq(n, d);
    for (int r = 0; r < n; ++r) {
        if (!mask.m[static_cast<std::size_t>(r)]) continue;
        for (int c = 0; c < d; ++c) {
            dz(r, c) = 2.0 * (z(r, c) - zq(r, c)) / valid;
            dzq(r, c) = -dz(r, c);
        }
    }
    double worst = 0.0;
    worst = std::max(worst, grad_check(
                                [&](const std::vector<double>& v) {
                                    Mat m = z;
                                    m.v = v;
                                    return recon_loss(m, zq, mask);
                                },
                                z.v, dz.v)
                                .max_relative_error);
    worst = std::max(worst, grad_check(
                                [&](const std::vector<double>& v) {
                                    Mat m = zq;
                                    m.v = v;
                                    return recon_loss(z, m, mask);
                                },
                                zq.v, dzq.v)
                                .max_relative_error);
    return worst;
}

double pipeline_block_error(std::uint64_t seed) {
    ToyConfig cfg;
    cfg.frames = 4;
    cfg.text_len = 2;
    cfg.feat_width = 4;
    cfg.layer_ids = {0, 1, 2, 3};
    cfg.mlp_hidden = 4;
    cfg.fsq_dim = 4;
    cfg.unit_vocab = 4;
    cfg.text_vocab = 4;
    cfg.decoder_width = 4;
    cfg.utterances = 1;
    cfg.seed = seed;
    ToyModel model = init_toy_model(cfg);
    const ToyExample ex = make_toy_dataset(cfg).front();

    ToyGradients grads = zero_gradients(model, ex.stack);
    const PipelineResult base = toy_forward_backward(model, ex, cfg, &grads);
    const Mat frozen_gap = base.quant_gap;

    double worst = 0.0;
    auto eval = [&](const ToyModel& m) {
        return toy_forward(m, ex, cfg, &frozen_gap).loss.total;
    };
    auto check_mat = [&](Mat ToyModel::* field, const Mat& analytic) {
        const Mat& x0 = model.*field;
        auto f = [&](const std::vector<double>& v) {
            ToyModel m = model;
            (m.*field).v = v;
            return eval(m);
        };
        worst = std::max(worst, grad_check(f, x0.v, analytic.v).max_relative_error);
    };

    // MLDA tensors live inside nested structs; handle them explicitly.
    worst = std::max(worst, grad_check(
                                [&](const std::vector<double>& v) {
                                    ToyModel m = model;
                                    m.embedding.v = v;
                                    return eval(m);
                                },
                                model.embedding.v, grads.mlda.d_embedding.v)
                                .max_relative_error);
    worst = std::max(worst, grad_check(
                                [&](const std::vector<double>& v) {
                                    ToyModel m = model;
                                    m.predictor.w1.v = v;
                                    return eval(m);
                                },
                                model.predictor.w1.v, grads.mlda.d_w1.v)
                                .max_relative_error);
    worst = std::max(worst, grad_check(
                                [&](const std::vector<double>& v) {
                                    ToyModel m = model;
                                    m.predictor.b1 = v;
                                    return eval(m);
                                },
                                model.predictor.b1, grads.mlda.d_b1)
                                .max_relative_error);
    worst = std::max(worst, grad_check(
                                [&](const std::vector<double>& v) {
                                    ToyModel m = model;
                                    m.predictor.w2.v = v;
                                    return eval(m);
                                },
                                model.predictor.w2.v, grads.mlda.d_w2.v)
                                .max_relative_error);
    worst = std::max(worst, grad_check(
                                [&](const std::vector<double>& v) {
                                    ToyModel m = model;
                                    m.predictor.b2 = v;
                                    return eval(m);
                                },
                                model.predictor.b2, grads.mlda.d_b2)
                                .max_relative_error);
    worst = std::max(worst, grad_check(
                                [&](const std::vector<double>& v) {
                                    ToyModel m = model;
                                    m.fsq.enc.v = v;
                                    return eval(m);
                                },
                                model.fsq.enc.v, grads.d_enc.v)
                                .max_relative_error);
    worst = std::max(worst, grad_check(
                                [&](const std::vector<double>& v) {
                                    ToyModel m = model;
                                    m.fsq.dec.v = v;
                                    return eval(m);
                                },
                                model.fsq.dec.v, grads.d_dec.v)
                                .max_relative_error);
    worst = std::max(worst, grad_check(
                                [&](const std::vector<double>& v) {
                                    ToyModel m = model;
                                    m.fsq.scale = v;
                                    return eval(m);
                                },
                                model.fsq.scale, grads.d_scale)
                                .max_relative_error);
    worst = std::max(worst, grad_check(
                                [&](const std::vector<double>& v) {
                                    ToyModel m = model;
                                    m.fsq.shift = v;
                                    return eval(m);
                                },
                                model.fsq.shift, grads.d_shift)
                                .max_relative_error);
    check_mat(&ToyModel::unit_emb, grads.d_unit_emb);
    check_mat(&ToyModel::text_emb, grads.d_text_emb);
    check_mat(&ToyModel::z_proj, grads.d_z_proj);
    check_mat(&ToyModel::w_h, grads.d_w_h);
    check_mat(&ToyModel::w_o, grads.d_w_o);
    worst = std::max(worst, grad_check(
                                [&](const std::vector<double>& v) {
                                    ToyModel m = model;
                                    m.b_h = v;
                                    return eval(m);
                                },
                                model.b_h, grads.d_b_h)
                                .max_relative_error);
    worst = std::max(worst, grad_check(
                                [&](const std::vector<double>& v) {
                                    ToyModel m = model;
                                    m.b_o = v;
                                    return eval(m);
                                },
                                model.b_o, grads.d_b_o)
                                .max_relative_error);
    return worst;
}

}  // namespace

std::vector<GradSuiteEntry> gradient_suite(std::uint64_t seed) {
    std::vector<GradSuiteEntry> entries;
    entries.push_back({"mlda/attention+fusion+mlp+embeddings", mlda_block_error(seed)});
    entries.push_back({"fsq/straight_through", fsq_block_error(seed + 1)});
    entries.push_back({"loss/cross_entropy", ce_block_error(seed + 2)});
    entries.push_back({"loss/reconstruction", recon_block_error(seed + 3)});
    entries.push_back({"pipeline/total_loss", pipeline_block_error(seed + 4)});
    return entries;
}

}  // namespace tasla::train
