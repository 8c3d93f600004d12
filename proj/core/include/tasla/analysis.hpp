#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tasla/mat.hpp"

namespace tasla::analysis {

// Per-frame layer mixture weights (column-stochastic) with metadata.
struct WeightTrace {
    Mat w;  // n_layers x T
    std::vector<int> layer_ids;
    std::vector<double> frame_times;

    int n_layers() const { return w.rows; }
    int frames() const { return w.cols; }
};

// H_t = -sum_i w log w (natural log, 0 log 0 := 0). Throws if a column is not
// on the probability simplex within tolerance.
std::vector<double> frame_entropy(const WeightTrace& trace, double tolerance = 1e-6);

struct WeightStats {
    std::vector<double> layer_means;
    double mean_entropy = 0.0;
    double enl = 1.0;  // exp(mean_entropy)
    std::vector<std::optional<double>> flux_corr;
    std::vector<std::string> flux_corr_reason;  // nonempty where corr is degenerate
};

// Layer means, mean frame entropy, effective number of layers and per-layer
// Pearson correlation of weights with spectral flux (pooled over the frames
// of this trace). Constant weight rows get a degenerate flag, not a value.
WeightStats weight_stats(const WeightTrace& trace, std::span<const double> flux);

}  // namespace tasla::analysis
