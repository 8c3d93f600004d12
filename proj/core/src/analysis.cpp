#include "tasla/analysis.hpp"

#include <cmath>
#include <stdexcept>

namespace tasla::analysis {

std::vector<double> frame_entropy(const WeightTrace& trace, double tolerance) {
    const int n = trace.n_layers();
    const int t_frames = trace.frames();
    if (n < 1 || t_frames < 1) throw std::invalid_argument("frame_entropy: empty trace");
    std::vector<double> entropy(static_cast<std::size_t>(t_frames));
    for (int t = 0; t < t_frames; ++t) {
        double sum = 0.0, h = 0.0;
        for (int l = 0; l < n; ++l) {
            const double w = trace.w(l, t);
            if (w < -tolerance)
                throw std::invalid_argument("frame_entropy: negative weight at frame " +
                                            std::to_string(t));
            sum += w;
            if (w > 0.0) h -= w * std::log(w);
        }
        if (std::abs(sum - 1.0) > tolerance)
            throw std::invalid_argument("frame_entropy: column " + std::to_string(t) +
                                        " sums to " + std::to_string(sum) + ", not 1");
        entropy[static_cast<std::size_t>(t)] = h;
    }
    return entropy;
}

WeightStats weight_stats(const WeightTrace& trace, std::span<const double> flux) {
    const int n = trace.n_layers();
    const int t_frames = trace.frames();
    if (static_cast<int>(flux.size()) != t_frames)
        throw std::invalid_argument("weight_stats: flux covers " + std::to_string(flux.size()) +
                                    " frames, trace has " + std::to_string(t_frames));
    const std::vector<double> entropy = frame_entropy(trace);

    WeightStats stats;
    stats.layer_means.assign(static_cast<std::size_t>(n), 0.0);
    for (int l = 0; l < n; ++l) {
        double acc = 0.0;
        for (int t = 0; t < t_frames; ++t) acc += trace.w(l, t);
        stats.layer_means[static_cast<std::size_t>(l)] = acc / t_frames;
    }
    double h = 0.0;
    for (double e : entropy) h += e;
    stats.mean_entropy = h / t_frames;
    stats.enl = std::exp(stats.mean_entropy);

    stats.flux_corr.assign(static_cast<std::size_t>(n), std::nullopt);
    stats.flux_corr_reason.assign(static_cast<std::size_t>(n), "");
    if (t_frames < 2) {
        for (int l = 0; l < n; ++l)
            stats.flux_corr_reason[static_cast<std::size_t>(l)] = "fewer than 2 frames";
        return stats;
    }
    std::vector<double> row(static_cast<std::size_t>(t_frames));
    for (int l = 0; l < n; ++l) {
        for (int t = 0; t < t_frames; ++t) row[static_cast<std::size_t>(t)] = trace.w(l, t);
        try {
            stats.flux_corr[static_cast<std::size_t>(l)] = pearson(row, flux);
        } catch (const ZeroVarianceError&) {
            stats.flux_corr_reason[static_cast<std::size_t>(l)] =
                "constant weight row or constant flux";
        }
    }
    return stats;
}

}  // namespace tasla::analysis
