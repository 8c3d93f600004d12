#pragma once

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tasla/dsp.hpp"
#include "tasla/mat.hpp"

namespace tasla::prosody {

// Monotone alignment path; consecutive steps are (1,0), (0,1) or (1,1).
struct DtwPath {
    std::vector<std::pair<int, int>> steps;  // (ref_index, hyp_index)
};

// Minimal-cost path under Euclidean frame distance. Backtracking ties prefer
// (1,1), then (1,0), then (0,1).
DtwPath dtw_align(const Mat& mfcc_ref, const Mat& mfcc_hyp);

// Sum of frame distances along a path (used to compare against oracles).
double path_cost(const Mat& mfcc_ref, const Mat& mfcc_hyp, const DtwPath& path);

// Collapse the hypothesis track onto the reference timeline: per ref frame,
// F0 is the median of the matched voiced F0s, voicing is the majority vote
// (ties voiced), RMS is the mean of the matched values.
dsp::ProsodyTrack warp_to_ref(const DtwPath& path, const dsp::ProsodyTrack& hyp,
                              const std::vector<double>& ref_frame_times = {});

struct AlignedPair {
    dsp::ProsodyTrack ref;
    dsp::ProsodyTrack hyp_warped;
    std::vector<int> joint_voiced;
    int n_v = 0;

    static AlignedPair make(dsp::ProsodyTrack ref, dsp::ProsodyTrack hyp_warped);
};

struct Degenerate {
    std::string metric;
    std::string reason;
};

std::optional<double> f0_pcc(const AlignedPair& a, std::vector<Degenerate>* flags = nullptr);

double vde(const AlignedPair& a);

std::optional<double> gpe(const AlignedPair& a, double threshold = 0.2,
                          std::vector<Degenerate>* flags = nullptr);

struct EnergyMetrics {
    double rmse_db = 0.0;
    std::optional<double> pcc;
};

EnergyMetrics energy_metrics(const AlignedPair& a, double epsilon = dsp::kDbEpsilon,
                             std::vector<Degenerate>* flags = nullptr);

struct LegendreCoeffs {
    std::array<double, 4> c{};  // degree 3
};

// Thrown when a phrase fit has fewer than 4 voiced frames (or too few
// distinct time points).
struct PhraseFitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Semitone conversion, linear interpolation across interior unvoiced gaps,
// and a degree-3 Legendre fit on the voiced span mapped to [-1, 1].
LegendreCoeffs phrase_coeffs(const dsp::ProsodyTrack& track);

struct PhraseDistance {
    double l2 = 0.0;
    std::optional<double> cosine;
};

PhraseDistance phrase_distance(const LegendreCoeffs& c_ref, const LegendreCoeffs& c_hyp,
                               std::vector<Degenerate>* flags = nullptr);

struct MetricReport {
    std::optional<double> f0_pcc;
    double vde = 0.0;
    std::optional<double> gpe;
    double energy_rmse_db = 0.0;
    std::optional<double> energy_pcc;
    std::optional<double> coeff_l2;
    std::optional<double> coeff_cos;
    // Diagnostics
    int frames = 0;
    int n_v = 0;
    double voiced_fraction_ref = 0.0;
    double voiced_fraction_hyp = 0.0;
    double dtw_cost = 0.0;
    std::vector<Degenerate> degenerate;
};

struct EvalConfig {
    dsp::FrameParams frame;
    dsp::PitchParams pitch;
    double gpe_threshold = 0.2;
    double db_epsilon = dsp::kDbEpsilon;
    int mfcc_coeffs = 13;
};

// Full reference/hypothesis comparison: features, MFCC DTW, warping, joint
// voicing mask and all seven metrics. Degenerate sub-metrics are flagged
// with reasons, never silently zeroed.
MetricReport evaluate_pair(const dsp::Waveform& ref, const dsp::Waveform& hyp,
                           const EvalConfig& cfg = {});

}  // namespace tasla::prosody
