#include "tasla/prosody.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tasla::prosody {

namespace {

double frame_dist(const Mat& a, int i, const Mat& b, int j) {
    double acc = 0.0;
    for (int c = 0; c < a.cols; ++c) {
        const double d = a(i, c) - b(j, c);
        acc += d * d;
    }
    return std::sqrt(acc);
}

void note(std::vector<Degenerate>* flags, const std::string& metric,
          const std::string& reason) {
    if (flags != nullptr) flags->push_back({metric, reason});
}

}  // namespace

DtwPath dtw_align(const Mat& mfcc_ref, const Mat& mfcc_hyp) {
    if (mfcc_ref.rows < 1 || mfcc_hyp.rows < 1)
        throw std::invalid_argument("dtw_align: empty input");
    if (mfcc_ref.cols != mfcc_hyp.cols)
        throw std::invalid_argument("dtw_align: coefficient mismatch " + mfcc_ref.shape_str() +
                                    " vs " + mfcc_hyp.shape_str());
    const int nr = mfcc_ref.rows;
    const int nh = mfcc_hyp.rows;
    const double inf = std::numeric_limits<double>::infinity();
    Mat acc(nr, nh);
    for (int i = 0; i < nr; ++i)
        for (int j = 0; j < nh; ++j) {
            const double cost = frame_dist(mfcc_ref, i, mfcc_hyp, j);
            double best;
            if (i == 0 && j == 0) best = 0.0;
            else {
                best = inf;
                if (i > 0 && j > 0) best = std::min(best, acc(i - 1, j - 1));
                if (i > 0) best = std::min(best, acc(i - 1, j));
                if (j > 0) best = std::min(best, acc(i, j - 1));
            }
            acc(i, j) = cost + best;
        }

    DtwPath path;
    int i = nr - 1, j = nh - 1;
    path.steps.emplace_back(i, j);
    while (i > 0 || j > 0) {
        const double diag = (i > 0 && j > 0) ? acc(i - 1, j - 1) : inf;
        const double up = i > 0 ? acc(i - 1, j) : inf;
        const double left = j > 0 ? acc(i, j - 1) : inf;
        // Ties prefer (1,1), then (1,0), then (0,1).
        if (diag <= up && diag <= left) {
            --i;
            --j;
        } else if (up <= left) {
            --i;
        } else {
            --j;
        }
        path.steps.emplace_back(i, j);
    }
    std::reverse(path.steps.begin(), path.steps.end());
    return path;
}

double path_cost(const Mat& mfcc_ref, const Mat& mfcc_hyp, const DtwPath& path) {
    double acc = 0.0;
    for (const auto& [i, j] : path.steps) acc += frame_dist(mfcc_ref, i, mfcc_hyp, j);
    return acc;
}

dsp::ProsodyTrack warp_to_ref(const DtwPath& path, const dsp::ProsodyTrack& hyp,
                              const std::vector<double>& ref_frame_times) {
    if (path.steps.empty()) throw std::invalid_argument("warp_to_ref: empty path");
    const int t_ref = path.steps.back().first + 1;
    for (const auto& [i, j] : path.steps)
        if (i < 0 || j < 0 || j >= static_cast<int>(hyp.size()))
            throw std::invalid_argument("warp_to_ref: path index outside hypothesis track");

    dsp::ProsodyTrack out;
    out.f0_hz.assign(static_cast<std::size_t>(t_ref), 0.0);
    out.voicing.assign(static_cast<std::size_t>(t_ref), 0);
    out.rms.assign(static_cast<std::size_t>(t_ref), 0.0);
    out.frame_times = ref_frame_times.empty()
                          ? std::vector<double>(static_cast<std::size_t>(t_ref), 0.0)
                          : ref_frame_times;

    std::vector<std::vector<int>> matched(static_cast<std::size_t>(t_ref));
    for (const auto& [i, j] : path.steps) matched[static_cast<std::size_t>(i)].push_back(j);

    std::vector<double> voiced_f0;
    for (int i = 0; i < t_ref; ++i) {
        const auto& js = matched[static_cast<std::size_t>(i)];
        if (js.empty())
            throw std::invalid_argument("warp_to_ref: malformed path (ref frame " +
                                        std::to_string(i) + " unmatched)");
        voiced_f0.clear();
        double rms_sum = 0.0;
        int votes = 0;
        for (int j : js) {
            rms_sum += hyp.rms[static_cast<std::size_t>(j)];
            if (hyp.voicing[static_cast<std::size_t>(j)]) {
                ++votes;
                voiced_f0.push_back(hyp.f0_hz[static_cast<std::size_t>(j)]);
            }
        }
        out.rms[static_cast<std::size_t>(i)] = rms_sum / static_cast<double>(js.size());
        // Majority vote; exact ties count as voiced.
        const bool voiced = !voiced_f0.empty() && 2 * votes >= static_cast<int>(js.size());
        if (voiced) {
            std::sort(voiced_f0.begin(), voiced_f0.end());
            const std::size_t m = voiced_f0.size();
            out.f0_hz[static_cast<std::size_t>(i)] =
                m % 2 == 1 ? voiced_f0[m / 2]
                           : 0.5 * (voiced_f0[m / 2 - 1] + voiced_f0[m / 2]);
            out.voicing[static_cast<std::size_t>(i)] = 1;
        }
    }
    return out;
}

AlignedPair AlignedPair::make(dsp::ProsodyTrack ref, dsp::ProsodyTrack hyp_warped) {
    if (ref.size() != hyp_warped.size())
        throw std::invalid_argument("AlignedPair: track length mismatch " +
                                    std::to_string(ref.size()) + " vs " +
                                    std::to_string(hyp_warped.size()));
    AlignedPair a;
    a.joint_voiced.resize(ref.size());
    for (std::size_t t = 0; t < ref.size(); ++t) {
        a.joint_voiced[t] = ref.voicing[t] && hyp_warped.voicing[t];
        a.n_v += a.joint_voiced[t];
    }
    a.ref = std::move(ref);
    a.hyp_warped = std::move(hyp_warped);
    return a;
}

std::optional<double> f0_pcc(const AlignedPair& a, std::vector<Degenerate>* flags) {
    if (a.n_v < 2) {
        note(flags, "f0_pcc", "fewer than 2 jointly voiced frames");
        return std::nullopt;
    }
    std::vector<double> x, y;
    x.reserve(static_cast<std::size_t>(a.n_v));
    y.reserve(static_cast<std::size_t>(a.n_v));
    for (std::size_t t = 0; t < a.ref.size(); ++t)
        if (a.joint_voiced[t]) {
            x.push_back(a.ref.f0_hz[t]);
            y.push_back(a.hyp_warped.f0_hz[t]);
        }
    try {
        return pearson(x, y);
    } catch (const ZeroVarianceError&) {
        note(flags, "f0_pcc", "zero F0 variance on jointly voiced frames");
        return std::nullopt;
    }
}

double vde(const AlignedPair& a) {
    if (a.ref.size() == 0) throw std::invalid_argument("vde: empty aligned pair");
    int mismatches = 0;
    for (std::size_t t = 0; t < a.ref.size(); ++t)
        mismatches += a.ref.voicing[t] != a.hyp_warped.voicing[t];
    return static_cast<double>(mismatches) / static_cast<double>(a.ref.size());
}

std::optional<double> gpe(const AlignedPair& a, double threshold,
                          std::vector<Degenerate>* flags) {
    if (a.n_v == 0) {
        note(flags, "gpe", "no jointly voiced frames");
        return std::nullopt;
    }
    constexpr double kEps = 1e-8;
    int gross = 0;
    for (std::size_t t = 0; t < a.ref.size(); ++t) {
        if (!a.joint_voiced[t]) continue;
        const double r = std::abs(a.hyp_warped.f0_hz[t] - a.ref.f0_hz[t]) /
                         std::max(a.ref.f0_hz[t], kEps);
        gross += r > threshold;
    }
    return static_cast<double>(gross) / static_cast<double>(a.n_v);
}

EnergyMetrics energy_metrics(const AlignedPair& a, double epsilon,
                             std::vector<Degenerate>* flags) {
    const std::size_t n = a.ref.size();
    if (n == 0) throw std::invalid_argument("energy_metrics: empty aligned pair");
    std::vector<double> db_ref(n), db_hyp(n);
    double sq = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        db_ref[t] = 20.0 * std::log10(std::max(a.ref.rms[t], epsilon));
        db_hyp[t] = 20.0 * std::log10(std::max(a.hyp_warped.rms[t], epsilon));
        const double d = db_ref[t] - db_hyp[t];
        sq += d * d;
    }
    EnergyMetrics e;
    e.rmse_db = std::sqrt(sq / static_cast<double>(n));
    if (n < 2) {
        note(flags, "energy_pcc", "fewer than 2 frames");
        return e;
    }
    try {
        e.pcc = pearson(db_ref, db_hyp);
    } catch (const ZeroVarianceError&) {
        note(flags, "energy_pcc", "constant dB contour");
    }
    return e;
}

LegendreCoeffs phrase_coeffs(const dsp::ProsodyTrack& track) {
    std::vector<int> voiced_idx;
    for (std::size_t t = 0; t < track.size(); ++t)
        if (track.voicing[t]) voiced_idx.push_back(static_cast<int>(t));
    if (voiced_idx.size() < 4)
        throw PhraseFitError("phrase_coeffs: need at least 4 voiced frames, got " +
                             std::to_string(voiced_idx.size()));
    const int first = voiced_idx.front();
    const int last = voiced_idx.back();
    const int span = last - first + 1;
    if (span < 4)
        throw PhraseFitError("phrase_coeffs: voiced span covers fewer than 4 frames");

    // Semitones on voiced frames; interior unvoiced gaps filled linearly.
    std::vector<double> x(static_cast<std::size_t>(span));
    std::vector<double> y(static_cast<std::size_t>(span));
    for (int i = 0; i < span; ++i)
        x[static_cast<std::size_t>(i)] = -1.0 + 2.0 * static_cast<double>(i) / (span - 1);
    for (int i = 0; i < span; ++i) {
        const int t = first + i;
        if (track.voicing[static_cast<std::size_t>(t)])
            y[static_cast<std::size_t>(i)] =
                dsp::hz_to_semitone(track.f0_hz[static_cast<std::size_t>(t)]);
    }
    // Linear interpolation between surrounding voiced frames.
    int prev_voiced = first;
    for (int i = 1; i < span - 1; ++i) {
        const int t = first + i;
        if (track.voicing[static_cast<std::size_t>(t)]) {
            prev_voiced = t;
            continue;
        }
        int nxt = t + 1;
        while (!track.voicing[static_cast<std::size_t>(nxt)]) ++nxt;
        const double y0 = dsp::hz_to_semitone(track.f0_hz[static_cast<std::size_t>(prev_voiced)]);
        const double y1 = dsp::hz_to_semitone(track.f0_hz[static_cast<std::size_t>(nxt)]);
        const double frac = static_cast<double>(t - prev_voiced) /
                            static_cast<double>(nxt - prev_voiced);
        y[static_cast<std::size_t>(i)] = y0 + frac * (y1 - y0);
    }

    const std::vector<double> fit = legendre_fit(x, y, 3);
    LegendreCoeffs c;
    for (std::size_t j = 0; j < 4; ++j) c.c[j] = fit[j];
    return c;
}

PhraseDistance phrase_distance(const LegendreCoeffs& c_ref, const LegendreCoeffs& c_hyp,
                               std::vector<Degenerate>* flags) {
    PhraseDistance d;
    double sq = 0.0, nr = 0.0, nh = 0.0, dot = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
        const double diff = c_ref.c[j] - c_hyp.c[j];
        sq += diff * diff;
        nr += c_ref.c[j] * c_ref.c[j];
        nh += c_hyp.c[j] * c_hyp.c[j];
        dot += c_ref.c[j] * c_hyp.c[j];
    }
    d.l2 = std::sqrt(sq);
    if (nr == 0.0 || nh == 0.0) {
        note(flags, "coeff_cos", "zero-norm coefficient vector");
        return d;
    }
    d.cosine = std::clamp(dot / (std::sqrt(nr) * std::sqrt(nh)), -1.0, 1.0);
    return d;
}

MetricReport evaluate_pair(const dsp::Waveform& ref, const dsp::Waveform& hyp,
                           const EvalConfig& cfg) {
    const dsp::Waveform ref16 = dsp::resample_to_16k(ref);
    const dsp::Waveform hyp16 = dsp::resample_to_16k(hyp);

    const dsp::MelSpec mel_ref = dsp::stft_mel(ref16, cfg.frame);
    const dsp::MelSpec mel_hyp = dsp::stft_mel(hyp16, cfg.frame);
    const Mat mfcc_ref = dsp::mfcc(mel_ref, cfg.mfcc_coeffs);
    const Mat mfcc_hyp = dsp::mfcc(mel_hyp, cfg.mfcc_coeffs);

    dsp::ProsodyTrack track_ref = dsp::track_pitch(ref16, cfg.frame, cfg.pitch);
    dsp::ProsodyTrack track_hyp = dsp::track_pitch(hyp16, cfg.frame, cfg.pitch);

    const DtwPath path = dtw_align(mfcc_ref, mfcc_hyp);
    dsp::ProsodyTrack warped = warp_to_ref(path, track_hyp, track_ref.frame_times);
    AlignedPair pair = AlignedPair::make(track_ref, std::move(warped));

    MetricReport report;
    report.frames = static_cast<int>(pair.ref.size());
    report.n_v = pair.n_v;
    report.voiced_fraction_ref = pair.ref.voiced_fraction();
    report.voiced_fraction_hyp = track_hyp.voiced_fraction();
    report.dtw_cost = path_cost(mfcc_ref, mfcc_hyp, path);

    report.f0_pcc = f0_pcc(pair, &report.degenerate);
    report.vde = vde(pair);
    report.gpe = gpe(pair, cfg.gpe_threshold, &report.degenerate);
    const EnergyMetrics e = energy_metrics(pair, cfg.db_epsilon, &report.degenerate);
    report.energy_rmse_db = e.rmse_db;
    report.energy_pcc = e.pcc;

    try {
        const LegendreCoeffs c_ref = phrase_coeffs(pair.ref);
        const LegendreCoeffs c_hyp = phrase_coeffs(pair.hyp_warped);
        const PhraseDistance d = phrase_distance(c_ref, c_hyp, &report.degenerate);
        report.coeff_l2 = d.l2;
        report.coeff_cos = d.cosine;
    } catch (const PhraseFitError& err) {
        report.degenerate.push_back({"phrase", err.what()});
    }
    return report;
}

}  // namespace tasla::prosody
