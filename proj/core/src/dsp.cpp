#include "tasla/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

namespace tasla::dsp {

namespace {

constexpr double kPi = std::numbers::pi;

// Iterative radix-2 complex FFT, in place. n must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * kPi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                std::complex<double> u = a[i + k];
                std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

int FrameParams::window_samples(int sr) const {
    return static_cast<int>(std::lround(window_ms * sr / 1000.0));
}

int FrameParams::hop_samples(int sr) const {
    return static_cast<int>(std::lround(hop_ms * sr / 1000.0));
}

void FrameParams::validate(int sr) const {
    const int win = window_samples(sr);
    const int hop = hop_samples(sr);
    if (win <= 0 || hop <= 0)
        throw std::invalid_argument("FrameParams: window and hop must be positive");
    if (win < hop) throw std::invalid_argument("FrameParams: window must be >= hop");
    if (fft_size < win)
        throw std::invalid_argument("FrameParams: fft_size " + std::to_string(fft_size) +
                                    " < window of " + std::to_string(win) + " samples");
    if (!is_power_of_two(fft_size))
        throw std::invalid_argument("FrameParams: fft_size must be a power of two");
    if (n_mels < 1) throw std::invalid_argument("FrameParams: n_mels must be >= 1");
}

double ProsodyTrack::voiced_fraction() const {
    if (voicing.empty()) return 0.0;
    double s = 0.0;
    for (int v : voicing) s += v;
    return s / static_cast<double>(voicing.size());
}

int frame_count(std::size_t n_samples, int window, int hop) {
    if (n_samples < static_cast<std::size_t>(window)) return 0;
    return 1 + static_cast<int>((n_samples - static_cast<std::size_t>(window)) /
                                static_cast<std::size_t>(hop));
}

Waveform resample_to_16k(const Waveform& w) {
    if (w.samples.empty()) throw std::invalid_argument("resample: empty waveform");
    if (w.sample_rate <= 0) throw std::invalid_argument("resample: bad sample rate");
    if (w.sample_rate == kTargetSampleRate) return w;

    const double ratio = static_cast<double>(w.sample_rate) / kTargetSampleRate;
    const double cutoff = 0.5 * std::min(1.0, 1.0 / ratio);  // cycles per input sample
    constexpr int kHalfTaps = 32;
    const std::size_t out_len = static_cast<std::size_t>(
        std::llround(static_cast<double>(w.samples.size()) / ratio));

    Waveform out;
    out.sample_rate = kTargetSampleRate;
    out.samples.resize(out_len);
    const auto& in = w.samples;
    for (std::size_t n = 0; n < out_len; ++n) {
        const double center = static_cast<double>(n) * ratio;
        const long m0 = std::max<long>(0, static_cast<long>(std::ceil(center)) - kHalfTaps);
        const long m1 = std::min<long>(static_cast<long>(in.size()) - 1,
                                       static_cast<long>(std::floor(center)) + kHalfTaps);
        double acc = 0.0;
        for (long m = m0; m <= m1; ++m) {
            const double t = static_cast<double>(m) - center;
            double kern;
            if (t == 0.0) {
                kern = 2.0 * cutoff;
            } else {
                kern = std::sin(2.0 * kPi * cutoff * t) / (kPi * t);
            }
            const double win = 0.5 + 0.5 * std::cos(kPi * t / kHalfTaps);  // Hann
            acc += in[static_cast<std::size_t>(m)] * kern * win;
        }
        out.samples[n] = std::clamp(acc, -1.0, 1.0);
    }
    return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Mat mel_filterbank(int n_mels, int fft_size, int sample_rate) {
    const int n_bins = fft_size / 2 + 1;
    const double f_hi = sample_rate / 2.0;
    const double mel_lo = hz_to_mel(0.0);
    const double mel_hi = hz_to_mel(f_hi);
    std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
    for (std::size_t i = 0; i < edges.size(); ++i)
        edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                          static_cast<double>(n_mels + 1));
    Mat fb(n_mels, n_bins);
    for (int m = 0; m < n_mels; ++m) {
        const double lo = edges[static_cast<std::size_t>(m)];
        const double mid = edges[static_cast<std::size_t>(m) + 1];
        const double hi = edges[static_cast<std::size_t>(m) + 2];
        for (int k = 0; k < n_bins; ++k) {
            const double f = static_cast<double>(k) * sample_rate / fft_size;
            if (f <= lo || f >= hi) continue;
            fb(m, k) = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
        }
    }
    return fb;
}

MelSpec stft_mel(const Waveform& w, const FrameParams& p) {
    p.validate(w.sample_rate);
    const int win = p.window_samples(w.sample_rate);
    const int hop = p.hop_samples(w.sample_rate);
    const int frames = frame_count(w.samples.size(), win, hop);
    if (frames < 1)
        throw std::invalid_argument("stft_mel: signal of " +
                                    std::to_string(w.samples.size()) +
                                    " samples is shorter than one window (" +
                                    std::to_string(win) + ")");
    std::vector<double> window(static_cast<std::size_t>(win));
    for (int n = 0; n < win; ++n)
        window[static_cast<std::size_t>(n)] = 0.5 - 0.5 * std::cos(2.0 * kPi * n / win);

    const Mat fb = mel_filterbank(p.n_mels, p.fft_size, w.sample_rate);
    const int n_bins = p.fft_size / 2 + 1;

    MelSpec out;
    out.frames = Mat(frames, p.n_mels);
    out.frame_times.resize(static_cast<std::size_t>(frames));
    std::vector<std::complex<double>> buf(static_cast<std::size_t>(p.fft_size));
    std::vector<double> mag(static_cast<std::size_t>(n_bins));
    for (int f = 0; f < frames; ++f) {
        const std::size_t start = static_cast<std::size_t>(f) * hop;
        out.frame_times[static_cast<std::size_t>(f)] =
            (static_cast<double>(start) + win / 2.0) / w.sample_rate;
        for (int n = 0; n < p.fft_size; ++n) {
            const double x = n < win ? w.samples[start + static_cast<std::size_t>(n)] *
                                           window[static_cast<std::size_t>(n)]
                                     : 0.0;
            buf[static_cast<std::size_t>(n)] = {x, 0.0};
        }
        fft_inplace(buf);
        for (int k = 0; k < n_bins; ++k) mag[static_cast<std::size_t>(k)] = std::abs(buf[static_cast<std::size_t>(k)]);
        for (int m = 0; m < p.n_mels; ++m) {
            double acc = 0.0;
            for (int k = 0; k < n_bins; ++k) acc += fb(m, k) * mag[static_cast<std::size_t>(k)];
            out.frames(f, m) = acc;
        }
    }
    return out;
}

Mat mfcc(const MelSpec& m, int n_coeffs) {
    const int n_mels = m.frames.cols;
    if (n_coeffs < 1 || n_coeffs > n_mels)
        throw std::invalid_argument("mfcc: n_coeffs must be in [1, n_mels]");
    Mat out(m.frames.rows, n_coeffs);
    const double a0 = std::sqrt(1.0 / n_mels);
    const double aj = std::sqrt(2.0 / n_mels);
    std::vector<double> logmel(static_cast<std::size_t>(n_mels));
    for (int t = 0; t < m.frames.rows; ++t) {
        for (int k = 0; k < n_mels; ++k)
            logmel[static_cast<std::size_t>(k)] = std::log(m.frames(t, k) + 1e-10);
        for (int j = 0; j < n_coeffs; ++j) {
            double acc = 0.0;
            for (int k = 0; k < n_mels; ++k)
                acc += logmel[static_cast<std::size_t>(k)] *
                       std::cos(kPi * j * (2.0 * k + 1.0) / (2.0 * n_mels));
            out(t, j) = (j == 0 ? a0 : aj) * acc;
        }
    }
    return out;
}

std::vector<double> spectral_flux(const MelSpec& m) {
    if (m.frames.rows < 2)
        throw std::invalid_argument("spectral_flux: need at least 2 frames, got " +
                                    std::to_string(m.frames.rows));
    std::vector<double> flux(static_cast<std::size_t>(m.frames.rows), 0.0);
    for (int t = 1; t < m.frames.rows; ++t) {
        double acc = 0.0;
        for (int k = 0; k < m.frames.cols; ++k) {
            const double d = m.frames(t, k) - m.frames(t - 1, k);
            acc += d * d;
        }
        flux[static_cast<std::size_t>(t)] = std::sqrt(acc);
    }
    return flux;
}

FrameEnergy frame_energy(const Waveform& w, const FrameParams& p, double epsilon) {
    if (w.samples.empty()) throw std::invalid_argument("frame_energy: empty waveform");
    const int win = p.window_samples(w.sample_rate);
    const int hop = p.hop_samples(w.sample_rate);
    const int frames = frame_count(w.samples.size(), win, hop);
    FrameEnergy e;
    e.rms.resize(static_cast<std::size_t>(frames));
    e.db.resize(static_cast<std::size_t>(frames));
    e.frame_times.resize(static_cast<std::size_t>(frames));
    for (int f = 0; f < frames; ++f) {
        const std::size_t start = static_cast<std::size_t>(f) * hop;
        double acc = 0.0;
        for (int n = 0; n < win; ++n) {
            const double x = w.samples[start + static_cast<std::size_t>(n)];
            acc += x * x;
        }
        const double rms = std::sqrt(acc / win);
        e.rms[static_cast<std::size_t>(f)] = rms;
        e.db[static_cast<std::size_t>(f)] = 20.0 * std::log10(std::max(rms, epsilon));
        e.frame_times[static_cast<std::size_t>(f)] =
            (static_cast<double>(start) + win / 2.0) / w.sample_rate;
    }
    return e;
}

ProsodyTrack track_pitch(const Waveform& w, const FrameParams& p, const PitchParams& pp) {
    if (w.samples.empty()) throw std::invalid_argument("track_pitch: empty waveform");
    const int sr = w.sample_rate;
    const int win = p.window_samples(sr);
    const int hop = p.hop_samples(sr);
    const int frames = frame_count(w.samples.size(), win, hop);
    const int tau_min = std::max(2, static_cast<int>(std::ceil(sr / pp.f_max_hz)));
    const int tau_max = static_cast<int>(std::floor(sr / pp.f_min_hz));

    ProsodyTrack track;
    track.f0_hz.assign(static_cast<std::size_t>(frames), 0.0);
    track.voicing.assign(static_cast<std::size_t>(frames), 0);
    track.rms.resize(static_cast<std::size_t>(frames));
    track.frame_times.resize(static_cast<std::size_t>(frames));

    // The difference function reads win + tau_max samples from the frame
    // start; missing tail samples are treated as zeros, which biases those
    // frames toward unvoiced.
    std::vector<double> seg(static_cast<std::size_t>(win + tau_max), 0.0);
    std::vector<double> diff(static_cast<std::size_t>(tau_max) + 1, 0.0);
    std::vector<double> cmnd(static_cast<std::size_t>(tau_max) + 1, 1.0);

    for (int f = 0; f < frames; ++f) {
        const std::size_t start = static_cast<std::size_t>(f) * hop;
        track.frame_times[static_cast<std::size_t>(f)] =
            (static_cast<double>(start) + win / 2.0) / sr;

        std::fill(seg.begin(), seg.end(), 0.0);
        const std::size_t avail = std::min(seg.size(), w.samples.size() - start);
        for (std::size_t n = 0; n < avail; ++n) seg[n] = w.samples[start + n];

        double energy = 0.0;
        for (int n = 0; n < win; ++n) energy += seg[static_cast<std::size_t>(n)] * seg[static_cast<std::size_t>(n)];
        track.rms[static_cast<std::size_t>(f)] = std::sqrt(energy / win);

        for (int tau = 1; tau <= tau_max; ++tau) {
            double acc = 0.0;
            for (int n = 0; n < win; ++n) {
                const double d = seg[static_cast<std::size_t>(n)] -
                                 seg[static_cast<std::size_t>(n + tau)];
                acc += d * d;
            }
            diff[static_cast<std::size_t>(tau)] = acc;
        }

        // Cumulative mean normalized difference; a zero running sum (silence)
        // keeps the function at 1 so no voicing dip can fire.
        double running = 0.0;
        cmnd[0] = 1.0;
        for (int tau = 1; tau <= tau_max; ++tau) {
            running += diff[static_cast<std::size_t>(tau)];
            cmnd[static_cast<std::size_t>(tau)] =
                running > 0.0 ? diff[static_cast<std::size_t>(tau)] * tau / running : 1.0;
        }

        int tau_hit = -1;
        for (int tau = tau_min; tau <= tau_max; ++tau) {
            if (cmnd[static_cast<std::size_t>(tau)] < pp.yin_threshold) {
                while (tau + 1 <= tau_max &&
                       cmnd[static_cast<std::size_t>(tau) + 1] < cmnd[static_cast<std::size_t>(tau)])
                    ++tau;
                tau_hit = tau;
                break;
            }
        }
        if (tau_hit < 0) continue;

        double tau_refined = static_cast<double>(tau_hit);
        if (tau_hit > tau_min && tau_hit < tau_max) {
            const double dm = cmnd[static_cast<std::size_t>(tau_hit) - 1];
            const double d0 = cmnd[static_cast<std::size_t>(tau_hit)];
            const double dp = cmnd[static_cast<std::size_t>(tau_hit) + 1];
            const double denom = dm - 2.0 * d0 + dp;
            if (std::abs(denom) > 1e-12) {
                double shift = 0.5 * (dm - dp) / denom;
                shift = std::clamp(shift, -0.5, 0.5);
                tau_refined += shift;
            }
        }
        double f0 = sr / tau_refined;
        f0 = std::clamp(f0, pp.f_min_hz, pp.f_max_hz);
        track.f0_hz[static_cast<std::size_t>(f)] = f0;
        track.voicing[static_cast<std::size_t>(f)] = 1;
    }
    return track;
}

double hz_to_semitone(double f_hz) {
    if (!(f_hz > 0.0))
        throw std::invalid_argument("hz_to_semitone: frequency must be positive");
    return 12.0 * std::log2(f_hz / 55.0);
}

}  // namespace tasla::dsp
