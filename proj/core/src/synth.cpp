#include "tasla/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace tasla::synth {

namespace {
constexpr double kPi = std::numbers::pi;
}

mlda::LayerStack layer_stack(const std::vector<int>& layer_ids, int frames, int width,
                             std::uint64_t seed) {
    mlda::LayerStack stack;
    stack.layer_ids = layer_ids;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int n = static_cast<int>(layer_ids.size());
    for (int l = 0; l < n; ++l) {
        // Deeper layers get a heavier one-pole smoothing (lower cutoff).
        const double alpha = n > 1 ? 0.3 + 0.6 * static_cast<double>(l) / (n - 1) : 0.5;
        Mat layer(frames, width);
        std::vector<double> walk(static_cast<std::size_t>(width), 0.0);
        std::vector<double> smooth(static_cast<std::size_t>(width), 0.0);
        for (int t = 0; t < frames; ++t) {
            for (int c = 0; c < width; ++c) {
                walk[static_cast<std::size_t>(c)] =
                    0.9 * walk[static_cast<std::size_t>(c)] + 0.45 * gauss(rng);
                smooth[static_cast<std::size_t>(c)] =
                    alpha * smooth[static_cast<std::size_t>(c)] +
                    (1.0 - alpha) * walk[static_cast<std::size_t>(c)];
                layer(t, c) = smooth[static_cast<std::size_t>(c)];
            }
        }
        stack.layers.push_back(std::move(layer));
    }
    return stack;
}

dsp::Waveform sine(double freq_hz, double seconds, double amplitude, int sample_rate) {
    dsp::Waveform w;
    w.sample_rate = sample_rate;
    const std::size_t n = static_cast<std::size_t>(seconds * sample_rate);
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        w.samples[i] = amplitude * std::sin(2.0 * kPi * freq_hz * static_cast<double>(i) /
                                            sample_rate);
    return w;
}

dsp::Waveform white_noise(double seconds, double amplitude, std::uint64_t seed,
                          int sample_rate) {
    dsp::Waveform w;
    w.sample_rate = sample_rate;
    const std::size_t n = static_cast<std::size_t>(seconds * sample_rate);
    w.samples.resize(n);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& s : w.samples) s = amplitude * u(rng);
    return w;
}

dsp::Waveform silence(double seconds, int sample_rate) {
    dsp::Waveform w;
    w.sample_rate = sample_rate;
    w.samples.assign(static_cast<std::size_t>(seconds * sample_rate), 0.0);
    return w;
}

dsp::Waveform utterance(const UtteranceSpec& spec) {
    dsp::Waveform w;
    w.sample_rate = spec.sample_rate;
    const std::size_t n = static_cast<std::size_t>(spec.seconds * spec.sample_rate);
    w.samples.assign(n, 0.0);

    const std::size_t n_voiced = static_cast<std::size_t>(spec.voiced_fraction * n);
    const double shift = std::pow(2.0, spec.pitch_shift_semitones / 12.0);
    const double glide = spec.f0_end_hz / spec.f0_start_hz;

    double phase = 0.0;
    for (std::size_t i = 0; i < n_voiced; ++i) {
        const double t = static_cast<double>(i) / spec.sample_rate;
        const double pos = static_cast<double>(i) / static_cast<double>(n_voiced);
        const double vib =
            std::pow(2.0, spec.vibrato_semitones * std::sin(2.0 * kPi * spec.vibrato_hz * t) /
                              12.0);
        const double f0 = spec.f0_start_hz * std::pow(glide, pos) * vib * shift;
        phase += 2.0 * kPi * f0 / spec.sample_rate;
        // Raised-cosine fades at both ends plus a slow loudness swell so the
        // energy contour has variance (keeps energy PCC well defined).
        double env = 1.0;
        const double fade = 0.05;
        if (pos < fade) env = 0.5 - 0.5 * std::cos(kPi * pos / fade);
        if (pos > 1.0 - fade) env = 0.5 - 0.5 * std::cos(kPi * (1.0 - pos) / fade);
        env *= 0.55 + 0.45 * std::sin(2.0 * kPi * 1.3 * t);
        double s = 0.0;
        double norm = 0.0;
        for (int k = 1; k <= spec.harmonics; ++k) {
            s += std::sin(static_cast<double>(k) * phase) / k;
            norm += 1.0 / k;
        }
        w.samples[i] = 0.55 * env * s / norm;
    }

    // Unvoiced fricative-like burst after the voiced span.
    std::mt19937_64 rng(spec.seed * 7919 + 17);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const std::size_t burst_end = n_voiced + (n - n_voiced) / 2;
    double hp_prev = 0.0;
    for (std::size_t i = n_voiced; i < burst_end && i < n; ++i) {
        const double pos = static_cast<double>(i - n_voiced) /
                           static_cast<double>(std::max<std::size_t>(1, burst_end - n_voiced));
        const double env = std::sin(kPi * pos);
        const double x = u(rng);
        const double hp = x - hp_prev;  // crude high-pass for an unvoiced timbre
        hp_prev = x;
        w.samples[i] = 0.12 * env * hp;
    }

    // Continuous low noise floor so no analysis frame is digitally silent.
    for (auto& s : w.samples) s += spec.noise_floor_amplitude * u(rng);

    if (spec.gain != 1.0)
        for (auto& s : w.samples) s *= spec.gain;
    return w;
}

dsp::Waveform scaled(const dsp::Waveform& w, double gain) {
    dsp::Waveform out = w;
    for (auto& s : out.samples) s *= gain;
    return out;
}

}  // namespace tasla::synth
