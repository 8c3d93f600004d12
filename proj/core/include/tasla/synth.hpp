#pragma once

#include <cstdint>
#include <vector>

#include "tasla/dsp.hpp"
#include "tasla/mlda.hpp"

namespace tasla::synth {

// Synthetic encoder stack: each layer is a leaky random walk smoothed by a
// one-pole filter whose cutoff depends on the layer position (deeper layers
// are smoother). Deterministic given the seed.
mlda::LayerStack layer_stack(const std::vector<int>& layer_ids, int frames, int width,
                             std::uint64_t seed);

dsp::Waveform sine(double freq_hz, double seconds, double amplitude = 0.5,
                   int sample_rate = 16000);
dsp::Waveform white_noise(double seconds, double amplitude, std::uint64_t seed,
                          int sample_rate = 16000);
dsp::Waveform silence(double seconds, int sample_rate = 16000);

// Harmonic test utterance: an exponential F0 glide with vibrato, a few
// harmonics under an amplitude envelope, an unvoiced noise burst, and a
// continuous low noise floor so no analysis frame is digitally silent.
struct UtteranceSpec {
    double seconds = 1.2;
    double f0_start_hz = 150.0;
    double f0_end_hz = 250.0;
    double vibrato_hz = 5.0;
    double vibrato_semitones = 0.5;
    int harmonics = 5;
    double noise_floor_amplitude = 1e-4;
    double voiced_fraction = 0.8;  // leading voiced portion; the rest is an unvoiced burst
    double pitch_shift_semitones = 0.0;
    double gain = 1.0;
    std::uint64_t seed = 0;
    int sample_rate = 16000;
};

dsp::Waveform utterance(const UtteranceSpec& spec);

// Applies a flat gain (sample-wise multiply).
dsp::Waveform scaled(const dsp::Waveform& w, double gain);

}  // namespace tasla::synth
