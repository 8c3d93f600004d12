#pragma once

#include <cstddef>
#include <vector>

#include "tasla/mat.hpp"

namespace tasla::dsp {

constexpr int kTargetSampleRate = 16000;
constexpr double kDbEpsilon = 1e-10;

struct Waveform {
    std::vector<double> samples;  // mono, in [-1, 1]
    int sample_rate = kTargetSampleRate;

    double seconds() const {
        return static_cast<double>(samples.size()) / sample_rate;
    }
};

struct FrameParams {
    double window_ms = 25.0;
    double hop_ms = 10.0;
    int fft_size = 512;
    int n_mels = 80;

    int window_samples(int sr) const;
    int hop_samples(int sr) const;
    void validate(int sr) const;
};

struct MelSpec {
    Mat frames;  // T x n_mels, nonnegative linear magnitudes
    std::vector<double> frame_times;
};

struct ProsodyTrack {
    std::vector<double> f0_hz;   // 0 where unvoiced
    std::vector<int> voicing;    // {0,1}
    std::vector<double> rms;
    std::vector<double> frame_times;

    std::size_t size() const { return f0_hz.size(); }
    double voiced_fraction() const;
};

struct PitchParams {
    double f_min_hz = 50.0;
    double f_max_hz = 600.0;
    double yin_threshold = 0.2;
};

struct FrameEnergy {
    std::vector<double> rms;
    std::vector<double> db;
    std::vector<double> frame_times;
};

// Number of complete analysis frames for a signal of n samples.
int frame_count(std::size_t n_samples, int window, int hop);

// Windowed-sinc resampling to 16 kHz; pass-through when already there.
Waveform resample_to_16k(const Waveform& w);

// HTK mel scale.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular filterbank rows (n_mels x (fft_size/2 + 1)) covering [0, sr/2].
Mat mel_filterbank(int n_mels, int fft_size, int sample_rate);

// Hann-windowed magnitude STFT mapped through the mel filterbank.
MelSpec stft_mel(const Waveform& w, const FrameParams& p);

// DCT-II (orthonormal) of log(mel + 1e-10), first n_coeffs coefficients.
Mat mfcc(const MelSpec& m, int n_coeffs = 13);

// F_t = ||m_t - m_{t-1}||_2 with F_0 defined as 0. Requires T >= 2.
std::vector<double> spectral_flux(const MelSpec& m);

FrameEnergy frame_energy(const Waveform& w, const FrameParams& p,
                         double epsilon = kDbEpsilon);

// YIN-style pitch tracking: cumulative mean normalized difference with an
// absolute voicing threshold and parabolic lag interpolation. Fills RMS from
// the same framing so one call builds a complete track.
ProsodyTrack track_pitch(const Waveform& w, const FrameParams& p,
                         const PitchParams& pp = {});

// s = 12 * log2(f / 55); throws for f <= 0.
double hz_to_semitone(double f_hz);

}  // namespace tasla::dsp
