#pragma once

#include <string>

#include "tasla/dsp.hpp"

namespace tasla::wav {

// Reads a RIFF/WAVE file (PCM 16-bit or IEEE float 32-bit, any rate).
// Multi-channel audio is averaged to mono; samples land in [-1, 1].
dsp::Waveform read(const std::string& path);

// read() followed by windowed-sinc resampling to 16 kHz.
dsp::Waveform load_16k(const std::string& path);

void write_pcm16(const std::string& path, const dsp::Waveform& w);
void write_float32(const std::string& path, const dsp::Waveform& w);

}  // namespace tasla::wav
