#include "tasla/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace tasla::wav {

namespace {

std::uint32_t rd_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t rd_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void wr_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void wr_u16(std::ostream& os, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

dsp::Waveform read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("wav: cannot open '" + path + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw std::runtime_error("wav: '" + path + "' is not a RIFF/WAVE file");

    int format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const unsigned char* data = nullptr;
    std::size_t data_len = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
        const std::uint32_t len = rd_u32(bytes.data() + pos + 4);
        const unsigned char* body = bytes.data() + pos + 8;
        if (pos + 8 + len > bytes.size())
            throw std::runtime_error("wav: truncated chunk in '" + path + "'");
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (len < 16) throw std::runtime_error("wav: malformed fmt chunk");
            format = rd_u16(body);
            channels = rd_u16(body + 2);
            rate = rd_u32(body + 4);
            bits = rd_u16(body + 14);
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = body;
            data_len = len;
        }
        pos += 8 + len + (len & 1);  // chunks are word-aligned
    }
    if (data == nullptr) throw std::runtime_error("wav: no data chunk in '" + path + "'");
    if (channels < 1) throw std::runtime_error("wav: zero channels");

    dsp::Waveform w;
    w.sample_rate = static_cast<int>(rate);
    if (format == 1 && bits == 16) {
        const std::size_t frames = data_len / (2u * static_cast<std::size_t>(channels));
        w.samples.resize(frames);
        for (std::size_t f = 0; f < frames; ++f) {
            double acc = 0.0;
            for (int c = 0; c < channels; ++c) {
                const unsigned char* p = data + (f * channels + static_cast<std::size_t>(c)) * 2;
                const std::int16_t s = static_cast<std::int16_t>(rd_u16(p));
                acc += static_cast<double>(s) / 32768.0;
            }
            w.samples[f] = acc / channels;
        }
    } else if (format == 3 && bits == 32) {
        const std::size_t frames = data_len / (4u * static_cast<std::size_t>(channels));
        w.samples.resize(frames);
        for (std::size_t f = 0; f < frames; ++f) {
            double acc = 0.0;
            for (int c = 0; c < channels; ++c) {
                const unsigned char* p = data + (f * channels + static_cast<std::size_t>(c)) * 4;
                const std::uint32_t u = rd_u32(p);
                acc += static_cast<double>(std::bit_cast<float>(u));
            }
            w.samples[f] = std::clamp(acc / channels, -1.0, 1.0);
        }
    } else {
        throw std::runtime_error("wav: unsupported format " + std::to_string(format) + "/" +
                                 std::to_string(bits) + "-bit in '" + path +
                                 "' (PCM16 or float32 expected)");
    }
    if (w.samples.empty()) throw std::runtime_error("wav: '" + path + "' holds no samples");
    return w;
}

dsp::Waveform load_16k(const std::string& path) { return dsp::resample_to_16k(read(path)); }

void write_pcm16(const std::string& path, const dsp::Waveform& w) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("wav: cannot write '" + path + "'");
    const std::uint32_t n = static_cast<std::uint32_t>(w.samples.size());
    const std::uint32_t data_len = n * 2;
    os.write("RIFF", 4);
    wr_u32(os, 36 + data_len);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    wr_u32(os, 16);
    wr_u16(os, 1);  // PCM
    wr_u16(os, 1);  // mono
    wr_u32(os, static_cast<std::uint32_t>(w.sample_rate));
    wr_u32(os, static_cast<std::uint32_t>(w.sample_rate) * 2);
    wr_u16(os, 2);
    wr_u16(os, 16);
    os.write("data", 4);
    wr_u32(os, data_len);
    for (double s : w.samples) {
        const double clamped = std::clamp(s, -1.0, 1.0);
        const std::int16_t q = static_cast<std::int16_t>(
            std::lround(clamped * 32767.0));
        wr_u16(os, static_cast<std::uint16_t>(q));
    }
}

void write_float32(const std::string& path, const dsp::Waveform& w) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("wav: cannot write '" + path + "'");
    const std::uint32_t n = static_cast<std::uint32_t>(w.samples.size());
    const std::uint32_t data_len = n * 4;
    os.write("RIFF", 4);
    wr_u32(os, 36 + data_len);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    wr_u32(os, 16);
    wr_u16(os, 3);  // IEEE float
    wr_u16(os, 1);
    wr_u32(os, static_cast<std::uint32_t>(w.sample_rate));
    wr_u32(os, static_cast<std::uint32_t>(w.sample_rate) * 4);
    wr_u16(os, 4);
    wr_u16(os, 32);
    os.write("data", 4);
    wr_u32(os, data_len);
    for (double s : w.samples) wr_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(s)));
}

}  // namespace tasla::wav
