#include "tasla/rates.hpp"

#include <cmath>
#include <stdexcept>

namespace tasla::rates {

std::string scheme_name(Scheme s) {
    switch (s) {
        case Scheme::rvq: return "rvq";
        case Scheme::fsq: return "fsq";
        case Scheme::measured: return "measured";
    }
    return "unknown";
}

RateReport rvq_bitrate(double r_tok, int quantizers, int codebook_size) {
    if (!(r_tok > 0.0)) throw std::invalid_argument("rvq_bitrate: frame rate must be > 0");
    if (quantizers < 1) throw std::invalid_argument("rvq_bitrate: need at least 1 quantizer");
    if (codebook_size < 2) throw std::invalid_argument("rvq_bitrate: codebook size must be >= 2");
    RateReport r;
    r.scheme = Scheme::rvq;
    r.frame_rate = r_tok;
    r.bits_per_token = static_cast<double>(quantizers) * std::log2(static_cast<double>(codebook_size));
    r.bitrate = r.frame_rate * r.bits_per_token;
    return r;
}

RateReport fsq_bitrate(double r_tok, int dims, int levels) {
    if (!(r_tok > 0.0)) throw std::invalid_argument("fsq_bitrate: frame rate must be > 0");
    if (dims < 1) throw std::invalid_argument("fsq_bitrate: need at least 1 dimension");
    if (levels < 2) throw std::invalid_argument("fsq_bitrate: levels must be >= 2");
    RateReport r;
    r.scheme = Scheme::fsq;
    r.frame_rate = r_tok;
    r.bits_per_token = static_cast<double>(dims) * std::log2(static_cast<double>(levels));
    r.bitrate = r.frame_rate * r.bits_per_token;
    return r;
}

double text_aligned_frame_rate(double token_count, double seconds) {
    if (!(seconds > 0.0))
        throw std::invalid_argument("text_aligned_frame_rate: duration must be positive");
    if (token_count < 0.0)
        throw std::invalid_argument("text_aligned_frame_rate: negative token count");
    return token_count / seconds;
}

RateReport measured_rate(double token_count, double seconds, double bits_per_token) {
    if (bits_per_token < 0.0) throw std::invalid_argument("measured_rate: negative payload");
    RateReport r;
    r.scheme = Scheme::measured;
    r.frame_rate = text_aligned_frame_rate(token_count, seconds);
    r.bits_per_token = bits_per_token;
    r.bitrate = r.frame_rate * r.bits_per_token;
    return r;
}

}  // namespace tasla::rates
