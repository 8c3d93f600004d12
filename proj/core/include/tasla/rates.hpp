#pragma once

#include <string>

namespace tasla::rates {

enum class Scheme { rvq, fsq, measured };

std::string scheme_name(Scheme s);

struct RateReport {
    double frame_rate = 0.0;      // tokens/s
    double bits_per_token = 0.0;  // bits
    double bitrate = 0.0;         // bits/s, always frame_rate * bits_per_token
    Scheme scheme = Scheme::measured;
};

// b = r_tok * R * log2(K) for R quantizer stages with codebook size K.
RateReport rvq_bitrate(double r_tok, int quantizers, int codebook_size);

// b = r_tok * d * log2(L).
RateReport fsq_bitrate(double r_tok, int dims, int levels);

// Average token rate measured from corpus counts.
double text_aligned_frame_rate(double token_count, double seconds);

// Rate report from measured counts plus a known per-token payload.
RateReport measured_rate(double token_count, double seconds, double bits_per_token);

}  // namespace tasla::rates
