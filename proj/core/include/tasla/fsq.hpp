#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tasla/mat.hpp"

namespace tasla::fsq {

struct FsqConfig {
    int input_dim = 64;   // D, width of the feature the encoder consumes
    int latent_dim = 64;  // d, FSQ dimensions
    int levels = 8;       // L, uniform levels per dimension
    double tau = 1.0;     // squash temperature, held constant

    void validate() const;
};

// Bias-free linear encoder/decoder plus the learnable per-dimension affine.
struct FsqParams {
    Mat enc;                // D x d
    Mat dec;                // d x D
    std::vector<double> scale;  // s, init 1
    std::vector<double> shift;  // b, init 0

    static FsqParams init(const FsqConfig& cfg, std::uint64_t seed);
    // Identity encoder/decoder; requires D == d.
    static FsqParams identity(const FsqConfig& cfg);
};

struct FsqCode {
    std::vector<int> indices;       // i_j in [0, L-1]
    std::vector<double> dequantized;  // q_j = -1 + 2 i_j / (L-1), exactly on the grid
};

// Per-dimension affine and temperature-scaled squash:
// ubar = tanh((u * s + b) / tau), strictly inside (-1, 1).
std::vector<double> squash(std::span<const double> u, const FsqParams& params,
                           const FsqConfig& cfg);

// Uniform-grid quantization. Rounding ties go away from zero; out-of-range
// inputs are clipped, so any finite ubar is safe.
FsqCode quantize(std::span<const double> ubar, int levels);

// Straight-through combination: the forward value equals q exactly; the
// backward Jacobian d z_q / d ubar is the identity.
std::vector<double> ste_combine(std::span<const double> ubar, std::span<const double> q);

struct RoundtripResult {
    std::vector<double> latent;        // u, pre-squash
    std::vector<double> squashed;      // ubar
    FsqCode code;
    std::vector<double> ste;           // z_q
    std::vector<double> reconstructed;  // dec(z_q)
};

RoundtripResult fsq_roundtrip(std::span<const double> x, const FsqParams& params,
                              const FsqConfig& cfg);

// Per-token payload d * log2(L), as an exact real.
double bits_per_token(int d, int levels);

// Index packing: dimension 0 is the least significant digit of the base-L
// integer; emitted as minimal lowercase hex ("0" for the zero code).
std::string pack_code_hex(std::span<const int> indices, int levels);
std::vector<int> unpack_code_hex(const std::string& hex, int dims, int levels);

}  // namespace tasla::fsq
