#include "tasla/fsq.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace tasla::fsq {

void FsqConfig::validate() const {
    if (latent_dim < 1) throw std::invalid_argument("fsq: latent_dim must be >= 1");
    if (input_dim < 1) throw std::invalid_argument("fsq: input_dim must be >= 1");
    if (levels < 2) throw std::invalid_argument("fsq: levels must be >= 2");
    if (!(tau > 0.0)) throw std::invalid_argument("fsq: tau must be > 0");
}

FsqParams FsqParams::init(const FsqConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    FsqParams p;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    p.enc = Mat(cfg.input_dim, cfg.latent_dim);
    for (double& x : p.enc.v) x = u(rng);
    p.dec = Mat(cfg.latent_dim, cfg.input_dim);
    for (double& x : p.dec.v) x = u(rng);
    p.scale.assign(cfg.latent_dim, 1.0);
    p.shift.assign(cfg.latent_dim, 0.0);
    return p;
}

FsqParams FsqParams::identity(const FsqConfig& cfg) {
    cfg.validate();
    if (cfg.input_dim != cfg.latent_dim)
        throw std::invalid_argument("fsq: identity params need input_dim == latent_dim");
    FsqParams p;
    p.enc = Mat::identity(cfg.latent_dim);
    p.dec = Mat::identity(cfg.latent_dim);
    p.scale.assign(cfg.latent_dim, 1.0);
    p.shift.assign(cfg.latent_dim, 0.0);
    return p;
}

std::vector<double> squash(std::span<const double> u, const FsqParams& params,
                           const FsqConfig& cfg) {
    if (u.size() != params.scale.size())
        throw std::invalid_argument("fsq::squash: dimension mismatch");
    std::vector<double> out(u.size());
    for (std::size_t j = 0; j < u.size(); ++j)
        out[j] = std::tanh((u[j] * params.scale[j] + params.shift[j]) / cfg.tau);
    return out;
}

FsqCode quantize(std::span<const double> ubar, int levels) {
    if (levels < 2) throw std::invalid_argument("fsq::quantize: levels must be >= 2");
    FsqCode code;
    code.indices.resize(ubar.size());
    code.dequantized.resize(ubar.size());
    const double lm1 = static_cast<double>(levels - 1);
    for (std::size_t j = 0; j < ubar.size(); ++j) {
        // std::round ties away from zero, which is the documented tie rule.
        double raw = std::round((ubar[j] + 1.0) * 0.5 * lm1);
        int idx = static_cast<int>(std::clamp(raw, 0.0, lm1));
        code.indices[j] = idx;
        code.dequantized[j] = -1.0 + 2.0 * static_cast<double>(idx) / lm1;
    }
    return code;
}

std::vector<double> ste_combine(std::span<const double> ubar, std::span<const double> q) {
    if (ubar.size() != q.size())
        throw std::invalid_argument("fsq::ste_combine: dimension mismatch");
    // Forward: ubar + (q - ubar) == q. Written this way so the value matches
    // the gradient contract (identity Jacobian w.r.t. ubar, gap detached).
    std::vector<double> out(ubar.size());
    for (std::size_t j = 0; j < ubar.size(); ++j) out[j] = ubar[j] + (q[j] - ubar[j]);
    return out;
}

RoundtripResult fsq_roundtrip(std::span<const double> x, const FsqParams& params,
                              const FsqConfig& cfg) {
    cfg.validate();
    if (static_cast<int>(x.size()) != params.enc.rows)
        throw std::invalid_argument("fsq_roundtrip: input width " + std::to_string(x.size()) +
                                    " does not match encoder " + params.enc.shape_str());
    RoundtripResult r;
    r.latent.assign(static_cast<std::size_t>(params.enc.cols), 0.0);
    for (int j = 0; j < params.enc.cols; ++j) {
        double acc = 0.0;
        for (int i = 0; i < params.enc.rows; ++i) acc += x[i] * params.enc(i, j);
        r.latent[j] = acc;
    }
    r.squashed = squash(r.latent, params, cfg);
    r.code = quantize(r.squashed, cfg.levels);
    r.ste = ste_combine(r.squashed, r.code.dequantized);
    r.reconstructed.assign(static_cast<std::size_t>(params.dec.cols), 0.0);
    for (int j = 0; j < params.dec.cols; ++j) {
        double acc = 0.0;
        for (int i = 0; i < params.dec.rows; ++i) acc += r.ste[i] * params.dec(i, j);
        r.reconstructed[j] = acc;
    }
    return r;
}

double bits_per_token(int d, int levels) {
    if (d < 1) throw std::invalid_argument("bits_per_token: d must be >= 1");
    if (levels < 2) throw std::invalid_argument("bits_per_token: levels must be >= 2");
    return static_cast<double>(d) * std::log2(static_cast<double>(levels));
}

namespace {

// Little-endian base-2^32 big integer, just enough for code packing.
using BigInt = std::vector<std::uint32_t>;

void big_mul_add(BigInt& n, std::uint32_t mul, std::uint32_t add) {
    std::uint64_t carry = add;
    for (std::uint32_t& limb : n) {
        std::uint64_t t = static_cast<std::uint64_t>(limb) * mul + carry;
        limb = static_cast<std::uint32_t>(t);
        carry = t >> 32;
    }
    while (carry != 0) {
        n.push_back(static_cast<std::uint32_t>(carry));
        carry >>= 32;
    }
}

// Divides n by div in place, returning the remainder.
std::uint32_t big_div_mod(BigInt& n, std::uint32_t div) {
    std::uint64_t rem = 0;
    for (std::size_t i = n.size(); i-- > 0;) {
        std::uint64_t cur = (rem << 32) | n[i];
        n[i] = static_cast<std::uint32_t>(cur / div);
        rem = cur % div;
    }
    while (!n.empty() && n.back() == 0) n.pop_back();
    return static_cast<std::uint32_t>(rem);
}

bool big_is_zero(const BigInt& n) { return n.empty(); }

}  // namespace

std::string pack_code_hex(std::span<const int> indices, int levels) {
    if (levels < 2) throw std::invalid_argument("pack_code_hex: levels must be >= 2");
    BigInt n;
    for (std::size_t j = indices.size(); j-- > 0;) {
        int idx = indices[j];
        if (idx < 0 || idx >= levels)
            throw std::invalid_argument("pack_code_hex: index " + std::to_string(idx) +
                                        " out of range for " + std::to_string(levels) +
                                        " levels");
        big_mul_add(n, static_cast<std::uint32_t>(levels), static_cast<std::uint32_t>(idx));
    }
    if (big_is_zero(n)) return "0";
    std::string hex;
    static const char* digits = "0123456789abcdef";
    BigInt tmp = n;
    while (!big_is_zero(tmp)) hex.push_back(digits[big_div_mod(tmp, 16)]);
    std::reverse(hex.begin(), hex.end());
    return hex;
}

std::vector<int> unpack_code_hex(const std::string& hex, int dims, int levels) {
    if (levels < 2) throw std::invalid_argument("unpack_code_hex: levels must be >= 2");
    if (hex.empty()) throw std::invalid_argument("unpack_code_hex: empty code");
    BigInt n;
    for (char c : hex) {
        int d;
        if (c >= '0' && c <= '9') d = c - '0';
        else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
        else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
        else throw std::invalid_argument(std::string("unpack_code_hex: bad hex digit '") + c + "'");
        big_mul_add(n, 16, static_cast<std::uint32_t>(d));
    }
    std::vector<int> indices(static_cast<std::size_t>(dims));
    for (int j = 0; j < dims; ++j)
        indices[static_cast<std::size_t>(j)] =
            static_cast<int>(big_div_mod(n, static_cast<std::uint32_t>(levels)));
    if (!big_is_zero(n))
        throw std::invalid_argument("unpack_code_hex: code exceeds " + std::to_string(dims) +
                                    " base-" + std::to_string(levels) + " digits");
    return indices;
}

}  // namespace tasla::fsq
