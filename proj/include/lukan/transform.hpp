#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "lukan/matrix.hpp"

namespace lukan {

// Orthogonal Daubechies filter bank. Analysis of a length-n (even) block is
//   a[k] = sum_i rec_lo[i] * x[(2k + i) mod n]
//   d[k] = sum_i rec_hi[i] * x[(2k + i) mod n]
// and synthesis is its transpose. dec_* are the time-reversed taps, kept
// for reference and for callers that want the convolution form.
struct WaveletSpec {
    int vanishing_moments = 4;
    int levels = 3;
    std::vector<double> dec_lo, dec_hi, rec_lo, rec_hi;

    // Supported vanishing moments: 1..10 (db1..db10).
    static WaveletSpec daubechies(int vanishing_moments, int levels);

    std::size_t filter_length() const { return rec_lo.size(); }
};

struct WaveletCoeffs {
    std::vector<double> approx;
    std::vector<std::vector<double>> details;  // coarsest first
    // Pre-padding signal length entering each level, finest first:
    // L = 50 with 3 levels records {50, 25, 13}.
    std::vector<std::size_t> level_lengths;

    // [approx, detail_coarsest, ..., detail_finest]
    std::vector<double> flatten() const;
    std::size_t flat_size() const;
};

// Cascade algorithm: periodized analysis per level; an odd-length level
// input is right-padded by repeating its last sample.
WaveletCoeffs dwt_decompose(const WaveletSpec& spec, std::span<const double> signal);

// Inverse cascade; truncates each level back to its recorded length.
std::vector<double> dwt_reconstruct(const WaveletSpec& spec, const WaveletCoeffs& coeffs);

// Per-level lengths for a signal of length L (without running the transform).
WaveletCoeffs dwt_layout(const WaveletSpec& spec, std::size_t signal_length);

// Splits a flattened coefficient vector back into the layout's blocks.
WaveletCoeffs dwt_unflatten(const WaveletCoeffs& layout, std::span<const double> flat);

enum class EncoderKind { Dwt, Dct };

std::string_view to_string(EncoderKind kind);
EncoderKind encoder_from_string(std::string_view name);

enum class Direction { Forward, Inverse };

// A temporal transform frozen into two dense matrices:
//   forward (N x L): signal -> coefficients
//   inverse (L x N): coefficients -> signal, a left inverse of forward.
class TemporalEncoder {
public:
    static TemporalEncoder dwt(const WaveletSpec& spec, std::size_t input_length);
    static TemporalEncoder dct(std::size_t input_length);

    EncoderKind kind() const { return kind_; }
    const WaveletSpec& wavelet() const { return wavelet_; }
    std::size_t input_length() const { return input_length_; }
    std::size_t encoded_length() const { return forward_.rows(); }
    const Matrix& forward_matrix() const { return forward_; }
    const Matrix& inverse_matrix() const { return inverse_; }
    // Only meaningful for DWT; empty for DCT.
    const std::vector<std::size_t>& level_lengths() const { return level_lengths_; }

    std::vector<double> encode(std::span<const double> signal) const;
    std::vector<double> decode(std::span<const double> coeffs) const;
    std::vector<double> adjoint_apply(Direction direction, std::span<const double> cotangent) const;

    // Column-wise forms for motion windows (rows = time).
    Matrix encode_columns(const Matrix& x) const;  // (L x K) -> (N x K)
    Matrix decode_columns(const Matrix& c) const;  // (N x K) -> (L x K)

private:
    EncoderKind kind_ = EncoderKind::Dct;
    WaveletSpec wavelet_;
    std::size_t input_length_ = 0;
    std::vector<std::size_t> level_lengths_;
    Matrix forward_;
    Matrix inverse_;
};

TemporalEncoder build_encoder(EncoderKind kind, const WaveletSpec& spec, std::size_t input_length);

}  // namespace lukan
