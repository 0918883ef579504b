#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lukan/matrix.hpp"

namespace lukan {

// F frames x K = 3J coordinates, millimetres. Each row is one pose with
// joints laid out as x0 y0 z0 x1 y1 z1 ...
struct MotionSequence {
    std::string name;
    double fps = 25.0;
    int joints = 0;
    Matrix data;

    std::size_t frames() const { return data.rows(); }
    std::size_t feature_dim() const { return data.cols(); }
};

// Canonical motion JSON:
//   { "fps": number, "joints": J, "frames": F, "data": [[3J numbers] x F] }
// Throws DataError naming the offending row/column.
MotionSequence parse_motion_json(std::string_view text, std::string name);
std::string motion_to_json(const MotionSequence& seq);

MotionSequence load_motion_file(const std::filesystem::path& path);
void save_motion_file(const MotionSequence& seq, const std::filesystem::path& path);

// All *.json files in `dir`, sorted by file name.
std::vector<MotionSequence> load_motion_dir(const std::filesystem::path& dir);

enum class SynthMode { Smooth, Burst, Const };

std::string_view to_string(SynthMode mode);
SynthMode synth_mode_from_string(std::string_view name);

// Construction bounds for generated coordinates, used by callers that want
// to sanity-check output magnitude.
struct SynthLimits {
    static constexpr int min_components = 2;
    static constexpr int max_components = 4;
    static constexpr double min_period = 10.0;
    static constexpr double max_period = 120.0;
    static constexpr double min_amplitude = 50.0;
    static constexpr double max_amplitude = 300.0;
    static constexpr double max_drift = 200.0;
    static constexpr double min_burst_period = 3.0;
    static constexpr double max_burst_period = 6.0;
    static constexpr double max_burst_amplitude = 80.0;
    static constexpr double max_const_offset = 300.0;
};

// Each coordinate is a seeded mix of 2-4 sinusoids plus a root drift shared
// by all joints; Burst adds short windowed high-frequency transients, Const
// produces a static pose. Pure function of its arguments.
MotionSequence synth_generate(int joints, int frames, double fps, std::uint64_t seed, SynthMode mode);

struct Sample {
    Matrix history;  // L x K
    Matrix target;   // T x K
    std::string source;
    std::size_t start = 0;
};

// Windows [s, s+L+T) for s = 0, stride, 2*stride, ... in sequence order.
std::vector<Sample> window_dataset(const std::vector<MotionSequence>& seqs, std::size_t lookback,
                                   std::size_t horizon, std::size_t stride);

// Repeats the last history frame `horizon` times.
Matrix zero_velocity_baseline(const Matrix& history, std::size_t horizon);

// Splits whole sequences into (train, validation). Sequences are ranked by a
// stable FNV-1a hash of their name and the first ceil(fraction * n) go to
// validation; at least one sequence stays in training when n >= 2.
std::pair<std::vector<MotionSequence>, std::vector<MotionSequence>> split_by_name(
    const std::vector<MotionSequence>& seqs, double val_fraction);

std::uint64_t fnv1a(std::string_view text);

}  // namespace lukan
