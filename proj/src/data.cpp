#include "lukan/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "json.hpp"
#include "lukan/error.hpp"

namespace lukan {

using nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("write failed for " + path.string());
}

// Shortest round-trip representation.
std::string format_number(double v) { return json(v).dump(); }

std::int64_t require_int(const json& doc, const char* key, const std::string& name) {
    if (!doc.contains(key)) throw DataError(name + ": missing field \"" + key + "\"");
    const auto& v = doc.at(key);
    if (!v.is_number_integer()) throw DataError(name + ": field \"" + key + "\" must be an integer");
    return v.get<std::int64_t>();
}

// DOM builder that remembers the index path inside nested arrays, so a value
// the lexer rejects (e.g. 1e999 overflowing to inf) can be reported by
// row/column rather than byte offset.
class IndexTrackingSax {
public:
    explicit IndexTrackingSax(json& root) : dom_(root, false) {}

    bool null() { return scalar(dom_.null()); }
    bool boolean(bool v) { return scalar(dom_.boolean(v)); }
    bool number_integer(json::number_integer_t v) { return scalar(dom_.number_integer(v)); }
    bool number_unsigned(json::number_unsigned_t v) { return scalar(dom_.number_unsigned(v)); }
    bool number_float(json::number_float_t v, const std::string& s) { return scalar(dom_.number_float(v, s)); }
    bool string(json::string_t& v) { return scalar(dom_.string(v)); }
    bool binary(json::binary_t& v) { return scalar(dom_.binary(v)); }
    bool key(json::string_t& v) { return dom_.key(v); }
    bool start_object(std::size_t n) { return open(false, dom_.start_object(n)); }
    bool end_object() { return close(dom_.end_object()); }
    bool start_array(std::size_t n) { return open(true, dom_.start_array(n)); }
    bool end_array() { return close(dom_.end_array()); }

    bool parse_error(std::size_t position, const std::string& token, const nlohmann::detail::exception& e) {
        std::vector<std::size_t> path;
        for (std::size_t i = 0; i < stack_.size(); ++i)
            if (stack_[i].array) path.push_back(stack_[i].count);
        if (e.id == 406 && path.size() >= 2) {
            message_ = "row " + std::to_string(path[path.size() - 2]) + ", column " + std::to_string(path.back()) +
                       " is not finite ('" + token + "')";
        } else {
            message_ = "malformed motion JSON at byte " + std::to_string(position) + ": " + e.what();
        }
        return false;
    }

    const std::string& message() const { return message_; }

private:
    struct Level {
        bool array;
        std::size_t count;
    };

    bool scalar(bool ok) {
        if (!stack_.empty()) ++stack_.back().count;
        return ok;
    }
    bool open(bool array, bool ok) {
        stack_.push_back({array, 0});
        return ok;
    }
    bool close(bool ok) {
        stack_.pop_back();
        return scalar(ok);
    }

    nlohmann::detail::json_sax_dom_parser<json> dom_;
    std::vector<Level> stack_;
    std::string message_;
};

}  // namespace

MotionSequence parse_motion_json(std::string_view text, std::string name) {
    json doc;
    IndexTrackingSax sax(doc);
    if (!json::sax_parse(text, &sax)) throw DataError(name + ": " + sax.message());
    if (!doc.is_object()) throw DataError(name + ": motion file must be a JSON object");

    MotionSequence seq;
    seq.name = std::move(name);
    if (!doc.contains("fps") || !doc.at("fps").is_number()) {
        throw DataError(seq.name + ": missing or non-numeric field \"fps\"");
    }
    seq.fps = doc.at("fps").get<double>();
    if (!std::isfinite(seq.fps) || seq.fps <= 0.0) throw DataError(seq.name + ": fps must be positive");

    const auto joints = require_int(doc, "joints", seq.name);
    const auto frames = require_int(doc, "frames", seq.name);
    if (joints < 1) throw DataError(seq.name + ": joints must be >= 1");
    if (frames < 1) throw DataError(seq.name + ": frames must be >= 1");
    seq.joints = static_cast<int>(joints);

    if (!doc.contains("data") || !doc.at("data").is_array()) {
        throw DataError(seq.name + ": missing or non-array field \"data\"");
    }
    const auto& rows = doc.at("data");
    if (rows.size() != static_cast<std::size_t>(frames)) {
        throw DataError(seq.name + ": \"frames\" is " + std::to_string(frames) + " but data has " +
                        std::to_string(rows.size()) + " rows");
    }
    const std::size_t k = 3 * static_cast<std::size_t>(joints);
    seq.data = Matrix(static_cast<std::size_t>(frames), k);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (!row.is_array() || row.size() != k) {
            throw DataError(seq.name + ": row " + std::to_string(i) + " has " +
                            (row.is_array() ? std::to_string(row.size()) : std::string("no")) + " values, expected " +
                            std::to_string(k) + " (3 x joints)");
        }
        for (std::size_t j = 0; j < k; ++j) {
            if (!row[j].is_number()) {
                throw DataError(seq.name + ": row " + std::to_string(i) + ", column " + std::to_string(j) +
                                " is not a number");
            }
            const double v = row[j].get<double>();
            if (!std::isfinite(v)) {
                throw DataError(seq.name + ": row " + std::to_string(i) + ", column " + std::to_string(j) +
                                " is not finite");
            }
            seq.data(i, j) = v;
        }
    }
    return seq;
}

std::string motion_to_json(const MotionSequence& seq) {
    std::string out = "{\n  \"fps\": " + format_number(seq.fps) + ",\n  \"joints\": " + std::to_string(seq.joints) +
                      ",\n  \"frames\": " + std::to_string(seq.frames()) + ",\n  \"data\": [";
    for (std::size_t i = 0; i < seq.frames(); ++i) {
        out += i == 0 ? "\n    [" : ",\n    [";
        const auto row = seq.data.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j) out += ", ";
            out += format_number(row[j]);
        }
        out += "]";
    }
    out += "\n  ]\n}\n";
    return out;
}

MotionSequence load_motion_file(const std::filesystem::path& path) {
    return parse_motion_json(read_file(path), path.stem().string());
}

void save_motion_file(const MotionSequence& seq, const std::filesystem::path& path) {
    write_file(path, motion_to_json(seq));
}

std::vector<MotionSequence> load_motion_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) throw DataError("not a directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<MotionSequence> seqs;
    seqs.reserve(files.size());
    for (const auto& f : files) seqs.push_back(load_motion_file(f));
    return seqs;
}

std::string_view to_string(SynthMode mode) {
    switch (mode) {
        case SynthMode::Smooth: return "smooth";
        case SynthMode::Burst: return "burst";
        case SynthMode::Const: return "const";
    }
    return "unknown";
}

SynthMode synth_mode_from_string(std::string_view name) {
    if (name == "smooth") return SynthMode::Smooth;
    if (name == "burst") return SynthMode::Burst;
    if (name == "const") return SynthMode::Const;
    throw ConfigError("unknown synth mode '" + std::string(name) + "' (expected smooth|burst|const)");
}

MotionSequence synth_generate(int joints, int frames, double fps, std::uint64_t seed, SynthMode mode) {
    if (joints < 1) throw ConfigError("synth: joints must be >= 1");
    if (frames < 1) throw ConfigError("synth: frames must be >= 1");
    if (!(fps > 0.0)) throw ConfigError("synth: fps must be positive");

    using L = SynthLimits;
    constexpr double two_pi = 2.0 * std::numbers::pi;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    MotionSequence seq;
    seq.name = "synth_" + std::string(to_string(mode)) + "_" + std::to_string(seed);
    seq.fps = fps;
    seq.joints = joints;
    const std::size_t k = 3 * static_cast<std::size_t>(joints);
    const auto f = static_cast<std::size_t>(frames);
    seq.data = Matrix(f, k);

    if (mode == SynthMode::Const) {
        for (std::size_t c = 0; c < k; ++c) {
            const double v = uniform(-L::max_const_offset, L::max_const_offset);
            for (std::size_t t = 0; t < f; ++t) seq.data(t, c) = v;
        }
        return seq;
    }

    // Root drift, one slow sinusoid per axis, shared by every joint.
    std::array<double, 3> drift_amp{}, drift_period{}, drift_phase{};
    for (int a = 0; a < 3; ++a) {
        drift_amp[a] = uniform(0.0, L::max_drift);
        drift_period[a] = uniform(150.0, 400.0);
        drift_phase[a] = uniform(0.0, two_pi);
    }

    for (std::size_t c = 0; c < k; ++c) {
        const int components = std::uniform_int_distribution<int>(L::min_components, L::max_components)(rng);
        std::vector<double> amp(components), period(components), phase(components);
        for (int m = 0; m < components; ++m) {
            amp[m] = uniform(L::min_amplitude, L::max_amplitude);
            period[m] = uniform(L::min_period, L::max_period);
            phase[m] = uniform(0.0, two_pi);
        }
        const std::size_t axis = c % 3;
        for (std::size_t t = 0; t < f; ++t) {
            const double td = static_cast<double>(t);
            double v = drift_amp[axis] * std::sin(two_pi * td / drift_period[axis] + drift_phase[axis]);
            for (int m = 0; m < components; ++m) v += amp[m] * std::sin(two_pi * td / period[m] + phase[m]);
            seq.data(t, c) = v;
        }
    }

    if (mode == SynthMode::Burst) {
        // Hann-windowed bursts of a few cycles; at most one active burst per
        // coordinate at a time, so the amplitude bound holds.
        for (std::size_t c = 0; c < k; ++c) {
            double t0 = uniform(0.0, 60.0);
            while (t0 < static_cast<double>(f)) {
                const double period = uniform(L::min_burst_period, L::max_burst_period);
                const double amp = uniform(0.3, 1.0) * L::max_burst_amplitude;
                const double width = 3.0 * period;
                for (std::size_t t = static_cast<std::size_t>(std::ceil(t0)); t < f; ++t) {
                    const double s = static_cast<double>(t) - t0;
                    if (s >= width) break;
                    const double window = 0.5 * (1.0 - std::cos(two_pi * s / width));
                    seq.data(t, c) += amp * window * std::sin(two_pi * s / period);
                }
                t0 += width + uniform(20.0, 60.0);
            }
        }
    }
    return seq;
}

std::vector<Sample> window_dataset(const std::vector<MotionSequence>& seqs, std::size_t lookback,
                                   std::size_t horizon, std::size_t stride) {
    if (stride < 1) throw ConfigError("window stride must be >= 1");
    std::vector<Sample> out;
    const std::size_t span = lookback + horizon;
    for (const auto& seq : seqs) {
        if (seq.frames() < span) continue;
        const std::size_t k = seq.feature_dim();
        for (std::size_t s = 0; s + span <= seq.frames(); s += stride) {
            Sample sample{Matrix(lookback, k), Matrix(horizon, k), seq.name, s};
            for (std::size_t t = 0; t < lookback; ++t)
                std::copy_n(seq.data.row(s + t).data(), k, sample.history.row(t).data());
            for (std::size_t t = 0; t < horizon; ++t)
                std::copy_n(seq.data.row(s + lookback + t).data(), k, sample.target.row(t).data());
            out.push_back(std::move(sample));
        }
    }
    return out;
}

Matrix zero_velocity_baseline(const Matrix& history, std::size_t horizon) {
    if (history.rows() < 1) throw ShapeError("zero_velocity_baseline: empty history");
    Matrix out(horizon, history.cols());
    const auto last = history.row(history.rows() - 1);
    for (std::size_t t = 0; t < horizon; ++t) std::copy(last.begin(), last.end(), out.row(t).begin());
    return out;
}

std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::pair<std::vector<MotionSequence>, std::vector<MotionSequence>> split_by_name(
    const std::vector<MotionSequence>& seqs, double val_fraction) {
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must be in [0, 1)");
    std::vector<std::size_t> order(seqs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto ha = fnv1a(seqs[a].name), hb = fnv1a(seqs[b].name);
        return ha != hb ? ha < hb : seqs[a].name < seqs[b].name;
    });
    std::size_t n_val = static_cast<std::size_t>(std::ceil(val_fraction * static_cast<double>(seqs.size())));
    if (seqs.size() >= 2) n_val = std::min(n_val, seqs.size() - 1);
    else n_val = 0;

    std::vector<bool> is_val(seqs.size(), false);
    for (std::size_t i = 0; i < n_val; ++i) is_val[order[i]] = true;
    std::pair<std::vector<MotionSequence>, std::vector<MotionSequence>> out;
    for (std::size_t i = 0; i < seqs.size(); ++i) (is_val[i] ? out.second : out.first).push_back(seqs[i]);
    return out;
}

}  // namespace lukan
