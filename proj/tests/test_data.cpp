#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "lukan/data.hpp"
#include "lukan/error.hpp"
#include "lukan/model.hpp"

using namespace lukan;

namespace {

const char* kTwoJoints = R"({
  "fps": 25,
  "joints": 2,
  "frames": 3,
  "data": [
    [0, 1, 2, 3, 4, 5],
    [0.5, 1.5, 2.5, 3.5, 4.5, 5.5],
    [-1, -2, -3, -4, -5, -6e2]
  ]
})";

std::string error_of(std::string_view text) {
    try {
        parse_motion_json(text, "walk");
    } catch (const DataError& e) {
        return e.what();
    }
    return "";
}

std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("parse canonical motion json") {
    const auto seq = parse_motion_json(kTwoJoints, "walk");
    CHECK(seq.name == "walk");
    CHECK(seq.fps == 25.0);
    CHECK(seq.joints == 2);
    CHECK(seq.frames() == 3);
    CHECK(seq.feature_dim() == 6);
    CHECK(seq.data(1, 2) == 2.5);
    CHECK(seq.data(2, 5) == -600.0);
}

TEST_CASE("motion json errors carry context") {
    const std::string short_row = error_of(
        R"({"fps": 25, "joints": 2, "frames": 2, "data": [[0,1,2,3,4,5],[0,1,2,3,4]]})");
    CHECK(short_row.find("row 1") != std::string::npos);
    CHECK(short_row.find("expected 6") != std::string::npos);

    const std::string not_number = error_of(
        R"({"fps": 25, "joints": 1, "frames": 1, "data": [[0, "x", 2]]})");
    CHECK(not_number.find("row 0, column 1") != std::string::npos);

    CHECK(error_of(R"({"fps": 25, "joints": 1, "frames": 1, "data": [[0, 1e999, 2]]})").find("column 1") !=
          std::string::npos);
    CHECK(error_of(R"({"fps": 25, "joints": 1, "frames": 2, "data": [[0, 1, 2]]})").find("frames") !=
          std::string::npos);
    CHECK(error_of(R"({"fps": 25, "joints": 1)").find("malformed") != std::string::npos);
    CHECK(error_of(R"({"joints": 1, "frames": 1, "data": [[0,1,2]]})").find("fps") != std::string::npos);
    CHECK(error_of("[1, 2]").find("object") != std::string::npos);
}

TEST_CASE("canonical save of a loaded file is byte identical") {
    const auto dir = scratch_dir("lukan_data_roundtrip");
    const auto seq = synth_generate(3, 40, 50.0, 5, SynthMode::Burst);
    const auto first = dir / "a.json";
    save_motion_file(seq, first);
    const auto loaded = load_motion_file(first);
    CHECK(loaded.name == "a");
    CHECK(loaded.data == seq.data);

    const auto second = dir / "b.json";
    save_motion_file(loaded, second);
    std::ifstream fa(first, std::ios::binary), fb(second, std::ios::binary);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    CHECK(sa.str() == sb.str());
    CHECK(sa.str() == motion_to_json(seq));
    std::filesystem::remove_all(dir);
}

TEST_CASE("motion directory loads sorted json files") {
    const auto dir = scratch_dir("lukan_data_dir");
    save_motion_file(synth_generate(1, 10, 25.0, 2, SynthMode::Smooth), dir / "b.json");
    save_motion_file(synth_generate(1, 10, 25.0, 1, SynthMode::Smooth), dir / "a.json");
    std::ofstream(dir / "notes.txt") << "ignored";
    const auto seqs = load_motion_dir(dir);
    REQUIRE(seqs.size() == 2);
    CHECK(seqs[0].name == "a");
    CHECK(seqs[1].name == "b");
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(load_motion_dir(dir), DataError);
}

TEST_CASE("synthetic generation") {
    SUBCASE("pure function of its arguments") {
        for (auto mode : {SynthMode::Smooth, SynthMode::Burst, SynthMode::Const}) {
            const auto a = synth_generate(4, 200, 25.0, 17, mode);
            const auto b = synth_generate(4, 200, 25.0, 17, mode);
            CHECK(a.data == b.data);
            CHECK(a.name == b.name);
            CHECK(!(synth_generate(4, 200, 25.0, 18, mode).data == a.data));
        }
    }
    SUBCASE("values stay within the construction bound") {
        using L = SynthLimits;
        const double smooth_bound = L::max_components * L::max_amplitude + L::max_drift;
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            for (double v : synth_generate(3, 300, 25.0, seed, SynthMode::Smooth).data.flat())
                CHECK(std::abs(v) <= smooth_bound);
            for (double v : synth_generate(3, 300, 25.0, seed, SynthMode::Burst).data.flat())
                CHECK(std::abs(v) <= smooth_bound + L::max_burst_amplitude);
        }
    }
    SUBCASE("burst mode only adds transients") {
        const auto smooth = synth_generate(2, 300, 25.0, 4, SynthMode::Smooth);
        const auto burst = synth_generate(2, 300, 25.0, 4, SynthMode::Burst);
        CHECK(max_abs_diff(smooth.data, burst.data) > 1.0);
        CHECK(max_abs_diff(smooth.data, burst.data) <= SynthLimits::max_burst_amplitude);
    }
    SUBCASE("const mode is static and the baseline is exact") {
        const auto seq = synth_generate(3, 80, 25.0, 3, SynthMode::Const);
        for (std::size_t t = 1; t < seq.frames(); ++t)
            for (std::size_t c = 0; c < seq.feature_dim(); ++c) CHECK(seq.data(t, c) == seq.data(0, c));
        for (const auto& s : window_dataset({seq}, 20, 10, 7)) {
            const Matrix base = zero_velocity_baseline(s.history, 10);
            for (std::size_t t = 1; t <= 10; ++t) CHECK(mpjpe(base, s.target, t) == 0.0);
        }
    }
    CHECK_THROWS_AS(synth_generate(0, 10, 25.0, 1, SynthMode::Smooth), ConfigError);
    CHECK_THROWS_AS(synth_generate(1, 0, 25.0, 1, SynthMode::Smooth), ConfigError);
    CHECK(synth_mode_from_string("burst") == SynthMode::Burst);
    CHECK_THROWS_AS(synth_mode_from_string("jitter"), ConfigError);
}

TEST_CASE("window counts") {
    const std::size_t l = 10, t = 4;
    auto seq_of = [](std::size_t frames) { return synth_generate(1, static_cast<int>(frames), 25.0, 1, SynthMode::Smooth); };
    CHECK(window_dataset({seq_of(l + t)}, l, t, 1).size() == 1);
    CHECK(window_dataset({seq_of(l + t + 2)}, l, t, 1).size() == 3);
    CHECK(window_dataset({seq_of(l + t - 1)}, l, t, 1).empty());
    CHECK_THROWS_AS(window_dataset({seq_of(20)}, l, t, 0), ConfigError);

    std::vector<MotionSequence> seqs;
    for (std::size_t f : {13u, 14u, 15u, 31u, 50u, 97u}) {
        auto s = seq_of(f);
        s.name = "seq" + std::to_string(f);
        seqs.push_back(s);
    }
    for (std::size_t stride : {1u, 2u, 3u, 5u, 8u}) {
        CAPTURE(stride);
        std::size_t expected = 0;
        for (const auto& s : seqs)
            if (s.frames() >= l + t) expected += (s.frames() - l - t) / stride + 1;
        const auto samples = window_dataset(seqs, l, t, stride);
        CHECK(samples.size() == expected);

        std::set<std::pair<std::string, std::size_t>> keys;
        for (const auto& s : samples) keys.insert({s.source, s.start});
        CHECK(keys.size() == samples.size());
    }
}

TEST_CASE("windows are consecutive slices") {
    const auto seq = synth_generate(2, 40, 25.0, 8, SynthMode::Burst);
    const auto samples = window_dataset({seq}, 12, 5, 3);
    for (const auto& s : samples) {
        CHECK(s.source == seq.name);
        for (std::size_t r = 0; r < 12; ++r)
            for (std::size_t c = 0; c < 6; ++c) CHECK(s.history(r, c) == seq.data(s.start + r, c));
        for (std::size_t r = 0; r < 5; ++r)
            for (std::size_t c = 0; c < 6; ++c) CHECK(s.target(r, c) == seq.data(s.start + 12 + r, c));
    }
    CHECK(samples[0].start == 0);
    CHECK(samples[1].start == 3);
}

TEST_CASE("zero velocity baseline") {
    const auto seq = synth_generate(2, 30, 25.0, 9, SynthMode::Smooth);
    const auto s = window_dataset({seq}, 20, 5, 1).front();
    const Matrix base = zero_velocity_baseline(s.history, 5);
    REQUIRE(base.rows() == 5);
    for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t c = 0; c < 6; ++c) CHECK(base(t, c) == s.history(19, c));
}

TEST_CASE("split keeps whole sequences and is stable") {
    std::vector<MotionSequence> seqs;
    for (int i = 0; i < 10; ++i) {
        auto s = synth_generate(1, 5, 25.0, static_cast<std::uint64_t>(i), SynthMode::Const);
        seqs.push_back(s);
    }
    const auto [train, val] = split_by_name(seqs, 0.2);
    CHECK(val.size() == 2);
    CHECK(train.size() == 8);
    std::set<std::string> names;
    for (const auto& s : train) names.insert(s.name);
    for (const auto& s : val) CHECK(names.insert(s.name).second);

    // order of the input does not matter
    std::vector<MotionSequence> reversed(seqs.rbegin(), seqs.rend());
    const auto again = split_by_name(reversed, 0.2);
    std::set<std::string> v1, v2;
    for (const auto& s : val) v1.insert(s.name);
    for (const auto& s : again.second) v2.insert(s.name);
    CHECK(v1 == v2);

    CHECK(split_by_name({seqs[0]}, 0.5).second.empty());
    CHECK(split_by_name(seqs, 0.0).second.empty());
    CHECK(split_by_name({seqs[0], seqs[1]}, 0.9).first.size() == 1);
    CHECK_THROWS_AS(split_by_name(seqs, 1.0), ConfigError);
    CHECK(fnv1a("") == 14695981039346656037ull);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
}
