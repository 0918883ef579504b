#include <cmath>
#include <random>

#include "doctest.h"
#include "lukan/data.hpp"
#include "lukan/error.hpp"
#include "lukan/train.hpp"
#include "test_support.hpp"

using namespace lukan;

namespace {

ModelConfig tiny_model() {
    ModelConfig c;
    c.joints = 2;
    c.lookback = 16;
    c.horizon = 4;
    c.embed_dim = 8;
    c.blocks = 2;
    c.wavelet_levels = 2;
    c.squash_input = false;
    c.centering = InputCentering::LastPose;
    c.input_scale = 100.0;
    return c;
}

TrainConfig tiny_train(long steps) {
    TrainConfig t;
    t.batch_size = 16;
    t.lr_init = 3e-3;
    t.total_steps = steps;
    t.decay_step = steps;
    t.eval_interval = 0;
    return t;
}

std::vector<Sample> tiny_dataset(std::uint64_t first_seed, int count) {
    std::vector<MotionSequence> seqs;
    for (int i = 0; i < count; ++i)
        seqs.push_back(synth_generate(2, 120, 25.0, first_seed + static_cast<std::uint64_t>(i), SynthMode::Smooth));
    return window_dataset(seqs, 16, 4, 2);
}

// Single scalar parameter Adam with L2-coupled decay, written out directly.
struct ScalarAdam {
    double theta, m = 0.0, v = 0.0;
    int t = 0;
    void step(double g, double lr, double wd, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
        ++t;
        g += wd * theta;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mh = m / (1 - std::pow(b1, t));
        const double vh = v / (1 - std::pow(b2, t));
        theta -= lr * mh / (std::sqrt(vh) + eps);
    }
};

// A model whose only parameter is W2 (1 x 3): J=1, D=1, B=0.
ModelConfig scalar_model() {
    ModelConfig c;
    c.joints = 1;
    c.lookback = 8;
    c.horizon = 2;
    c.embed_dim = 1;
    c.blocks = 0;
    c.wavelet_levels = 1;
    return c;
}

}  // namespace

TEST_CASE("learning-rate schedule") {
    TrainConfig cfg;
    CHECK(lr_at(cfg, 0) == 3e-4);
    CHECK(lr_at(cfg, cfg.decay_step - 1) == 3e-4);
    CHECK(lr_at(cfg, cfg.decay_step) == 1e-5);
    CHECK(lr_at(cfg, cfg.decay_step + 1000) == 1e-5);
    cfg.decay_step = 0;
    for (long s : {0L, 1L, 50L}) CHECK(lr_at(cfg, s) == 1e-5);
}

TEST_CASE("train config validation and json") {
    TrainConfig cfg;
    cfg.validate();
    nlohmann::json j = cfg;
    CHECK(j.at("weight_decay_mode") == "l2");
    CHECK(j.get<TrainConfig>() == cfg);
    cfg.lr_final = 1e-3;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.beta2 = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.weight_decay = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK(default_horizons(10) == std::vector<int>{2, 4, 8, 10});
    CHECK(default_horizons(25) == std::vector<int>{2, 4, 8, 10, 14, 18, 22, 25});
    CHECK(default_horizons(5) == std::vector<int>{2, 4, 5});
    CHECK(default_horizons(1) == std::vector<int>{1});
}

TEST_CASE("adam: zero gradient is a fixed point without decay") {
    TrainConfig cfg;
    cfg.weight_decay = 0.0;
    auto params = init_model(scalar_model());
    params.w2.weight.fill(0.7);
    const auto before = serialize_model(params);
    auto state = AdamState::for_params(params);
    const auto grads = ModelParams::zeros(params.config);
    for (int i = 0; i < 3; ++i) adam_step(params, grads, state, cfg);
    CHECK(serialize_model(params) == before);
    CHECK(state.step == 3);

    // existing moments decay geometrically
    state.m.w2.weight.fill(0.2);
    state.v.w2.weight.fill(0.3);
    adam_step(params, grads, state, cfg);
    CHECK(state.m.w2.weight(0, 0) == doctest::Approx(0.2 * 0.9).epsilon(1e-15));
    CHECK(state.v.w2.weight(0, 0) == doctest::Approx(0.3 * 0.999).epsilon(1e-15));
}

TEST_CASE("adam: first step moves by lr") {
    auto params = init_model(scalar_model());
    params.w2.weight.fill(1.0);
    auto state = AdamState::for_params(params);
    auto grads = ModelParams::zeros(params.config);
    grads.w2.weight.fill(1.0);
    TrainConfig cfg;
    cfg.weight_decay = 0.0;
    adam_step(params, grads, state, cfg);
    CHECK(params.w2.weight(0, 0) == doctest::Approx(1.0 - 3e-4 / (1.0 + 1e-8)).epsilon(1e-15));
}

TEST_CASE("adam: three-step trace matches a scalar oracle") {
    auto params = init_model(scalar_model());
    params.w2.weight(0, 0) = 0.4;
    params.w2.weight(0, 1) = -1.3;
    auto state = AdamState::for_params(params);
    TrainConfig cfg;
    cfg.weight_decay = 0.05;
    cfg.decay_step = 2;  // the last step uses lr_final
    ScalarAdam a{0.4}, b{-1.3};
    const double ga[] = {0.9, -0.2, 1.7}, gb[] = {-3.0, 0.5, 0.25};
    for (int s = 0; s < 3; ++s) {
        auto grads = ModelParams::zeros(params.config);
        grads.w2.weight(0, 0) = ga[s];
        grads.w2.weight(0, 1) = gb[s];
        const double lr = lr_at(cfg, s);
        adam_step(params, grads, state, cfg);
        a.step(ga[s], lr, 0.05);
        b.step(gb[s], lr, 0.05);
    }
    CHECK(std::abs(params.w2.weight(0, 0) - a.theta) <= 1e-12);
    CHECK(std::abs(params.w2.weight(0, 1) - b.theta) <= 1e-12);
}

TEST_CASE("adam: weight decay shrinks magnitudes") {
    auto params = init_model(tiny_model());
    std::mt19937_64 rng(3);
    for (auto& t : params.tensors())
        for (auto& v : t.data) v = std::normal_distribution<double>(0.0, 1.0)(rng);
    auto state = AdamState::for_params(params);
    const auto grads = ModelParams::zeros(params.config);
    TrainConfig cfg;
    cfg.weight_decay = 1e-2;
    for (int s = 0; s < 5; ++s) {
        const auto before = params;
        adam_step(params, grads, state, cfg);
        const auto now = params.tensors();
        const auto prev = before.tensors();
        for (std::size_t i = 0; i < now.size(); ++i) {
            CAPTURE(now[i].name);
            CHECK(lukan::test::dot(now[i].data, now[i].data) < lukan::test::dot(prev[i].data, prev[i].data));
            // The normalized Adam step is about lr in size, so only entries
            // well above lr are guaranteed not to overshoot zero.
            for (std::size_t e = 0; e < now[i].data.size(); ++e)
                if (std::abs(prev[i].data[e]) > 10 * cfg.lr_init) CHECK(std::abs(now[i].data[e]) < std::abs(prev[i].data[e]));
        }
    }
}

TEST_CASE("adam: non-finite gradient aborts without side effects") {
    auto params = init_model(tiny_model());
    auto state = AdamState::for_params(params);
    auto grads = ModelParams::zeros(params.config);
    grads.w2.weight.fill(1.0);
    grads.blocks[1].ln.shift[3] = std::nan("");
    const auto before = serialize_model(params);
    try {
        adam_step(params, grads, state, TrainConfig{});
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("blocks.1.ln_shift") != std::string::npos);
    }
    CHECK(serialize_model(params) == before);
    CHECK(state.step == 0);
}

TEST_CASE("zero training steps return the initialization") {
    const auto data = tiny_dataset(1, 3);
    const auto result = train(tiny_model(), tiny_train(0), data, data);
    CHECK(serialize_model(result.params) == serialize_model(init_model(tiny_model())));
    CHECK(result.history.empty());
}

TEST_CASE("fresh model matches the zero-velocity baseline exactly") {
    const auto data = tiny_dataset(20, 3);
    const Model model(init_model(tiny_model()));
    const std::vector<int> horizons{1, 2, 4};
    CHECK(evaluate_mpjpe(model, data, horizons) == evaluate_baseline_mpjpe(data, horizons));
}

TEST_CASE("training is deterministic single-threaded") {
    const auto data = tiny_dataset(5, 3);
    const auto a = train(tiny_model(), tiny_train(30), data, {});
    const auto b = train(tiny_model(), tiny_train(30), data, {});
    CHECK(serialize_model(a.params) == serialize_model(b.params));
    CHECK(history_csv(a.history) == history_csv(b.history));
}

TEST_CASE("multi-threaded gradients agree with single-threaded ones") {
    const auto data = tiny_dataset(8, 3);
    std::mt19937_64 rng(2);
    auto params = init_model(tiny_model());
    for (auto& t : params.tensors())
        for (auto& v : t.data) v += std::normal_distribution<double>(0.0, 0.1)(rng);
    const Model model(params);
    std::vector<const Sample*> batch;
    for (std::size_t i = 0; i < 21; ++i) batch.push_back(&data[i]);
    auto g1 = ModelParams::zeros(params.config), g3 = g1;
    const double l1 = batch_gradient(model, batch, g1, 1);
    const double l3 = batch_gradient(model, batch, g3, 3);
    CHECK(l3 == doctest::Approx(l1).epsilon(1e-12));
    const auto t1 = g1.tensors();
    const auto t3 = g3.tensors();
    for (std::size_t i = 0; i < t1.size(); ++i) {
        CAPTURE(t1[i].name);
        CHECK(lukan::test::max_rel_error(t3[i].data, t1[i].data) <= 1e-10);
    }

    auto cfg = tiny_train(10);
    cfg.threads = 3;
    const auto multi = train(tiny_model(), cfg, data, {});
    const auto single = train(tiny_model(), tiny_train(10), data, {});
    const auto pm = multi.params.tensors();
    const auto ps = single.params.tensors();
    for (std::size_t i = 0; i < pm.size(); ++i) CHECK(lukan::test::max_rel_error(pm[i].data, ps[i].data) <= 1e-6);
}

TEST_CASE("batch gradient is the mean of per-sample gradients") {
    const auto data = tiny_dataset(9, 2);
    auto params = init_model(tiny_model());
    params.w2.weight.fill(0.01);
    const Model model(params);
    std::vector<const Sample*> both{&data[0], &data[1]};
    auto g = ModelParams::zeros(params.config), ga = g, gb = g;
    const double l = batch_gradient(model, both, g);
    const double la = batch_gradient(model, std::span<const Sample* const>(both).first(1), ga);
    const double lb = batch_gradient(model, std::span<const Sample* const>(both).last(1), gb);
    CHECK(l == doctest::Approx((la + lb) / 2).epsilon(1e-14));
    CHECK(g.w2.weight(3, 2) == doctest::Approx((ga.w2.weight(3, 2) + gb.w2.weight(3, 2)) / 2).epsilon(1e-12));
}

TEST_CASE("training errors") {
    CHECK_THROWS_AS(train(tiny_model(), tiny_train(5), {}, {}), DataError);
    auto cfg = tiny_train(5);
    cfg.horizons = {5};
    CHECK_THROWS_AS(train(tiny_model(), cfg, tiny_dataset(1, 1), {}), ConfigError);

    // polynomial features of astronomically large inputs overflow
    auto wild = tiny_model();
    wild.degree = 8;
    wild.input_scale = 1.0;
    auto seqs = std::vector<MotionSequence>{synth_generate(2, 40, 25.0, 1, SynthMode::Smooth)};
    for (auto& v : seqs[0].data.flat()) v *= 1e38;
    try {
        train(wild, tiny_train(5), window_dataset(seqs, 16, 4, 1), {});
        FAIL("expected divergence");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("step 0") != std::string::npos);
    }
}

TEST_CASE("smoothed loss decreases over training") {
    const auto data = tiny_dataset(30, 6);
    const auto result = train(tiny_model(), tiny_train(400), data, {});
    const auto smooth = smoothed_losses(result.history, 100);
    const std::size_t at10 = smooth.size() / 10;
    CHECK(smooth.back() < smooth[at10]);
    // and at every later checkpoint
    for (std::size_t pct = 20; pct <= 100; pct += 10) {
        const std::size_t prev = smooth.size() * (pct - 10) / 100;
        CHECK(smooth[smooth.size() * pct / 100 - 1] <= smooth[std::max<std::size_t>(prev, 1) - 1]);
    }
}

TEST_CASE("small model beats the zero-velocity baseline on sinusoids") {
    std::vector<MotionSequence> seqs;
    for (int i = 0; i < 12; ++i) seqs.push_back(synth_generate(2, 160, 25.0, 500 + i, SynthMode::Smooth));
    const auto [train_seqs, val_seqs] = split_by_name(seqs, 0.25);
    const auto train_set = window_dataset(train_seqs, 16, 4, 2);
    const auto val_set = window_dataset(val_seqs, 16, 4, 4);
    auto cfg = tiny_train(2000);
    cfg.decay_step = 1800;
    const auto result = train(tiny_model(), cfg, train_set, val_set);
    const auto& final_mpjpe = result.evals.back().mpjpe;
    REQUIRE(result.horizons.back() == 4);
    CHECK(final_mpjpe.back() < 0.5 * result.baseline_mpjpe.back());
}

TEST_CASE("smoothing and csv helpers") {
    const std::vector<HistoryEntry> h{{0, 4.0, 0.1}, {1, 2.0, 0.1}, {2, 6.0, 0.01}};
    CHECK(smoothed_losses(h, 2) == std::vector<double>{4.0, 3.0, 4.0});
    CHECK(history_csv(h) == "step,loss,lr\n0,4.0,0.1\n1,2.0,0.1\n2,6.0,0.01\n");
}

TEST_CASE("gradient check harness") {
    const auto cfg = gradcheck_config();
    CHECK(param_count(cfg) == 2222);
    const auto report = grad_check(cfg, 1);
    CHECK(report.max_rel_error() <= 1e-5);

    SUBCASE("a corrupted gradient is flagged") {
        GradCheckOptions opts;
        opts.corrupt = [](ModelParams& g) {
            for (auto& v : g.blocks[1].kan.gamma.flat()) v = -v;
        };
        const auto bad = grad_check(cfg, 1, opts);
        for (const auto& e : bad.tensors) {
            CAPTURE(e.name);
            if (e.name == "blocks.1.gamma") CHECK(e.max_rel_error > 1e-2);
            else CHECK(e.max_rel_error <= 1e-5);
        }
    }
    SUBCASE("constant basis") {
        auto c0 = cfg;
        c0.degree = 0;
        CHECK(grad_check(c0, 2).max_rel_error() <= 1e-5);
    }
}
