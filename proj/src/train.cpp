#include "lukan/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <thread>

#include "lukan/error.hpp"

namespace lukan {

using nlohmann::json;

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("invalid train config: " + msg); };
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (!(lr_final > 0.0 && lr_final <= lr_init)) fail("need 0 < lr_final <= lr_init");
    if (decay_step < 0) fail("decay_step must be >= 0");
    if (total_steps < 0) fail("total_steps must be >= 0");
    if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
    if (!(beta1 > 0.0 && beta1 < 1.0)) fail("beta1 must be in (0, 1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) fail("beta2 must be in (0, 1)");
    if (!(epsilon > 0.0)) fail("epsilon must be > 0");
    if (threads < 1) fail("threads must be >= 1");
    if (eval_interval < 0) fail("eval_interval must be >= 0");
    for (int h : horizons)
        if (h < 1) fail("horizons must be >= 1");
}

void to_json(json& j, const TrainConfig& c) {
    j = json{{"batch_size", c.batch_size},
             {"lr_init", c.lr_init},
             {"lr_final", c.lr_final},
             {"decay_step", c.decay_step},
             {"total_steps", c.total_steps},
             {"weight_decay", c.weight_decay},
             {"weight_decay_mode", "l2"},
             {"adam_beta1", c.beta1},
             {"adam_beta2", c.beta2},
             {"adam_epsilon", c.epsilon},
             {"train_seed", c.seed},
             {"threads", c.threads},
             {"eval_interval", c.eval_interval},
             {"horizons", c.horizons}};
}

void from_json(const json& j, TrainConfig& c) {
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    try {
        get("batch_size", c.batch_size);
        get("lr_init", c.lr_init);
        get("lr_final", c.lr_final);
        get("decay_step", c.decay_step);
        get("total_steps", c.total_steps);
        get("weight_decay", c.weight_decay);
        get("adam_beta1", c.beta1);
        get("adam_beta2", c.beta2);
        get("adam_epsilon", c.epsilon);
        get("train_seed", c.seed);
        get("threads", c.threads);
        get("eval_interval", c.eval_interval);
        get("horizons", c.horizons);
        if (j.contains("weight_decay_mode") && j.at("weight_decay_mode").get<std::string>() != "l2") {
            throw ConfigError("only weight_decay_mode \"l2\" is supported");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
}

double lr_at(const TrainConfig& cfg, long step) { return step < cfg.decay_step ? cfg.lr_init : cfg.lr_final; }

std::vector<int> default_horizons(int horizon) {
    std::vector<int> out;
    for (int h : {2, 4, 8, 10, 14, 18, 22, 25})
        if (h <= horizon) out.push_back(h);
    if (out.empty() || out.back() != horizon) out.push_back(horizon);
    return out;
}

// ---------------------------------------------------------------- Adam

AdamState AdamState::for_params(const ModelParams& params) {
    return {ModelParams::zeros(params.config), ModelParams::zeros(params.config), 0};
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, const TrainConfig& cfg) {
    const auto grad_tensors = grads.tensors();
    for (const auto& g : grad_tensors) {
        for (double v : g.data)
            if (!std::isfinite(v)) throw NumericError("non-finite gradient in tensor " + g.name);
    }
    auto param_tensors = params.tensors();
    auto m_tensors = state.m.tensors();
    auto v_tensors = state.v.tensors();
    if (param_tensors.size() != grad_tensors.size() || m_tensors.size() != grad_tensors.size()) {
        throw ShapeError("adam_step: parameter/gradient/state layouts differ");
    }

    const double lr = lr_at(cfg, state.step);
    const long t = state.step + 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < param_tensors.size(); ++i) {
        auto theta = param_tensors[i].data;
        const auto g = grad_tensors[i].data;
        auto m = m_tensors[i].data;
        auto v = v_tensors[i].data;
        if (theta.size() != g.size()) throw ShapeError("adam_step: size mismatch in " + param_tensors[i].name);
        for (std::size_t e = 0; e < theta.size(); ++e) {
            const double ge = g[e] + cfg.weight_decay * theta[e];
            m[e] = cfg.beta1 * m[e] + (1.0 - cfg.beta1) * ge;
            v[e] = cfg.beta2 * v[e] + (1.0 - cfg.beta2) * ge * ge;
            const double m_hat = m[e] / bc1;
            const double v_hat = v[e] / bc2;
            theta[e] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
        }
    }
    state.step = t;
}

// ---------------------------------------------------------------- gradients

namespace {

double chunk_gradient(const Model& model, std::span<const Sample* const> chunk, ModelParams& grads) {
    ForwardCache cache;
    Matrix dpred;
    double loss = 0.0;
    for (const Sample* s : chunk) {
        const Matrix pred = model.forward(s->history, &cache);
        loss += motion_loss_grad(pred, s->target, s->history.row(s->history.rows() - 1), dpred);
        model.backward(cache, dpred, grads);
    }
    return loss;
}

}  // namespace

double batch_gradient(const Model& model, std::span<const Sample* const> batch, ModelParams& grads, int threads) {
    if (batch.empty()) throw DataError("batch_gradient: empty batch");
    grads.set_zero();
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), batch.size());

    double loss = 0.0;
    if (workers == 1) {
        loss = chunk_gradient(model, batch, grads);
    } else {
        const std::size_t per = (batch.size() + workers - 1) / workers;
        std::vector<ModelParams> partial(workers, ModelParams::zeros(model.config()));
        std::vector<double> partial_loss(workers, 0.0);
        std::vector<std::exception_ptr> errors(workers);
        {
            std::vector<std::jthread> pool;
            for (std::size_t w = 0; w < workers; ++w) {
                const std::size_t begin = std::min(batch.size(), w * per);
                const std::size_t end = std::min(batch.size(), begin + per);
                pool.emplace_back([&, w, begin, end] {
                    try {
                        partial_loss[w] = chunk_gradient(model, batch.subspan(begin, end - begin), partial[w]);
                    } catch (...) {
                        errors[w] = std::current_exception();
                    }
                });
            }
        }
        for (const auto& e : errors)
            if (e) std::rethrow_exception(e);
        for (std::size_t w = 0; w < workers; ++w) {
            grads.add(partial[w]);
            loss += partial_loss[w];
        }
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    grads.scale(inv);
    return loss * inv;
}

// ---------------------------------------------------------------- evaluation

std::vector<double> evaluate_mpjpe(const Model& model, const std::vector<Sample>& samples,
                                   const std::vector<int>& horizons) {
    std::vector<double> out(horizons.size(), 0.0);
    if (samples.empty()) return out;
    for (const auto& s : samples) {
        const Matrix pred = model.forward(s.history);
        for (std::size_t h = 0; h < horizons.size(); ++h) out[h] += mpjpe(pred, s.target, static_cast<std::size_t>(horizons[h]));
    }
    for (auto& v : out) v /= static_cast<double>(samples.size());
    return out;
}

std::vector<double> evaluate_baseline_mpjpe(const std::vector<Sample>& samples, const std::vector<int>& horizons) {
    std::vector<double> out(horizons.size(), 0.0);
    if (samples.empty()) return out;
    for (const auto& s : samples) {
        const Matrix pred = zero_velocity_baseline(s.history, s.target.rows());
        for (std::size_t h = 0; h < horizons.size(); ++h) out[h] += mpjpe(pred, s.target, static_cast<std::size_t>(horizons[h]));
    }
    for (auto& v : out) v /= static_cast<double>(samples.size());
    return out;
}

// ---------------------------------------------------------------- training loop

namespace {

std::string format_eval_line(long step, double lr, double loss, const std::vector<int>& horizons,
                             const std::vector<double>& mpjpe_values) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "step %ld lr %.3e loss %.4f", step, lr, loss);
    std::string line = buf;
    for (std::size_t h = 0; h < horizons.size(); ++h) {
        std::snprintf(buf, sizeof(buf), " mpjpe@%d=%.3f", horizons[h], mpjpe_values[h]);
        line += buf;
    }
    return line;
}

}  // namespace

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainLogger& log) {
    model_cfg.validate();
    train_cfg.validate();
    if (train_set.empty()) {
        throw DataError("empty training set: no sequence is long enough for lookback " +
                        std::to_string(model_cfg.lookback) + " + horizon " + std::to_string(model_cfg.horizon));
    }

    TrainResult result;
    result.horizons = train_cfg.horizons.empty() ? default_horizons(model_cfg.horizon) : train_cfg.horizons;
    for (int h : result.horizons) {
        if (h > model_cfg.horizon) throw ConfigError("evaluation horizon " + std::to_string(h) + " exceeds T");
    }

    Model model(init_model(model_cfg));
    AdamState state = AdamState::for_params(model.params());
    ModelParams grads = ModelParams::zeros(model_cfg);
    if (!val_set.empty()) result.baseline_mpjpe = evaluate_baseline_mpjpe(val_set, result.horizons);

    std::mt19937_64 rng(train_cfg.seed);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size();  // forces a shuffle on first use

    std::vector<const Sample*> batch;
    batch.reserve(static_cast<std::size_t>(train_cfg.batch_size));
    result.history.reserve(static_cast<std::size_t>(train_cfg.total_steps));

    for (long step = 0; step < train_cfg.total_steps; ++step) {
        batch.clear();
        const std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(train_cfg.batch_size), order.size());
        while (batch.size() < want) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            batch.push_back(&train_set[order[cursor++]]);
        }

        double loss = 0.0;
        try {
            loss = batch_gradient(model, batch, grads, train_cfg.threads);
        } catch (const NumericError& e) {
            throw NumericError("training diverged at step " + std::to_string(step) + ": " + e.what());
        }
        if (!std::isfinite(loss)) throw NumericError("training diverged at step " + std::to_string(step) + ": loss is non-finite");

        const double lr = lr_at(train_cfg, state.step);
        try {
            adam_step(model.params(), grads, state, train_cfg);
        } catch (const NumericError& e) {
            throw NumericError("training diverged at step " + std::to_string(step) + ": " + e.what());
        }
        result.history.push_back({step, loss, lr});

        const bool last = step + 1 == train_cfg.total_steps;
        const bool periodic = train_cfg.eval_interval > 0 && (step + 1) % train_cfg.eval_interval == 0;
        if (!val_set.empty() && (last || periodic)) {
            EvalRecord rec{step + 1, evaluate_mpjpe(model, val_set, result.horizons)};
            if (log) log(format_eval_line(step + 1, lr, loss, result.horizons, rec.mpjpe));
            result.evals.push_back(std::move(rec));
        } else if (log && (last || periodic)) {
            log(format_eval_line(step + 1, lr, loss, {}, {}));
        }
    }
    result.params = std::move(model.params());
    return result;
}

std::vector<double> smoothed_losses(const std::vector<HistoryEntry>& history, std::size_t window) {
    std::vector<double> out(history.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < history.size(); ++i) {
        sum += history[i].loss;
        if (i >= window) sum -= history[i - window].loss;
        out[i] = sum / static_cast<double>(std::min(i + 1, window));
    }
    return out;
}

std::string history_csv(const std::vector<HistoryEntry>& history) {
    std::string out = "step,loss,lr\n";
    for (const auto& h : history) {
        out += std::to_string(h.step) + "," + json(h.loss).dump() + "," + json(h.lr).dump() + "\n";
    }
    return out;
}

// ---------------------------------------------------------------- gradient check

double GradCheckReport::max_rel_error() const {
    double m = 0.0;
    for (const auto& t : tensors) m = std::max(m, t.max_rel_error);
    return m;
}

ModelConfig gradcheck_config() {
    ModelConfig c;
    c.joints = 2;
    c.lookback = 16;
    c.horizon = 4;
    c.embed_dim = 8;
    c.blocks = 2;
    c.degree = 3;
    c.wavelet_levels = 2;
    return c;
}

GradCheckReport grad_check(const ModelConfig& model_cfg, std::uint64_t seed, const GradCheckOptions& options) {
    ModelConfig cfg = model_cfg;
    cfg.seed = seed;
    ModelParams params = init_model(cfg);

    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& w : params.w1.bias) w = 0.1 * gauss(rng);
    for (auto& w : params.w2.weight.flat()) w = 0.3 * gauss(rng);
    for (auto& w : params.w2.bias) w = 0.1 * gauss(rng);
    for (auto& blk : params.blocks) {
        for (auto& g : blk.ln.gain) g = 1.0 + 0.2 * gauss(rng);
        for (auto& s : blk.ln.shift) s = 0.2 * gauss(rng);
    }

    const auto l = static_cast<std::size_t>(cfg.lookback);
    const auto t_out = static_cast<std::size_t>(cfg.horizon);
    const std::size_t k = cfg.feature_dim();
    Sample sample{Matrix(l, k), Matrix(t_out, k), "gradcheck", 0};
    for (auto& v : sample.history.flat()) v = gauss(rng);
    for (auto& v : sample.target.flat()) v = gauss(rng);
    const auto last = sample.history.row(l - 1);

    Model model(params);
    ForwardCache cache;
    Matrix dpred;
    const Matrix pred = model.forward(sample.history, &cache);
    motion_loss_grad(pred, sample.target, last, dpred);
    ModelParams analytic = ModelParams::zeros(cfg);
    model.backward(cache, dpred, analytic);
    if (options.corrupt) options.corrupt(analytic);

    auto loss_at = [&](const Model& m) { return motion_loss(m.forward(sample.history), sample.target, last); };

    GradCheckReport report;
    auto param_tensors = model.params().tensors();
    const auto analytic_tensors = analytic.tensors();
    for (std::size_t ti = 0; ti < param_tensors.size(); ++ti) {
        auto data = param_tensors[ti].data;
        std::vector<double> numeric(data.size());
        for (std::size_t e = 0; e < data.size(); ++e) {
            const double saved = data[e];
            data[e] = saved + options.step;
            const double up = loss_at(model);
            data[e] = saved - options.step;
            const double down = loss_at(model);
            data[e] = saved;
            numeric[e] = (up - down) / (2.0 * options.step);
        }
        double scale = 0.0;
        for (double v : numeric) scale = std::max(scale, std::abs(v));
        const double floor = std::max(1e-3 * scale, 1e-12);

        GradCheckEntry entry{param_tensors[ti].name, data.size(), 0.0, 0.0};
        for (std::size_t e = 0; e < data.size(); ++e) {
            const double a = analytic_tensors[ti].data[e];
            const double diff = std::abs(a - numeric[e]);
            const double denom = std::max({std::abs(a), std::abs(numeric[e]), floor});
            entry.max_abs_error = std::max(entry.max_abs_error, diff);
            entry.max_rel_error = std::max(entry.max_rel_error, diff / denom);
        }
        report.tensors.push_back(std::move(entry));
    }
    return report;
}

}  // namespace lukan
