#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lukan/data.hpp"
#include "lukan/model.hpp"

namespace lukan {

struct TrainConfig {
    int batch_size = 128;
    double lr_init = 3e-4;
    double lr_final = 1e-5;
    long decay_step = 1500;
    long total_steps = 2000;
    double weight_decay = 1e-4;  // L2-coupled: g <- g + wd * theta
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 1;
    int threads = 1;
    long eval_interval = 200;  // 0 disables intermediate evaluation
    std::vector<int> horizons; // empty: default grid clipped to T

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// lr_init before decay_step, lr_final from then on.
double lr_at(const TrainConfig& cfg, long step);

// {2, 4, 8, 10, 14, 18, 22, 25} frames (80..1000 ms at 25 fps), clipped to
// the horizon; the horizon itself is always included.
std::vector<int> default_horizons(int horizon);

struct AdamState {
    ModelParams m;
    ModelParams v;
    long step = 0;

    static AdamState for_params(const ModelParams& params);
};

// One Adam update with bias correction at lr_at(cfg, state.step). Throws
// NumericError naming the tensor if any gradient is non-finite; params and
// state are untouched in that case.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, const TrainConfig& cfg);

// Mean loss over `batch`; writes the mean gradient into `grads` (zeroed
// first). Samples are split into contiguous per-thread chunks whose partial
// sums are reduced in chunk order, so one thread is bit-reproducible.
double batch_gradient(const Model& model, std::span<const Sample* const> batch, ModelParams& grads, int threads = 1);

// Dataset-level MPJPE (mean over samples) at each 1-based horizon.
std::vector<double> evaluate_mpjpe(const Model& model, const std::vector<Sample>& samples,
                                   const std::vector<int>& horizons);
std::vector<double> evaluate_baseline_mpjpe(const std::vector<Sample>& samples, const std::vector<int>& horizons);

struct HistoryEntry {
    long step;
    double loss;
    double lr;
};

struct EvalRecord {
    long step;
    std::vector<double> mpjpe;
};

struct TrainResult {
    ModelParams params;
    std::vector<HistoryEntry> history;
    std::vector<int> horizons;
    std::vector<double> baseline_mpjpe;  // zero-velocity on the validation set
    std::vector<EvalRecord> evals;       // includes the final step
};

using TrainLogger = std::function<void(const std::string&)>;

// Throws DataError on an empty training set and NumericError (with the step
// index) if the loss diverges.
TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainLogger& log = {});

// Trailing moving average; entry i averages losses max(0, i-window+1)..i.
std::vector<double> smoothed_losses(const std::vector<HistoryEntry>& history, std::size_t window = 100);

// History as "step,loss,lr" CSV with round-trip number formatting.
std::string history_csv(const std::vector<HistoryEntry>& history);

struct GradCheckEntry {
    std::string name;
    std::size_t count = 0;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> tensors;
    double max_rel_error() const;
};

struct GradCheckOptions {
    double step = 1e-6;
    // Applied to the analytic gradient before comparison (mutation tests).
    std::function<void(ModelParams&)> corrupt;
};

// The small configuration used by gradcheck: J=2, L=16, T=4, D=8, B=2, R=3,
// db4 with 2 levels.
ModelConfig gradcheck_config();

// Compares the analytic loss gradient against central differences on one
// random unit-scale sample. Every tensor (W2 and LN shift included) is
// randomized so no block sits at a zero-gradient fixed point. Per element
// the relative error is |a - f| / max(|a|, |f|, 1e-3 * max_j |f_j|), the
// floor scaled to the tensor's largest finite-difference entry.
GradCheckReport grad_check(const ModelConfig& model_cfg, std::uint64_t seed, const GradCheckOptions& options = {});

}  // namespace lukan
