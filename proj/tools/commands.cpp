#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "lukan/data.hpp"
#include "lukan/error.hpp"

namespace lukan::cli {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------- config

void to_json(json& j, const RunConfig& c) {
    j = json{{"model", c.model},
             {"train", c.train},
             {"data",
              {{"dir", c.data.dir},
               {"stride", c.data.stride},
               {"val_stride", c.data.val_stride},
               {"val_fraction", c.data.val_fraction}}}};
}

namespace {

// Typos in a config file should not silently fall back to defaults.
void reject_unknown_keys(const json& given, const json& known, const std::string& where) {
    if (!given.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& item : given.items()) {
        if (!known.contains(item.key())) throw ConfigError("unknown key \"" + item.key() + "\" in " + where);
    }
}

}  // namespace

void from_json(const json& j, RunConfig& c) {
    const json defaults = RunConfig{};
    reject_unknown_keys(j, defaults, "config");
    if (j.contains("model")) {
        reject_unknown_keys(j.at("model"), defaults.at("model"), "\"model\"");
        j.at("model").get_to(c.model);
    }
    if (j.contains("train")) {
        reject_unknown_keys(j.at("train"), defaults.at("train"), "\"train\"");
        j.at("train").get_to(c.train);
    }
    if (j.contains("data")) {
        const auto& d = j.at("data");
        reject_unknown_keys(d, defaults.at("data"), "\"data\"");
        try {
            if (d.contains("dir")) d.at("dir").get_to(c.data.dir);
            if (d.contains("stride")) d.at("stride").get_to(c.data.stride);
            if (d.contains("val_stride")) d.at("val_stride").get_to(c.data.val_stride);
            if (d.contains("val_fraction")) d.at("val_fraction").get_to(c.data.val_fraction);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("data config: ") + e.what());
        }
    }
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("malformed config " + path.string() + ": " + e.what());
    }
    return j.get<RunConfig>();
}

LogLevel log_level_from_env() {
    const char* v = std::getenv("LUKAN_LOG");
    if (!v || !*v) return LogLevel::Info;
    const std::string s(v);
    if (s == "error") return LogLevel::Error;
    if (s == "info") return LogLevel::Info;
    if (s == "debug") return LogLevel::Debug;
    throw ConfigError("LUKAN_LOG must be error, info or debug (got '" + s + "')");
}

namespace {

// ---------------------------------------------------------------- helpers

struct Log {
    LogLevel level;
    std::ostream& err;

    void info(const std::string& msg) const {
        if (level != LogLevel::Error) err << msg << '\n';
    }
    void debug(const std::string& msg) const {
        if (level == LogLevel::Debug) err << msg << '\n';
    }
};

struct CommonFlags {
    std::string config;
    std::string data;
    std::string out;
    std::string basis;
    std::string encoder;
    std::uint64_t seed = 1;
    int threads = 1;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* threads_opt = nullptr;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_out = true) {
    cmd->add_option("--config", f.config, "JSON run config");
    cmd->add_option("--data", f.data, "directory of motion *.json files");
    if (with_out) cmd->add_option("--out", f.out, "output directory");
    f.seed_opt = cmd->add_option("--seed", f.seed, "model and training seed");
    cmd->add_option("--basis", f.basis, "lucas|chebyshev|legendre|hermite");
    cmd->add_option("--encoder", f.encoder, "dwt|dct");
    f.threads_opt = cmd->add_option("--threads", f.threads, "worker threads per batch");
}

RunConfig resolve(const CommonFlags& f) {
    RunConfig rc = f.config.empty() ? RunConfig{} : load_run_config(f.config);
    if (!f.data.empty()) rc.data.dir = f.data;
    if (f.seed_opt && f.seed_opt->count()) {
        rc.model.seed = f.seed;
        rc.train.seed = f.seed;
    }
    if (!f.basis.empty()) rc.model.basis = basis_from_string(f.basis);
    if (!f.encoder.empty()) rc.model.encoder = encoder_from_string(f.encoder);
    if (f.threads_opt && f.threads_opt->count()) rc.train.threads = f.threads;
    rc.model.validate();
    rc.train.validate();
    if (rc.data.stride < 1 || rc.data.val_stride < 1) throw ConfigError("data strides must be >= 1");
    if (!(rc.data.val_fraction >= 0.0 && rc.data.val_fraction < 1.0)) throw ConfigError("val_fraction must be in [0, 1)");
    return rc;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("write failed for " + path.string());
}

fs::path prepare_out_dir(const std::string& out) {
    if (out.empty()) throw ConfigError("--out is required");
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw DataError("cannot create output directory " + out + ": " + ec.message());
    return fs::path(out);
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

struct Dataset {
    std::vector<MotionSequence> train_seqs;
    std::vector<MotionSequence> val_seqs;
    std::vector<Sample> train;
    std::vector<Sample> val;
    double fps = 25.0;
};

Dataset load_dataset(const RunConfig& rc, const Log& log) {
    auto seqs = load_motion_dir(rc.data.dir);
    if (seqs.empty()) throw DataError("no motion files in " + rc.data.dir);
    Dataset ds;
    ds.fps = seqs.front().fps;
    for (const auto& s : seqs) {
        if (s.joints != rc.model.joints) {
            throw DataError(s.name + " has " + std::to_string(s.joints) + " joints but the model expects " +
                            std::to_string(rc.model.joints));
        }
        if (s.fps != ds.fps) log.info("warning: " + s.name + " has a different fps; ms columns use the first file's");
    }
    std::tie(ds.train_seqs, ds.val_seqs) = split_by_name(seqs, rc.data.val_fraction);
    const auto l = static_cast<std::size_t>(rc.model.lookback), t = static_cast<std::size_t>(rc.model.horizon);
    ds.train = window_dataset(ds.train_seqs, l, t, rc.data.stride);
    ds.val = window_dataset(ds.val_seqs, l, t, rc.data.val_stride);
    log.debug("loaded " + std::to_string(seqs.size()) + " sequences: " + std::to_string(ds.train.size()) +
              " training windows from " + std::to_string(ds.train_seqs.size()) + ", " + std::to_string(ds.val.size()) +
              " validation windows from " + std::to_string(ds.val_seqs.size()));
    return ds;
}

long to_ms(int frames, double fps) { return std::lround(frames * 1000.0 / fps); }

std::string fmt(double v, int digits = 3) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(digits) << v;
    return ss.str();
}

std::string mpjpe_table(const std::vector<int>& horizons, double fps, const std::vector<double>& model,
                        const std::vector<double>& baseline) {
    std::ostringstream ss;
    ss << "frames  ms      model_mpjpe  baseline_mpjpe\n";
    for (std::size_t i = 0; i < horizons.size(); ++i) {
        ss << std::left << std::setw(8) << horizons[i] << std::setw(8) << to_ms(horizons[i], fps) << std::setw(13)
           << fmt(model[i]) << fmt(baseline[i]) << '\n';
    }
    return ss.str();
}

json metrics_json(const std::vector<int>& horizons, double fps, const std::vector<double>& model,
                  const std::vector<double>& baseline) {
    std::vector<long> ms;
    for (int h : horizons) ms.push_back(to_ms(h, fps));
    return json{{"horizons", horizons}, {"ms", ms}, {"fps", fps}, {"mpjpe", model}, {"baseline_mpjpe", baseline}};
}

// ---------------------------------------------------------------- commands

struct SynthFlags {
    int joints = 4;
    int frames = 300;
    int count = 32;
    double fps = 25.0;
    std::string mode = "smooth";
    std::uint64_t seed = 1;
    std::string out;
};

int cmd_synth(const SynthFlags& f, std::ostream& out, const Log& log) {
    const SynthMode mode = synth_mode_from_string(f.mode);
    if (f.count < 1) throw ConfigError("--count must be >= 1");
    const fs::path dir = prepare_out_dir(f.out);
    for (int i = 0; i < f.count; ++i) {
        const std::uint64_t seed = f.seed * 1000003ull + static_cast<std::uint64_t>(i);
        auto seq = synth_generate(f.joints, f.frames, f.fps, seed, mode);
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%03d.json", f.mode.c_str(), i);
        save_motion_file(seq, dir / name);
        log.debug("wrote " + (dir / name).string());
    }
    out << "wrote " << f.count << " sequences to " << dir.string() << '\n';
    return kOk;
}

int cmd_train(const CommonFlags& f, std::ostream& out, const Log& log) {
    const RunConfig rc = resolve(f);
    const fs::path dir = prepare_out_dir(f.out);
    write_text(dir / "resolved_config.json", dump(rc));
    const Dataset ds = load_dataset(rc, log);

    const auto result = train(rc.model, rc.train, ds.train, ds.val, [&](const std::string& line) { log.info(line); });
    save_model(result.params, dir / "model.bin");
    write_text(dir / "history.csv", history_csv(result.history));
    if (!ds.val.empty()) {
        const auto& final_mpjpe = result.evals.back().mpjpe;
        write_text(dir / "metrics.json", dump(metrics_json(result.horizons, ds.fps, final_mpjpe, result.baseline_mpjpe)));
        out << mpjpe_table(result.horizons, ds.fps, final_mpjpe, result.baseline_mpjpe);
    } else {
        log.info("no validation sequences; skipped evaluation");
    }
    out << "saved " << (dir / "model.bin").string() << '\n';
    return kOk;
}

int cmd_eval(const CommonFlags& f, const std::string& model_path, const std::string& split, std::ostream& out,
             const Log& log) {
    RunConfig rc = resolve(f);
    ModelParams params = model_path.empty() ? init_model(rc.model) : load_model(model_path);
    if (model_path.empty()) log.info("no --model given; evaluating a freshly initialized model");
    rc.model = params.config;
    const Dataset ds = load_dataset(rc, log);

    std::vector<Sample> samples;
    if (split == "val") {
        samples = ds.val;
    } else if (split == "train") {
        samples = ds.train;
    } else {
        samples = ds.train;
        samples.insert(samples.end(), ds.val.begin(), ds.val.end());
    }
    if (samples.empty()) throw DataError("no windows in the '" + split + "' split");

    const auto horizons = rc.train.horizons.empty() ? default_horizons(rc.model.horizon) : rc.train.horizons;
    const Model model(std::move(params));
    const auto model_mpjpe = evaluate_mpjpe(model, samples, horizons);
    const auto base = evaluate_baseline_mpjpe(samples, horizons);
    out << mpjpe_table(horizons, ds.fps, model_mpjpe, base);
    if (!f.out.empty()) {
        const fs::path dir = prepare_out_dir(f.out);
        write_text(dir / "eval.json", dump(metrics_json(horizons, ds.fps, model_mpjpe, base)));
    }
    return kOk;
}

int cmd_predict(const std::string& model_path, const std::string& input, const std::string& output,
                std::ostream& out) {
    const Model model(load_model(model_path));
    const auto& cfg = model.config();
    const auto seq = load_motion_file(input);
    if (seq.joints != cfg.joints) {
        throw DataError(input + " has " + std::to_string(seq.joints) + " joints but the model expects " +
                        std::to_string(cfg.joints));
    }
    const auto l = static_cast<std::size_t>(cfg.lookback);
    if (seq.frames() < l) {
        throw DataError(input + " has " + std::to_string(seq.frames()) + " frames; the model needs " +
                        std::to_string(l));
    }
    Matrix history(l, seq.feature_dim());
    for (std::size_t t = 0; t < l; ++t) {
        const auto src = seq.data.row(seq.frames() - l + t);
        std::copy(src.begin(), src.end(), history.row(t).begin());
    }
    MotionSequence pred{seq.name + "_pred", seq.fps, seq.joints, model.forward(history)};
    save_motion_file(pred, output);
    out << "wrote " << pred.frames() << " predicted frames to " << output << '\n';
    return kOk;
}

int cmd_gradcheck(const CommonFlags& f, std::ostream& out) {
    ModelConfig cfg = gradcheck_config();
    if (!f.config.empty() || !f.basis.empty() || !f.encoder.empty()) cfg = resolve(f).model;
    const std::uint64_t seed = f.seed_opt && f.seed_opt->count() ? f.seed : 1;
    constexpr double threshold = 1e-4;
    const auto report = grad_check(cfg, seed);
    out << "tensor                 count  max_rel_error  max_abs_error\n";
    for (const auto& e : report.tensors) {
        char line[160];
        std::snprintf(line, sizeof(line), "%-22s %6zu  %.3e      %.3e%s\n", e.name.c_str(), e.count, e.max_rel_error,
                      e.max_abs_error, e.max_rel_error > threshold ? "  FAIL" : "");
        out << line;
    }
    char summary[96];
    std::snprintf(summary, sizeof(summary), "max relative error %.3e over %zu parameters\n", report.max_rel_error(),
                  param_count(cfg));
    out << summary;
    return report.max_rel_error() > threshold ? kCheckFailed : kOk;
}

int cmd_ablate(const CommonFlags& f, std::ostream& out, const Log& log) {
    const RunConfig rc = resolve(f);
    const fs::path dir = prepare_out_dir(f.out);
    write_text(dir / "resolved_config.json", dump(rc));
    const Dataset ds = load_dataset(rc, log);
    if (ds.val.empty()) throw DataError("ablation needs validation windows; raise val_fraction or add sequences");

    struct Row {
        EncoderKind encoder;
        BasisKind basis;
        std::size_t params;
        std::vector<double> mpjpe;
        double loss_start;
        double loss_end;
    };
    std::vector<Row> rows;
    std::vector<int> horizons;
    std::vector<double> baseline;
    for (EncoderKind enc : {EncoderKind::Dwt, EncoderKind::Dct}) {
        for (BasisKind basis : {BasisKind::Lucas, BasisKind::Chebyshev, BasisKind::Legendre, BasisKind::Hermite}) {
            ModelConfig mc = rc.model;
            mc.encoder = enc;
            mc.basis = basis;
            log.info("ablate: " + std::string(to_string(enc)) + " + " + std::string(to_string(basis)));
            const auto result = train(mc, rc.train, ds.train, ds.val, [&](const std::string& line) { log.debug(line); });
            const auto smooth = smoothed_losses(result.history, 100);
            Row row{enc, basis, param_count(mc), result.evals.back().mpjpe, 0.0, 0.0};
            if (!smooth.empty()) {
                row.loss_start = smooth[smooth.size() / 10];
                row.loss_end = smooth.back();
            }
            rows.push_back(std::move(row));
            horizons = result.horizons;
            baseline = result.baseline_mpjpe;
        }
    }

    auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return v.empty() ? 0.0 : s / static_cast<double>(v.size());
    };

    std::ostringstream md, csv;
    md << "| encoder | basis | params |";
    csv << "encoder,basis,params";
    for (int h : horizons) {
        md << ' ' << to_ms(h, ds.fps) << "ms |";
        csv << ",mpjpe_" << h << "f_" << to_ms(h, ds.fps) << "ms";
    }
    md << " avg | converged |\n|---|---|---:|";
    csv << ",avg,smoothed_loss_10pct,smoothed_loss_end,converged\n";
    for (std::size_t i = 0; i < horizons.size(); ++i) md << "---:|";
    md << "---:|:---:|\n";

    md << "| zero-velocity | - | 0 |";
    csv << "zero_velocity,-,0";
    for (double b : baseline) {
        md << ' ' << fmt(b, 1) << " |";
        csv << ',' << fmt(b, 6);
    }
    md << ' ' << fmt(mean(baseline), 1) << " | - |\n";
    csv << ',' << fmt(mean(baseline), 6) << ",,,\n";

    for (const auto& r : rows) {
        const bool converged = r.loss_end < r.loss_start;
        md << "| " << to_string(r.encoder) << " | " << to_string(r.basis) << " | " << r.params << " |";
        csv << to_string(r.encoder) << ',' << to_string(r.basis) << ',' << r.params;
        for (double m : r.mpjpe) {
            md << ' ' << fmt(m, 1) << " |";
            csv << ',' << fmt(m, 6);
        }
        md << ' ' << fmt(mean(r.mpjpe), 1) << " | " << (converged ? "yes" : "no") << " |\n";
        csv << ',' << fmt(mean(r.mpjpe), 6) << ',' << fmt(r.loss_start, 6) << ',' << fmt(r.loss_end, 6) << ','
            << (converged ? "true" : "false") << '\n';
    }
    write_text(dir / "ablation.md", md.str());
    write_text(dir / "ablation.csv", csv.str());
    out << md.str();
    return kOk;
}

}  // namespace

// ---------------------------------------------------------------- entry point

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"LuKAN motion prediction: synthesize data, train, evaluate and ablate", "lukan"};
    app.require_subcommand(1);

    SynthFlags synth_flags;
    auto* synth = app.add_subcommand("synth", "write synthetic motion sequences");
    synth->add_option("--joints", synth_flags.joints, "joints per pose");
    synth->add_option("--frames", synth_flags.frames, "frames per sequence");
    synth->add_option("--count", synth_flags.count, "number of sequences");
    synth->add_option("--fps", synth_flags.fps, "frame rate");
    synth->add_option("--mode", synth_flags.mode, "smooth|burst|const");
    synth->add_option("--seed", synth_flags.seed, "generator seed");
    synth->add_option("--out", synth_flags.out, "output directory")->required();

    CommonFlags train_flags;
    auto* train_cmd = app.add_subcommand("train", "train a model; writes model.bin, history.csv, metrics.json");
    add_common(train_cmd, train_flags);
    train_cmd->get_option("--out")->required();

    CommonFlags eval_flags;
    std::string eval_model, eval_split = "val";
    auto* eval_cmd = app.add_subcommand("eval", "MPJPE of a model against the zero-velocity baseline");
    add_common(eval_cmd, eval_flags);
    eval_cmd->add_option("--model", eval_model, "model artifact (default: fresh initialization)");
    eval_cmd->add_option("--split", eval_split, "val|train|all")
        ->check(CLI::IsMember({"val", "train", "all"}));

    std::string predict_model, predict_input, predict_out;
    auto* predict_cmd = app.add_subcommand("predict", "predict the frames following a motion file");
    predict_cmd->add_option("--model", predict_model, "model artifact")->required();
    predict_cmd->add_option("--input", predict_input, "motion JSON; its last L frames are the history")->required();
    predict_cmd->add_option("--out", predict_out, "output motion JSON")->required();

    CommonFlags grad_flags;
    auto* grad_cmd = app.add_subcommand("gradcheck", "compare analytic gradients with finite differences");
    add_common(grad_cmd, grad_flags, false);

    CommonFlags ablate_flags;
    auto* ablate_cmd = app.add_subcommand("ablate", "train every encoder x basis combination");
    add_common(ablate_cmd, ablate_flags);
    ablate_cmd->get_option("--out")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        const Log log{log_level_from_env(), err};
        if (*synth) return cmd_synth(synth_flags, out, log);
        if (*train_cmd) return cmd_train(train_flags, out, log);
        if (*eval_cmd) return cmd_eval(eval_flags, eval_model, eval_split, out, log);
        if (*predict_cmd) return cmd_predict(predict_model, predict_input, predict_out, out);
        if (*grad_cmd) return cmd_gradcheck(grad_flags, out);
        if (*ablate_cmd) return cmd_ablate(ablate_flags, out, log);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const ShapeError& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return kNumericError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kInternalError;
    }
    return kUsage;
}

}  // namespace lukan::cli
