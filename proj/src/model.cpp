#include "lukan/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "lukan/error.hpp"

namespace lukan {

using nlohmann::json;

// ---------------------------------------------------------------- config

std::size_t ModelConfig::encoded_length() const {
    if (encoder == EncoderKind::Dct) return static_cast<std::size_t>(lookback);
    return dwt_layout(wavelet(), static_cast<std::size_t>(lookback)).flat_size();
}

std::string_view to_string(InputCentering centering) {
    return centering == InputCentering::LastPose ? "last_pose" : "none";
}

InputCentering centering_from_string(std::string_view name) {
    if (name == "none") return InputCentering::None;
    if (name == "last_pose") return InputCentering::LastPose;
    throw ConfigError("unknown input centering '" + std::string(name) + "' (expected none|last_pose)");
}

WaveletSpec ModelConfig::wavelet() const { return WaveletSpec::daubechies(wavelet_vanishing_moments, wavelet_levels); }

void ModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("invalid model config: " + msg); };
    if (joints < 1) fail("joints must be >= 1");
    if (horizon < 1) fail("horizon must be >= 1");
    if (lookback < 2) fail("lookback must be >= 2");
    if (horizon > lookback) fail("horizon must not exceed lookback (prediction takes the first T rows of an L-row output)");
    if (embed_dim < 1) fail("embed_dim must be >= 1");
    if (blocks < 0) fail("blocks must be >= 0");
    if (degree < 0) fail("degree must be >= 0");
    if (!(layernorm_epsilon > 0.0)) fail("layernorm_epsilon must be > 0");
    if (!(input_scale > 0.0) || !std::isfinite(input_scale)) fail("input_scale must be positive and finite");
    if (encoder == EncoderKind::Dwt) {
        const WaveletSpec spec = wavelet();  // validates moments/levels
        if (lookback < (1 << spec.levels)) {
            fail("lookback " + std::to_string(lookback) + " too short for " + std::to_string(spec.levels) +
                 " wavelet levels");
        }
    }
}

void to_json(json& j, const ModelConfig& c) {
    j = json{{"joints", c.joints},
             {"lookback", c.lookback},
             {"horizon", c.horizon},
             {"embed_dim", c.embed_dim},
             {"blocks", c.blocks},
             {"degree", c.degree},
             {"basis", std::string(to_string(c.basis))},
             {"hermite_convention", "physicists"},
             {"temporal_encoder", std::string(to_string(c.encoder))},
             {"wavelet_vanishing_moments", c.wavelet_vanishing_moments},
             {"wavelet_levels", c.wavelet_levels},
             {"wavelet_boundary", "periodized+edge_pad"},
             {"coefficient_order", "approx,coarse..fine"},
             {"squash_input", c.squash_input},
             {"input_centering", std::string(to_string(c.centering))},
             {"input_scale", c.input_scale},
             {"layernorm_epsilon", c.layernorm_epsilon},
             {"seed", c.seed}};
}

void from_json(const json& j, ModelConfig& c) {
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    try {
        get("joints", c.joints);
        get("lookback", c.lookback);
        get("horizon", c.horizon);
        get("embed_dim", c.embed_dim);
        get("blocks", c.blocks);
        get("degree", c.degree);
        get("wavelet_vanishing_moments", c.wavelet_vanishing_moments);
        get("wavelet_levels", c.wavelet_levels);
        get("squash_input", c.squash_input);
        get("input_scale", c.input_scale);
        get("layernorm_epsilon", c.layernorm_epsilon);
        get("seed", c.seed);
        if (j.contains("basis")) c.basis = basis_from_string(j.at("basis").get<std::string>());
        if (j.contains("temporal_encoder")) c.encoder = encoder_from_string(j.at("temporal_encoder").get<std::string>());
        if (j.contains("input_centering")) c.centering = centering_from_string(j.at("input_centering").get<std::string>());
        if (j.contains("hermite_convention") && j.at("hermite_convention").get<std::string>() != "physicists") {
            throw ConfigError("only the physicists' Hermite convention is supported");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
}

// ---------------------------------------------------------------- params

ModelParams ModelParams::zeros(const ModelConfig& config) {
    config.validate();
    const std::size_t k = config.feature_dim();
    const auto d = static_cast<std::size_t>(config.embed_dim);
    const std::size_t n = config.encoded_length();
    ModelParams p;
    p.config = config;
    p.w1 = LinearParams::zeros(k, d);
    p.blocks.reserve(static_cast<std::size_t>(config.blocks));
    for (int b = 0; b < config.blocks; ++b) {
        p.blocks.push_back({KanLayerParams::zeros(n, config.degree, config.basis, config.squash_input),
                            LayerNormParams::zeros(n, config.layernorm_epsilon)});
    }
    p.w2 = LinearParams::zeros(d, k);
    return p;
}

namespace {

template <typename Tensor, typename Self>
std::vector<Tensor> collect_tensors(Self& self) {
    std::vector<Tensor> out;
    out.push_back({"w1.weight", {self.w1.weight.rows(), self.w1.weight.cols()}, self.w1.weight.flat()});
    out.push_back({"w1.bias", {self.w1.bias.size()}, self.w1.bias});
    for (std::size_t b = 0; b < self.blocks.size(); ++b) {
        auto& blk = self.blocks[b];
        const std::string prefix = "blocks." + std::to_string(b) + ".";
        out.push_back({prefix + "gamma", {blk.kan.size(), blk.kan.size(), blk.kan.terms()}, blk.kan.gamma.flat()});
        out.push_back({prefix + "ln_gain", {blk.ln.gain.size()}, blk.ln.gain});
        out.push_back({prefix + "ln_shift", {blk.ln.shift.size()}, blk.ln.shift});
    }
    out.push_back({"w2.weight", {self.w2.weight.rows(), self.w2.weight.cols()}, self.w2.weight.flat()});
    out.push_back({"w2.bias", {self.w2.bias.size()}, self.w2.bias});
    return out;
}

}  // namespace

std::vector<NamedTensor> ModelParams::tensors() { return collect_tensors<NamedTensor>(*this); }

std::vector<ConstNamedTensor> ModelParams::tensors() const { return collect_tensors<ConstNamedTensor>(*this); }

std::size_t ModelParams::scalar_count() const {
    std::size_t n = w1.weight.size() + w1.bias.size() + w2.weight.size() + w2.bias.size();
    for (const auto& blk : blocks) n += blk.kan.gamma.size() + blk.ln.gain.size() + blk.ln.shift.size();
    return n;
}

void ModelParams::set_zero() {
    for (auto& t : tensors()) std::fill(t.data.begin(), t.data.end(), 0.0);
}

void ModelParams::add(const ModelParams& other) {
    auto mine = tensors();
    const auto theirs = other.tensors();
    if (mine.size() != theirs.size()) throw ShapeError("ModelParams::add: tensor count mismatch");
    for (std::size_t i = 0; i < mine.size(); ++i) {
        if (mine[i].data.size() != theirs[i].data.size()) throw ShapeError("ModelParams::add: " + mine[i].name);
        for (std::size_t e = 0; e < mine[i].data.size(); ++e) mine[i].data[e] += theirs[i].data[e];
    }
}

void ModelParams::scale(double factor) {
    for (auto& t : tensors())
        for (auto& v : t.data) v *= factor;
}

ModelParams init_model(const ModelConfig& config) {
    ModelParams p = ModelParams::zeros(config);
    std::mt19937_64 rng(config.seed);

    const auto k = static_cast<double>(config.feature_dim());
    const auto d = static_cast<double>(config.embed_dim);
    const double bound = std::sqrt(6.0 / (k + d));
    std::uniform_real_distribution<double> xavier(-bound, bound);
    for (auto& w : p.w1.weight.flat()) w = xavier(rng);

    const auto n = static_cast<double>(config.encoded_length());
    const double sigma = 1.0 / (std::sqrt(n) * static_cast<double>(config.degree + 1));
    std::normal_distribution<double> gauss(0.0, sigma);
    for (auto& blk : p.blocks) {
        for (auto& g : blk.kan.gamma.flat()) g = gauss(rng);
        std::fill(blk.ln.gain.begin(), blk.ln.gain.end(), 1.0);
    }
    return p;
}

std::size_t param_count(const ModelConfig& config) {
    const std::size_t k = config.feature_dim();
    const auto d = static_cast<std::size_t>(config.embed_dim);
    const std::size_t n = config.encoded_length();
    const auto r1 = static_cast<std::size_t>(config.degree) + 1;
    const auto b = static_cast<std::size_t>(config.blocks);
    return (k * d + d) + b * (n * n * r1 + 2 * n) + (d * k + k);
}

// ---------------------------------------------------------------- network

namespace {

TemporalEncoder encoder_for(const ModelConfig& config) {
    config.validate();
    const WaveletSpec spec = config.encoder == EncoderKind::Dwt ? config.wavelet() : WaveletSpec{};
    return build_encoder(config.encoder, spec, static_cast<std::size_t>(config.lookback));
}

}  // namespace

Model::Model(ModelParams params) : params_(std::move(params)), encoder_(encoder_for(params_.config)) {
    if (params_.scalar_count() != param_count(params_.config)) {
        throw ShapeError("model parameters do not match their config");
    }
}

Matrix Model::forward(const Matrix& history, ForwardCache* cache) const {
    const ModelConfig& cfg = params_.config;
    const auto l = static_cast<std::size_t>(cfg.lookback);
    const auto t_out = static_cast<std::size_t>(cfg.horizon);
    require_shape(history, l, cfg.feature_dim(), "model input");
    if (!history.all_finite()) throw NumericError("model input contains non-finite values");

    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    const auto last = history.row(l - 1);
    if (cfg.centering == InputCentering::None && cfg.input_scale == 1.0) {
        c.encoded = encoder_.encode_columns(history);
    } else {
        Matrix conditioned = history;
        const bool center = cfg.centering == InputCentering::LastPose;
        for (std::size_t t = 0; t < l; ++t) {
            auto row = conditioned.row(t);
            for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - (center ? last[j] : 0.0)) / cfg.input_scale;
        }
        c.encoded = encoder_.encode_columns(conditioned);
    }
    Matrix z = linear_forward(c.encoded, params_.w1);
    if (!z.all_finite()) throw NumericError("non-finite activation after input projection");

    c.block_inputs.resize(params_.blocks.size());
    c.blocks.resize(params_.blocks.size());
    for (std::size_t b = 0; b < params_.blocks.size(); ++b) {
        c.block_inputs[b] = z;
        try {
            z = block_forward(z, params_.blocks[b].kan, params_.blocks[b].ln, &c.blocks[b]);
        } catch (const NumericError& e) {
            throw NumericError("block " + std::to_string(b) + ": " + e.what());
        }
        if (!z.all_finite()) throw NumericError("block " + std::to_string(b) + ": non-finite output");
    }
    c.z2 = z;

    const Matrix z3 = encoder_.decode_columns(linear_forward(z, params_.w2));
    Matrix pred(t_out, cfg.feature_dim());
    for (std::size_t t = 0; t < t_out; ++t) {
        const auto src = z3.row(t);
        auto dst = pred.row(t);
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = cfg.input_scale * src[j] + last[j];
    }
    if (!pred.all_finite()) throw NumericError("non-finite prediction");
    return pred;
}

void Model::backward(const ForwardCache& cache, const Matrix& dprediction, ModelParams& grads) const {
    const ModelConfig& cfg = params_.config;
    const auto l = static_cast<std::size_t>(cfg.lookback);
    require_shape(dprediction, static_cast<std::size_t>(cfg.horizon), cfg.feature_dim(), "dprediction");

    Matrix dz3(l, cfg.feature_dim());
    std::transform(dprediction.data(), dprediction.data() + dprediction.size(), dz3.data(),
                   [&](double g) { return cfg.input_scale * g; });
    const Matrix dy = matmul_tn(encoder_.inverse_matrix(), dz3);  // N x K

    Matrix dz = linear_backward(cache.z2, params_.w2, dy, grads.w2);
    for (std::size_t b = params_.blocks.size(); b-- > 0;) {
        dz = block_backward(cache.blocks[b], params_.blocks[b].kan, params_.blocks[b].ln, dz, grads.blocks[b].kan,
                            grads.blocks[b].ln);
    }
    // The input cotangent of the first projection is not needed.
    matmul_tn_acc(cache.encoded, dz, grads.w1.weight);
    for (std::size_t i = 0; i < dz.rows(); ++i) {
        const auto row = dz.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) grads.w1.bias[j] += row[j];
    }
}

Matrix forward(const ModelParams& params, const Matrix& history) { return Model(params).forward(history); }

// ---------------------------------------------------------------- loss / metric

namespace {

void check_loss_shapes(const Matrix& prediction, const Matrix& target, std::span<const double> last_observed) {
    require_shape(target, prediction.rows(), prediction.cols(), "loss target");
    if (last_observed.size() != prediction.cols()) throw ShapeError("loss: last_observed length mismatch");
    if (prediction.rows() < 1) throw ShapeError("loss: empty prediction");
}

}  // namespace

double motion_loss(const Matrix& prediction, const Matrix& target, std::span<const double> last_observed) {
    Matrix unused;
    return motion_loss_grad(prediction, target, last_observed, unused);
}

double motion_loss_grad(const Matrix& prediction, const Matrix& target, std::span<const double> last_observed,
                        Matrix& dprediction) {
    check_loss_shapes(prediction, target, last_observed);
    const std::size_t t_out = prediction.rows();
    const std::size_t k = prediction.cols();
    const double inv_t = 1.0 / static_cast<double>(t_out);
    dprediction = Matrix(t_out, k);

    std::vector<double> pos(k), vel(k);
    double total = 0.0;
    for (std::size_t t = 0; t < t_out; ++t) {
        const auto x = target.row(t), xh = prediction.row(t);
        const auto x_prev = t == 0 ? last_observed : target.row(t - 1);
        const auto xh_prev = t == 0 ? last_observed : prediction.row(t - 1);
        double pos_sq = 0.0, vel_sq = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            pos[j] = xh[j] - x[j];
            vel[j] = (xh[j] - xh_prev[j]) - (x[j] - x_prev[j]);
            pos_sq += pos[j] * pos[j];
            vel_sq += vel[j] * vel[j];
        }
        const double pos_norm = std::sqrt(pos_sq), vel_norm = std::sqrt(vel_sq);
        total += pos_norm + vel_norm;

        if (pos_norm > 0.0) {
            auto g = dprediction.row(t);
            for (std::size_t j = 0; j < k; ++j) g[j] += inv_t * pos[j] / pos_norm;
        }
        if (vel_norm > 0.0) {
            auto g = dprediction.row(t);
            for (std::size_t j = 0; j < k; ++j) g[j] += inv_t * vel[j] / vel_norm;
            if (t > 0) {
                auto gp = dprediction.row(t - 1);
                for (std::size_t j = 0; j < k; ++j) gp[j] -= inv_t * vel[j] / vel_norm;
            }
        }
    }
    return total * inv_t;
}

double mpjpe(const Matrix& prediction, const Matrix& target, std::size_t frame) {
    require_shape(target, prediction.rows(), prediction.cols(), "mpjpe target");
    if (frame < 1 || frame > prediction.rows()) {
        throw ShapeError("mpjpe: frame index " + std::to_string(frame) + " out of range [1, " +
                         std::to_string(prediction.rows()) + "]");
    }
    if (prediction.cols() % 3 != 0) throw ShapeError("mpjpe: feature dimension is not a multiple of 3");
    const auto p = prediction.row(frame - 1), x = target.row(frame - 1);
    const std::size_t joints = prediction.cols() / 3;
    double sum = 0.0;
    for (std::size_t j = 0; j < joints; ++j) {
        const double dx = p[3 * j] - x[3 * j], dy = p[3 * j + 1] - x[3 * j + 1], dz = p[3 * j + 2] - x[3 * j + 2];
        sum += std::sqrt(dx * dx + dy * dy + dz * dz);
    }
    return sum / static_cast<double>(joints);
}

// ---------------------------------------------------------------- artifact

namespace {

constexpr char kMagic[8] = {'L', 'U', 'K', 'A', 'N', 'M', 'D', 'L'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    std::uint8_t bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out.insert(out.end(), bytes, bytes + sizeof(T));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        std::uint8_t raw[sizeof(T)];
        std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
        pos_ += sizeof(T);
        T value;
        std::memcpy(&value, raw, sizeof(T));
        return value;
    }

    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw DataError("model artifact truncated at byte " + std::to_string(pos_));
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_model(const ModelParams& params) {
    std::vector<std::uint8_t> out(kMagic, kMagic + sizeof(kMagic));
    put_le<std::uint32_t>(out, kModelFormatVersion);
    const std::string header = json(params.config).dump();
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
    out.insert(out.end(), header.begin(), header.end());

    const auto tensors = params.tensors();
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
        out.insert(out.end(), t.name.begin(), t.name.end());
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
        for (auto dim : t.shape) put_le<std::uint64_t>(out, dim);
        for (double v : t.data) put_le<double>(out, v);
    }
    return out;
}

ModelParams deserialize_model(std::span<const std::uint8_t> bytes) {
    Reader in(bytes);
    if (in.str(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) throw DataError("not a LuKAN model artifact");
    const auto version = in.get<std::uint32_t>();
    if (version != kModelFormatVersion) throw DataError("unsupported model format version " + std::to_string(version));

    ModelConfig config;
    try {
        from_json(json::parse(in.str(in.get<std::uint32_t>())), config);
    } catch (const json::exception& e) {
        throw DataError(std::string("model artifact header: ") + e.what());
    }
    ModelParams params = ModelParams::zeros(config);
    auto tensors = params.tensors();
    const auto count = in.get<std::uint32_t>();
    if (count != tensors.size()) throw DataError("model artifact has " + std::to_string(count) + " tensors, expected " +
                                                 std::to_string(tensors.size()));
    for (auto& t : tensors) {
        const std::string name = in.str(in.get<std::uint32_t>());
        if (name != t.name) throw DataError("model artifact: expected tensor " + t.name + ", found " + name);
        const auto rank = in.get<std::uint32_t>();
        std::vector<std::size_t> shape(rank);
        for (auto& dim : shape) dim = static_cast<std::size_t>(in.get<std::uint64_t>());
        if (shape != t.shape) throw DataError("model artifact: shape mismatch for " + name);
        for (auto& v : t.data) v = in.get<double>();
    }
    if (!in.done()) throw DataError("model artifact has trailing bytes");
    return params;
}

void save_model(const ModelParams& params, const std::filesystem::path& path) {
    const auto bytes = serialize_model(params);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + path.string());
}

ModelParams load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_model(bytes);
}

}  // namespace lukan
