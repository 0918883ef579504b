#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "lukan/matrix.hpp"
#include "lukan/nn.hpp"
#include "lukan/polybasis.hpp"
#include "lukan/transform.hpp"

namespace lukan {

// Optional input conditioning. With LastPose the window is re-expressed
// relative to its final frame and divided by input_scale (mm) before the
// encoder; the network output is multiplied back by input_scale. None with
// input_scale = 1 is the plain forward pass.
enum class InputCentering { None, LastPose };

std::string_view to_string(InputCentering centering);
InputCentering centering_from_string(std::string_view name);

struct ModelConfig {
    int joints = 4;
    int lookback = 50;  // L
    int horizon = 10;   // T
    int embed_dim = 32; // D
    int blocks = 4;     // B
    int degree = 3;     // R
    BasisKind basis = BasisKind::Lucas;
    EncoderKind encoder = EncoderKind::Dwt;
    int wavelet_vanishing_moments = 4;
    int wavelet_levels = 3;
    bool squash_input = true;
    InputCentering centering = InputCentering::None;
    double input_scale = 1.0;
    double layernorm_epsilon = 1e-5;
    std::uint64_t seed = 1;

    std::size_t feature_dim() const { return 3 * static_cast<std::size_t>(joints); }  // K
    // N: L_a + L_d for DWT, L for DCT.
    std::size_t encoded_length() const;
    WaveletSpec wavelet() const;
    // Throws ConfigError.
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
// Missing keys keep their defaults; unknown basis/encoder names throw ConfigError.
void from_json(const nlohmann::json& j, ModelConfig& c);

struct Block {
    KanLayerParams kan;
    LayerNormParams ln;
};

template <typename Span>
struct BasicNamedTensor {
    std::string name;
    std::vector<std::size_t> shape;
    Span data;
};
using NamedTensor = BasicNamedTensor<std::span<double>>;
using ConstNamedTensor = BasicNamedTensor<std::span<const double>>;

struct ModelParams {
    ModelConfig config;
    LinearParams w1;  // K -> D
    std::vector<Block> blocks;
    LinearParams w2;  // D -> K

    // Zero tensors shaped for `config` (used for gradient buffers).
    static ModelParams zeros(const ModelConfig& config);

    // Fixed order: w1.weight, w1.bias, blocks.<i>.{gamma,ln_gain,ln_shift}, w2.weight, w2.bias.
    std::vector<NamedTensor> tensors();
    std::vector<ConstNamedTensor> tensors() const;
    std::size_t scalar_count() const;

    void set_zero();
    void add(const ModelParams& other);
    void scale(double factor);
};

// W1 Xavier-uniform, gamma ~ N(0, (1/(sqrt(N)(R+1)))^2), LN gain 1 / shift 0,
// W2 and both biases zero. Deterministic in config.seed.
ModelParams init_model(const ModelConfig& config);

// (K*D + D) + B*(N^2*(R+1) + 2N) + (D*K + K)
std::size_t param_count(const ModelConfig& config);

struct ForwardCache {
    Matrix encoded;                   // N x K
    std::vector<Matrix> block_inputs; // B entries, N x D
    std::vector<BlockCache> blocks;
    Matrix z2;                        // N x D
};

// Network bound to its temporal encoder, which is built once.
class Model {
public:
    explicit Model(ModelParams params);

    const ModelParams& params() const { return params_; }
    ModelParams& params() { return params_; }
    const ModelConfig& config() const { return params_.config; }
    const TemporalEncoder& encoder() const { return encoder_; }

    // history: L x K -> prediction T x K. Throws NumericError naming the
    // block when an intermediate goes non-finite.
    Matrix forward(const Matrix& history, ForwardCache* cache = nullptr) const;

    // Accumulates parameter gradients for d(loss)/d(prediction) into grads.
    void backward(const ForwardCache& cache, const Matrix& dprediction, ModelParams& grads) const;

private:
    ModelParams params_;
    TemporalEncoder encoder_;
};

// Convenience: builds the encoder on every call.
Matrix forward(const ModelParams& params, const Matrix& history);

// (1/T) sum_t ( ||x_t - xhat_t|| + ||v_t - vhat_t|| ), norms over the whole
// K-vector, with v_{L+1} anchored at the observed last pose for both.
double motion_loss(const Matrix& prediction, const Matrix& target, std::span<const double> last_observed);

// Same loss; also writes d(loss)/d(prediction). A zero residual norm gets
// the zero subgradient.
double motion_loss_grad(const Matrix& prediction, const Matrix& target, std::span<const double> last_observed,
                        Matrix& dprediction);

// Mean over joints of the Euclidean joint error at 1-based frame `frame`.
double mpjpe(const Matrix& prediction, const Matrix& target, std::size_t frame);

// Binary artifact, all integers and floats little-endian:
//   "LUKANMDL" | u32 format_version | u32 n | n bytes config JSON
//   u32 tensor_count, then per tensor:
//   u32 name_len | name | u32 rank | u64 dims[rank] | f64 data[prod(dims)]
inline constexpr std::uint32_t kModelFormatVersion = 1;

void save_model(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_model(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_model(const ModelParams& params);
ModelParams deserialize_model(std::span<const std::uint8_t> bytes);

}  // namespace lukan
