#include "lukan/transform.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "lukan/error.hpp"

namespace lukan {

namespace {

// Daubechies scaling filters db1..db10 in convolution (decomposition
// lowpass) order, normalized to sum sqrt(2). Computed by spectral
// factorization with 50-digit arithmetic, minimum-phase root choice.
const std::array<std::vector<double>, 10> kDaubechiesDecLo = {{
    {0.707106781186547524401, 0.707106781186547524401},
    {-0.129409522551260381174, 0.224143868042013381026, 0.836516303737807905575, 0.482962913144534143375},
    {0.0352262918857095366027, -0.0854412738820266616928, -0.135011020010254588696, 0.459877502118491570095, 0.806891509311092576494, 0.332670552950082615999},
    {-0.0105974017850690321049, 0.0328830116668851997354, 0.0308413818355607636272, -0.18703481171909308408, -0.0279837694168598542114, 0.630880767929858907882, 0.71484657055291564709, 0.230377813308896500863},
    {0.003335725285473771278, -0.0125807519990819994685, -0.00624149021279827427419, 0.0775714938400457135231, -0.0322448695846383746485, -0.242294887066382031863, 0.138428145901320731505, 0.724308528437772927728, 0.60382926979718967054, 0.160102397974192914481},
    {-0.00107730108530847956485, 0.00477725751094551063964, 0.000553842201161496139252, -0.0315820393174860295651, 0.0275228655303057286255, 0.0975016055873230491023, -0.129766867567261935562, -0.226264693965439820076, 0.315250351709197629086, 0.751133908021095350679, 0.494623890398453085677, 0.111540743350109463621},
    {0.000353713799974520248446, -0.00180164070404749091527, 0.000429577972921366521132, 0.012550998556099840613, -0.0165745416306668806541, -0.0380299369350144135796, 0.0806126091510830719129, 0.0713092192668302647509, -0.224036184993874982638, -0.143906003928564975405, 0.469782287405193122472, 0.729132090846235119917, 0.396539319481917306539, 0.07785205408500917902},
    {-0.000117476784124769533731, 0.00067544940645056936637, -0.000391740373376947046298, -0.00487035299345157431042, 0.00874609404740577671638, 0.0139810279173982816487, -0.0440882539307947515068, -0.0173693010018075461696, 0.128747426620478458857, 0.000472484573913282770361, -0.284015542961546926516, -0.0158291052563493056674, 0.585354683654206712771, 0.675630736297289806808, 0.312871590914299970659, 0.054415842243104009955},
    {0.0000393473203162715994807, -0.000251963188942710136975, 0.000230385763523195967205, 0.00184764688305622647662, -0.0042815036824634298345, -0.00472320475775139727793, 0.0223616621236790972054, 0.000250947114831451957587, -0.0676328290613299736756, 0.0307256814793333792123, 0.148540749338106380135, -0.0968407832229764605135, -0.293273783279174908806, 0.133197385825007576191, 0.657288078051300538078, 0.604823123690111111903, 0.243834674612590353732, 0.0380779473638783465887},
    {-0.0000132642028945212448124, 0.0000935886703200695913341, -0.000116466855129285450951, -0.000685856694959711626561, 0.00199240529518505611716, 0.00139535174705290116579, -0.0107331754833305750443, 0.00360655356695616965542, 0.0332126740593410017398, -0.0294575368218758128583, -0.0713941471663970871453, 0.0930573646035723511604, 0.127369340335793260083, -0.195946274377377043504, -0.249846424327315379416, 0.281172343660577460749, 0.688459039453603565742, 0.527201188931725586482, 0.188176800077691489021, 0.0266700579005555535866},
}};

void analysis_step(const WaveletSpec& spec, std::span<const double> x, std::vector<double>& approx,
                   std::vector<double>& detail) {
    const std::size_t n = x.size();  // even
    const std::size_t half = n / 2;
    approx.assign(half, 0.0);
    detail.assign(half, 0.0);
    const std::size_t taps = spec.filter_length();
    for (std::size_t k = 0; k < half; ++k) {
        double a = 0.0, d = 0.0;
        for (std::size_t i = 0; i < taps; ++i) {
            const double v = x[(2 * k + i) % n];
            a += spec.rec_lo[i] * v;
            d += spec.rec_hi[i] * v;
        }
        approx[k] = a;
        detail[k] = d;
    }
}

std::vector<double> synthesis_step(const WaveletSpec& spec, std::span<const double> approx,
                                   std::span<const double> detail) {
    const std::size_t half = approx.size();
    const std::size_t n = 2 * half;
    std::vector<double> x(n, 0.0);
    const std::size_t taps = spec.filter_length();
    for (std::size_t k = 0; k < half; ++k)
        for (std::size_t i = 0; i < taps; ++i) x[(2 * k + i) % n] += spec.rec_lo[i] * approx[k] + spec.rec_hi[i] * detail[k];
    return x;
}

void check_length(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        throw ShapeError(std::string(what) + ": expected length " + std::to_string(want) + ", got " +
                         std::to_string(got));
    }
}

}  // namespace

WaveletSpec WaveletSpec::daubechies(int vanishing_moments, int levels) {
    if (vanishing_moments < 1 || vanishing_moments > static_cast<int>(kDaubechiesDecLo.size())) {
        throw ConfigError("wavelet_vanishing_moments must be in [1, 10], got " + std::to_string(vanishing_moments));
    }
    if (levels < 1) throw ConfigError("wavelet_levels must be >= 1, got " + std::to_string(levels));
    WaveletSpec spec;
    spec.vanishing_moments = vanishing_moments;
    spec.levels = levels;
    spec.dec_lo = kDaubechiesDecLo[static_cast<std::size_t>(vanishing_moments - 1)];
    const std::size_t len = spec.dec_lo.size();
    spec.rec_lo.assign(spec.dec_lo.rbegin(), spec.dec_lo.rend());
    spec.rec_hi.resize(len);
    for (std::size_t i = 0; i < len; ++i) spec.rec_hi[i] = (i % 2 == 0 ? 1.0 : -1.0) * spec.rec_lo[len - 1 - i];
    spec.dec_hi.assign(spec.rec_hi.rbegin(), spec.rec_hi.rend());
    return spec;
}

std::vector<double> WaveletCoeffs::flatten() const {
    std::vector<double> out(approx);
    for (const auto& d : details) out.insert(out.end(), d.begin(), d.end());
    return out;
}

std::size_t WaveletCoeffs::flat_size() const {
    std::size_t n = approx.size();
    for (const auto& d : details) n += d.size();
    return n;
}

WaveletCoeffs dwt_layout(const WaveletSpec& spec, std::size_t signal_length) {
    const std::size_t min_len = std::size_t{1} << spec.levels;
    if (signal_length < min_len) {
        throw ConfigError("signal length " + std::to_string(signal_length) + " too short for " +
                          std::to_string(spec.levels) + " decomposition levels (need >= " + std::to_string(min_len) + ")");
    }
    WaveletCoeffs layout;
    std::size_t n = signal_length;
    layout.details.resize(static_cast<std::size_t>(spec.levels));
    for (int level = 0; level < spec.levels; ++level) {
        layout.level_lengths.push_back(n);
        const std::size_t half = (n + 1) / 2;
        // details are stored coarsest first
        layout.details[static_cast<std::size_t>(spec.levels - 1 - level)].assign(half, 0.0);
        n = half;
    }
    layout.approx.assign(n, 0.0);
    return layout;
}

WaveletCoeffs dwt_decompose(const WaveletSpec& spec, std::span<const double> signal) {
    WaveletCoeffs out = dwt_layout(spec, signal.size());
    std::vector<double> current(signal.begin(), signal.end());
    std::vector<double> approx, detail;
    for (int level = 0; level < spec.levels; ++level) {
        if (current.size() % 2 == 1) current.push_back(current.back());
        analysis_step(spec, current, approx, detail);
        out.details[static_cast<std::size_t>(spec.levels - 1 - level)] = detail;
        current = approx;
    }
    out.approx = current;
    return out;
}

std::vector<double> dwt_reconstruct(const WaveletSpec& spec, const WaveletCoeffs& coeffs) {
    if (coeffs.details.size() != static_cast<std::size_t>(spec.levels) ||
        coeffs.level_lengths.size() != static_cast<std::size_t>(spec.levels)) {
        throw ShapeError("dwt_reconstruct: coefficient levels do not match wavelet spec");
    }
    std::vector<double> current = coeffs.approx;
    for (int level = spec.levels - 1; level >= 0; --level) {
        const auto& detail = coeffs.details[static_cast<std::size_t>(spec.levels - 1 - level)];
        check_length(detail.size(), current.size(), "dwt_reconstruct detail");
        current = synthesis_step(spec, current, detail);
        current.resize(coeffs.level_lengths[static_cast<std::size_t>(level)]);
    }
    return current;
}

WaveletCoeffs dwt_unflatten(const WaveletCoeffs& layout, std::span<const double> flat) {
    check_length(flat.size(), layout.flat_size(), "dwt_unflatten");
    WaveletCoeffs out = layout;
    std::size_t pos = 0;
    for (auto& a : out.approx) a = flat[pos++];
    for (auto& d : out.details)
        for (auto& v : d) v = flat[pos++];
    return out;
}

std::string_view to_string(EncoderKind kind) { return kind == EncoderKind::Dwt ? "dwt" : "dct"; }

EncoderKind encoder_from_string(std::string_view name) {
    if (name == "dwt") return EncoderKind::Dwt;
    if (name == "dct") return EncoderKind::Dct;
    throw ConfigError("unknown temporal encoder '" + std::string(name) + "' (expected dwt|dct)");
}

TemporalEncoder TemporalEncoder::dwt(const WaveletSpec& spec, std::size_t input_length) {
    const WaveletCoeffs layout = dwt_layout(spec, input_length);
    const std::size_t n = layout.flat_size();

    TemporalEncoder enc;
    enc.kind_ = EncoderKind::Dwt;
    enc.wavelet_ = spec;
    enc.input_length_ = input_length;
    enc.level_lengths_ = layout.level_lengths;
    enc.forward_ = Matrix(n, input_length);
    enc.inverse_ = Matrix(input_length, n);

    std::vector<double> unit(input_length, 0.0);
    for (std::size_t j = 0; j < input_length; ++j) {
        unit[j] = 1.0;
        const auto col = dwt_decompose(spec, unit).flatten();
        for (std::size_t i = 0; i < n; ++i) enc.forward_(i, j) = col[i];
        unit[j] = 0.0;
    }
    std::vector<double> coeff_unit(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        coeff_unit[j] = 1.0;
        const auto col = dwt_reconstruct(spec, dwt_unflatten(layout, coeff_unit));
        for (std::size_t i = 0; i < input_length; ++i) enc.inverse_(i, j) = col[i];
        coeff_unit[j] = 0.0;
    }
    return enc;
}

TemporalEncoder TemporalEncoder::dct(std::size_t input_length) {
    if (input_length < 1) throw ConfigError("DCT input length must be >= 1");
    const std::size_t n = input_length;
    TemporalEncoder enc;
    enc.kind_ = EncoderKind::Dct;
    enc.input_length_ = n;
    enc.forward_ = Matrix(n, n);
    const double nd = static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double scale = k == 0 ? std::sqrt(1.0 / nd) : std::sqrt(2.0 / nd);
        for (std::size_t t = 0; t < n; ++t) {
            enc.forward_(k, t) =
                scale * std::cos(std::numbers::pi * (static_cast<double>(t) + 0.5) * static_cast<double>(k) / nd);
        }
    }
    enc.inverse_ = enc.forward_.transposed();
    return enc;
}

std::vector<double> TemporalEncoder::encode(std::span<const double> signal) const {
    check_length(signal.size(), input_length_, "encode");
    return matvec(forward_, signal);
}

std::vector<double> TemporalEncoder::decode(std::span<const double> coeffs) const {
    check_length(coeffs.size(), encoded_length(), "decode");
    return matvec(inverse_, coeffs);
}

std::vector<double> TemporalEncoder::adjoint_apply(Direction direction, std::span<const double> cotangent) const {
    if (direction == Direction::Forward) {
        check_length(cotangent.size(), encoded_length(), "adjoint_apply(forward)");
        return matvec_t(forward_, cotangent);
    }
    check_length(cotangent.size(), input_length_, "adjoint_apply(inverse)");
    return matvec_t(inverse_, cotangent);
}

Matrix TemporalEncoder::encode_columns(const Matrix& x) const {
    require_shape(x, input_length_, x.cols(), "encode_columns input");
    return matmul(forward_, x);
}

Matrix TemporalEncoder::decode_columns(const Matrix& c) const {
    require_shape(c, encoded_length(), c.cols(), "decode_columns input");
    return matmul(inverse_, c);
}

TemporalEncoder build_encoder(EncoderKind kind, const WaveletSpec& spec, std::size_t input_length) {
    return kind == EncoderKind::Dwt ? TemporalEncoder::dwt(spec, input_length) : TemporalEncoder::dct(input_length);
}

}  // namespace lukan
