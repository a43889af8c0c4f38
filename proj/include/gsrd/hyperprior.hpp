#pragma once

#include <span>

#include "gsrd/geom.hpp"
#include "gsrd/ndmath.hpp"

namespace gsrd {

enum class AttrType : uint8_t { Feature = 0, Offset = 1, Scaling = 2, Semantic = 3 };

// per-anchor entropy parameters for one attribute type; q is shared across the
// components of the attribute at that anchor
struct EntropyParams {
    Vec mu;
    Vec sigma;   // softplus(raw) + 1e-6
    double q = 1.0;
};

// INR entropy model over positional-encoded anchor coordinates.
//
// color_net output layout: mu_f[Df], sraw_f[Df], mu_O[3K], sraw_O[3K],
//                          mu_l[6], sraw_l[6], r_f, r_O, r_l
// semantic_net output:     mu_s[6], sraw_s[6], r_s
// carm[g-1] (g = 1..groups-1): input pe ++ decoded groups 0..g-1,
//                              output dmu[gs], dsraw[gs] with gs = Df/groups
struct HyperpriorModel {
    PosEncoding enc{3, 8};
    MlpParams color_net;
    std::vector<MlpParams> carm;
    MlpParams semantic_net;  // empty until stage 3
    double log_q0[4] = {0, 0, 0, 0};  // f, O, l, s; q0 = exp(log_q0)
    int D_f = 8;
    int K = 10;
    int groups = 4;
    bool carm_enabled = true;

    int group_size() const { return D_f / groups; }
    int color_out_dim() const { return 2 * D_f + 6 * K + 12 + 3; }
    double q0(AttrType t) const { return std::exp(log_q0[int(t)]); }
    bool has_semantic() const { return !semantic_net.layers.empty(); }
    void check() const;
};

HyperpriorModel make_hyperprior(int D_f, int K, int groups, int freqs, int hidden,
                                Rng& rng, bool carm_enabled = true);
void init_semantic_side(HyperpriorModel& m, int hidden, Rng& rng);

constexpr double kSigmaFloor = 1e-6;
constexpr double kProbFloor = 0x1p-32;

inline double sigma_from_raw(double raw) { return softplus(raw) + kSigmaFloor; }
inline double q_from_r(double q0, double r) { return q0 * (1.0 + 0.5 * std::tanh(r)); }

// raw color-side outputs with views into the layout above
struct ColorPrediction {
    Vec out;       // raw network output
    int D_f, K;

    std::span<const double> mu_f() const { return {out.data(), size_t(D_f)}; }
    std::span<const double> sraw_f() const { return {out.data() + D_f, size_t(D_f)}; }
    std::span<const double> mu_O() const { return {out.data() + 2 * D_f, size_t(3 * K)}; }
    std::span<const double> sraw_O() const { return {out.data() + 2 * D_f + 3 * K, size_t(3 * K)}; }
    std::span<const double> mu_l() const { return {out.data() + 2 * D_f + 6 * K, size_t(6)}; }
    std::span<const double> sraw_l() const { return {out.data() + 2 * D_f + 6 * K + 6, size_t(6)}; }
    double r_f() const { return out[out.size() - 3]; }
    double r_O() const { return out[out.size() - 2]; }
    double r_l() const { return out[out.size() - 1]; }
};

ColorPrediction predict_color(const HyperpriorModel& m, const Vec& pe, MlpCache* cache = nullptr);

// spec-level op: per-attribute entropy parameters at a normalized position
EntropyParams predict_params(const HyperpriorModel& m, const Vec3& x_norm, AttrType t);

// componentwise q * round(a/q), round half away from zero
Vec quantize(std::span<const double> a, double q);
double quantize_value(double a, double q);
int64_t quantize_index(double a, double q);

// a + U(-q/2, q/2); identity gradient w.r.t. a
Vec noise_surrogate(std::span<const double> a, double q, Rng& rng);

// integral of N(mu, sigma) over [ahat - q/2, ahat + q/2]; exact, in [0,1].
// Tail-stable (erfc-based on either side of the mean).
double prob_mass(double ahat, double mu, double sigma, double q);
inline double prob_mass_floored(double ahat, double mu, double sigma, double q) {
    return std::max(prob_mass(ahat, mu, sigma, q), kProbFloor);
}

// -log2 of the floored mass plus its partials; gradients vanish at the floor
struct RateGrad {
    double bits;
    double d_value, d_mu, d_sigma, d_q;
};
RateGrad rate_bits_grad(double value, double mu, double sigma, double q);

double estimate_rate_bits(std::span<const double> values, const EntropyParams& p);

// ordered channel-group walk shared by training, encoding and decoding.
// Groups must be visited strictly in order; group 0 is never refined.
class CarmCoder {
public:
    CarmCoder(const HyperpriorModel& m, const Vec& pe, const ColorPrediction& base);

    int groups() const { return model_->groups; }
    int group_size() const { return model_->group_size(); }

    // refined (mu, sigma) for the next expected group; throws on out-of-order
    // access. For g >= 1 the CARM net sees pe ++ values of groups 0..g-1.
    EntropyParams params_for_group(int g);

    // values the decoder will see (quantized at coding time, noised in training)
    void push_decoded(int g, std::span<const double> values);

    // gradient backpropagation through the CARM net used for group g;
    // accumulates into carm_grads[g-1] and returns d(bits)/d(context values),
    // laid out as groups 0..g-1 concatenated
    Vec backward_group(int g, std::span<const double> d_mu, std::span<const double> d_sraw,
                       std::vector<MlpGrads>& carm_grads);

private:
    const HyperpriorModel* model_;
    const Vec* pe_;
    const ColorPrediction* base_;
    Vec decoded_;  // grows group by group
    std::vector<MlpCache> caches_;
    int next_group_ = 0;
};

// Eq. 3 weights from per-anchor feature step sizes: min-max normalize q_f over
// the scene, w = 1 where 1 - n >= T, else 1 - n (floored at 1e-3).
std::vector<double> qwm_weights(std::span<const double> q_f, double T);
constexpr double kQwmFloor = 1e-3;

struct OffsetMaskResult {
    Vec value;   // hard 0/1 (straight-through forward value)
    Vec soft;    // sigmoid(logits)
    double loss; // mean of soft values
};
OffsetMaskResult offset_mask(std::span<const double> logits, bool hard);

}  // namespace gsrd
