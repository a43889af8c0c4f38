#include "gsrd/hyperprior.hpp"

#include <algorithm>
#include <cmath>

namespace gsrd {

void HyperpriorModel::check() const {
    require(D_f % groups == 0, "hyperprior: groups must divide D_f");
    require(color_net.output_dim() == color_out_dim(), "hyperprior: color net output dim");
    require(color_net.input_dim() == enc.output_dim(), "hyperprior: color net input dim");
    if (carm_enabled) {
        require(int(carm.size()) == groups - 1, "hyperprior: need groups-1 CARM nets");
        for (int g = 1; g < groups; ++g) {
            require(carm[g - 1].input_dim() == enc.output_dim() + g * group_size(),
                    "hyperprior: CARM input dim");
            require(carm[g - 1].output_dim() == 2 * group_size(), "hyperprior: CARM output dim");
        }
    }
    if (has_semantic()) {
        require(semantic_net.output_dim() == 13, "hyperprior: semantic net output dim");
        require(semantic_net.input_dim() == enc.output_dim(), "hyperprior: semantic net input dim");
    }
}

HyperpriorModel make_hyperprior(int D_f, int K, int groups, int freqs, int hidden,
                                Rng& rng, bool carm_enabled) {
    HyperpriorModel m;
    m.D_f = D_f;
    m.K = K;
    m.groups = groups;
    m.carm_enabled = carm_enabled;
    m.enc = PosEncoding{3, freqs};
    int in = m.enc.output_dim();
    m.color_net = make_mlp({in, hidden, hidden, m.color_out_dim()}, Act::Relu, Act::None, rng);
    // start near the base prediction: zero last layer
    auto zero_last = [](MlpParams& p) {
        auto& l = p.layers.back();
        std::fill(l.W.a.begin(), l.W.a.end(), 0.0);
        std::fill(l.b.begin(), l.b.end(), 0.0);
    };
    zero_last(m.color_net);
    if (carm_enabled) {
        int gs = m.group_size();
        for (int g = 1; g < groups; ++g) {
            m.carm.push_back(make_mlp({in + g * gs, 32, 2 * gs}, Act::Relu, Act::None, rng));
            zero_last(m.carm.back());
        }
    }
    m.check();
    return m;
}

void init_semantic_side(HyperpriorModel& m, int hidden, Rng& rng) {
    int in = m.enc.output_dim();
    m.semantic_net = make_mlp({in, hidden, hidden, 13}, Act::Relu, Act::None, rng);
    auto& l = m.semantic_net.layers.back();
    std::fill(l.W.a.begin(), l.W.a.end(), 0.0);
    std::fill(l.b.begin(), l.b.end(), 0.0);
}

ColorPrediction predict_color(const HyperpriorModel& m, const Vec& pe, MlpCache* cache) {
    ColorPrediction p;
    p.D_f = m.D_f;
    p.K = m.K;
    p.out = mlp_forward(m.color_net, pe, cache);
    return p;
}

EntropyParams predict_params(const HyperpriorModel& m, const Vec3& x_norm, AttrType t) {
    double xyz[3] = {x_norm.x, x_norm.y, x_norm.z};
    Vec pe = positional_encoding(m.enc, xyz);
    EntropyParams ep;
    if (t == AttrType::Semantic) {
        require(m.has_semantic(), "predict_params: semantic side not initialized");
        Vec out = mlp_forward(m.semantic_net, pe);
        ep.mu.assign(out.begin(), out.begin() + 6);
        ep.sigma.resize(6);
        for (int i = 0; i < 6; ++i) ep.sigma[i] = sigma_from_raw(out[6 + i]);
        ep.q = q_from_r(m.q0(AttrType::Semantic), out[12]);
        return ep;
    }
    ColorPrediction cp = predict_color(m, pe);
    auto take = [&](std::span<const double> mu, std::span<const double> sraw, double r,
                    AttrType type) {
        ep.mu.assign(mu.begin(), mu.end());
        ep.sigma.resize(sraw.size());
        for (size_t i = 0; i < sraw.size(); ++i) ep.sigma[i] = sigma_from_raw(sraw[i]);
        ep.q = q_from_r(m.q0(type), r);
    };
    switch (t) {
        case AttrType::Feature: take(cp.mu_f(), cp.sraw_f(), cp.r_f(), t); break;
        case AttrType::Offset: take(cp.mu_O(), cp.sraw_O(), cp.r_O(), t); break;
        case AttrType::Scaling: take(cp.mu_l(), cp.sraw_l(), cp.r_l(), t); break;
        default: fail("predict_params: unknown attribute type");
    }
    return ep;
}

double quantize_value(double a, double q) {
    require(q > 0, "quantize: q must be positive");
    return q * std::round(a / q);  // std::round is half away from zero
}

int64_t quantize_index(double a, double q) {
    require(q > 0, "quantize: q must be positive");
    return int64_t(std::llround(a / q));
}

Vec quantize(std::span<const double> a, double q) {
    Vec out(a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = quantize_value(a[i], q);
    return out;
}

Vec noise_surrogate(std::span<const double> a, double q, Rng& rng) {
    require(q >= 0, "noise_surrogate: q must be nonnegative");
    Vec out(a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] + q * (rng.uniform() - 0.5);
    return out;
}

double prob_mass(double ahat, double mu, double sigma, double q) {
    require(sigma > 0 && q > 0, "prob_mass: sigma and q must be positive");
    const double inv = 1.0 / sigma;
    double zlo = (ahat - 0.5 * q - mu) * inv;
    double zhi = (ahat + 0.5 * q - mu) * inv;
    double p;
    if (zlo >= 0.0)
        p = 0.5 * (std::erfc(zlo * M_SQRT1_2) - std::erfc(zhi * M_SQRT1_2));
    else if (zhi <= 0.0)
        p = 0.5 * (std::erfc(-zhi * M_SQRT1_2) - std::erfc(-zlo * M_SQRT1_2));
    else
        p = 0.5 * (std::erf(zhi * M_SQRT1_2) - std::erf(zlo * M_SQRT1_2));
    return std::min(1.0, std::max(0.0, p));
}

RateGrad rate_bits_grad(double value, double mu, double sigma, double q) {
    const double inv = 1.0 / sigma;
    const double zlo = (value - 0.5 * q - mu) * inv;
    const double zhi = (value + 0.5 * q - mu) * inv;
    const double p = prob_mass(value, mu, sigma, q);

    RateGrad g{};
    if (p <= kProbFloor) {
        g.bits = -std::log2(kProbFloor);
        return g;  // clamped region: zero gradients
    }
    const double ln2 = std::log(2.0);
    g.bits = -std::log(p) / ln2;
    double phi_lo = std_normal_pdf(zlo), phi_hi = std_normal_pdf(zhi);
    double dp_dvalue = (phi_hi - phi_lo) * inv;
    double dp_dmu = -dp_dvalue;
    double dp_dsigma = -(phi_hi * zhi - phi_lo * zlo) * inv;
    double dp_dq = 0.5 * (phi_hi + phi_lo) * inv;
    double scale = -1.0 / (p * ln2);
    g.d_value = scale * dp_dvalue;
    g.d_mu = scale * dp_dmu;
    g.d_sigma = scale * dp_dsigma;
    g.d_q = scale * dp_dq;
    return g;
}

double estimate_rate_bits(std::span<const double> values, const EntropyParams& p) {
    require(values.size() == p.mu.size(), "estimate_rate_bits: size mismatch");
    double bits = 0.0;
    for (size_t i = 0; i < values.size(); ++i)
        bits += -std::log2(prob_mass_floored(values[i], p.mu[i], p.sigma[i], p.q));
    return bits;
}

// ---------------------------------------------------------------------------

CarmCoder::CarmCoder(const HyperpriorModel& m, const Vec& pe, const ColorPrediction& base)
    : model_(&m), pe_(&pe), base_(&base) {
    caches_.resize(m.carm_enabled ? m.groups : 0);
}

EntropyParams CarmCoder::params_for_group(int g) {
    require(g == next_group_, "carm: out-of-order group access (expected " +
                                  std::to_string(next_group_) + ", got " + std::to_string(g) + ")");
    const int gs = group_size();
    EntropyParams ep;
    ep.q = q_from_r(model_->q0(AttrType::Feature), base_->r_f());
    ep.mu.resize(gs);
    ep.sigma.resize(gs);
    auto mu = base_->mu_f(), sraw = base_->sraw_f();

    if (g == 0 || !model_->carm_enabled) {
        for (int i = 0; i < gs; ++i) {
            ep.mu[i] = mu[g * gs + i];
            ep.sigma[i] = sigma_from_raw(sraw[g * gs + i]);
        }
        return ep;
    }
    Vec in;
    in.reserve(pe_->size() + decoded_.size());
    in.insert(in.end(), pe_->begin(), pe_->end());
    in.insert(in.end(), decoded_.begin(), decoded_.end());
    Vec delta = mlp_forward(model_->carm[g - 1], in, &caches_[g]);
    for (int i = 0; i < gs; ++i) {
        ep.mu[i] = mu[g * gs + i] + delta[i];
        ep.sigma[i] = sigma_from_raw(sraw[g * gs + i] + delta[gs + i]);
    }
    return ep;
}

void CarmCoder::push_decoded(int g, std::span<const double> values) {
    require(g == next_group_, "carm: push_decoded out of order");
    require(int(values.size()) == group_size(), "carm: group size mismatch");
    decoded_.insert(decoded_.end(), values.begin(), values.end());
    next_group_ += 1;
}

Vec CarmCoder::backward_group(int g, std::span<const double> d_mu,
                              std::span<const double> d_sraw,
                              std::vector<MlpGrads>& carm_grads) {
    require(model_->carm_enabled && g >= 1 && g < groups(), "carm: backward on base group");
    require(g < next_group_, "carm: backward before forward");
    const int gs = group_size();
    Vec grad_out(2 * gs);
    for (int i = 0; i < gs; ++i) {
        grad_out[i] = d_mu[i];
        grad_out[gs + i] = d_sraw[i];
    }
    Vec in;  // rebuilt context for shape only; cache supplies intermediates
    in.reserve(pe_->size() + size_t(g) * gs);
    in.insert(in.end(), pe_->begin(), pe_->end());
    in.insert(in.end(), decoded_.begin(), decoded_.begin() + size_t(g) * gs);
    Vec d_in = mlp_backward(model_->carm[g - 1], in, grad_out, carm_grads[g - 1], &caches_[g]);
    return Vec(d_in.begin() + pe_->size(), d_in.end());
}

// ---------------------------------------------------------------------------

std::vector<double> qwm_weights(std::span<const double> q_f, double T) {
    require(!q_f.empty(), "qwm_weights: need at least one anchor");
    require(T > 0 && T < 1, "qwm_weights: T out of (0,1)");
    double lo = q_f[0], hi = q_f[0];
    for (double q : q_f) {
        lo = std::min(lo, q);
        hi = std::max(hi, q);
    }
    std::vector<double> w(q_f.size(), 1.0);
    if (hi <= lo) return w;  // degenerate: all steps equal, everything full weight
    double inv = 1.0 / (hi - lo);
    for (size_t i = 0; i < q_f.size(); ++i) {
        double n = (q_f[i] - lo) * inv;
        double v = 1.0 - n;
        w[i] = v >= T ? 1.0 : std::max(v, kQwmFloor);
    }
    return w;
}

OffsetMaskResult offset_mask(std::span<const double> logits, bool hard) {
    OffsetMaskResult r;
    r.value.resize(logits.size());
    r.soft.resize(logits.size());
    double sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        r.soft[i] = sigmoid(logits[i]);
        r.value[i] = r.soft[i] >= 0.5 ? 1.0 : 0.0;
        sum += r.soft[i];
    }
    r.loss = logits.empty() ? 0.0 : sum / double(logits.size());
    if (hard) r.soft = r.value;
    return r;
}

}  // namespace gsrd
