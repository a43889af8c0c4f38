#include "gsrd/ndmath.hpp"

#include <algorithm>
#include <cmath>

namespace gsrd {

double act_eval(Act a, double x) {
    switch (a) {
        case Act::None: return x;
        case Act::Relu: return x > 0 ? x : 0.0;
        case Act::Tanh: return std::tanh(x);
        case Act::Softplus: return softplus(x);
    }
    fail("unknown activation");
}

double act_deriv(Act a, double x) {
    switch (a) {
        case Act::None: return 1.0;
        case Act::Relu: return x > 0 ? 1.0 : 0.0;
        case Act::Tanh: {
            double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case Act::Softplus: return sigmoid(x);
    }
    fail("unknown activation");
}

size_t MlpParams::param_count() const {
    size_t n = 0;
    for (const auto& l : layers) n += l.W.a.size() + l.b.size();
    return n;
}

void MlpParams::check_shapes() const {
    for (size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        require(l.W.rows == int(l.b.size()), "mlp: bias/weight row mismatch");
        if (i > 0)
            require(l.W.cols == layers[i - 1].W.rows, "mlp: layer dims do not chain");
    }
}

void MlpGrads::init_like(const MlpParams& p) {
    dW.assign(p.layers.size(), Mat{});
    db.assign(p.layers.size(), Vec{});
    for (size_t i = 0; i < p.layers.size(); ++i) {
        dW[i] = Mat(p.layers[i].W.rows, p.layers[i].W.cols);
        db[i].assign(p.layers[i].b.size(), 0.0);
    }
}

void MlpGrads::clear() {
    for (auto& m : dW) std::fill(m.a.begin(), m.a.end(), 0.0);
    for (auto& v : db) std::fill(v.begin(), v.end(), 0.0);
}

void MlpGrads::scale(double s) {
    for (auto& m : dW)
        for (double& x : m.a) x *= s;
    for (auto& v : db)
        for (double& x : v) x *= s;
}

Vec mlp_forward(const MlpParams& p, std::span<const double> x, MlpCache* cache) {
    require(!p.layers.empty(), "mlp: empty network");
    require(int(x.size()) == p.input_dim(), "mlp_forward: input dimension mismatch");
    Vec h(x.begin(), x.end());
    if (cache) {
        cache->z.clear();
        cache->h.clear();
        cache->h.push_back(h);
    }
    for (const auto& l : p.layers) {
        Vec z(l.W.rows, 0.0);
        for (int r = 0; r < l.W.rows; ++r) {
            double s = l.b[r];
            const double* wrow = &l.W.a[size_t(r) * l.W.cols];
            for (int c = 0; c < l.W.cols; ++c) s += wrow[c] * h[c];
            z[r] = s;
        }
        Vec hn(l.W.rows);
        for (int r = 0; r < l.W.rows; ++r) hn[r] = act_eval(l.act, z[r]);
        if (cache) {
            cache->z.push_back(z);
            cache->h.push_back(hn);
        }
        h = std::move(hn);
    }
    return h;
}

Vec mlp_backward(const MlpParams& p, std::span<const double> x,
                 std::span<const double> grad_out, MlpGrads& g, const MlpCache* cache) {
    require(int(grad_out.size()) == p.output_dim(), "mlp_backward: grad dimension mismatch");
    MlpCache local;
    if (!cache) {
        mlp_forward(p, x, &local);
        cache = &local;
    }
    if (g.dW.size() != p.layers.size()) g.init_like(p);

    Vec delta(grad_out.begin(), grad_out.end());
    for (int i = int(p.layers.size()) - 1; i >= 0; --i) {
        const auto& l = p.layers[i];
        const Vec& z = cache->z[i];
        const Vec& hin = cache->h[i];
        for (int r = 0; r < l.W.rows; ++r) delta[r] *= act_deriv(l.act, z[r]);

        Mat& dW = g.dW[i];
        Vec& db = g.db[i];
        for (int r = 0; r < l.W.rows; ++r) {
            db[r] += delta[r];
            double* drow = &dW.a[size_t(r) * l.W.cols];
            for (int c = 0; c < l.W.cols; ++c) drow[c] += delta[r] * hin[c];
        }
        Vec dprev(l.W.cols, 0.0);
        for (int r = 0; r < l.W.rows; ++r) {
            const double* wrow = &l.W.a[size_t(r) * l.W.cols];
            for (int c = 0; c < l.W.cols; ++c) dprev[c] += wrow[c] * delta[r];
        }
        delta = std::move(dprev);
    }
    return delta;
}

MlpParams make_mlp(const std::vector<int>& dims, Act hidden, Act output, Rng& rng) {
    require(dims.size() >= 2, "make_mlp: need at least input and output dims");
    MlpParams p;
    for (size_t i = 0; i + 1 < dims.size(); ++i) {
        MlpLayer l;
        l.W = Mat(dims[i + 1], dims[i]);
        l.b.assign(dims[i + 1], 0.0);
        l.act = (i + 2 == dims.size()) ? output : hidden;
        double bound = std::sqrt(6.0 / (dims[i] + dims[i + 1]));
        for (double& w : l.W.a) w = rng.uniform(-bound, bound);
        p.layers.push_back(std::move(l));
    }
    return p;
}

MlpParams make_zero_mlp(const std::vector<int>& dims, Act hidden, Act output) {
    MlpParams p;
    for (size_t i = 0; i + 1 < dims.size(); ++i) {
        MlpLayer l;
        l.W = Mat(dims[i + 1], dims[i]);
        l.b.assign(dims[i + 1], 0.0);
        l.act = (i + 2 == dims.size()) ? output : hidden;
        p.layers.push_back(std::move(l));
    }
    return p;
}

void mlp_flatten(const MlpParams& p, Vec& out) {
    out.clear();
    out.reserve(p.param_count());
    for (const auto& l : p.layers) {
        out.insert(out.end(), l.W.a.begin(), l.W.a.end());
        out.insert(out.end(), l.b.begin(), l.b.end());
    }
}

void mlp_unflatten(MlpParams& p, const Vec& flat) {
    size_t k = 0;
    for (auto& l : p.layers) {
        std::copy(flat.begin() + k, flat.begin() + k + l.W.a.size(), l.W.a.begin());
        k += l.W.a.size();
        std::copy(flat.begin() + k, flat.begin() + k + l.b.size(), l.b.begin());
        k += l.b.size();
    }
    require(k == flat.size(), "mlp_unflatten: size mismatch");
}

void mlp_grads_flatten(const MlpGrads& g, Vec& out) {
    out.clear();
    for (size_t i = 0; i < g.dW.size(); ++i) {
        out.insert(out.end(), g.dW[i].a.begin(), g.dW[i].a.end());
        out.insert(out.end(), g.db[i].begin(), g.db[i].end());
    }
}

void adam_update(AdamState& st, std::span<double> params, std::span<const double> grads) {
    require(params.size() == grads.size(), "adam_update: shape mismatch");
    if (st.m.size() != params.size()) {
        st.m.assign(params.size(), 0.0);
        st.v.assign(params.size(), 0.0);
        st.step = 0;
    }
    st.step += 1;
    const double b1 = st.cfg.beta1, b2 = st.cfg.beta2;
    const double c1 = 1.0 - std::pow(b1, double(st.step));
    const double c2 = 1.0 - std::pow(b2, double(st.step));
    for (size_t i = 0; i < params.size(); ++i) {
        double gi = grads[i];
        st.m[i] = b1 * st.m[i] + (1.0 - b1) * gi;
        st.v[i] = b2 * st.v[i] + (1.0 - b2) * gi * gi;
        double mh = st.m[i] / c1;
        double vh = st.v[i] / c2;
        params[i] -= st.cfg.lr * mh / (std::sqrt(vh) + st.cfg.eps);
    }
}

void adam_step(AdamState& st, MlpParams& p, const MlpGrads& g) {
    Vec flat, gflat;
    mlp_flatten(p, flat);
    mlp_grads_flatten(g, gflat);
    adam_update(st, flat, gflat);
    mlp_unflatten(p, flat);
}

Vec positional_encoding(const PosEncoding& enc, std::span<const double> x, bool* clamped) {
    require(int(x.size()) == enc.input_dim, "positional_encoding: dimension mismatch");
    Vec out(size_t(enc.output_dim()));
    bool clip = false;
    size_t k = 0;
    for (int j = 0; j < enc.input_dim; ++j) {
        double v = x[j];
        if (v < 0.0 || v > 1.0) {
            clip = true;
            v = clamp01(v);
        }
        double scale = M_PI;
        for (int f = 0; f < enc.freqs; ++f) {
            out[k++] = std::sin(scale * v);
            out[k++] = std::cos(scale * v);
            scale *= 2.0;
        }
    }
    if (clamped) *clamped = clip;
    return out;
}

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }

double std_normal_pdf(double z) {
    static const double inv_sqrt_2pi = 0.3989422804014326779;
    return inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

}  // namespace gsrd
