#pragma once

#include <span>
#include <vector>

#include "gsrd/common.hpp"

namespace gsrd {

// row-major dense matrix
struct Mat {
    int rows = 0, cols = 0;
    Vec a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(size_t(r) * c, 0.0) {}

    double& operator()(int r, int c) { return a[size_t(r) * cols + c]; }
    double operator()(int r, int c) const { return a[size_t(r) * cols + c]; }
};

enum class Act : uint8_t { None = 0, Relu = 1, Tanh = 2, Softplus = 3 };

double act_eval(Act a, double x);
double act_deriv(Act a, double x);  // derivative at pre-activation x

struct MlpLayer {
    Mat W;   // out x in
    Vec b;   // out
    Act act = Act::None;
};

struct MlpParams {
    std::vector<MlpLayer> layers;

    int input_dim() const { return layers.empty() ? 0 : layers.front().W.cols; }
    int output_dim() const { return layers.empty() ? 0 : layers.back().W.rows; }
    size_t param_count() const;
    void check_shapes() const;  // throws on broken chaining
};

struct MlpGrads {
    std::vector<Mat> dW;
    std::vector<Vec> db;

    void init_like(const MlpParams& p);
    void clear();
    void scale(double s);
};

// layer-by-layer intermediates; h[0] is the input, z[i]/h[i+1] per layer
struct MlpCache {
    std::vector<Vec> z;
    std::vector<Vec> h;
};

Vec mlp_forward(const MlpParams& p, std::span<const double> x, MlpCache* cache = nullptr);

// Gradients of a scalar loss given dL/dy. Accumulates into g (caller zeroes or
// reuses across samples); returns dL/dx.
Vec mlp_backward(const MlpParams& p, std::span<const double> x,
                 std::span<const double> grad_out, MlpGrads& g,
                 const MlpCache* cache = nullptr);

// Xavier-uniform initialized MLP: dims = {in, h1, ..., out}
MlpParams make_mlp(const std::vector<int>& dims, Act hidden, Act output, Rng& rng);
MlpParams make_zero_mlp(const std::vector<int>& dims, Act hidden, Act output);

void mlp_flatten(const MlpParams& p, Vec& out);
void mlp_unflatten(MlpParams& p, const Vec& flat);
void mlp_grads_flatten(const MlpGrads& g, Vec& out);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig cfg;
    Vec m, v;
    long step = 0;

    explicit AdamState(AdamConfig c = {}) : cfg(c) {}
};

// standard bias-corrected Adam on flat buffers; m/v are lazily sized
void adam_update(AdamState& st, std::span<double> params, std::span<const double> grads);

// convenience wrapper for whole networks (flattens in layer order)
void adam_step(AdamState& st, MlpParams& p, const MlpGrads& g);

struct PosEncoding {
    int input_dim = 3;
    int freqs = 8;

    int output_dim() const { return input_dim * 2 * freqs; }
};

// concat over axes j and k of sin(2^k pi x_j), cos(2^k pi x_j), k = 0..freqs-1.
// Inputs are expected in [0,1]; out-of-range components clamp and set *clamped.
Vec positional_encoding(const PosEncoding& enc, std::span<const double> x,
                        bool* clamped = nullptr);

double std_normal_cdf(double z);
double std_normal_pdf(double z);

}  // namespace gsrd
