#include "resnet_ntk/model.hpp"

#include "resnet_ntk/errors.hpp"
#include "resnet_ntk/quadrature.hpp"
#include "resnet_ntk/random.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace resnet_ntk {

double ModelConfig::residual_scale() const noexcept {
    return c_res / (static_cast<double>(H) * std::sqrt(static_cast<double>(m)));
}

double ModelConfig::input_scale() const noexcept {
    return std::sqrt(c_phi / static_cast<double>(m));
}

std::size_t ModelConfig::parameter_count() const noexcept { return m * d + (H - 1) * m * m; }

void ModelConfig::validate() const {
    if (n < 1 || d < 1 || m < 1 || H < 1)
        throw InputError("model config: n, d, m and H must all be at least 1");
    if (!(c_res > 0.0 && c_res < 1.0)) throw InputError("model config: c_res must lie in (0, 1)");
    if (!(c_phi > 0.0) || !std::isfinite(c_phi))
        throw InputError("model config: c_phi must be positive and finite");
    if (!(activation.B > 0.0) || !(activation.M >= 0.0))
        throw InputError("model config: activation bounds need B > 0 and M >= 0");
}

double compute_c_phi(const ActivationSpec& activation, std::size_t nodes) {
    if (nodes < 50) throw InputError("compute_c_phi: at least 50 quadrature nodes required");
    const double second_moment = gauss_hermite_expectation(
        [&](double x) {
            const double v = activation.value(x);
            return v * v;
        },
        nodes);
    if (!(second_moment > 1e-14))
        throw InputError("compute_c_phi: degenerate activation (E[phi^2] ~ 0)");
    return 1.0 / second_moment;
}

ModelConfig make_config(std::size_t n, std::size_t d, std::size_t m, std::size_t H,
                        const ActivationSpec& activation, double c_res) {
    ModelConfig config;
    config.n = n;
    config.d = d;
    config.m = m;
    config.H = H;
    config.c_res = c_res;
    config.activation = activation;
    config.c_phi = compute_c_phi(activation);
    config.validate();
    return config;
}

const DenseMatrix& Theta::layer(std::size_t h) const {
    if (h == 1) return W1;
    if (h < 1 || h > depth()) throw InputError("Theta::layer: index out of range");
    return W[h - 2];
}

DenseMatrix& Theta::layer(std::size_t h) {
    if (h == 1) return W1;
    if (h < 1 || h > depth()) throw InputError("Theta::layer: index out of range");
    return W[h - 2];
}

std::size_t Theta::parameter_count() const noexcept {
    std::size_t p = W1.size();
    for (const auto& w : W) p += w.size();
    return p;
}

bool Theta::all_finite() const noexcept {
    if (!W1.all_finite()) return false;
    for (const auto& w : W)
        if (!w.all_finite()) return false;
    for (double v : a)
        if (!std::isfinite(v)) return false;
    return true;
}

Vector flatten_weights(const Theta& theta) {
    Vector flat;
    flat.reserve(theta.parameter_count());
    for (std::size_t h = 1; h <= theta.depth(); ++h) {
        const auto v = theta.layer(h).values();
        flat.insert(flat.end(), v.begin(), v.end());
    }
    return flat;
}

void assign_weights(Theta& theta, std::span<const double> flat) {
    if (flat.size() != theta.parameter_count())
        throw InputError("assign_weights: coordinate count mismatch");
    std::size_t offset = 0;
    for (std::size_t h = 1; h <= theta.depth(); ++h) {
        auto v = theta.layer(h).values();
        for (double& x : v) x = flat[offset++];
    }
}

double weight_distance(const Theta& lhs, const Theta& rhs) {
    if (lhs.depth() != rhs.depth()) throw InputError("weight_distance: depth mismatch");
    double s = 0.0;
    for (std::size_t h = 1; h <= lhs.depth(); ++h) {
        const double d = frobenius_distance(lhs.layer(h), rhs.layer(h));
        s += d * d;
    }
    return std::sqrt(s);
}

void add_scaled_weights(Theta& theta, double scale, const Theta& direction) {
    if (theta.depth() != direction.depth())
        throw InputError("add_scaled_weights: depth mismatch");
    for (std::size_t h = 1; h <= theta.depth(); ++h) {
        auto dst = theta.layer(h).values();
        const auto src = direction.layer(h).values();
        if (dst.size() != src.size()) throw InputError("add_scaled_weights: shape mismatch");
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += scale * src[k];
    }
}

Theta zeros_like(const Theta& like) {
    Theta z;
    z.W1 = DenseMatrix(like.W1.rows(), like.W1.cols());
    for (const auto& w : like.W) z.W.emplace_back(w.rows(), w.cols());
    z.a.assign(like.a.size(), 0.0);
    return z;
}

Vector layer_spectral_norms(const Theta& theta) {
    Vector norms;
    for (std::size_t h = 1; h <= theta.depth(); ++h)
        norms.push_back(spectral_norm(theta.layer(h), 1e-10).value);
    return norms;
}

Theta init_theta(const ModelConfig& config, std::span<const double> y, std::uint64_t seed) {
    if (config.m % 2 != 0) throw InputError("init_theta: width m must be even");
    if (y.size() != config.n) throw InputError("init_theta: label count differs from n");
    const double y_norm = norm2(y);
    if (!(y_norm > 0.0)) throw InputError("init_theta: label vector must be nonzero");

    Theta theta;
    for (std::size_t h = 1; h <= config.H; ++h) {
        DenseMatrix w(config.m, h == 1 ? config.d : config.m);
        for (std::size_t r = 0; r < w.rows(); ++r) {
            CounterRng rng(seed, Stream::init, static_cast<std::uint32_t>(h),
                           static_cast<std::uint32_t>(r));
            for (double& v : w.row(r)) v = rng.normal();
        }
        if (h == 1)
            theta.W1 = std::move(w);
        else
            theta.W.push_back(std::move(w));
    }
    const double level = y_norm / std::sqrt(static_cast<double>(config.n));
    theta.a.assign(config.m, -level);
    for (std::size_t k = 0; k < config.m / 2; ++k) theta.a[k] = level;
    return theta;
}

void Dataset::validate() const {
    if (X.rows() == 0 || X.cols() == 0) throw InputError("dataset: empty input matrix");
    if (y.size() != X.rows()) throw InputError("dataset: label count differs from row count");
    for (std::size_t i = 0; i < X.rows(); ++i) {
        const double nrm = norm2(X.row(i));
        if (!(std::abs(nrm - 1.0) <= 1e-12))
            throw InputError("dataset: row " + std::to_string(i) + " is not unit norm (" +
                             std::to_string(nrm) + ")");
    }
    for (double v : y)
        if (!std::isfinite(v)) throw InputError("dataset: non-finite label");
}

Dataset make_dataset(DenseMatrix X, Vector y) {
    Dataset data{std::move(X), std::move(y)};
    data.validate();
    return data;
}

void normalize_rows(DenseMatrix& X) {
    for (std::size_t i = 0; i < X.rows(); ++i) {
        auto row = X.row(i);
        const double nrm = norm2(row);
        if (!(nrm > 0.0) || !std::isfinite(nrm))
            throw InputError("normalize_rows: row " + std::to_string(i) + " has no direction");
        for (double& v : row) v /= nrm;
    }
}

DenseMatrix sphere_points(std::size_t n, std::size_t d, std::uint64_t seed) {
    DenseMatrix X(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        CounterRng rng(seed, Stream::data, static_cast<std::uint32_t>(i), 0);
        for (double& v : X.row(i)) v = rng.normal();
    }
    normalize_rows(X);
    return X;
}

Vector random_sign_labels(std::size_t n, std::uint64_t seed) {
    CounterRng rng(seed, Stream::labels, 0, 0);
    Vector y(n);
    for (double& v : y) v = rng.uniform() < 0.5 ? -1.0 : 1.0;
    return y;
}

Vector gaussian_labels(std::size_t n, std::uint64_t seed) {
    CounterRng rng(seed, Stream::labels, 1, 0);
    Vector y(n);
    for (double& v : y) v = rng.normal();
    return y;
}

std::span<const double> ForwardCache::layer_input(std::size_t h) const {
    if (h == 1) return input;
    return layer_outputs.at(h - 2);
}

namespace {

void check_shapes(const Theta& theta, const ModelConfig& config, std::size_t x_size) {
    if (theta.depth() != config.H) throw InputError("forward: theta depth differs from H");
    if (theta.W1.rows() != config.m || theta.W1.cols() != config.d)
        throw InputError("forward: W1 shape differs from m x d");
    for (const auto& w : theta.W)
        if (w.rows() != config.m || w.cols() != config.m)
            throw InputError("forward: hidden weight shape differs from m x m");
    if (theta.a.size() != config.m) throw InputError("forward: readout length differs from m");
    if (x_size != config.d) throw InputError("forward: input length differs from d");
}

void check_finite(std::span<const double> v, std::size_t layer) {
    for (double x : v)
        if (!std::isfinite(x))
            throw NumericalError("forward: non-finite value at layer " + std::to_string(layer));
}

} // namespace

ForwardCache forward(const Theta& theta, const ModelConfig& config, std::span<const double> x) {
    check_shapes(theta, config, x.size());
    if (!(std::abs(norm2(x) - 1.0) <= 1e-12)) throw InputError("forward: input is not unit norm");

    ForwardCache cache;
    cache.input.assign(x.begin(), x.end());
    cache.layer_outputs.reserve(config.H);
    cache.preactivations.reserve(config.H);

    const double in_scale = config.input_scale();
    const double res_scale = config.residual_scale();
    for (std::size_t h = 1; h <= config.H; ++h) {
        Vector z = matvec(theta.layer(h), cache.layer_input(h));
        Vector out(config.m);
        if (h == 1) {
            for (std::size_t r = 0; r < config.m; ++r)
                out[r] = in_scale * config.activation.value(z[r]);
        } else {
            const Vector& prev = cache.layer_outputs.back();
            for (std::size_t r = 0; r < config.m; ++r)
                out[r] = prev[r] + res_scale * config.activation.value(z[r]);
        }
        check_finite(out, h);
        cache.preactivations.push_back(std::move(z));
        cache.layer_outputs.push_back(std::move(out));
    }
    cache.output = dot(theta.a, cache.layer_outputs.back());
    if (!std::isfinite(cache.output)) throw NumericalError("forward: non-finite output");
    return cache;
}

double forward_feedforward(const Theta& theta, const ModelConfig& config,
                           std::span<const double> x) {
    check_shapes(theta, config, x.size());
    if (!(std::abs(norm2(x) - 1.0) <= 1e-12)) throw InputError("forward: input is not unit norm");
    const double in_scale = config.input_scale();
    Vector current(x.begin(), x.end());
    for (std::size_t h = 1; h <= config.H; ++h) {
        Vector z = matvec(theta.layer(h), current);
        for (double& v : z) v = in_scale * config.activation.value(v);
        check_finite(z, h);
        current = std::move(z);
    }
    const double f = dot(theta.a, current);
    if (!std::isfinite(f)) throw NumericalError("forward: non-finite output");
    return f;
}

BatchForward batch_forward(const Theta& theta, const ModelConfig& config, const Dataset& data) {
    if (data.X.cols() != config.d) throw InputError("batch_forward: input dimension differs from d");
    BatchForward out;
    const std::size_t n = data.X.rows();
    out.f.resize(n);
    out.caches.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.caches.push_back(forward(theta, config, data.X.row(i)));
        out.f[i] = out.caches.back().output;
    }
    out.layer_matrices.reserve(config.H);
    for (std::size_t h = 0; h < config.H; ++h) {
        DenseMatrix Xh(n, config.m);
        for (std::size_t i = 0; i < n; ++i) {
            const Vector& xi = out.caches[i].layer_outputs[h];
            std::copy(xi.begin(), xi.end(), Xh.row(i).begin());
        }
        out.layer_matrices.push_back(std::move(Xh));
    }
    return out;
}

Vector batch_outputs(const Theta& theta, const ModelConfig& config, const DenseMatrix& X) {
    Vector f(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) f[i] = forward(theta, config, X.row(i)).output;
    return f;
}

} // namespace resnet_ntk
