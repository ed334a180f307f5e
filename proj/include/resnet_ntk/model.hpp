#pragma once

#include "resnet_ntk/activation.hpp"
#include "resnet_ntk/linalg.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace resnet_ntk {

// Shape constants of the residual network
//   x¹ = √(c_φ/m) φ(W¹x),  xʰ = xʰ⁻¹ + c_res/(H√m) φ(Wʰxʰ⁻¹),  f = aᵀxᴴ.
struct ModelConfig {
    std::size_t n = 1;  // samples
    std::size_t d = 1;  // input dimension
    std::size_t m = 2;  // width
    std::size_t H = 1;  // depth
    double c_res = 0.5;
    double c_phi = 1.0;
    ActivationSpec activation = softplus_activation();

    // Scale c_res/(H√m) applied to residual branches.
    double residual_scale() const noexcept;
    // Scale √(c_φ/m) applied to the first layer.
    double input_scale() const noexcept;
    std::size_t parameter_count() const noexcept;

    void validate() const;
};

// 1 / E_{g~N(0,1)}[φ(g)²] by Gauss-Hermite quadrature.
double compute_c_phi(const ActivationSpec& activation, std::size_t nodes = 200);

// Builds and validates a config, filling c_phi from the activation.
ModelConfig make_config(std::size_t n, std::size_t d, std::size_t m, std::size_t H,
                        const ActivationSpec& activation, double c_res = 0.5);

// Trainable weights W¹ (m×d), W²…Wᴴ (m×m) and the frozen readout a.
struct Theta {
    DenseMatrix W1;
    std::vector<DenseMatrix> W; // W[k] holds layer k + 2
    Vector a;

    std::size_t depth() const noexcept { return W.size() + 1; }
    // 1-based layer access.
    const DenseMatrix& layer(std::size_t h) const;
    DenseMatrix& layer(std::size_t h);

    std::size_t parameter_count() const noexcept;
    bool all_finite() const noexcept;

    friend bool operator==(const Theta&, const Theta&) = default;
};

// Weight coordinates in layer order, each matrix row-major. `a` is excluded.
Vector flatten_weights(const Theta& theta);
void assign_weights(Theta& theta, std::span<const double> flat);
// ‖θ₁ − θ₀‖_F over all weight matrices.
double weight_distance(const Theta& lhs, const Theta& rhs);
// theta += scale · direction (weights only).
void add_scaled_weights(Theta& theta, double scale, const Theta& direction);
// Theta with the same shapes as `like` and all entries zero (a included).
Theta zeros_like(const Theta& like);
// max_j ‖Wʲ‖ spectral norms, layer order.
Vector layer_spectral_norms(const Theta& theta);

// i.i.d. N(0,1) weights from per-(layer,row) counter streams; a has its first
// m/2 entries at +‖y‖/√n and the rest at −‖y‖/√n.
Theta init_theta(const ModelConfig& config, std::span<const double> y, std::uint64_t seed);

struct Dataset {
    DenseMatrix X; // n×d, unit rows
    Vector y;

    std::size_t size() const noexcept { return X.rows(); }
    void validate() const;
};

Dataset make_dataset(DenseMatrix X, Vector y);

// n standard-normal rows in R^d projected onto the unit sphere.
DenseMatrix sphere_points(std::size_t n, std::size_t d, std::uint64_t seed);
// Independent ±1 labels.
Vector random_sign_labels(std::size_t n, std::uint64_t seed);
// Independent N(0,1) labels.
Vector gaussian_labels(std::size_t n, std::uint64_t seed);
// Scales every row of X to unit norm; zero rows are an InputError.
void normalize_rows(DenseMatrix& X);

struct ForwardCache {
    Vector input;
    std::vector<Vector> layer_outputs;  // x¹…xᴴ
    std::vector<Vector> preactivations; // Wʰxʰ⁻¹, h = 1…H
    double output = 0.0;

    // xʰ⁻¹ with x⁰ the input; h is 1-based.
    std::span<const double> layer_input(std::size_t h) const;
};

ForwardCache forward(const Theta& theta, const ModelConfig& config, std::span<const double> x);

// Plain feedforward recursion xʰ = √(c_φ/m) φ(Wʰxʰ⁻¹) on the same weights.
double forward_feedforward(const Theta& theta, const ModelConfig& config,
                           std::span<const double> x);

struct BatchForward {
    Vector f;
    std::vector<ForwardCache> caches;
    std::vector<DenseMatrix> layer_matrices; // X⁽¹⁾…X⁽ᴴ⁾, rows are samples
};

BatchForward batch_forward(const Theta& theta, const ModelConfig& config, const Dataset& data);
// Outputs only, without retaining caches.
Vector batch_outputs(const Theta& theta, const ModelConfig& config, const DenseMatrix& X);

} // namespace resnet_ntk
