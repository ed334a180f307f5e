#pragma once

#include "resnet_ntk/linalg.hpp"
#include "resnet_ntk/model.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>

namespace resnet_ntk {

// Monte-Carlo estimate of λ(X) = λ_min(Σ(X)),
// Σ(X) = E_w[(φ′(Xw)φ′(Xw)ᵀ) ⊙ XXᵀ], w ~ N(0, I_d).
struct LambdaEstimate {
    double value = 0.0;
    // Delta-method standard error of λ_min combined in quadrature with the
    // eigensolver's resolution n·ε·‖Σ̂‖_F.
    double standard_error = 0.0;
    std::size_t samples = 0;
    std::uint64_t seed = 0;
};

inline constexpr std::size_t kMinLambdaSamples = 10'000;

LambdaEstimate lambda_X(const DenseMatrix& X, const ActivationSpec& activation,
                        std::size_t samples, std::uint64_t seed);

// ‖W‖ ≤ A at the ball edge: [3 + ln(1/(1−δ′))/(2Bc_res)]·√m.
double A_ball(std::size_t m, double B, double c_res, double delta_prime);

// (1−δ′)·√(c_φ/m)·‖a‖₂·e^{−2Bc_res}·√λ(X)
double alpha0(const ModelConfig& config, double a_norm, double lambda_X, double delta_prime);
double alpha_ball(double alpha0, double delta_prime);

double beta_pointwise(const ModelConfig& config, double a_norm, double A, double X_frob);
double beta_ball(const ModelConfig& config, double y_norm, double delta_prime);

// Jacobian Lipschitz constant per unit Frobenius distance is C·√n.
double lipschitz_constant_C(const ModelConfig& config, double a_inf, double A);
double lipschitz_ball(const ModelConfig& config, double y_norm, double delta_prime);

// layer_frob_norms holds ‖X⁽ᵏ⁾‖_F for k = 1…H−1.
double kappa(const ModelConfig& config, double delta, double X_frob,
             std::span<const double> layer_frob_norms);

// R_{δ,δ′}; infinite when λ(X) ≤ 0.
double radius_ball(double kappa, double lambda_X, const ModelConfig& config,
                   double delta_prime);

struct WidthRequirement {
    double K_width = 0.0;
    double first_term = 0.0;
    double second_term = 0.0;
    std::optional<std::uint64_t> m_min; // empty when K is infinite
};

WidthRequirement min_width(double kappa, double lambda_X, const ModelConfig& config,
                           double delta_prime);

enum class StepRule {
    conservative, // 1/(2β²)·min(1, α²/(Lκ‖y‖))
    printed,      // 1/β²·min(1, α²/(Lκ‖y‖))
};

double step_size(double alpha, double beta, double L, double kappa, double y_norm,
                 StepRule rule = StepRule::conservative);

// Smallest τ with (1−ηα²/2)^{τ/2}·misfit ≤ ε. Empty when ηα² = 0.
std::optional<std::uint64_t> iterations_to_eps(double eta, double alpha, double initial_misfit,
                                               double eps);

struct DepthCertificate {
    double first_lhs = 0.0, first_rhs = 0.0;
    double second_lhs = 0.0, second_rhs = 0.0;
    bool first_ok = false;
    bool second_ok = false;
    bool ok() const noexcept { return first_ok && second_ok; }
};

// Evaluates the two depth conditions
//   (1 − 2Bc_res/H)^{2(H−1)} ≥ (1−δ′)e^{−4Bc_res}
//   (1 − (Bc_res/H)(2 + R/√m))^{2(H−1)} ≥ √(1−δ′)·e^{−2(2+R/√m)Bc_res}.
DepthCertificate depth_certificate(const ModelConfig& config, double delta_prime, double radius);

// θ sampled uniformly in the weight-space Frobenius ball of the given radius.
Theta sample_in_ball(const Theta& center, double radius, std::uint64_t seed, std::uint32_t index);

// ‖J(θ₂) − J(θ₁)‖ from rank-one factors, without materializing J.
double jacobian_difference_norm(const Theta& lhs, const Theta& rhs, const ModelConfig& config,
                                const Dataset& data);
// Same quantity from explicit Jacobians and power iteration (small configs).
double jacobian_difference_norm_explicit(const Theta& lhs, const Theta& rhs,
                                         const ModelConfig& config, const Dataset& data);

// max over sampled pairs in the ball of ‖J(θ₂)−J(θ₁)‖/‖θ₂−θ₁‖_F. Half of the
// pairs are independent ball points, half are close pairs (separation
// radius/100) around a ball point.
double empirical_lipschitz(const Theta& theta0, const ModelConfig& config, const Dataset& data,
                           double radius, std::size_t pairs, std::uint64_t seed);

struct SigmaMinBall {
    double min_over_ball = 0.0;
    double at_init = 0.0;
};

SigmaMinBall empirical_sigma_min_ball(const Theta& theta0, const ModelConfig& config,
                                      const Dataset& data, double radius, std::size_t samples,
                                      std::uint64_t seed);

struct BallChecks {
    bool evaluated = false;
    double radius = 0.0;
    double sigma_min_ball = 0.0;
    double sigma_min_init = 0.0;
    bool sigma_ok = false;     // sigma_min_ball ≥ alpha_dp
    double lipschitz_estimate = 0.0;
    bool lipschitz_ok = false; // estimate ≤ L_dp

    friend bool operator==(const BallChecks&, const BallChecks&) = default;
};

struct BoundsCertificate {
    double lambda_X = 0.0;
    double lambda_X_se = 0.0;
    double alpha0 = 0.0;
    double alpha_dp = 0.0;
    double beta_dp = 0.0;
    double L_dp = 0.0;
    double kappa = 0.0;
    double R = 0.0;          // R_{δ,δ′}
    double R_theorem = 0.0;  // 4‖f(θ₀)−y‖/α_δ′
    double K_width = 0.0;
    std::optional<std::uint64_t> m_min;
    double eta = 0.0;        // conservative rule
    double eta_printed = 0.0;
    double eps = 0.0;
    std::optional<std::uint64_t> tau_of_eps;
    bool width_ok = false;
    bool H_ok = false;
    BallChecks ball;

    // provenance
    std::uint64_t seed = 0;
    std::size_t lambda_samples = 0;
    double delta = 0.0;
    double delta_prime = 0.0;
    double y_norm = 0.0;
    double initial_misfit = 0.0;

    // τ(ε) with the certified η and α_δ′.
    std::optional<std::uint64_t> tau(double eps) const;

    friend bool operator==(const BoundsCertificate&, const BoundsCertificate&) = default;
};

struct CertifyOptions {
    double delta = 1.0;
    double delta_prime = 0.5;
    std::size_t lambda_samples = 100'000;
    double eps = 1e-3;
    std::uint64_t seed = 0;
    // Empirical checks in the ball of radius R_theorem; skipped when 0.
    std::size_t ball_samples = 0;
    std::size_t lipschitz_pairs = 0;
};

BoundsCertificate certify(const ModelConfig& config, const Dataset& data, const Theta& theta0,
                          const CertifyOptions& options);

} // namespace resnet_ntk
