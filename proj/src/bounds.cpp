#include "resnet_ntk/bounds.hpp"

#include "resnet_ntk/errors.hpp"
#include "resnet_ntk/jacobian.hpp"
#include "resnet_ntk/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace resnet_ntk {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_delta_prime(double delta_prime, const char* where) {
    if (!(delta_prime >= 0.0 && delta_prime < 1.0))
        throw InputError(std::string(where) + ": delta' must lie in [0, 1)");
}

// 3 + ln(1/(1−δ′))/(2Bc_res)
double ball_norm_factor(double B, double c_res, double delta_prime) {
    return 3.0 + std::log(1.0 / (1.0 - delta_prime)) / (2.0 * B * c_res);
}

std::optional<std::uint64_t> ceil_count(double x) {
    if (!std::isfinite(x) || x >= 9.0e18) return std::nullopt;
    return static_cast<std::uint64_t>(std::ceil(x));
}

} // namespace

LambdaEstimate lambda_X(const DenseMatrix& X, const ActivationSpec& activation,
                        std::size_t samples, std::uint64_t seed) {
    if (samples < kMinLambdaSamples)
        throw InputError("lambda_X: at least " + std::to_string(kMinLambdaSamples) +
                         " Monte-Carlo samples required (got " + std::to_string(samples) + ")");
    const std::size_t n = X.rows();
    const std::size_t d = X.cols();
    if (n == 0 || d == 0) throw InputError("lambda_X: empty input matrix");
    for (std::size_t i = 0; i < n; ++i)
        if (!(std::abs(norm2(X.row(i)) - 1.0) <= 1e-12))
            throw InputError("lambda_X: row " + std::to_string(i) + " is not unit norm");

    const DenseMatrix XXt = gram_of_rows(X);
    // Per-sample derivative vectors φ′(Xw_k), kept for the second pass.
    DenseMatrix derivs(samples, n);
    DenseMatrix outer_mean(n, n);
    Vector w(d);
    for (std::size_t k = 0; k < samples; ++k) {
        CounterRng rng(seed, Stream::lambda_mc, static_cast<std::uint32_t>(k),
                       static_cast<std::uint32_t>(k >> 32));
        for (double& v : w) v = rng.normal();
        auto row = derivs.row(k);
        for (std::size_t i = 0; i < n; ++i) row[i] = activation.derivative(dot(X.row(i), w));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j <= i; ++j) outer_mean(i, j) += row[i] * row[j];
    }
    const double inv_n = 1.0 / static_cast<double>(samples);
    DenseMatrix sigma(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            const double v = outer_mean(i, j) * inv_n * XXt(i, j);
            sigma(i, j) = v;
            sigma(j, i) = v;
        }

    const SymmetricEigen eig = sym_eigen(sigma);
    Vector v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = eig.vectors(i, 0);

    // Delta method: ∂λ_min/∂Σ = vvᵀ, so λ̂ is the mean of s_k = vᵀS_kv.
    double mean = 0.0;
    double m2 = 0.0;
    Vector t(n);
    for (std::size_t k = 0; k < samples; ++k) {
        const auto row = derivs.row(k);
        for (std::size_t i = 0; i < n; ++i) t[i] = v[i] * row[i];
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += t[i] * dot(XXt.row(i), t);
        const double delta = s - mean;
        mean += delta / static_cast<double>(k + 1);
        m2 += delta * (s - mean);
    }
    const double variance = samples > 1 ? m2 / static_cast<double>(samples - 1) : 0.0;
    const double se_stat = std::sqrt(variance * inv_n);
    const double resolution =
        static_cast<double>(n) * std::numeric_limits<double>::epsilon() * frobenius_norm(sigma);

    LambdaEstimate out;
    out.value = eig.values.front();
    out.standard_error = std::hypot(se_stat, resolution);
    out.samples = samples;
    out.seed = seed;
    return out;
}

double A_ball(std::size_t m, double B, double c_res, double delta_prime) {
    require_delta_prime(delta_prime, "A_ball");
    return ball_norm_factor(B, c_res, delta_prime) * std::sqrt(static_cast<double>(m));
}

double alpha0(const ModelConfig& config, double a_norm, double lambda_X, double delta_prime) {
    require_delta_prime(delta_prime, "alpha0");
    if (lambda_X < 0.0) throw InputError("alpha0: lambda(X) must be nonnegative");
    const double B = config.activation.B;
    return (1.0 - delta_prime) * config.input_scale() * a_norm *
           std::exp(-2.0 * B * config.c_res) * std::sqrt(lambda_X);
}

double alpha_ball(double alpha0, double delta_prime) {
    require_delta_prime(delta_prime, "alpha_ball");
    return (1.0 - delta_prime) * alpha0;
}

double beta_pointwise(const ModelConfig& config, double a_norm, double A, double X_frob) {
    const double B = config.activation.B;
    const double m = static_cast<double>(config.m);
    const double H = static_cast<double>(config.H);
    const double sqrt_cphi = std::sqrt(config.c_phi);
    return a_norm *
           (B * config.input_scale() + A * B * B * sqrt_cphi * config.c_res / (std::sqrt(H) * m)) *
           std::exp(A * B * config.c_res / std::sqrt(m)) * X_frob;
}

double beta_ball(const ModelConfig& config, double y_norm, double delta_prime) {
    require_delta_prime(delta_prime, "beta_ball");
    const double B = config.activation.B;
    const double c = config.c_res;
    const double sqrt_cphi = std::sqrt(config.c_phi);
    const double H = static_cast<double>(config.H);
    const double factor = ball_norm_factor(B, c, delta_prime);
    return (y_norm / std::sqrt(1.0 - delta_prime)) *
           (B * sqrt_cphi + B * B * (sqrt_cphi * c / std::sqrt(H)) * factor) *
           std::exp(3.0 * B * c);
}

double lipschitz_constant_C(const ModelConfig& config, double a_inf, double A) {
    const double B = config.activation.B;
    const double M = config.activation.M;
    const double c = config.c_res;
    const double cphi = config.c_phi;
    const double sqrt_m = std::sqrt(static_cast<double>(config.m));
    const double inv_sqrt_H = 1.0 / std::sqrt(static_cast<double>(config.H));
    const double e1 = std::exp(A * B * c / sqrt_m);

    const double bracket = A * B * M * (1.0 + inv_sqrt_H) + B * B * (1.0 + inv_sqrt_H) +
                           inv_sqrt_H * A * B * B * B * (c / sqrt_m) * e1;
    const double first = std::sqrt(cphi) * a_inf * e1 * (M + (c / sqrt_m) * bracket);
    const double second = (c * cphi / static_cast<double>(config.m)) * a_inf * e1 * e1 * A * A *
                          B * B * M * (1.0 + inv_sqrt_H) * (1.0 + (c / sqrt_m) * A * B * e1);
    return first + second;
}

double lipschitz_ball(const ModelConfig& config, double y_norm, double delta_prime) {
    require_delta_prime(delta_prime, "lipschitz_ball");
    const double B = config.activation.B;
    const double M = config.activation.M;
    const double c = config.c_res;
    const double cphi = config.c_phi;
    const double sqrt_m = std::sqrt(static_cast<double>(config.m));
    const double inv_sqrt_H = 1.0 / std::sqrt(static_cast<double>(config.H));
    const double factor = ball_norm_factor(B, c, delta_prime);
    // e^{3Bc_res}/√(1−δ′) = e^{A·B·c_res/√m} at A = A_ball.
    const double growth = std::exp(3.0 * B * c) / std::sqrt(1.0 - delta_prime);

    const double bracket = M + c * factor * B * M * (1.0 + inv_sqrt_H) +
                           c * B * B * (1.0 + inv_sqrt_H) +
                           c * inv_sqrt_H * factor * B * B * B * c * growth;
    const double first = std::sqrt(cphi) * y_norm * growth * bracket;
    const double second = c * cphi * y_norm * (std::exp(6.0 * B * c) / (1.0 - delta_prime)) *
                          factor * factor * B * B * M * (1.0 + inv_sqrt_H) *
                          (1.0 + (c / sqrt_m) * factor * B * growth);
    return first + second;
}

double kappa(const ModelConfig& config, double delta, double X_frob,
             std::span<const double> layer_frob_norms) {
    if (layer_frob_norms.size() + 1 != config.H)
        throw InputError("kappa: expected H-1 layer Frobenius norms");
    const double B = config.activation.B;
    const double sqrt_cphi = std::sqrt(config.c_phi);
    const double sqrt_n = std::sqrt(static_cast<double>(config.n));
    double layer_sum = 0.0;
    for (double v : layer_frob_norms) layer_sum += v / sqrt_n;
    return 1.0 + (sqrt_cphi + config.c_res) * (2.0 + delta * B) +
           (sqrt_cphi * X_frob / sqrt_n +
            (config.c_res / static_cast<double>(config.H)) * layer_sum) *
               B;
}

double radius_ball(double kappa, double lambda_X, const ModelConfig& config,
                   double delta_prime) {
    require_delta_prime(delta_prime, "radius_ball");
    if (lambda_X < 0.0) throw InputError("radius_ball: lambda(X) must be nonnegative");
    if (lambda_X == 0.0) return kInf;
    const double B = config.activation.B;
    const double one_minus = 1.0 - delta_prime;
    return (4.0 * kappa / (one_minus * one_minus * std::sqrt(config.c_phi))) *
           (std::exp(2.0 * B * config.c_res) / std::sqrt(lambda_X)) *
           std::sqrt(static_cast<double>(config.n));
}

WidthRequirement min_width(double kappa, double lambda_X, const ModelConfig& config,
                           double delta_prime) {
    if (lambda_X < 0.0) throw InputError("min_width: lambda(X) must be nonnegative");
    if (!(delta_prime >= 0.0 && delta_prime <= 1.0))
        throw InputError("min_width: delta' must lie in [0, 1]");
    WidthRequirement out;
    if (lambda_X == 0.0 || delta_prime == 0.0 || delta_prime == 1.0) {
        out.first_term = out.second_term = out.K_width = kInf;
        return out;
    }
    const double B = config.activation.B;
    const double c = config.c_res;
    const double om = 1.0 - delta_prime;
    const double om4 = om * om * om * om;
    const double log_term = std::log(1.0 / om);
    const double growth = std::exp(4.0 * B * c);
    const double k2 = kappa * kappa;
    out.first_term = 64.0 * k2 * B * B * c * c * growth /
                     (om4 * log_term * log_term * config.c_phi * lambda_X);
    out.second_term = 32.0 * k2 * growth / (static_cast<double>(config.d) * delta_prime *
                                            delta_prime * om4 * config.c_phi * lambda_X);
    out.K_width = std::max(out.first_term, out.second_term);
    out.m_min = ceil_count(out.K_width * static_cast<double>(config.n));
    return out;
}

double step_size(double alpha, double beta, double L, double kappa, double y_norm,
                 StepRule rule) {
    if (!(beta > 0.0)) throw InputError("step_size: beta must be positive");
    if (alpha < 0.0 || L < 0.0 || kappa < 0.0 || y_norm < 0.0)
        throw InputError("step_size: alpha, L, kappa and |y| must be nonnegative");
    const double prefactor = rule == StepRule::conservative ? 0.5 : 1.0;
    const double denom = L * kappa * y_norm;
    const double ratio = denom > 0.0 ? alpha * alpha / denom : kInf;
    return prefactor / (beta * beta) * std::min(1.0, ratio);
}

std::optional<std::uint64_t> iterations_to_eps(double eta, double alpha, double initial_misfit,
                                               double eps) {
    if (!(eta >= 0.0) || !(alpha >= 0.0) || !(initial_misfit >= 0.0) || !(eps >= 0.0))
        throw InputError("iterations_to_eps: arguments must be nonnegative");
    if (eps >= initial_misfit) return std::uint64_t{0};
    const double rate = eta * alpha * alpha / 2.0;
    if (rate == 0.0 || eps == 0.0) return std::nullopt;
    if (rate >= 1.0) return std::uint64_t{1};
    const double tau = 2.0 * std::log(initial_misfit / eps) / -std::log1p(-rate);
    // Absorb last-ulp noise so exact integers are not bumped up by one.
    return ceil_count(tau * (1.0 - 8.0 * std::numeric_limits<double>::epsilon()));
}

DepthCertificate depth_certificate(const ModelConfig& config, double delta_prime, double radius) {
    require_delta_prime(delta_prime, "depth_certificate");
    const double B = config.activation.B;
    const double c = config.c_res;
    const double H = static_cast<double>(config.H);
    const double exponent = 2.0 * (H - 1.0);
    const double r_over = radius / std::sqrt(static_cast<double>(config.m));

    DepthCertificate out;
    out.first_lhs = std::pow(1.0 - 2.0 * B * c / H, exponent);
    out.first_rhs = (1.0 - delta_prime) * std::exp(-4.0 * B * c);
    out.second_lhs = std::pow(1.0 - (B * c / H) * (2.0 + r_over), exponent);
    out.second_rhs = std::sqrt(1.0 - delta_prime) * std::exp(-2.0 * (2.0 + r_over) * B * c);
    out.first_ok = out.first_lhs >= out.first_rhs;
    out.second_ok = std::isfinite(r_over) && out.second_lhs >= out.second_rhs;
    return out;
}

namespace {

// Uniform draw in the weight ball: Gaussian direction, radius ρ·U^{1/p}.
Theta ball_point(const Theta& center, double radius, std::uint64_t seed, Stream stream,
                 std::uint32_t index) {
    CounterRng rng(seed, stream, index, 0);
    const double p = static_cast<double>(center.parameter_count());
    const double scale = radius * std::pow(rng.uniform(), 1.0 / p);
    Theta dir = zeros_like(center);
    double sq = 0.0;
    for (std::size_t h = 1; h <= dir.depth(); ++h)
        for (double& v : dir.layer(h).values()) {
            v = rng.normal();
            sq += v * v;
        }
    Theta out = center;
    add_scaled_weights(out, scale / std::sqrt(sq), dir);
    return out;
}

} // namespace

Theta sample_in_ball(const Theta& center, double radius, std::uint64_t seed, std::uint32_t index) {
    if (!(radius >= 0.0) || !std::isfinite(radius))
        throw InputError("sample_in_ball: radius must be finite and nonnegative");
    return ball_point(center, radius, seed, Stream::ball, index);
}

double jacobian_difference_norm(const Theta& lhs, const Theta& rhs, const ModelConfig& config,
                                const Dataset& data) {
    const auto g1 = batch_gradients(lhs, config, data);
    const auto g2 = batch_gradients(rhs, config, data);
    const std::size_t n = data.size();

    // Per layer: l₂r₂ᵀ − l₁r₁ᵀ = Δl·r₂ᵀ + l₁·Δrᵀ, so the difference Gram is a
    // sum of rank-one inner products free of large-term cancellation.
    std::vector<std::vector<Vector>> dl(n), dr(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t h = 0; h < config.H; ++h) {
            Vector a = g2[i][h].left;
            for (std::size_t k = 0; k < a.size(); ++k) a[k] -= g1[i][h].left[k];
            Vector b = g2[i][h].right;
            for (std::size_t k = 0; k < b.size(); ++k) b[k] -= g1[i][h].right[k];
            dl[i].push_back(std::move(a));
            dr[i].push_back(std::move(b));
        }

    DenseMatrix gram(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            double s = 0.0;
            for (std::size_t h = 0; h < config.H; ++h) {
                const Vector& r2i = g2[i][h].right;
                const Vector& r2j = g2[j][h].right;
                const Vector& l1i = g1[i][h].left;
                const Vector& l1j = g1[j][h].left;
                s += dot(dl[i][h], dl[j][h]) * dot(r2i, r2j) +
                     dot(dl[i][h], l1j) * dot(r2i, dr[j][h]) +
                     dot(l1i, dl[j][h]) * dot(dr[i][h], r2j) +
                     dot(l1i, l1j) * dot(dr[i][h], dr[j][h]);
            }
            gram(i, j) = s;
            gram(j, i) = s;
        }
    return std::sqrt(std::max(0.0, sym_eig_extremes(gram).max_eig));
}

double jacobian_difference_norm_explicit(const Theta& lhs, const Theta& rhs,
                                         const ModelConfig& config, const Dataset& data) {
    const DenseMatrix diff =
        subtract(full_jacobian(rhs, config, data), full_jacobian(lhs, config, data));
    return spectral_norm(diff, 1e-12, 100000).value;
}

double empirical_lipschitz(const Theta& theta0, const ModelConfig& config, const Dataset& data,
                           double radius, std::size_t pairs, std::uint64_t seed) {
    if (!(radius > 0.0) || !std::isfinite(radius))
        throw InputError("empirical_lipschitz: radius must be finite and positive");
    if (pairs == 0) throw InputError("empirical_lipschitz: need at least one pair");
    double best = 0.0;
    for (std::size_t k = 0; k < pairs; ++k) {
        const auto idx = static_cast<std::uint32_t>(2 * k);
        const Theta first = ball_point(theta0, radius, seed, Stream::lipschitz, idx);
        Theta second;
        if (k % 2 == 0) {
            second = ball_point(theta0, radius, seed, Stream::lipschitz, idx + 1);
        } else {
            // Close pair: a fixed-length step of radius/100 from `first`.
            const Theta unit = ball_point(zeros_like(theta0), 1.0, seed, Stream::lipschitz, idx + 1);
            const double len = weight_distance(unit, zeros_like(theta0));
            second = first;
            add_scaled_weights(second, (radius / 100.0) / len, unit);
        }
        const double dist = weight_distance(first, second);
        if (!(dist > 0.0)) continue;
        best = std::max(best, jacobian_difference_norm(first, second, config, data) / dist);
    }
    return best;
}

SigmaMinBall empirical_sigma_min_ball(const Theta& theta0, const ModelConfig& config,
                                      const Dataset& data, double radius, std::size_t samples,
                                      std::uint64_t seed) {
    SigmaMinBall out;
    out.at_init = sigma_min_jacobian(theta0, config, data);
    out.min_over_ball = out.at_init;
    for (std::size_t k = 0; k < samples; ++k) {
        const Theta probe = sample_in_ball(theta0, radius, seed, static_cast<std::uint32_t>(k));
        out.min_over_ball = std::min(out.min_over_ball, sigma_min_jacobian(probe, config, data));
    }
    return out;
}

std::optional<std::uint64_t> BoundsCertificate::tau(double eps_target) const {
    return iterations_to_eps(eta, alpha_dp, initial_misfit, eps_target);
}

BoundsCertificate certify(const ModelConfig& config, const Dataset& data, const Theta& theta0,
                          const CertifyOptions& options) {
    config.validate();
    data.validate();
    if (data.size() != config.n || data.X.cols() != config.d)
        throw InputError("certify: dataset shape differs from the model config");
    if (!(options.delta >= 0.0)) throw InputError("certify: delta must be nonnegative");
    if (!(options.delta_prime > 0.0 && options.delta_prime < 1.0))
        throw InputError("certify: delta' must lie in (0, 1)");

    BoundsCertificate cert;
    cert.seed = options.seed;
    cert.lambda_samples = options.lambda_samples;
    cert.delta = options.delta;
    cert.delta_prime = options.delta_prime;
    cert.eps = options.eps;
    cert.y_norm = norm2(data.y);

    const BatchForward fw = batch_forward(theta0, config, data);
    double misfit_sq = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double r = fw.f[i] - data.y[i];
        misfit_sq += r * r;
    }
    cert.initial_misfit = std::sqrt(misfit_sq);

    const LambdaEstimate lam =
        lambda_X(data.X, config.activation, options.lambda_samples, options.seed);
    cert.lambda_X = lam.value;
    cert.lambda_X_se = lam.standard_error;
    // An estimate within three standard errors of zero is treated as singular.
    const double lambda_eff = lam.value > 3.0 * lam.standard_error ? lam.value : 0.0;

    const double a_norm = norm2(theta0.a);
    Vector layer_norms;
    for (std::size_t k = 0; k + 1 < config.H; ++k)
        layer_norms.push_back(frobenius_norm(fw.layer_matrices[k]));

    cert.alpha0 = alpha0(config, a_norm, lambda_eff, options.delta_prime);
    cert.alpha_dp = alpha_ball(cert.alpha0, options.delta_prime);
    cert.beta_dp = beta_ball(config, cert.y_norm, options.delta_prime);
    cert.L_dp = lipschitz_ball(config, cert.y_norm, options.delta_prime);
    cert.kappa = kappa(config, options.delta, frobenius_norm(data.X), layer_norms);
    cert.R = radius_ball(cert.kappa, lambda_eff, config, options.delta_prime);
    cert.R_theorem = cert.alpha_dp > 0.0 ? 4.0 * cert.initial_misfit / cert.alpha_dp : kInf;

    const WidthRequirement width = min_width(cert.kappa, lambda_eff, config, options.delta_prime);
    cert.K_width = width.K_width;
    cert.m_min = width.m_min;
    cert.width_ok = width.m_min.has_value() && config.m >= *width.m_min;

    cert.eta = step_size(cert.alpha_dp, cert.beta_dp, cert.L_dp, cert.kappa, cert.y_norm,
                         StepRule::conservative);
    cert.eta_printed = step_size(cert.alpha_dp, cert.beta_dp, cert.L_dp, cert.kappa, cert.y_norm,
                                 StepRule::printed);
    cert.tau_of_eps = cert.tau(options.eps);
    cert.H_ok = std::isfinite(cert.R) && depth_certificate(config, options.delta_prime, cert.R).ok();

    if ((options.ball_samples > 0 || options.lipschitz_pairs > 0) &&
        std::isfinite(cert.R_theorem) && cert.R_theorem > 0.0) {
        BallChecks& ball = cert.ball;
        ball.evaluated = true;
        ball.radius = cert.R_theorem;
        const SigmaMinBall smin = empirical_sigma_min_ball(theta0, config, data, ball.radius,
                                                           options.ball_samples, options.seed);
        ball.sigma_min_ball = smin.min_over_ball;
        ball.sigma_min_init = smin.at_init;
        ball.sigma_ok = smin.min_over_ball >= cert.alpha_dp;
        if (options.lipschitz_pairs > 0) {
            ball.lipschitz_estimate = empirical_lipschitz(theta0, config, data, ball.radius,
                                                          options.lipschitz_pairs, options.seed);
            ball.lipschitz_ok = ball.lipschitz_estimate <= cert.L_dp;
        }
    }
    return cert;
}

} // namespace resnet_ntk
