#pragma once

#include "resnet_ntk/bounds.hpp"
#include "resnet_ntk/errors.hpp"
#include "resnet_ntk/model.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace resnet_ntk {

struct TrainRecord {
    std::size_t iter = 0;
    double loss = 0.0;
    double misfit_norm = 0.0;
    double dist_from_init = 0.0;
    bool contraction_ok = true;
    bool close_ok = true;
    std::optional<double> sigma_min_est;

    friend bool operator==(const TrainRecord&, const TrainRecord&) = default;
};

struct TrainTrace {
    std::vector<TrainRecord> records;

    bool empty() const noexcept { return records.empty(); }
    const TrainRecord& back() const { return records.back(); }
    std::size_t contraction_violations() const noexcept;
    std::size_t close_violations() const noexcept;

    friend bool operator==(const TrainTrace&, const TrainTrace&) = default;
};

struct TrainSettings {
    double eta = 0.0;
    std::size_t max_iters = 1000;
    double eps = 1e-3;
    std::size_t monitor_sigma_every = 10; // 0 disables σ_min sampling
    double alpha_for_checks = 0.0;

    void validate() const;
};

// Thrown when a loss or weight turns non-finite; carries every finite record.
class DivergenceError : public NumericalError {
public:
    DivergenceError(const std::string& what, TrainTrace partial)
        : NumericalError(what), trace_(std::move(partial)) {}
    const TrainTrace& trace() const noexcept { return trace_; }

private:
    TrainTrace trace_;
};

// ½Σᵢ(f(xᵢ,θ) − yᵢ)²
double loss(const Theta& theta, const ModelConfig& config, const Dataset& data);

// ∂L/∂Wʰ = Σᵢ rᵢ·leftᵢ·rightᵢᵀ. The readout entry `a` of the result is zero.
Theta gradient(const Theta& theta, const ModelConfig& config, const Dataset& data);

struct TrainResult {
    TrainTrace trace;
    Theta theta;
};

TrainResult train(const Theta& theta0, const ModelConfig& config, const Dataset& data,
                  const TrainSettings& settings);

enum class EtaPolicy {
    // α̂ = σ_min(J(θ₀)), β̂ = ‖J(θ₀)‖, L̂ sampled in the ball of radius
    // 4‖f(θ₀)−y‖/α̂, and ‖f(θ₀)−y‖ in place of κ‖y‖. Monitors use α̂/2.
    measured,
    // α_δ′, β_δ′, L_δ′ and κ from the certificate. Monitors use α_δ′.
    certified,
};

struct RunOptions {
    CertifyOptions certificate;
    double eps = 1e-3;
    std::size_t max_iters = 100'000;
    EtaPolicy eta_policy = EtaPolicy::measured;
    StepRule step_rule = StepRule::conservative;
    std::optional<double> eta_override;
    std::size_t monitor_sigma_every = 10;
    std::size_t lipschitz_pairs = 8; // measured policy only
};

struct CertifiedRun {
    BoundsCertificate certificate;
    TrainTrace trace;
    std::optional<Theta> theta_final; // empty after divergence
    bool diverged = false;
    std::string divergence_message;
    double eta = 0.0;
    double alpha_hat = 0.0; // σ_min(J(θ₀))
    double beta_hat = 0.0;  // ‖J(θ₀)‖
    double lipschitz_hat = 0.0;
    double alpha_for_checks = 0.0;
    bool eta_fallback = false; // η from the degenerate 1/(2β̂²) rule
    std::optional<std::uint64_t> predicted_tau;
};

// init → certificate → η → training with monitors. theta0 comes from
// init_theta(config, data.y, options.certificate.seed). Divergence does not
// throw here; it is reported through `diverged` with the finite records kept.
CertifiedRun run_certified(const Dataset& data, const ModelConfig& config,
                           const RunOptions& options);

} // namespace resnet_ntk
