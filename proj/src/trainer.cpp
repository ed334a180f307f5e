#include "resnet_ntk/trainer.hpp"

#include "resnet_ntk/jacobian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace resnet_ntk {
namespace {

// Relative slack on the monitors, covering summation roundoff at equality (τ = 0).
constexpr double kMonitorSlack = 1e-12;

struct BatchState {
    Vector residual;
    double sum_sq = 0.0;
    std::vector<std::vector<LayerGradient>> grads; // filled on demand
    std::vector<ForwardCache> caches;
};

BatchState evaluate(const Theta& theta, const ModelConfig& config, const Dataset& data) {
    BatchForward fw = batch_forward(theta, config, data);
    BatchState st;
    st.residual.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        st.residual[i] = fw.f[i] - data.y[i];
        st.sum_sq += st.residual[i] * st.residual[i];
    }
    st.caches = std::move(fw.caches);
    return st;
}

void fill_gradients(BatchState& st, const Theta& theta, const ModelConfig& config) {
    st.grads.clear();
    st.grads.reserve(st.caches.size());
    for (const auto& cache : st.caches)
        st.grads.push_back(
            grad_per_layer(theta, config, cache, backward_vectors(theta, config, cache)));
}

Theta assemble_gradient(const Theta& theta, const BatchState& st) {
    Theta g = zeros_like(theta);
    std::fill(g.a.begin(), g.a.end(), 0.0);
    for (std::size_t i = 0; i < st.grads.size(); ++i) {
        const double r = st.residual[i];
        if (r == 0.0) continue;
        for (std::size_t h = 1; h <= g.depth(); ++h) {
            const LayerGradient& lg = st.grads[i][h - 1];
            DenseMatrix& G = g.layer(h);
            for (std::size_t row = 0; row < lg.left.size(); ++row) {
                const double coef = r * lg.left[row];
                if (coef == 0.0) continue;
                auto out = G.row(row);
                for (std::size_t c = 0; c < lg.right.size(); ++c) out[c] += coef * lg.right[c];
            }
        }
    }
    return g;
}

double sigma_min_from(const BatchState& st) {
    const std::size_t n = st.grads.size();
    DenseMatrix K(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            double s = 0.0;
            for (std::size_t h = 0; h < st.grads[i].size(); ++h)
                s += dot(st.grads[i][h].left, st.grads[j][h].left) *
                     dot(st.grads[i][h].right, st.grads[j][h].right);
            K(i, j) = s;
            K(j, i) = s;
        }
    return std::sqrt(std::max(0.0, sym_eig_extremes(K).min_eig));
}

} // namespace

std::size_t TrainTrace::contraction_violations() const noexcept {
    return static_cast<std::size_t>(std::count_if(
        records.begin(), records.end(), [](const TrainRecord& r) { return !r.contraction_ok; }));
}

std::size_t TrainTrace::close_violations() const noexcept {
    return static_cast<std::size_t>(std::count_if(
        records.begin(), records.end(), [](const TrainRecord& r) { return !r.close_ok; }));
}

void TrainSettings::validate() const {
    if (!(eta > 0.0) || !std::isfinite(eta)) throw InputError("train: eta must be positive");
    if (!(eps >= 0.0)) throw InputError("train: eps must be nonnegative");
    if (!(alpha_for_checks >= 0.0) || !std::isfinite(alpha_for_checks))
        throw InputError("train: alpha_for_checks must be finite and nonnegative");
}

double loss(const Theta& theta, const ModelConfig& config, const Dataset& data) {
    return 0.5 * evaluate(theta, config, data).sum_sq;
}

Theta gradient(const Theta& theta, const ModelConfig& config, const Dataset& data) {
    BatchState st = evaluate(theta, config, data);
    fill_gradients(st, theta, config);
    return assemble_gradient(theta, st);
}

TrainResult train(const Theta& theta0, const ModelConfig& config, const Dataset& data,
                  const TrainSettings& settings) {
    settings.validate();
    TrainResult out{TrainTrace{}, theta0};
    Theta& theta = out.theta;
    const double rate = settings.eta * settings.alpha_for_checks * settings.alpha_for_checks / 2.0;
    const double base = std::max(0.0, 1.0 - rate);
    double misfit0 = 0.0;

    for (std::size_t iter = 0;; ++iter) {
        BatchState st;
        try {
            st = evaluate(theta, config, data);
        } catch (const NumericalError& e) {
            throw DivergenceError("train: diverged at iteration " + std::to_string(iter) + ": " +
                                      e.what(),
                                  out.trace);
        }
        if (!std::isfinite(st.sum_sq))
            throw DivergenceError("train: non-finite loss at iteration " + std::to_string(iter),
                                  out.trace);

        TrainRecord rec;
        rec.iter = iter;
        rec.loss = 0.5 * st.sum_sq;
        rec.misfit_norm = std::sqrt(st.sum_sq);
        rec.dist_from_init = weight_distance(theta, theta0);
        if (iter == 0) misfit0 = rec.misfit_norm;
        const double sq0 = misfit0 * misfit0;
        rec.contraction_ok = st.sum_sq <= std::pow(base, static_cast<double>(iter)) * sq0 +
                                              kMonitorSlack * sq0;
        rec.close_ok = (settings.alpha_for_checks / 4.0) * rec.dist_from_init + rec.misfit_norm <=
                       misfit0 * (1.0 + kMonitorSlack);

        const bool stop = rec.misfit_norm <= settings.eps || iter >= settings.max_iters;
        const bool want_sigma =
            settings.monitor_sigma_every > 0 && iter % settings.monitor_sigma_every == 0;
        if (!stop || want_sigma) fill_gradients(st, theta, config);
        if (want_sigma) rec.sigma_min_est = sigma_min_from(st);
        out.trace.records.push_back(rec);
        if (stop) break;

        const Theta g = assemble_gradient(theta, st);
        add_scaled_weights(theta, -settings.eta, g);
        if (!theta.all_finite())
            throw DivergenceError(
                "train: non-finite weights after iteration " + std::to_string(iter), out.trace);
    }
    return out;
}

CertifiedRun run_certified(const Dataset& data, const ModelConfig& config,
                           const RunOptions& options) {
    const std::uint64_t seed = options.certificate.seed;
    CertifyOptions cert_options = options.certificate;
    cert_options.eps = options.eps;
    const Theta theta0 = init_theta(config, data.y, seed);

    CertifiedRun run;
    run.certificate = certify(config, data, theta0, cert_options);
    const BoundsCertificate& cert = run.certificate;
    const double misfit0 = cert.initial_misfit;

    const EigenExtremes ext = sym_eig_extremes(ntk(theta0, config, data).K);
    // Eigenvalues below the solver's resolution n·ε·λ_max count as zero.
    const double resolution = static_cast<double>(data.size()) *
                              std::numeric_limits<double>::epsilon() * ext.max_eig;
    run.alpha_hat = ext.min_eig > resolution ? std::sqrt(ext.min_eig) : 0.0;
    run.beta_hat = std::sqrt(std::max(0.0, ext.max_eig));
    if (!(run.beta_hat > 0.0)) throw NumericalError("run_certified: Jacobian vanishes at init");

    double eta = 0.0;
    if (options.eta_policy == EtaPolicy::measured) {
        const double radius =
            run.alpha_hat > 0.0 ? 4.0 * misfit0 / run.alpha_hat
                                : std::numeric_limits<double>::infinity();
        if (std::isfinite(radius) && radius > 0.0 && options.lipschitz_pairs > 0)
            run.lipschitz_hat =
                empirical_lipschitz(theta0, config, data, radius, options.lipschitz_pairs, seed);
        // A singular NTK leaves no certified step; the fallback below takes over.
        if (run.alpha_hat > 0.0)
            eta = step_size(run.alpha_hat, run.beta_hat, run.lipschitz_hat, 1.0, misfit0,
                            options.step_rule);
        run.alpha_for_checks = run.alpha_hat / 2.0;
    } else {
        eta = options.step_rule == StepRule::conservative ? cert.eta : cert.eta_printed;
        run.alpha_for_checks = cert.alpha_dp;
    }
    if (!(eta > 0.0)) {
        eta = 1.0 / (2.0 * run.beta_hat * run.beta_hat);
        run.eta_fallback = true;
    }
    if (options.eta_override) eta = *options.eta_override;
    run.eta = eta;
    run.predicted_tau = iterations_to_eps(eta, run.alpha_for_checks, misfit0, options.eps);

    TrainSettings settings;
    settings.eta = eta;
    settings.max_iters = options.max_iters;
    settings.eps = options.eps;
    settings.monitor_sigma_every = options.monitor_sigma_every;
    settings.alpha_for_checks = run.alpha_for_checks;
    try {
        TrainResult result = train(theta0, config, data, settings);
        run.trace = std::move(result.trace);
        run.theta_final = std::move(result.theta);
    } catch (const DivergenceError& e) {
        run.trace = e.trace();
        run.diverged = true;
        run.divergence_message = e.what();
    }
    return run;
}

} // namespace resnet_ntk
