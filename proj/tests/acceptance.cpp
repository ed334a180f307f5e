// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include "resnet_ntk/bounds.hpp"
#include "resnet_ntk/commands.hpp"
#include "resnet_ntk/jacobian.hpp"
#include "resnet_ntk/model.hpp"
#include "resnet_ntk/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

using namespace resnet_ntk;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* pattern, double a, double b = 0, double c = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, pattern, a, b, c);
    return buf;
}

struct Setup {
    ModelConfig config;
    Dataset data;
    Theta theta;
};

Setup make_setup(const ActivationSpec& act, std::uint64_t seed, std::size_t n, std::size_t d,
                 std::size_t m, std::size_t H) {
    Setup s{make_config(n, d, m, H, act),
            make_dataset(sphere_points(n, d, seed), random_sign_labels(n, seed)), {}};
    s.theta = init_theta(s.config, s.data.y, seed);
    return s;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t k = v.size() / 2;
    return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

Outcome jacobian_vs_differences() {
    const auto t0 = std::chrono::steady_clock::now();
    const Setup s = make_setup(softplus_activation(), 7, 6, 4, 16, 3);
    const DenseMatrix J = full_jacobian(s.theta, s.config, s.data);
    const DenseMatrix Jfd = finite_diff_jacobian(s.theta, s.config, s.data, 1e-5);
    const double err = frobenius_distance(J, Jfd) / frobenius_norm(J);
    const double t = seconds_since(t0);
    return {err <= 1e-5 && t < 10.0, fmt("relative error %.3e, %.2f s", err, t)};
}

Outcome ntk_decomposition() {
    const Setup s = make_setup(softplus_activation(), 7, 6, 4, 16, 3);
    const DenseMatrix J = full_jacobian(s.theta, s.config, s.data);
    const DenseMatrix JJt = multiply(J, J.transposed());
    const GramBlocks blocks = gram_blocks(s.theta, s.config, s.data);
    DenseMatrix sum(6, 6);
    double worst = 0;
    for (const DenseMatrix& G : blocks.G) {
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < 6; ++j) sum(i, j) += G(i, j);
        const double min_eig = sym_eigen(G).values.front();
        worst = std::min(worst, min_eig / trace(G));
    }
    const double residual = frobenius_distance(JJt, sum) / frobenius_norm(JJt);
    return {residual <= 1e-10 && worst >= -1e-9,
            fmt("residual %.3e, min eigenvalue/trace %.3e", residual, worst)};
}

Outcome lambda_estimator() {
    const LambdaEstimate ortho = lambda_X(DenseMatrix::identity(6), identity_activation(), 100000, 1);
    DenseMatrix X = sphere_points(6, 6, 2);
    for (std::size_t k = 0; k < 6; ++k) X(5, k) = X(0, k);
    const LambdaEstimate dup = lambda_X(X, softplus_activation(), 100000, 3);
    const bool ok = std::abs(ortho.value - 1.0) <= 0.01 && std::abs(dup.value) <= 3 * dup.standard_error;
    return {ok, fmt("orthonormal %.6f, duplicated %.3e (SE %.3e)", ortho.value, dup.value,
                    dup.standard_error)};
}

Outcome sigma_min_trend() {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<std::size_t> widths{64, 256, 1024, 4096};
    const ActivationSpec act = softplus_activation();
    std::vector<double> medians;
    std::size_t above = 0;
    double worst_ratio = std::numeric_limits<double>::infinity();
    for (std::size_t m : widths) {
        std::vector<double> normalized;
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            const Setup s = make_setup(act, seed, 8, 8, m, 4);
            const double sigma = sigma_min_jacobian(s.theta, s.config, s.data);
            const double v = sigma * std::sqrt(static_cast<double>(m) / s.config.c_phi) / norm2(s.theta.a);
            normalized.push_back(v);
            if (m == 4096) {
                const double lam = lambda_X(s.data.X, act, 100000, seed).value;
                const double floor = 0.9 * std::exp(-2 * act.B * s.config.c_res) * std::sqrt(std::max(lam, 0.0));
                worst_ratio = std::min(worst_ratio, v / floor);
                if (v >= floor) ++above;
            }
        }
        medians.push_back(median(normalized));
    }
    const bool monotone = std::is_sorted(medians.begin(), medians.end());
    const double t = seconds_since(t0);
    std::ostringstream d;
    d << "medians";
    for (double v : medians) d << ' ' << fmt("%.4f", v);
    d << fmt(", %.0f/20 above the floor (worst ratio %.3f), %.1f s", static_cast<double>(above), worst_ratio, t);
    return {monotone && above >= 18 && t < 600.0, d.str()};
}

Outcome convergence() {
    std::size_t passed = 0;
    std::ostringstream d;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const ModelConfig config = make_config(8, 8, 512, 4, softplus_activation());
        const Dataset data = make_dataset(sphere_points(8, 8, seed), random_sign_labels(8, seed));
        RunOptions opt;
        opt.certificate.seed = seed;
        opt.certificate.lambda_samples = 20000;
        opt.eps = 1e-3;
        opt.eta_policy = EtaPolicy::measured;
        const CertifiedRun run = run_certified(data, config, opt);
        const double misfit0 = run.trace.records.front().misfit_norm;
        const auto budget = iterations_to_eps(run.eta, run.alpha_hat * 0.5, misfit0, 1e-3);
        bool monotone = true;
        for (std::size_t k = 1; k < run.trace.records.size(); ++k)
            monotone = monotone && run.trace.records[k].misfit_norm < run.trace.records[k - 1].misfit_norm;
        const bool ok = !run.diverged && !run.eta_fallback && monotone &&
                        run.trace.back().misfit_norm <= 1e-3 && budget &&
                        run.trace.back().iter <= *budget && run.trace.contraction_violations() == 0 &&
                        run.trace.close_violations() == 0;
        if (ok) ++passed;
        d << (seed > 1 ? ", " : "") << run.trace.back().iter << '/' << (budget ? std::to_string(*budget) : "none");
    }
    return {passed == 10, std::to_string(passed) + "/10 seeds; iterations/budget " + d.str()};
}

Outcome linear_oracle() {
    const Setup s = make_setup(identity_activation(), 5, 6, 8, 16, 1);
    const SymmetricEigen eig = sym_eigen(gram_of_rows(s.data.X));
    const double scale = s.config.c_phi / 16.0 * norm2(s.theta.a) * norm2(s.theta.a);
    const double eta = 1.0 / (scale * eig.values.back());
    Vector r0 = batch_outputs(s.theta, s.config, s.data.X);
    for (std::size_t i = 0; i < 6; ++i) r0[i] -= s.data.y[i];
    Vector coef(6, 0.0);
    for (std::size_t k = 0; k < 6; ++k)
        for (std::size_t i = 0; i < 6; ++i) coef[k] += eig.vectors(i, k) * r0[i];
    TrainSettings st;
    st.eta = eta;
    st.eps = 0.0;
    st.max_iters = 50;
    st.monitor_sigma_every = 0;
    const TrainResult res = train(s.theta, s.config, s.data, st);
    double worst = 0;
    for (const TrainRecord& rec : res.trace.records) {
        double sq = 0;
        for (std::size_t k = 0; k < 6; ++k) {
            const double v = std::pow(1 - eta * scale * eig.values[k], static_cast<double>(rec.iter)) * coef[k];
            sq += v * v;
        }
        worst = std::max(worst, rel(rec.misfit_norm, std::sqrt(sq)));
    }
    return {res.trace.records.size() == 51 && worst <= 1e-8, fmt("max relative deviation %.3e", worst)};
}

Outcome initial_misfit() {
    std::size_t passed = 0;
    double worst = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const Setup s = make_setup(softplus_activation(), seed, 8, 8, 256, 4);
        const BatchForward fw = batch_forward(s.theta, s.config, s.data);
        double sq = 0;
        for (std::size_t i = 0; i < 8; ++i) sq += (fw.f[i] - s.data.y[i]) * (fw.f[i] - s.data.y[i]);
        Vector layers;
        for (std::size_t k = 0; k + 1 < 4; ++k) layers.push_back(frobenius_norm(fw.layer_matrices[k]));
        const double bound = kappa(s.config, 1.0, frobenius_norm(s.data.X), layers) * norm2(s.data.y);
        worst = std::max(worst, std::sqrt(sq) / bound);
        if (std::sqrt(sq) <= bound) ++passed;
    }
    return {passed == 20, fmt("%.0f/20 seeds, largest misfit/bound %.4f", static_cast<double>(passed), worst)};
}

// B = 1, c_res = 0.5, c_φ = 1.
ModelConfig unit_config(std::size_t n, std::size_t d, std::size_t m, std::size_t H) {
    ModelConfig c;
    c.n = n;
    c.d = d;
    c.m = m;
    c.H = H;
    c.c_res = 0.5;
    c.c_phi = 1.0;
    c.activation = softplus_activation();
    return c;
}

Outcome certificate_arithmetic() {
    const double e = std::exp(1.0);
    const WidthRequirement w = min_width(5.0, 0.25, unit_config(10, 8, 16, 2), 0.5);
    const std::vector<std::pair<double, double>> cases{
        {alpha0(unit_config(4, 3, 16, 2), 4.0, 0.25, 0.0), 1.0 / (2 * e)},
        {beta_ball(unit_config(4, 3, 16, 4), 1.0, 1.0 - 1.0 / e), 2.0 * std::exp(0.5) * std::exp(1.5)},
        {kappa(unit_config(9, 3, 16, 1), 0.0, 3.0, {}), 5.0},
        {radius_ball(5.0, 0.25, unit_config(4, 3, 16, 2), 0.0), 80.0 * e},
        {w.first_term, 393711.415378548710046},
        {w.second_term, 189159.836132624645817},
        {step_size(0.18, 2.0, 10.0, 10.0, 1.0), 4.05e-5},
    };
    double worst = 0;
    for (const auto& [got, want] : cases) worst = std::max(worst, rel(got, want));
    return {worst <= 1e-10, fmt("max relative deviation %.3e over %.0f values", worst,
                                static_cast<double>(cases.size()))};
}

Outcome lipschitz_sanity() {
    // H = 1 with identity activation is linear in W, so J is constant
    const Setup lin = make_setup(identity_activation(), 1, 6, 4, 16, 1);
    const double zero = empirical_lipschitz(lin.theta, lin.config, lin.data, 5.0, 8, 1);
    std::size_t passed = 0;
    double worst = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Setup s = make_setup(softplus_activation(), seed, 6, 4, 16, 3);
        const double dp = 0.5;
        // radius keeping every layer inside the spectral ball where the constant holds
        const Vector norms = layer_spectral_norms(s.theta);
        const double A = A_ball(16, s.config.activation.B, s.config.c_res, dp);
        const double radius = A - *std::max_element(norms.begin(), norms.end());
        const double L = lipschitz_ball(s.config, norm2(s.data.y), dp);
        const double est = radius > 0 ? empirical_lipschitz(s.theta, s.config, s.data, radius, 16, seed)
                                      : std::numeric_limits<double>::infinity();
        worst = std::max(worst, est / L);
        if (est <= L) ++passed;
    }
    return {zero == 0.0 && passed == 5,
            fmt("identity estimate %.1e, softplus %.0f/5 (largest estimate/bound %.3e)", zero,
                static_cast<double>(passed), worst)};
}

Outcome determinism() {
    const fs::path dir = fs::temp_directory_path() / ("resnet_ntk_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    const ExperimentConfig cfg = parse_config(
        "model.n = 6\nmodel.d = 4\nmodel.m = 16\nmodel.H = 3\nmodel.seed = 7\n"
        "certificate.lambda_samples = 10000\ntrain.max_iters = 500\n");
    std::ostringstream log;
    cmd_train(cfg, 7, dir / "a", log);
    cmd_train(cfg, 7, dir / "b", log);
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        return s.str();
    };
    const std::string a = slurp(dir / "a" / "trace.csv");
    const bool same = !a.empty() && a == slurp(dir / "b" / "trace.csv");
    fs::remove_all(dir);
    return {same, std::to_string(a.size()) + " bytes" + (same ? ", identical" : ", differ")};
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"1 jacobian matches central differences", jacobian_vs_differences},
        {"2 NTK equals the sum of PSD layer blocks", ntk_decomposition},
        {"3 lambda(X) estimator", lambda_estimator},
        {"4 sigma_min lower-bound trend in width", sigma_min_trend},
        {"5 certified-step convergence with monitors", convergence},
        {"6 linear model matches closed-form GD", linear_oracle},
        {"7 initial misfit below kappa |y|", initial_misfit},
        {"8 certificate arithmetic", certificate_arithmetic},
        {"9 empirical Lipschitz sanity", lipschitz_sanity},
        {"10 deterministic trace.csv", determinism},
    };
    int failures = 0;
    for (const auto& [name, run] : criteria) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failures;
        std::printf("%s  %s  (%s)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
