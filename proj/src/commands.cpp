#include "resnet_ntk/commands.hpp"

#include "resnet_ntk/errors.hpp"
#include "resnet_ntk/jacobian.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>
#include <tuple>

namespace resnet_ntk {
namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << text;
}

std::string trace_text(const TrainTrace& trace) {
    std::ostringstream s;
    write_trace_csv(s, trace);
    return s.str();
}

double max_abs(const DenseMatrix& m) {
    double best = 0.0;
    for (double v : m.values()) best = std::max(best, std::abs(v));
    return best;
}

} // namespace

BoundsCertificate cmd_certify(const ExperimentConfig& cfg, std::uint64_t seed,
                              const std::filesystem::path& out_dir, std::ostream& log) {
    const Dataset data = load_dataset(cfg, cfg.model.n, seed);
    const ModelConfig model = model_config(cfg, cfg.model.n, cfg.model.d);
    const Theta theta0 = init_theta(model, data.y, seed);
    const BoundsCertificate cert = certify(model, data, theta0, certify_options(cfg, seed));
    if (cfg.output.json) write_file(out_dir / "certificate.json", json_text(certificate_to_json(cert)));
    log << "lambda_X " << format_real(cert.lambda_X) << " (se " << format_real(cert.lambda_X_se)
        << ")\nalpha_dp " << format_real(cert.alpha_dp) << "\nK_width " << format_real(cert.K_width)
        << "\nm_min " << (cert.m_min ? std::to_string(*cert.m_min) : "inf") << "\nwidth_ok "
        << cert.width_ok << "\n";
    return cert;
}

CertifiedRun cmd_train(const ExperimentConfig& cfg, std::uint64_t seed,
                       const std::filesystem::path& out_dir, std::ostream& log) {
    const Dataset data = load_dataset(cfg, cfg.model.n, seed);
    const ModelConfig model = model_config(cfg, cfg.model.n, cfg.model.d);
    CertifiedRun run = run_certified(data, model, run_options(cfg, seed));
    const RunSummary summary = summarize(run, seed);
    if (cfg.output.csv) write_file(out_dir / "trace.csv", trace_text(run.trace));
    if (cfg.output.json) {
        write_file(out_dir / "summary.json", json_text(summary_to_json(summary)));
        write_file(out_dir / "certificate.json", json_text(certificate_to_json(run.certificate)));
    }
    log << "eta " << format_real(run.eta) << "\niters " << summary.iters << "\nfinal_misfit "
        << format_real(summary.final_misfit) << "\ncontraction_violations "
        << summary.contraction_violations << "\nclose_violations " << summary.close_violations
        << "\n";
    if (run.diverged) log << "diverged: " << run.divergence_message << "\n";
    return run;
}

VerifyReport cmd_verify_jacobian(const ExperimentConfig& cfg, std::uint64_t seed, double step,
                                 std::ostream& log) {
    const Dataset data = load_dataset(cfg, cfg.model.n, seed);
    const ModelConfig model = model_config(cfg, cfg.model.n, cfg.model.d);
    const Theta theta = init_theta(model, data.y, seed);

    const DenseMatrix J = full_jacobian(theta, model, data);
    const DenseMatrix Jfd = central_differences(theta, model, data, step);
    const DenseMatrix diff = subtract(J, Jfd);
    const double j_norm = frobenius_norm(J);

    VerifyReport rep;
    rep.fd_relative_error = j_norm > 0.0 ? frobenius_norm(diff) / j_norm : frobenius_norm(diff);
    const double j_max = max_abs(J);
    rep.fd_max_relative_error = j_max > 0.0 ? max_abs(diff) / j_max : max_abs(diff);

    const DenseMatrix JJt = multiply(J, J.transposed());
    const DenseMatrix K = ntk(theta, model, data).K;
    const double jj_norm = frobenius_norm(JJt);
    rep.decomposition_residual =
        jj_norm > 0.0 ? frobenius_distance(JJt, K) / jj_norm : frobenius_distance(JJt, K);

    rep.fd_ok = rep.fd_relative_error <= kFdTolerance;
    rep.decomposition_ok = rep.decomposition_residual <= kDecompositionTolerance;
    if (!rep.fd_ok) {
        if (step > kMaxFiniteDiffStep)
            rep.diagnosis = "step " + format_real(step) +
                            " is above 1e-3: central-difference truncation error O(step^2) "
                            "dominates";
        else if (step < kMinFiniteDiffStep)
            rep.diagnosis = "step " + format_real(step) +
                            " is below 1e-7: floating-point cancellation dominates";
        else
            rep.diagnosis = "analytic Jacobian disagrees with finite differences";
    } else if (!rep.decomposition_ok) {
        rep.diagnosis = "per-layer Gram blocks do not sum to J J^T";
    }

    log << "fd_relative_error " << format_real(rep.fd_relative_error) << "\nfd_max_relative_error "
        << format_real(rep.fd_max_relative_error) << "\ndecomposition_residual "
        << format_real(rep.decomposition_residual) << "\n"
        << (rep.passed() ? "PASS" : "FAIL: " + rep.diagnosis) << "\n";
    return rep;
}

std::vector<SweepRow> cmd_sweep(const ExperimentConfig& cfg, std::uint64_t base_seed,
                                std::size_t jobs, const std::filesystem::path& out_dir,
                                std::ostream& log) {
    if (cfg.data.source != "synthetic-sphere")
        throw InputError("sweep: varying n requires data.source = synthetic-sphere");
    if (cfg.data.label_source == "file")
        throw InputError("sweep: varying n requires generated labels");

    std::vector<SweepRow> rows;
    for (std::size_t n : cfg.sweep.n_values)
        for (std::size_t m : cfg.sweep.m_values)
            for (std::size_t s = 0; s < cfg.sweep.seeds_per_cell; ++s)
                rows.push_back(SweepRow{n, m, base_seed + s});

    ExperimentConfig cell_cfg = cfg;
    cell_cfg.train.eps = cfg.sweep.success_eps;
    cell_cfg.train.max_iters = cfg.sweep.max_iters;
    cell_cfg.train.monitor_sigma_every = 0;

    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&] {
        for (std::size_t k = next++; k < rows.size(); k = next++) {
            SweepRow& row = rows[k];
            try {
                ExperimentConfig c = cell_cfg;
                c.model.n = row.n;
                c.model.m = row.m;
                const Dataset data = load_dataset(c, row.n, row.seed);
                const ModelConfig model = model_config(c, row.n, c.model.d);
                const CertifiedRun run = run_certified(data, model, run_options(c, row.seed));
                row.iters = run.trace.back().iter;
                row.final_misfit = run.trace.back().misfit_norm;
                row.sigma_min_init = run.alpha_hat;
                row.success = !run.diverged && row.final_misfit <= cfg.sweep.success_eps;
            } catch (const std::exception& e) {
                row.success = false;
                row.final_misfit = std::numeric_limits<double>::quiet_NaN();
                row.sigma_min_init = std::numeric_limits<double>::quiet_NaN();
                std::lock_guard lock(log_mutex);
                log << "cell n=" << row.n << " m=" << row.m << " seed=" << row.seed
                    << " failed: " << e.what() << "\n";
            }
        }
    };
    const std::size_t workers = std::clamp<std::size_t>(jobs, 1, rows.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
        return std::tie(a.n, a.m, a.seed) < std::tie(b.n, b.m, b.seed);
    });
    if (cfg.output.csv) {
        std::ostringstream s;
        write_sweep_csv(s, rows);
        write_file(out_dir / "sweep.csv", s.str());
    }
    const auto successes = std::count_if(rows.begin(), rows.end(),
                                         [](const SweepRow& r) { return r.success; });
    log << "cells " << rows.size() << "\nsuccesses " << successes << "\n";
    return rows;
}

LambdaEstimate cmd_lambda(const ExperimentConfig& cfg, std::uint64_t seed, std::ostream& log) {
    const Dataset data = load_dataset(cfg, cfg.model.n, seed);
    const LambdaEstimate est = lambda_X(data.X, activation_from_name(cfg.model.activation),
                                        cfg.certificate.lambda_samples, seed);
    log << "lambda_X " << format_real(est.value) << "\nstandard_error "
        << format_real(est.standard_error) << "\nsamples " << est.samples << "\n";
    return est;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Residual-network NTK certificates and gradient-descent experiments",
                 "resnet-ntk"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
    std::optional<std::string> out_dir;
    for (const char* name : {"certify", "train", "verify-jacobian", "sweep", "lambda"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "experiment config file")->required();
        sub->add_option("--seed", seed, "overrides model.seed");
        sub->add_option("--jobs", jobs, "worker threads for sweep");
        sub->add_option("--out", out_dir, "overrides output.dir");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        const ExperimentConfig cfg = load_config(config_path);
        const std::uint64_t s = seed.value_or(cfg.model.seed);
        const std::filesystem::path dir = out_dir ? std::filesystem::path(*out_dir) : cfg.output.dir;
        if (command == "certify") {
            cmd_certify(cfg, s, dir, out);
        } else if (command == "train") {
            if (cmd_train(cfg, s, dir, out).diverged) return kExitDivergence;
        } else if (command == "verify-jacobian") {
            if (!cmd_verify_jacobian(cfg, s, cfg.verify.step, out).passed()) return kExitVerification;
        } else if (command == "sweep") {
            std::size_t n_jobs = jobs.value_or(1);
            if (const char* env = std::getenv("RESNET_NTK_THREADS"); env && *env) {
                try {
                    n_jobs = static_cast<std::size_t>(std::stoul(env));
                } catch (const std::exception&) {
                    throw InputError(std::string("RESNET_NTK_THREADS is not a count: ") + env);
                }
            }
            cmd_sweep(cfg, s, n_jobs, dir, out);
        } else {
            cmd_lambda(cfg, s, out);
        }
    } catch (const InputError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const CapacityError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitOk;
}

} // namespace resnet_ntk
