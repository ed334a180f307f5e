#pragma once

#include "resnet_ntk/bounds.hpp"
#include "resnet_ntk/config.hpp"
#include "resnet_ntk/report.hpp"
#include "resnet_ntk/trainer.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace resnet_ntk {

enum ExitCode : int {
    kExitOk = 0,
    kExitConfig = 1,
    kExitDivergence = 2,
    kExitVerification = 3,
};

// Writes certificate.json when JSON output is enabled.
BoundsCertificate cmd_certify(const ExperimentConfig& cfg, std::uint64_t seed,
                              const std::filesystem::path& out_dir, std::ostream& log);

// Writes trace.csv, summary.json and certificate.json. A diverged run still
// writes its finite records and reports `diverged`.
CertifiedRun cmd_train(const ExperimentConfig& cfg, std::uint64_t seed,
                       const std::filesystem::path& out_dir, std::ostream& log);

struct VerifyReport {
    double fd_relative_error = 0.0;    // ‖J − J_fd‖_F / ‖J‖_F
    double fd_max_relative_error = 0.0; // max |J − J_fd| / max |J|
    double decomposition_residual = 0.0; // ‖JJᵀ − Σ_h G⁽ʰ⁾‖_F / ‖JJᵀ‖_F
    bool fd_ok = false;
    bool decomposition_ok = false;
    std::string diagnosis;
    bool passed() const noexcept { return fd_ok && decomposition_ok; }
};

inline constexpr double kFdTolerance = 1e-5;
inline constexpr double kDecompositionTolerance = 1e-10;

VerifyReport cmd_verify_jacobian(const ExperimentConfig& cfg, std::uint64_t seed, double step,
                                 std::ostream& log);

// One training run per (n, m, seed) cell on `jobs` threads. Rows come back
// sorted by (n, m, seed); sweep.csv is written when CSV output is enabled.
std::vector<SweepRow> cmd_sweep(const ExperimentConfig& cfg, std::uint64_t base_seed,
                                std::size_t jobs, const std::filesystem::path& out_dir,
                                std::ostream& log);

LambdaEstimate cmd_lambda(const ExperimentConfig& cfg, std::uint64_t seed, std::ostream& log);

// Entry point behind the resnet-ntk executable.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace resnet_ntk
