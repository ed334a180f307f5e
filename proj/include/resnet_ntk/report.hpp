#pragma once

#include "resnet_ntk/bounds.hpp"
#include "resnet_ntk/trainer.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace resnet_ntk {

using Json = nlohmann::ordered_json;

// 17 significant digits; non-finite values render as inf, -inf, nan.
std::string format_real(double v);

// Flat object keyed by the certificate's field names. Nested ball checks use
// a `ball_` prefix. Infinite reals are written as the string "inf" and empty
// counts as null.
Json certificate_to_json(const BoundsCertificate& cert);
BoundsCertificate certificate_from_json(const Json& j);

struct RunSummary {
    double final_misfit = 0.0;
    std::size_t iters = 0;
    std::optional<std::uint64_t> predicted_tau;
    std::size_t contraction_violations = 0;
    std::size_t close_violations = 0;
    double eta = 0.0;
    double alpha_hat = 0.0;
    double beta_hat = 0.0;
    double lipschitz_hat = 0.0;
    double alpha_for_checks = 0.0;
    bool eta_fallback = false;
    bool diverged = false;
    std::uint64_t seed = 0;

    friend bool operator==(const RunSummary&, const RunSummary&) = default;
};

RunSummary summarize(const CertifiedRun& run, std::uint64_t seed);
Json summary_to_json(const RunSummary& s);
RunSummary summary_from_json(const Json& j);

inline constexpr const char* kTraceHeader =
    "iter,loss,misfit,dist_init,contraction_ok,close_ok,sigma_min";

void write_trace_csv(std::ostream& out, const TrainTrace& trace);
TrainTrace read_trace_csv(std::istream& in);

struct SweepRow {
    std::size_t n = 0;
    std::size_t m = 0;
    std::uint64_t seed = 0;
    bool success = false;
    std::size_t iters = 0;
    double final_misfit = 0.0;
    double sigma_min_init = 0.0;

    friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

inline constexpr const char* kSweepHeader = "n,m,seed,success,iters,final_misfit,sigma_min_init";

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

// Pretty-printed JSON with a trailing newline.
std::string json_text(const Json& j);

} // namespace resnet_ntk
