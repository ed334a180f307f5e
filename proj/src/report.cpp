#include "resnet_ntk/report.hpp"

#include "resnet_ntk/errors.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace resnet_ntk {
namespace {

Json real_json(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
}

double real_from(const Json& j, const char* key) {
    const Json& v = j.at(key);
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    }
    throw InputError(std::string("json: field ") + key + " is not a real number");
}

Json count_json(const std::optional<std::uint64_t>& v) {
    return v ? Json(*v) : Json(nullptr);
}

std::optional<std::uint64_t> count_from(const Json& j, const char* key) {
    const Json& v = j.at(key);
    if (v.is_null()) return std::nullopt;
    return v.get<std::uint64_t>();
}

double parse_field(const std::string& s, std::size_t line) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw InputError("trace csv line " + std::to_string(line) + ": bad number '" + s + "'");
    return v;
}

} // namespace

std::string format_real(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

Json certificate_to_json(const BoundsCertificate& c) {
    Json j;
    j["lambda_X"] = real_json(c.lambda_X);
    j["lambda_X_se"] = real_json(c.lambda_X_se);
    j["alpha0"] = real_json(c.alpha0);
    j["alpha_dp"] = real_json(c.alpha_dp);
    j["beta_dp"] = real_json(c.beta_dp);
    j["L_dp"] = real_json(c.L_dp);
    j["kappa"] = real_json(c.kappa);
    j["R"] = real_json(c.R);
    j["R_theorem"] = real_json(c.R_theorem);
    j["K_width"] = real_json(c.K_width);
    j["m_min"] = count_json(c.m_min);
    j["eta"] = real_json(c.eta);
    j["eta_printed"] = real_json(c.eta_printed);
    j["eps"] = real_json(c.eps);
    j["tau_of_eps"] = count_json(c.tau_of_eps);
    j["width_ok"] = c.width_ok;
    j["H_ok"] = c.H_ok;
    j["ball_evaluated"] = c.ball.evaluated;
    j["ball_radius"] = real_json(c.ball.radius);
    j["ball_sigma_min_ball"] = real_json(c.ball.sigma_min_ball);
    j["ball_sigma_min_init"] = real_json(c.ball.sigma_min_init);
    j["ball_sigma_ok"] = c.ball.sigma_ok;
    j["ball_lipschitz_estimate"] = real_json(c.ball.lipschitz_estimate);
    j["ball_lipschitz_ok"] = c.ball.lipschitz_ok;
    j["seed"] = c.seed;
    j["lambda_samples"] = c.lambda_samples;
    j["delta"] = real_json(c.delta);
    j["delta_prime"] = real_json(c.delta_prime);
    j["y_norm"] = real_json(c.y_norm);
    j["initial_misfit"] = real_json(c.initial_misfit);
    return j;
}

BoundsCertificate certificate_from_json(const Json& j) {
    BoundsCertificate c;
    c.lambda_X = real_from(j, "lambda_X");
    c.lambda_X_se = real_from(j, "lambda_X_se");
    c.alpha0 = real_from(j, "alpha0");
    c.alpha_dp = real_from(j, "alpha_dp");
    c.beta_dp = real_from(j, "beta_dp");
    c.L_dp = real_from(j, "L_dp");
    c.kappa = real_from(j, "kappa");
    c.R = real_from(j, "R");
    c.R_theorem = real_from(j, "R_theorem");
    c.K_width = real_from(j, "K_width");
    c.m_min = count_from(j, "m_min");
    c.eta = real_from(j, "eta");
    c.eta_printed = real_from(j, "eta_printed");
    c.eps = real_from(j, "eps");
    c.tau_of_eps = count_from(j, "tau_of_eps");
    c.width_ok = j.at("width_ok").get<bool>();
    c.H_ok = j.at("H_ok").get<bool>();
    c.ball.evaluated = j.at("ball_evaluated").get<bool>();
    c.ball.radius = real_from(j, "ball_radius");
    c.ball.sigma_min_ball = real_from(j, "ball_sigma_min_ball");
    c.ball.sigma_min_init = real_from(j, "ball_sigma_min_init");
    c.ball.sigma_ok = j.at("ball_sigma_ok").get<bool>();
    c.ball.lipschitz_estimate = real_from(j, "ball_lipschitz_estimate");
    c.ball.lipschitz_ok = j.at("ball_lipschitz_ok").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.lambda_samples = j.at("lambda_samples").get<std::size_t>();
    c.delta = real_from(j, "delta");
    c.delta_prime = real_from(j, "delta_prime");
    c.y_norm = real_from(j, "y_norm");
    c.initial_misfit = real_from(j, "initial_misfit");
    return c;
}

RunSummary summarize(const CertifiedRun& run, std::uint64_t seed) {
    RunSummary s;
    if (!run.trace.empty()) {
        s.final_misfit = run.trace.back().misfit_norm;
        s.iters = run.trace.back().iter;
    }
    s.predicted_tau = run.predicted_tau;
    s.contraction_violations = run.trace.contraction_violations();
    s.close_violations = run.trace.close_violations();
    s.eta = run.eta;
    s.alpha_hat = run.alpha_hat;
    s.beta_hat = run.beta_hat;
    s.lipschitz_hat = run.lipschitz_hat;
    s.alpha_for_checks = run.alpha_for_checks;
    s.eta_fallback = run.eta_fallback;
    s.diverged = run.diverged;
    s.seed = seed;
    return s;
}

Json summary_to_json(const RunSummary& s) {
    Json j;
    j["final_misfit"] = real_json(s.final_misfit);
    j["iters"] = s.iters;
    j["predicted_tau"] = count_json(s.predicted_tau);
    j["contraction_violations"] = s.contraction_violations;
    j["close_violations"] = s.close_violations;
    j["eta"] = real_json(s.eta);
    j["alpha_hat"] = real_json(s.alpha_hat);
    j["beta_hat"] = real_json(s.beta_hat);
    j["lipschitz_hat"] = real_json(s.lipschitz_hat);
    j["alpha_for_checks"] = real_json(s.alpha_for_checks);
    j["eta_fallback"] = s.eta_fallback;
    j["diverged"] = s.diverged;
    j["seed"] = s.seed;
    return j;
}

RunSummary summary_from_json(const Json& j) {
    RunSummary s;
    s.final_misfit = real_from(j, "final_misfit");
    s.iters = j.at("iters").get<std::size_t>();
    s.predicted_tau = count_from(j, "predicted_tau");
    s.contraction_violations = j.at("contraction_violations").get<std::size_t>();
    s.close_violations = j.at("close_violations").get<std::size_t>();
    s.eta = real_from(j, "eta");
    s.alpha_hat = real_from(j, "alpha_hat");
    s.beta_hat = real_from(j, "beta_hat");
    s.lipschitz_hat = real_from(j, "lipschitz_hat");
    s.alpha_for_checks = real_from(j, "alpha_for_checks");
    s.eta_fallback = j.at("eta_fallback").get<bool>();
    s.diverged = j.at("diverged").get<bool>();
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
}

void write_trace_csv(std::ostream& out, const TrainTrace& trace) {
    out << kTraceHeader << '\n';
    for (const TrainRecord& r : trace.records) {
        out << r.iter << ',' << format_real(r.loss) << ',' << format_real(r.misfit_norm) << ','
            << format_real(r.dist_from_init) << ',' << (r.contraction_ok ? 1 : 0) << ','
            << (r.close_ok ? 1 : 0) << ',';
        if (r.sigma_min_est) out << format_real(*r.sigma_min_est);
        out << '\n';
    }
}

TrainTrace read_trace_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kTraceHeader)
        throw InputError("trace csv: missing or unexpected header");
    TrainTrace trace;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::string item;
        std::istringstream row(line);
        while (std::getline(row, item, ',')) fields.push_back(item);
        if (line.back() == ',') fields.emplace_back();
        if (fields.size() != 7)
            throw InputError("trace csv line " + std::to_string(lineno) + ": expected 7 fields");
        TrainRecord r;
        r.iter = static_cast<std::size_t>(parse_field(fields[0], lineno));
        r.loss = parse_field(fields[1], lineno);
        r.misfit_norm = parse_field(fields[2], lineno);
        r.dist_from_init = parse_field(fields[3], lineno);
        r.contraction_ok = fields[4] == "1";
        r.close_ok = fields[5] == "1";
        if (!fields[6].empty()) r.sigma_min_est = parse_field(fields[6], lineno);
        trace.records.push_back(r);
    }
    return trace;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << kSweepHeader << '\n';
    for (const SweepRow& r : rows)
        out << r.n << ',' << r.m << ',' << r.seed << ',' << (r.success ? 1 : 0) << ',' << r.iters
            << ',' << format_real(r.final_misfit) << ',' << format_real(r.sigma_min_init) << '\n';
}

std::string json_text(const Json& j) { return j.dump(2) + "\n"; }

} // namespace resnet_ntk
