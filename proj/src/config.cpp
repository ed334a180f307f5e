#include "resnet_ntk/config.hpp"

#include "resnet_ntk/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace resnet_ntk {
namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) parts.push_back(trim(item));
    return parts;
}

double parse_real(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto* end = v.data() + v.size();
    const auto res = std::from_chars(v.data(), end, out);
    if (res.ec != std::errc{} || res.ptr != end || !std::isfinite(out))
        throw InputError("config: " + key + " expects a real number, got '" + v + "'");
    return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto* end = v.data() + v.size();
    const auto res = std::from_chars(v.data(), end, out);
    if (res.ec != std::errc{} || res.ptr != end)
        throw InputError("config: " + key + " expects a nonnegative integer, got '" + v + "'");
    return out;
}

std::size_t parse_count(const std::string& key, const std::string& v) {
    return static_cast<std::size_t>(parse_u64(key, v));
}

std::vector<std::size_t> parse_counts(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    for (const auto& part : split(v, ',')) {
        if (part.empty()) throw InputError("config: " + key + " has an empty list entry");
        out.push_back(parse_count(key, part));
    }
    return out;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::vector<Vector> read_numeric_rows(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open data file " + path.string());
    std::vector<Vector> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream fields(line);
        Vector row;
        std::string tok;
        while (fields >> tok) row.push_back(parse_real(path.string() + ":" + std::to_string(lineno), tok));
        if (!row.empty()) rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace

void ExperimentConfig::validate() const {
    if (model.n == 0 || model.d == 0) throw InputError("config: model.n and model.d must be positive");
    if (model.m < 2 || model.m % 2 != 0) throw InputError("config: model.m must be even and >= 2");
    if (model.H == 0) throw InputError("config: model.H must be positive");
    if (!(model.c_res > 0.0)) throw InputError("config: model.c_res must be positive");
    (void)activation_from_name(model.activation);
    if (!(certificate.delta >= 0.0)) throw InputError("config: certificate.delta must be nonnegative");
    if (!(certificate.delta_prime > 0.0 && certificate.delta_prime < 1.0))
        throw InputError("config: certificate.delta_prime must lie in (0, 1)");
    if (certificate.lambda_samples < kMinLambdaSamples)
        throw InputError("config: certificate.lambda_samples must be at least " +
                         std::to_string(kMinLambdaSamples));
    if (!(train.eps >= 0.0)) throw InputError("config: train.eps must be nonnegative");
    if (train.eta_override && !(*train.eta_override > 0.0))
        throw InputError("config: train.eta_override must be positive");
    if (data.source.empty()) throw InputError("config: data.source is empty");
    if (data.label_source != "random-signs" && data.label_source != "gaussian" &&
        data.label_source != "file")
        throw InputError("config: data.label_source must be random-signs, gaussian or file");
    if (data.label_source == "file" && data.labels_path.empty())
        throw InputError("config: data.labels_path is required when labels come from a file");
    if (sweep.n_values.empty() || sweep.m_values.empty())
        throw InputError("config: sweep lists must be nonempty");
    for (std::size_t m : sweep.m_values)
        if (m < 2 || m % 2 != 0) throw InputError("config: sweep.m_values entries must be even");
    for (std::size_t n : sweep.n_values)
        if (n == 0) throw InputError("config: sweep.n_values entries must be positive");
    if (sweep.seeds_per_cell == 0) throw InputError("config: sweep.seeds_per_cell must be >= 1");
    if (!(sweep.success_eps >= 0.0)) throw InputError("config: sweep.success_eps must be nonnegative");
    if (!(verify.step > 0.0)) throw InputError("config: verify.step must be positive");
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    ExperimentConfig cfg;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InputError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(std::string_view(line).substr(0, eq));
        const std::string value = trim(std::string_view(line).substr(eq + 1));
        if (value.empty()) throw InputError("config: " + key + " has no value");
        if (!seen.insert(key).second) throw InputError("config: duplicate key " + key);

        if (key == "model.n") cfg.model.n = parse_count(key, value);
        else if (key == "model.d") cfg.model.d = parse_count(key, value);
        else if (key == "model.m") cfg.model.m = parse_count(key, value);
        else if (key == "model.H") cfg.model.H = parse_count(key, value);
        else if (key == "model.c_res") cfg.model.c_res = parse_real(key, value);
        else if (key == "model.activation") cfg.model.activation = value;
        else if (key == "model.seed") cfg.model.seed = parse_u64(key, value);
        else if (key == "certificate.delta") cfg.certificate.delta = parse_real(key, value);
        else if (key == "certificate.delta_prime") cfg.certificate.delta_prime = parse_real(key, value);
        else if (key == "certificate.lambda_samples") cfg.certificate.lambda_samples = parse_count(key, value);
        else if (key == "certificate.ball_samples") cfg.certificate.ball_samples = parse_count(key, value);
        else if (key == "certificate.lipschitz_pairs") cfg.certificate.lipschitz_pairs = parse_count(key, value);
        else if (key == "train.eps") cfg.train.eps = parse_real(key, value);
        else if (key == "train.max_iters") cfg.train.max_iters = parse_count(key, value);
        else if (key == "train.eta_override") {
            if (value != "none") cfg.train.eta_override = parse_real(key, value);
        } else if (key == "train.eta_policy") {
            if (value == "measured") cfg.train.eta_policy = EtaPolicy::measured;
            else if (value == "certified") cfg.train.eta_policy = EtaPolicy::certified;
            else throw InputError("config: train.eta_policy must be measured or certified");
        } else if (key == "train.step_rule") {
            if (value == "conservative") cfg.train.step_rule = StepRule::conservative;
            else if (value == "printed") cfg.train.step_rule = StepRule::printed;
            else throw InputError("config: train.step_rule must be conservative or printed");
        } else if (key == "train.monitor_sigma_every") cfg.train.monitor_sigma_every = parse_count(key, value);
        else if (key == "data.source") {
            cfg.data.source = value == "synthetic-sphere" ? value : resolve(base_dir, value).string();
        } else if (key == "data.label_source") cfg.data.label_source = value;
        else if (key == "data.labels_path") cfg.data.labels_path = resolve(base_dir, value).string();
        else if (key == "output.dir") cfg.output.dir = value;
        else if (key == "output.formats") {
            cfg.output.csv = cfg.output.json = false;
            for (const auto& f : split(value, ',')) {
                if (f == "csv") cfg.output.csv = true;
                else if (f == "json") cfg.output.json = true;
                else throw InputError("config: output.formats accepts csv and json, got '" + f + "'");
            }
        } else if (key == "sweep.n_values") cfg.sweep.n_values = parse_counts(key, value);
        else if (key == "sweep.m_values") cfg.sweep.m_values = parse_counts(key, value);
        else if (key == "sweep.seeds_per_cell") cfg.sweep.seeds_per_cell = parse_count(key, value);
        else if (key == "sweep.success_eps") cfg.sweep.success_eps = parse_real(key, value);
        else if (key == "sweep.max_iters") cfg.sweep.max_iters = parse_count(key, value);
        else if (key == "verify.step") cfg.verify.step = parse_real(key, value);
        else throw InputError("config: unknown key " + key);
    }
    if (cfg.data.source != "synthetic-sphere" && !std::filesystem::exists(cfg.data.source))
        throw InputError("config: data file " + cfg.data.source + " does not exist");
    if (cfg.data.label_source == "file" && !std::filesystem::exists(cfg.data.labels_path))
        throw InputError("config: labels file " + cfg.data.labels_path + " does not exist");
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config file " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str(), path.parent_path().empty() ? "." : path.parent_path());
}

ModelConfig model_config(const ExperimentConfig& cfg, std::size_t n, std::size_t d) {
    return make_config(n, d, cfg.model.m, cfg.model.H, activation_from_name(cfg.model.activation),
                       cfg.model.c_res);
}

Dataset load_dataset(const ExperimentConfig& cfg, std::size_t n, std::uint64_t seed) {
    DenseMatrix X;
    if (cfg.data.source == "synthetic-sphere") {
        X = sphere_points(n, cfg.model.d, seed);
    } else {
        const auto rows = read_numeric_rows(cfg.data.source);
        if (rows.size() != n)
            throw InputError("data file has " + std::to_string(rows.size()) + " rows, expected " +
                             std::to_string(n));
        X = DenseMatrix(n, cfg.model.d);
        for (std::size_t i = 0; i < n; ++i) {
            if (rows[i].size() != cfg.model.d)
                throw InputError("data file row " + std::to_string(i) + " has " +
                                 std::to_string(rows[i].size()) + " columns, expected " +
                                 std::to_string(cfg.model.d));
            std::copy(rows[i].begin(), rows[i].end(), X.row(i).begin());
        }
    }

    Vector y;
    if (cfg.data.label_source == "random-signs") {
        y = random_sign_labels(n, seed);
    } else if (cfg.data.label_source == "gaussian") {
        y = gaussian_labels(n, seed);
    } else {
        for (const auto& row : read_numeric_rows(cfg.data.labels_path))
            y.insert(y.end(), row.begin(), row.end());
        if (y.size() != n)
            throw InputError("labels file has " + std::to_string(y.size()) + " values, expected " +
                             std::to_string(n));
    }
    return make_dataset(std::move(X), std::move(y));
}

CertifyOptions certify_options(const ExperimentConfig& cfg, std::uint64_t seed) {
    CertifyOptions opt;
    opt.delta = cfg.certificate.delta;
    opt.delta_prime = cfg.certificate.delta_prime;
    opt.lambda_samples = cfg.certificate.lambda_samples;
    opt.eps = cfg.train.eps;
    opt.seed = seed;
    opt.ball_samples = cfg.certificate.ball_samples;
    opt.lipschitz_pairs = cfg.certificate.lipschitz_pairs;
    return opt;
}

RunOptions run_options(const ExperimentConfig& cfg, std::uint64_t seed) {
    RunOptions opt;
    opt.certificate = certify_options(cfg, seed);
    opt.eps = cfg.train.eps;
    opt.max_iters = cfg.train.max_iters;
    opt.eta_policy = cfg.train.eta_policy;
    opt.step_rule = cfg.train.step_rule;
    opt.eta_override = cfg.train.eta_override;
    opt.monitor_sigma_every = cfg.train.monitor_sigma_every;
    return opt;
}

} // namespace resnet_ntk
