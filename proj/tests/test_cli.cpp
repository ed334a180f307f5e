#include <doctest.h>

#include "resnet_ntk/commands.hpp"
#include "resnet_ntk/errors.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <unistd.h>

using namespace resnet_ntk;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() /
                       ("resnet_ntk_" + std::to_string(::getpid()) + "_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

std::string read(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

int cli(std::vector<std::string> args, std::string* out_text = nullptr) {
    std::vector<const char*> argv{"resnet-ntk"};
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    if (out_text) *out_text = out.str() + err.str();
    return code;
}

const char* kSmall = R"(# small softplus experiment
model.n = 6
model.d = 4
model.m = 16
model.H = 3
model.seed = 7
certificate.lambda_samples = 10000
train.max_iters = 400
train.eps = 1e-3
)";

} // namespace

TEST_CASE("config grammar") {
    const ExperimentConfig c = parse_config(R"(
        model.n = 12        # samples
        model.activation = tanh
        model.c_res = 0.25
        certificate.delta_prime = 0.3
        train.eta_override = 0.01
        train.eta_policy = certified
        train.step_rule = printed
        output.formats = csv
        sweep.m_values = 4, 8 ,16
        verify.step = 1e-6
    )");
    CHECK(c.model.n == 12);
    CHECK(c.model.activation == "tanh");
    CHECK(c.model.c_res == 0.25);
    CHECK(c.certificate.delta_prime == 0.3);
    CHECK(c.train.eta_override == 0.01);
    CHECK(c.train.eta_policy == EtaPolicy::certified);
    CHECK(c.train.step_rule == StepRule::printed);
    CHECK(c.output.csv);
    CHECK_FALSE(c.output.json);
    CHECK(c.sweep.m_values == std::vector<std::size_t>{4, 8, 16});
    CHECK(c.verify.step == 1e-6);
    // defaults
    CHECK(c.model.d == 8);
    CHECK(c.certificate.delta == 1.0);
}

TEST_CASE("config errors") {
    CHECK_THROWS_AS(parse_config("model.width = 3"), InputError);
    CHECK_THROWS_AS(parse_config("model.n = 3\nmodel.n = 4"), InputError);
    CHECK_THROWS_AS(parse_config("model.n = three"), InputError);
    CHECK_THROWS_AS(parse_config("model.n"), InputError);
    CHECK_THROWS_AS(parse_config("model.m = 15"), InputError);
    CHECK_THROWS_AS(parse_config("model.activation = relu"), InputError);
    CHECK_THROWS_AS(parse_config("certificate.delta_prime = 1"), InputError);
    CHECK_THROWS_AS(parse_config("certificate.lambda_samples = 100"), InputError);
    CHECK_THROWS_AS(parse_config("data.source = no/such/file.csv"), InputError);
    CHECK_THROWS_AS(parse_config("data.label_source = file"), InputError);
    CHECK_THROWS_AS(parse_config("output.formats = xml"), InputError);
}

TEST_CASE("data files resolve against the config directory") {
    const fs::path dir = scratch("datafile");
    write(dir / "x.csv", "1,0,0\n0,1,0\n# comment\n0,0,1\n");
    write(dir / "y.txt", "1\n-1\n0.5\n");
    write(dir / "exp.cfg",
          "model.n = 3\nmodel.d = 3\nmodel.activation = identity\ndata.source = x.csv\n"
          "data.label_source = file\ndata.labels_path = y.txt\ncertificate.lambda_samples = 10000\n");
    const ExperimentConfig c = load_config(dir / "exp.cfg");
    const Dataset d = load_dataset(c, 3, 0);
    CHECK(d.X == DenseMatrix::identity(3));
    CHECK(d.y == Vector{1, -1, 0.5});

    std::ostringstream log;
    const LambdaEstimate est = cmd_lambda(c, 0, log);
    CHECK(est.value == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(log.str().find("standard_error") != std::string::npos);

    write(dir / "bad.csv", "1,1,0\n0,1,0\n0,0,1\n");
    write(dir / "bad.cfg", "model.n = 3\nmodel.d = 3\ndata.source = bad.csv\n");
    CHECK_THROWS_AS(load_dataset(load_config(dir / "bad.cfg"), 3, 0), InputError);
    CHECK(cli({"certify", "--config", (dir / "bad.cfg").string()}) == kExitConfig);
}

TEST_CASE("certificate JSON round trip") {
    BoundsCertificate c;
    c.lambda_X = 0.123456789012345678;
    c.lambda_X_se = 1e-17;
    c.alpha0 = 1.0 / 3.0;
    c.alpha_dp = 2.0 / 3.0;
    c.K_width = std::numeric_limits<double>::infinity();
    c.R = std::numeric_limits<double>::infinity();
    c.tau_of_eps = 12345;
    c.seed = 18446744073709551615ull;
    c.lambda_samples = 100000;
    c.ball.evaluated = true;
    c.ball.lipschitz_estimate = 0.1 + 0.2;
    c.H_ok = true;
    const Json j = certificate_to_json(c);
    CHECK(j.at("K_width") == "inf");
    CHECK(j.at("m_min").is_null());
    const BoundsCertificate back = certificate_from_json(Json::parse(json_text(j)));
    CHECK(back == c);
}

TEST_CASE("summary JSON round trip") {
    RunSummary s;
    s.final_misfit = 9.87654321e-4;
    s.iters = 77;
    s.predicted_tau = 1234;
    s.contraction_violations = 1;
    s.eta = 0.7071067811865476;
    s.seed = 42;
    CHECK(summary_from_json(Json::parse(json_text(summary_to_json(s)))) == s);
    s.predicted_tau.reset();
    CHECK(summary_from_json(Json::parse(json_text(summary_to_json(s)))) == s);
}

TEST_CASE("trace CSV round trip and format") {
    TrainTrace t;
    t.records.push_back({0, 0.5, 1.0, 0.0, true, true, 0.25});
    t.records.push_back({1, 0.1 + 0.2, std::sqrt(0.6), 1e-300, false, true, std::nullopt});
    std::ostringstream out;
    write_trace_csv(out, t);
    const std::string text = out.str();
    CHECK(text.rfind("iter,loss,misfit,dist_init,contraction_ok,close_ok,sigma_min\n", 0) == 0);
    CHECK(text.find("0.30000000000000004") != std::string::npos);
    CHECK(text.back() == '\n');
    std::istringstream in(text);
    CHECK(read_trace_csv(in) == t);
}

TEST_CASE("certify writes byte-identical JSON for a fixed seed") {
    const fs::path dir = scratch("certify");
    const ExperimentConfig c = parse_config(kSmall);
    std::ostringstream log;
    cmd_certify(c, 7, dir / "a", log);
    cmd_certify(c, 7, dir / "b", log);
    const std::string a = read(dir / "a" / "certificate.json");
    CHECK_FALSE(a.empty());
    CHECK(a == read(dir / "b" / "certificate.json"));
    const BoundsCertificate back = certificate_from_json(Json::parse(a));
    CHECK(back.seed == 7);
    CHECK(back.lambda_samples == 10000);
}

TEST_CASE("train writes trace and summary") {
    const fs::path dir = scratch("train");
    write(dir / "exp.cfg", kSmall);
    std::string text;
    REQUIRE(cli({"train", "--config", (dir / "exp.cfg").string(), "--out", (dir / "run1").string()}, &text) == kExitOk);
    REQUIRE(cli({"train", "--config", (dir / "exp.cfg").string(), "--out", (dir / "run2").string()}) == kExitOk);
    const std::string trace = read(dir / "run1" / "trace.csv");
    CHECK(trace == read(dir / "run2" / "trace.csv"));
    std::istringstream in(trace);
    const TrainTrace t = read_trace_csv(in);
    const RunSummary s = summary_from_json(Json::parse(read(dir / "run1" / "summary.json")));
    CHECK(s.iters == t.back().iter);
    CHECK(s.final_misfit == t.back().misfit_norm);
    CHECK((s.final_misfit <= 1e-3 || s.iters == 400));
    REQUIRE(s.predicted_tau.has_value());
    CHECK(*s.predicted_tau >= s.iters);
    CHECK(fs::exists(dir / "run1" / "certificate.json"));

    // a different seed changes the run
    REQUIRE(cli({"train", "--config", (dir / "exp.cfg").string(), "--seed", "8", "--out", (dir / "run3").string()}) == kExitOk);
    CHECK(read(dir / "run3" / "trace.csv") != trace);
}

TEST_CASE("linear model training matches its oracle") {
    const fs::path dir = scratch("linear");
    write(dir / "x.csv", "1,0,0,0\n0,1,0,0\n0,0,0.6,0.8\n");
    write(dir / "exp.cfg",
          "model.n = 3\nmodel.d = 4\nmodel.m = 8\nmodel.H = 1\nmodel.activation = identity\n"
          "data.source = x.csv\ncertificate.lambda_samples = 10000\ntrain.max_iters = 40\n"
          "train.eps = 0\ntrain.eta_override = 0.1\nmodel.seed = 3\n");
    const ExperimentConfig c = load_config(dir / "exp.cfg");
    std::ostringstream log;
    const CertifiedRun run = cmd_train(c, 3, dir / "out", log);
    // orthonormal rows: K = s·I with s = (c_φ/m)‖a‖², so r_τ = (1 − ηs)^τ r₀
    const Dataset data = load_dataset(c, 3, 3);
    const double s = 1.0 / 8.0 * norm2(data.y) * norm2(data.y) * 8.0 / 3.0;
    const double r0 = run.trace.records.front().misfit_norm;
    CHECK(run.trace.back().misfit_norm == doctest::Approx(std::pow(1 - 0.1 * s, 40) * r0).epsilon(1e-8));
}

TEST_CASE("exit codes") {
    const fs::path dir = scratch("exit");
    write(dir / "ok.cfg", kSmall);
    std::string text;
    CHECK(cli({"verify-jacobian", "--config", (dir / "ok.cfg").string()}, &text) == kExitOk);
    CHECK(text.find("PASS") != std::string::npos);

    write(dir / "coarse.cfg", std::string(kSmall) + "verify.step = 1e-1\n");
    CHECK(cli({"verify-jacobian", "--config", (dir / "coarse.cfg").string()}, &text) == kExitVerification);
    CHECK(text.find("truncation") != std::string::npos);

    write(dir / "bad.cfg", "model.m = 15\n");
    CHECK(cli({"certify", "--config", (dir / "bad.cfg").string()}) == kExitConfig);
    CHECK(cli({"certify", "--config", (dir / "missing.cfg").string()}) == kExitConfig);
    CHECK(cli({"certify"}) == kExitConfig);
    CHECK(cli({"bogus", "--config", (dir / "ok.cfg").string()}) == kExitConfig);

    write(dir / "diverge.cfg", std::string(kSmall) + "train.eta_override = 1e7\n");
    CHECK(cli({"train", "--config", (dir / "diverge.cfg").string(), "--out", (dir / "d").string()}, &text) == kExitDivergence);
    CHECK(fs::exists(dir / "d" / "trace.csv"));
    const RunSummary s = summary_from_json(Json::parse(read(dir / "d" / "summary.json")));
    CHECK(s.diverged);
}

TEST_CASE("linear model verifies to roundoff") {
    const ExperimentConfig c = parse_config(
        "model.n = 5\nmodel.d = 3\nmodel.m = 8\nmodel.H = 1\nmodel.activation = identity\n"
        "certificate.lambda_samples = 10000\n");
    std::ostringstream log;
    const VerifyReport rep = cmd_verify_jacobian(c, 1, 1e-5, log);
    CHECK(rep.passed());
    CHECK(rep.fd_relative_error <= 1e-10);
    CHECK(rep.decomposition_residual <= 1e-12);
}

TEST_CASE("sweep grid") {
    const fs::path dir = scratch("sweep");
    ExperimentConfig c = parse_config(R"(
        model.d = 4
        model.H = 2
        certificate.lambda_samples = 10000
        sweep.n_values = 4, 6
        sweep.m_values = 2, 16
        sweep.seeds_per_cell = 3
        sweep.max_iters = 300
        sweep.success_eps = 1e-2
    )");
    std::ostringstream log;
    const auto rows1 = cmd_sweep(c, 10, 1, dir / "one", log);
    const auto rows3 = cmd_sweep(c, 10, 3, dir / "three", log);
    CHECK(rows1.size() == 2 * 2 * 3);
    CHECK(read(dir / "one" / "sweep.csv") == read(dir / "three" / "sweep.csv"));
    CHECK(read(dir / "one" / "sweep.csv").rfind("n,m,seed,success,iters,final_misfit,sigma_min_init\n", 0) == 0);
    for (std::size_t k = 1; k < rows1.size(); ++k)
        CHECK(std::tie(rows1[k - 1].n, rows1[k - 1].m, rows1[k - 1].seed) <
              std::tie(rows1[k].n, rows1[k].m, rows1[k].seed));

    ::setenv("RESNET_NTK_THREADS", "2", 1);
    const fs::path cfg = dir / "sweep.cfg";
    write(cfg, "model.d = 4\nmodel.H = 2\ncertificate.lambda_samples = 10000\nsweep.n_values = 4\n"
               "sweep.m_values = 16\nsweep.seeds_per_cell = 2\nsweep.max_iters = 100\n");
    CHECK(cli({"sweep", "--config", cfg.string(), "--jobs", "1", "--out", (dir / "env").string()}) == kExitOk);
    ::unsetenv("RESNET_NTK_THREADS");
    CHECK(fs::exists(dir / "env" / "sweep.csv"));
}

TEST_CASE("the installed binary honours the exit-code contract") {
    const fs::path dir = scratch("binary");
    write(dir / "bad.cfg", "model.n = 0\n");
    const std::string cmd = std::string(RESNET_NTK_BINARY) + " certify --config " +
                            (dir / "bad.cfg").string() + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(status) == kExitConfig);
}
