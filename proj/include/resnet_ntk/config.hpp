#pragma once

#include "resnet_ntk/bounds.hpp"
#include "resnet_ntk/model.hpp"
#include "resnet_ntk/trainer.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace resnet_ntk {

// Experiment description read from a flat `section.key = value` file.
//
//   # comment
//   model.n = 8
//   model.activation = softplus      # softplus | tanh | identity
//   data.source = synthetic-sphere   # or a CSV path, one row per sample
//   sweep.m_values = 64, 256, 1024
//
// Blank lines and text after `#` are ignored. Unknown keys, repeated keys and
// malformed values are InputErrors. Relative paths resolve against the
// directory of the config file.
struct ExperimentConfig {
    struct Model {
        std::size_t n = 8;
        std::size_t d = 8;
        std::size_t m = 256;
        std::size_t H = 4;
        double c_res = 0.5;
        std::string activation = "softplus";
        std::uint64_t seed = 0;
    } model;

    struct Certificate {
        double delta = 1.0;
        double delta_prime = 0.5;
        std::size_t lambda_samples = 100'000;
        std::size_t ball_samples = 0;
        std::size_t lipschitz_pairs = 0;
    } certificate;

    struct Train {
        double eps = 1e-3;
        std::size_t max_iters = 100'000;
        std::optional<double> eta_override;
        EtaPolicy eta_policy = EtaPolicy::measured;
        StepRule step_rule = StepRule::conservative;
        std::size_t monitor_sigma_every = 10;
    } train;

    struct Data {
        std::string source = "synthetic-sphere";
        std::string label_source = "random-signs"; // random-signs | gaussian | file
        std::string labels_path;
    } data;

    struct Output {
        std::filesystem::path dir = "out";
        bool csv = true;
        bool json = true;
    } output;

    struct Sweep {
        std::vector<std::size_t> n_values{8};
        std::vector<std::size_t> m_values{64, 256};
        std::size_t seeds_per_cell = 5;
        double success_eps = 1e-3;
        std::size_t max_iters = 20'000;
    } sweep;

    struct Verify {
        double step = 1e-5;
    } verify;

    void validate() const;
};

ExperimentConfig parse_config(const std::string& text,
                              const std::filesystem::path& base_dir = ".");
ExperimentConfig load_config(const std::filesystem::path& path);

// Model shape from the config, with n overridden when the data is read from disk.
ModelConfig model_config(const ExperimentConfig& cfg, std::size_t n, std::size_t d);

// Synthetic sphere data or the CSV file named by data.source, labelled per
// data.label_source. Synthetic draws use `seed`.
Dataset load_dataset(const ExperimentConfig& cfg, std::size_t n, std::uint64_t seed);

CertifyOptions certify_options(const ExperimentConfig& cfg, std::uint64_t seed);
RunOptions run_options(const ExperimentConfig& cfg, std::uint64_t seed);

} // namespace resnet_ntk
