#pragma once

#include "poseidon/detector.hpp"

#include <optional>
#include <string>

namespace poseidon::cli {

struct Paths {
    std::string capture;
    std::string calibration_capture;
    std::string truth;
    std::string store;
    std::string store_b;
    std::string alerts;
    std::string alerts_b;
    std::string spec;
    std::string output;
};

struct RunConfig {
    DetectorConfig detector;
    bool mode_given = false;
    std::optional<double> threshold;
    double target_fp_rate = 0.01;
    unsigned threads = 1;
    std::optional<std::uint64_t> synth_seed;
    Paths paths;
};

/// Reads the JSON config file; unknown keys are rejected. Throws
/// Error(Config).
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text);

}  // namespace poseidon::cli
