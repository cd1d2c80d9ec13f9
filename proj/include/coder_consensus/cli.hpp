// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "coder_consensus/llm_backend.hpp"
#include "coder_consensus/metrics.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace coder_consensus::cli {

/// Exit codes are a stable contract for CI.
enum ExitCode : int { kOk = 0, kFailure = 1, kTransport = 2 };

/// Run configuration. Precedence: command-line flags, then the config file,
/// then these defaults.
struct AppConfig {
    std::string codebook = "builtin";
    std::string transcript;
    std::string ground_truth;
    std::string backend = "http"; ///< "http" or "mock"
    std::string mock_script;      ///< empty: every turn answers an all-zero dictionary
    std::string base_url = "http://localhost:11434";
    std::vector<std::string> models{"wizardlm2:7b"};
    std::vector<double> temperatures{0.0, 0.5, 1.0};
    std::vector<std::string> pairings; ///< empty: the six canonical pairings
    int max_rounds = 2;
    std::size_t history_window = 10;
    std::size_t workers = 4;
    std::string out_dir = "out";
    std::string alias_file;
    std::optional<std::int64_t> seed;
    int timeout_s = 120;
    int transport_retries = 2;
    std::size_t max_in_flight = 4;
    std::string bearer_token;
    std::string missing_policy = "count_as_disagree";
};

/// Applies a JSON config file over `base`. Unknown keys are an error.
AppConfig load_config(const std::filesystem::path& path, AppConfig base = {});

std::unique_ptr<ChatBackend> make_backend(const AppConfig& config);

int cmd_validate(const AppConfig& config, std::ostream& out, std::ostream& err);

struct RunFlags {
    bool resume = false;
    std::optional<std::size_t> max_configs;
};

int cmd_run(const AppConfig& config, const RunFlags& flags, std::ostream& out, std::ostream& err);

struct AnalyzeOptions {
    MissingPolicy missing_policy = MissingPolicy::count_as_disagree;
    PairingUnit pairing_unit = PairingUnit::segment;
    double alpha = 0.05;
};

/// Names of the files cmd_analyze writes, in write order.
const std::vector<std::string>& analysis_files();

int cmd_analyze(const std::filesystem::path& decisions, const std::filesystem::path& out_dir,
                const AnalyzeOptions& options, std::ostream& out, std::ostream& err);

int cmd_trace(const std::filesystem::path& trace_file, std::optional<std::int64_t> segment_id, std::ostream& out,
              std::ostream& err);

int cmd_show_templates(std::ostream& out);

int cmd_mock_demo(const std::filesystem::path& out_dir, std::ostream& out, std::ostream& err);

/// Shortest round-trip decimal form.
std::string format_number(double v);

/// Full command-line entry point.
int run_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace coder_consensus::cli
