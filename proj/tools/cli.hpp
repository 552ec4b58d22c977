#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "vfcn/data.hpp"
#include "vfcn/metrics.hpp"
#include "vfcn/phantom.hpp"
#include "vfcn/trainer.hpp"

namespace vfcn::cli {

enum ExitCode : int {
    kSuccess = 0,
    kValidationError = 1,
    kRuntimeError = 2,
};

/// Flat `key = value` settings; `#` starts a comment. Dashes in keys are
/// read as underscores.
using Settings = std::map<std::string, std::string>;

Settings parse_settings(const std::string& text);
Settings read_settings_file(const std::filesystem::path& path);

struct RunConfig {
    std::string verb;
    std::optional<std::filesystem::path> manifest;
    std::optional<std::filesystem::path> arch;
    std::optional<std::filesystem::path> weights;
    std::optional<std::filesystem::path> source_weights;
    std::optional<std::filesystem::path> predictions;
    std::optional<std::filesystem::path> out;
    TrainConfig train;
    DatasetConfig data;
    PhantomSpec phantom;
    metrics::ApdMode apd_mode = metrics::ApdMode::Symmetric;
    double dev_fraction = 0.1;
    int log_every = 50;
    int workers = 1;
};

/// Applies `settings` over the defaults for `verb`. Throws ContractError on
/// unknown keys or malformed values.
RunConfig make_run_config(const std::string& verb, const Settings& settings);

int run_train(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int run_finetune(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int run_predict(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int run_evaluate(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int run_phantom(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Full command line, verb first (no program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vfcn::cli
