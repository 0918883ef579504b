#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "lukan/model.hpp"
#include "lukan/train.hpp"

namespace lukan::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kConfigError = 2,
    kDataError = 3,
    kNumericError = 4,
    kCheckFailed = 5,  // gradcheck over threshold
    kInternalError = 6,
};

struct DataOptions {
    std::string dir = "data";
    std::size_t stride = 1;      // training windows
    std::size_t val_stride = 10; // validation windows
    double val_fraction = 0.25;

    bool operator==(const DataOptions&) const = default;
};

// Everything a run needs. Every field has a default, so "{}" is a valid
// config file.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    DataOptions data;

    bool operator==(const RunConfig&) const = default;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_run_config(const std::filesystem::path& path);

enum class LogLevel { Error, Info, Debug };

// Reads LUKAN_LOG (error|info|debug, default info).
LogLevel log_level_from_env();

// Runs one command line (args excludes the program name). Results go to
// `out`, progress and diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lukan::cli
