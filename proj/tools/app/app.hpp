#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace rlq::app {

struct RunConfig {
    std::string command;
    std::filesystem::path scenario;
    std::uint64_t seed = 42;
    std::int64_t paths = 50000;
    std::optional<int> steps;  ///< overrides the scenario file when set
    int refine = 4;
    std::optional<double> tol_gap;
    double tol_psd = 1e-10;
    double delta = 1e-8;        ///< coercivity constant for R
    double lambda_step = 0.01;  ///< sweep spacing
    std::string control = "zero";
    double lambda = 0.5;
    int dump_paths = 10;
    std::filesystem::path out;
    std::string format = "json";

    [[nodiscard]] bool wants_json() const { return format == "json" || format == "both"; }
    [[nodiscard]] bool wants_csv() const { return format == "csv" || format == "both"; }
};

inline constexpr int kSchemaVersion = 1;

/// Hex SHA-256 of the scenario file bytes followed by the canonical flag
/// string. The output directory and format do not enter the digest.
std::string config_digest(const RunConfig& config, const std::string& scenario_bytes);

/// Parses argv and runs the subcommand. Reports go to `out`, errors to `err`
/// as JSON. Returns 0 on success, 1 on a failed check or solver error, 2 on
/// usage, parse or validation errors.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

int run(const RunConfig& config, std::ostream& out, std::ostream& err);

}  // namespace rlq::app
