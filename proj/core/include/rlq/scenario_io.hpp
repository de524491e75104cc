#pragma once

#include "rlq/scenario_model.hpp"

#include <filesystem>
#include <string>

namespace rlq {

/// Reads an LQ scenario file. The format is INI-style text:
///
///   horizon = 1.0
///   steps = 100
///   n = 1
///   k = 1
///   x0 = [1.0]
///   F = 0.0
///   [scenario1]
///   A = [0.5]
///   E = "scenario1_E.csv"
///
/// Root keys: horizon, steps, n, k, d, x0, F. Sections scenario1..scenarioK
/// with keys A, B, C, D, E, L, S, R, G. A value is a number (1 x 1 tables
/// only), an inline row-major list, or a quoted path to a CSV file with one
/// line of row-major entries per step, resolved against the file's
/// directory. Missing tables are zero; unknown keys are rejected. Throws
/// ParseError for malformed input.
ScenarioSet load_scenario_file(const std::filesystem::path& path);

ScenarioSet parse_scenario(const std::string& text, const std::filesystem::path& base_dir = ".");

/// Writes `set` (LQ only) so that load_scenario_file reproduces it bit for bit.
/// Time-varying tables go to `<stem>_<scenario>_<key>.csv` next to `path`.
void save_scenario_file(const ScenarioSet& set, const std::filesystem::path& path);

/// Same set on a grid with `steps` steps. Every table must be constant in
/// time; throws InputError otherwise.
ScenarioSet with_steps(const ScenarioSet& set, int steps);

}  // namespace rlq
