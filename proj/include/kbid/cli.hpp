#pragma once

#include <string>

#include "kbid/pipeline.hpp"

namespace kbid {

// Grids behind the experiment presets. Seeds and trial counts are left at
// their defaults for the caller to override.
//   table1: cluster-count estimation, raw vs quantile-transformed features
//   table3: identification accuracy by per-user sample count (fixed text)
//   table4: identification accuracy by per-user sample count (free text)
//   table5: identification accuracy by user count, intra vs inter session
ExperimentGrid experiment_preset(const std::string& name);

// Column roles inferred from a header for the free-text and generic dialects:
// user/session/rep columns by name, everything else becomes a timing feature.
ColumnMap default_column_map(const std::string& csv_path);

Dataset load_dataset(const std::string& path, const std::string& format);

// Entry point behind the kbid binary. Returns the process exit code; fatal
// errors print to stderr and yield nonzero, recorded skips do not.
int run_cli(int argc, const char* const* argv);

}  // namespace kbid
