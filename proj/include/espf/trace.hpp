// Trace serialization: CSV rows, JSON summary, resolved configuration.
#pragma once

#include <espf/runner.hpp>

#include <filesystem>
#include <ostream>
#include <string>

namespace espf {

/// Column names in output order.
std::vector<std::string> trace_columns(Index dim);

/**
 * @brief One row per assimilation
 *
 * Vector-valued fields whose length varies between rows (measurement,
 * compatibility) are ';'-joined inside a single column. Columns of a filter
 * that did not run are left empty. Reals use 17 significant digits.
 */
void write_trace_csv(std::ostream &out, const RunTrace &trace);

std::string summary_json(const RunTrace &trace, const Summary &summary, double final_window);

/// trace.csv, summary.json and config_resolved.txt into `dir` (created if needed).
void write_run_outputs(const std::filesystem::path &dir, const RunTrace &trace, const Summary &summary,
                       double final_window, const std::string &resolved_config);

} // namespace espf
