// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gssl/transforms.hpp"

namespace gssl::report {

struct RunSummary {
  std::string method;
  std::vector<transforms::TaskKind> tasks;
  std::string dataset;
  std::optional<double> ratio;
  double accuracy = 0.0;  // final test accuracy as a fraction
  int epochs = 0;
  std::filesystem::path dir;
};

/// Reads config.json and the last metrics.jsonl line. Returns nullopt (and
/// writes a warning to `warn` when given) if either is missing or unusable.
std::optional<RunSummary> summarize_run(const std::filesystem::path& run_dir, std::ostream* warn = nullptr);

/// Summaries for every run directory found directly under `root` (or `root`
/// itself when it is a run directory).
std::vector<RunSummary> collect_runs(const std::filesystem::path& root, std::ostream* warn = nullptr);

struct Column {
  std::string dataset;
  std::optional<double> ratio;
  std::string title;
};

struct Row {
  std::string method;
  std::vector<transforms::TaskKind> tasks;
  std::vector<std::optional<double>> accuracy;  // fraction, aligned with columns
};

struct ResultTable {
  std::vector<Column> columns;
  std::vector<Row> rows;
};

/// One row per method, one column per (dataset, ratio). A second run for an
/// already filled cell starts a new row with the same label.
ResultTable build_table(const std::vector<RunSummary>& runs);

/// Percentages with two decimals; the best entry of each column is bold.
std::string to_markdown(const ResultTable& table);

/// Long format: method,dataset,ratio,accuracy,epochs,run_dir with accuracy as
/// a round-trippable fraction.
std::string to_csv(const std::vector<RunSummary>& runs);

std::string dataset_title(const std::string& dataset);

}  // namespace gssl::report
