// SPDX-License-Identifier: Apache-2.0
#include "gssl/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "gssl/config.hpp"
#include "gssl/datasets.hpp"
#include "gssl/errors.hpp"

namespace gssl::report {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string format_ratio(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", r);
  return buf;
}

std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

int dataset_rank(const std::string& d) {
  auto n = data::parse_dataset_name(d);
  return n ? static_cast<int>(*n) : 99;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string dataset_title(const std::string& dataset) {
  auto n = data::parse_dataset_name(dataset);
  if (!n) return dataset;
  switch (*n) {
    case data::DatasetName::Cifar10: return "CIFAR-10";
    case data::DatasetName::Cifar100: return "CIFAR-100";
    case data::DatasetName::TinyImageNet: return "Tiny-ImageNet";
    case data::DatasetName::Synthetic: return "Synthetic";
  }
  return dataset;
}

std::optional<RunSummary> summarize_run(const fs::path& run_dir, std::ostream* warn) {
  auto skip = [&](const std::string& why) -> std::optional<RunSummary> {
    if (warn) *warn << "warning: skipping " << run_dir.string() << ": " << why << "\n";
    return std::nullopt;
  };
  const fs::path cfg_path = run_dir / "config.json";
  const fs::path metrics_path = run_dir / "metrics.jsonl";
  if (!fs::exists(cfg_path)) return skip("config.json not found");
  if (!fs::exists(metrics_path)) return skip("metrics.jsonl not found");

  train::TrainConfig cfg;
  try {
    std::ifstream f(cfg_path);
    cfg = train::config_from_json(json::parse(f));
  } catch (const std::exception& e) {
    return skip(std::string("bad config.json: ") + e.what());
  }

  std::ifstream f(metrics_path);
  std::string line, last;
  while (std::getline(f, line)) {
    if (!line.empty()) last = line;
  }
  if (last.empty()) return skip("metrics.jsonl is empty");
  json m = json::parse(last, nullptr, false);
  if (m.is_discarded() || !m.contains("test_accuracy") || !m["test_accuracy"].is_number())
    return skip("last metrics line has no test accuracy");

  RunSummary s;
  s.tasks = cfg.tasks;
  s.method = train::method_label(cfg.tasks);
  s.dataset = cfg.dataset;
  s.ratio = cfg.imbalance_ratio;
  s.accuracy = m["test_accuracy"].get<double>();
  s.epochs = m.value("epoch", -1) + 1;
  s.dir = run_dir;
  return s;
}

std::vector<RunSummary> collect_runs(const fs::path& root, std::ostream* warn) {
  std::vector<RunSummary> runs;
  if (fs::exists(root / "config.json")) {
    if (auto s = summarize_run(root, warn)) runs.push_back(*s);
    return runs;
  }
  if (!fs::is_directory(root)) throw DataError("run directory " + root.string() + " does not exist");
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) {
    if (auto s = summarize_run(d, warn)) runs.push_back(*s);
  }
  return runs;
}

ResultTable build_table(const std::vector<RunSummary>& runs) {
  ResultTable t;
  for (const auto& r : runs) {
    auto same = [&](const Column& c) { return c.dataset == r.dataset && c.ratio == r.ratio; };
    if (std::find_if(t.columns.begin(), t.columns.end(), same) == t.columns.end()) {
      std::string title = dataset_title(r.dataset) + " " + (r.ratio ? format_ratio(*r.ratio) : "balanced");
      t.columns.push_back({r.dataset, r.ratio, title});
    }
  }
  std::sort(t.columns.begin(), t.columns.end(), [](const Column& a, const Column& b) {
    if (dataset_rank(a.dataset) != dataset_rank(b.dataset)) return dataset_rank(a.dataset) < dataset_rank(b.dataset);
    if (a.dataset != b.dataset) return a.dataset < b.dataset;
    return a.ratio.value_or(2.0) < b.ratio.value_or(2.0);
  });

  for (const auto& r : runs) {
    std::size_t col = 0;
    while (!(t.columns[col].dataset == r.dataset && t.columns[col].ratio == r.ratio)) ++col;
    auto it = std::find_if(t.rows.begin(), t.rows.end(),
                           [&](const Row& row) { return row.method == r.method && !row.accuracy[col]; });
    if (it == t.rows.end()) {
      t.rows.push_back({r.method, r.tasks, std::vector<std::optional<double>>(t.columns.size())});
      it = std::prev(t.rows.end());
    }
    it->accuracy[col] = r.accuracy;
  }
  std::stable_sort(t.rows.begin(), t.rows.end(), [](const Row& a, const Row& b) {
    auto key = [](const Row& r) {
      auto s = r.tasks;
      std::sort(s.begin(), s.end());
      std::vector<int> k{static_cast<int>(s.size())};
      for (auto x : s) k.push_back(static_cast<int>(x));
      return k;
    };
    return key(a) < key(b);
  });
  return t;
}

std::string to_markdown(const ResultTable& t) {
  std::ostringstream s;
  s << "**Imbalanced classification accuracy (%)**\n\n";
  s << "| Imbalance Ratio |";
  for (const auto& c : t.columns) s << " " << c.title << " |";
  s << "\n|---|";
  for (std::size_t i = 0; i < t.columns.size(); ++i) s << "---:|";
  s << "\n";
  std::vector<std::optional<double>> best(t.columns.size());
  for (const auto& r : t.rows) {
    for (std::size_t c = 0; c < r.accuracy.size(); ++c) {
      if (r.accuracy[c] && (!best[c] || *r.accuracy[c] > *best[c])) best[c] = r.accuracy[c];
    }
  }
  for (const auto& r : t.rows) {
    s << "| " << r.method << " |";
    for (std::size_t c = 0; c < r.accuracy.size(); ++c) {
      if (!r.accuracy[c]) {
        s << " - |";
      } else if (format_percent(*r.accuracy[c]) == format_percent(*best[c])) {
        s << " **" << format_percent(*r.accuracy[c]) << "** |";
      } else {
        s << " " << format_percent(*r.accuracy[c]) << " |";
      }
    }
    s << "\n";
  }
  return s.str();
}

std::string to_csv(const std::vector<RunSummary>& runs) {
  std::ostringstream s;
  s << "method,dataset,ratio,accuracy,epochs,run_dir\n";
  for (const auto& r : runs) {
    s << csv_field(r.method) << "," << r.dataset << "," << (r.ratio ? format_full(*r.ratio) : "") << ","
      << format_full(r.accuracy) << "," << r.epochs << "," << csv_field(r.dir.string()) << "\n";
  }
  return s.str();
}

}  // namespace gssl::report
