// SPDX-License-Identifier: Apache-2.0
#include "gssl/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "gssl/config.hpp"
#include "gssl/errors.hpp"
#include "gssl/image_io.hpp"
#include "gssl/oracles.hpp"
#include "gssl/report.hpp"
#include "gssl/selftest.hpp"
#include "gssl/training.hpp"

namespace gssl::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct CommonFlags {
  std::string dataset;
  double ratio = 0.0;
  std::string tasks;
  double lambda = 0.1;
  int epochs = 0;
  int batch_size = 0;
  std::uint64_t seed = 0;
  std::string backbone;
  std::string out;
  std::string data_root;
};

json read_json_file(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw ConfigError("cannot open " + p.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + p.string());
  f << s;
}

// Tiles images left to right, top to bottom with a 2-pixel white gutter.
ImageTensor grid(const std::vector<oracle::Outcome>& cells, int cols) {
  const int h = cells.front().image.height(), w = cells.front().image.width();
  const int rows = (static_cast<int>(cells.size()) + cols - 1) / cols;
  const int gap = 2;
  ImageTensor out(rows * h + (rows + 1) * gap, cols * w + (cols + 1) * gap);
  for (float& v : out.pixels()) v = 1.0f;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const int oy = gap + static_cast<int>(k) / cols * (h + gap);
    const int ox = gap + static_cast<int>(k) % cols * (w + gap);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(c, oy + y, ox + x) = cells[k].image.at(c, y, x);
  }
  return out;
}

std::optional<double> maybe(const CLI::Option* opt, double v) {
  return opt->count() ? std::optional<double>(v) : std::nullopt;
}

int cmd_prepare(const CommonFlags& f, std::ostream& out) {
  auto cfg = train::default_config(*data::parse_dataset_name(f.dataset));
  cfg.imbalance_ratio = f.ratio;
  cfg.seed = f.seed;
  cfg.data_root = f.data_root;
  auto d = train::load_training_data(cfg);
  data::SubsampleHeader h{cfg.dataset, f.ratio, f.seed,
                          data::per_class_counts(d.train.labels(), d.train.num_classes())};
  data::write_subsample_file(f.out, h, d.subsample);
  out << f.out << "\n";
  return kExitOk;
}

int cmd_selftest(std::ostream& out) {
  auto results = selftest::run();
  int failed = 0;
  for (const auto& r : results) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name;
    if (!r.passed) {
      out << ": " << r.detail;
      ++failed;
    }
    out << "\n";
  }
  out << results.size() - failed << "/" << results.size() << " checks passed\n";
  return failed ? kExitFailure : kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gated self-supervised training for long-tailed image classification", "gssl"};
  app.require_subcommand(1);

  CommonFlags f;
  auto add_data_flags = [&](CLI::App* sub) {
    sub->add_option("--data-root", f.data_root, "Dataset directory (falls back to $DATA_ROOT)");
  };
  auto dataset_check = CLI::IsMember({"cifar10", "cifar-10", "cifar100", "cifar-100", "tiny-imagenet",
                                      "tinyimagenet", "synthetic"});

  // prepare
  auto* prepare = app.add_subcommand("prepare", "Write a long-tailed subsample index file");
  prepare->add_option("--dataset", f.dataset, "Dataset name")->required()->check(dataset_check);
  prepare->add_option("--ratio", f.ratio, "Imbalance ratio n_min/n_max in (0,1]")
      ->required()
      ->check(CLI::Range(std::numeric_limits<double>::min(), 1.0).description("in (0, 1]"));
  prepare->add_option("--seed", f.seed, "Sampling seed");
  prepare->add_option("--out", f.out, "Output index file")->required();
  add_data_flags(prepare);

  // train
  std::string config_path;
  double lr = 0.0;
  int checkpoint_every = 0, stop_after = -1;
  bool resume = false, detach_gate = false, quiet = false;
  std::string subsample;
  auto* trainc = app.add_subcommand("train", "Train a model and write a run directory");
  trainc->add_option("--config", config_path, "JSON config file");
  auto* o_dataset = trainc->add_option("--dataset", f.dataset, "Dataset name")->check(dataset_check);
  auto* o_ratio = trainc->add_option("--ratio", f.ratio, "Imbalance ratio in (0,1]")
                      ->check(CLI::Range(std::numeric_limits<double>::min(), 1.0).description("in (0, 1]"));
  auto* o_tasks = trainc->add_option("--tasks", f.tasks, "Comma-separated pretext tasks (lorot_e,flip,shuffle)");
  auto* o_lambda = trainc->add_option("--lambda", f.lambda, "Weight of the gated self-supervised term");
  auto* o_epochs = trainc->add_option("--epochs", f.epochs, "Training epochs");
  auto* o_batch = trainc->add_option("--batch-size", f.batch_size, "Mini-batch size");
  auto* o_seed = trainc->add_option("--seed", f.seed, "Run seed");
  auto* o_backbone = trainc->add_option("--backbone", f.backbone, "resnet32-cifar, resnet18 or tinycnn");
  auto* o_lr = trainc->add_option("--lr", lr, "Initial learning rate");
  auto* o_ckpt = trainc->add_option("--checkpoint-every", checkpoint_every, "Checkpoint cadence in epochs");
  auto* o_sub = trainc->add_option("--subsample", subsample, "Subsample index file from 'prepare'");
  trainc->add_option("--out", f.out, "Run directory")->required();
  trainc->add_option("--stop-after", stop_after, "Stop after this epoch (0-based)");
  trainc->add_flag("--resume", resume, "Continue from the latest checkpoint in --out");
  trainc->add_flag("--detach-gate", detach_gate, "Stop the gate gradient at the backbone features");
  trainc->add_flag("--quiet", quiet, "Do not print per-epoch progress");
  add_data_flags(trainc);

  // eval
  std::string run_dir, checkpoint;
  auto* evalc = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  evalc->add_option("--run", run_dir, "Run directory")->required();
  evalc->add_option("--checkpoint", checkpoint, "Checkpoint file (default: latest)");
  add_data_flags(evalc);

  // report
  std::vector<std::string> report_dirs;
  std::string report_out;
  auto* reportc = app.add_subcommand("report", "Tabulate final accuracies of run directories");
  reportc->add_option("runs", report_dirs, "Run directories or directories containing runs");
  reportc->add_option("--out", report_out, "Write report.md and report.csv into this directory");

  // selftest
  auto* selftestc = app.add_subcommand("selftest", "Compare the library against its reference oracles");

  // dump-transforms
  std::string image_path;
  int quadrant = 0;
  auto* dumpc = app.add_subcommand("dump-transforms", "Write PNG grids of every pretext outcome for one image");
  dumpc->add_option("--image", image_path, "JPEG input (default: a synthetic gradient)");
  dumpc->add_option("--quadrant", quadrant, "Quadrant for flip and shuffle")->check(CLI::Range(0, 3));
  dumpc->add_option("--out", f.out, "Output directory")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << "run '" << app.get_name() << (sub == &app ? "" : " " + sub->get_name()) << " --help' for usage\n";
    return kExitUsage;
  }

  try {
    if (prepare->parsed()) return cmd_prepare(f, out);

    if (trainc->parsed()) {
      train::TrainConfig cfg;
      if (!config_path.empty()) {
        json j = read_json_file(config_path);
        if (o_dataset->count()) j["dataset"] = f.dataset;
        cfg = train::config_from_json(j);
      } else {
        cfg = train::default_config(*data::parse_dataset_name(o_dataset->count() ? f.dataset : "cifar10"));
      }
      if (o_dataset->count()) cfg.dataset = std::string(data::dataset_name(*data::parse_dataset_name(f.dataset)));
      if (auto r = maybe(o_ratio, f.ratio)) cfg.imbalance_ratio = *r;
      if (o_tasks->count()) cfg.tasks = train::parse_task_list(f.tasks);
      if (o_lambda->count()) cfg.lambda = f.lambda;
      if (o_epochs->count()) {
        cfg.epochs = f.epochs;
        std::erase_if(cfg.lr.milestones, [&](const auto& m) { return m.first >= cfg.epochs; });
      }
      if (o_batch->count()) cfg.batch_size = f.batch_size;
      if (o_seed->count()) cfg.seed = f.seed;
      if (o_backbone->count()) {
        auto b = nn::parse_backbone(f.backbone);
        if (!b) throw ConfigError("unknown backbone '" + f.backbone + "' (valid: resnet32-cifar, resnet18, tinycnn)");
        cfg.backbone = *b;
      }
      if (o_lr->count()) cfg.lr.initial = lr;
      if (o_ckpt->count()) cfg.checkpoint_every = checkpoint_every;
      if (o_sub->count()) cfg.subsample_file = subsample;
      if (!f.data_root.empty()) cfg.data_root = f.data_root;
      if (detach_gate) cfg.detach_gate_input = true;
      train::validate(cfg);

      train::RunOptions opts;
      opts.out_dir = f.out;
      opts.resume = resume;
      if (stop_after >= 0) opts.stop_after_epoch = stop_after;
      if (!quiet) {
        opts.on_epoch = [&](const train::EpochMetrics& m) {
          out << "epoch " << m.epoch << " lr " << m.lr << " l_c " << m.l_c << " l_tot " << m.l_tot;
          if (m.test_accuracy) out << " test_acc " << *m.test_accuracy;
          out << "\n" << std::flush;
        };
      }
      train::run(cfg, opts);
      out << f.out << "\n";
      return kExitOk;
    }

    if (evalc->parsed()) {
      auto cfg = train::config_from_json(read_json_file(fs::path(run_dir) / "config.json"));
      if (!f.data_root.empty()) cfg.data_root = f.data_root;
      fs::path ckpt = checkpoint;
      if (ckpt.empty()) {
        auto latest = train::latest_checkpoint(run_dir);
        if (!latest) throw ConfigError("no checkpoint found under " + run_dir);
        ckpt = latest->second;
      }
      auto d = train::load_training_data(cfg);
      train::Trainer trainer(cfg, std::move(d.train), std::move(d.test));
      const int epoch = trainer.load_checkpoint(ckpt);
      json result = {{"checkpoint", ckpt.string()}, {"epoch", epoch}, {"test_accuracy", trainer.evaluate_test()}};
      auto ssl = trainer.evaluate_ssl(trainer.test_set(), 0xe7a1);
      for (std::size_t n = 0; n < cfg.tasks.size(); ++n)
        result["ssl_accuracy"][std::string(transforms::task_name(cfg.tasks[n]))] = ssl[n];
      out << result.dump(2) << "\n";
      return kExitOk;
    }

    if (reportc->parsed()) {
      std::vector<report::RunSummary> runs;
      for (const auto& d : report_dirs) {
        auto found = report::collect_runs(d, &err);
        runs.insert(runs.end(), found.begin(), found.end());
      }
      const auto md = report::to_markdown(report::build_table(runs));
      out << md;
      if (!report_out.empty()) {
        write_text(fs::path(report_out) / "report.md", md);
        write_text(fs::path(report_out) / "report.csv", report::to_csv(runs));
      }
      return kExitOk;
    }

    if (selftestc->parsed()) return cmd_selftest(out);

    if (dumpc->parsed()) {
      ImageTensor img;
      if (!image_path.empty()) {
        img = io::read_jpeg(image_path);
      } else {
        auto s = data::synthetic_dataset(2, 1, 32, 0);
        img = s.train.image(0);
      }
      fs::create_directories(f.out);
      const std::pair<transforms::TaskKind, int> layout[] = {
          {transforms::TaskKind::LorotE, 4}, {transforms::TaskKind::QuadFlip, 2},
          {transforms::TaskKind::ChannelShuffle, 6}};
      for (auto [task, cols] : layout) {
        std::vector<oracle::Outcome> cells;
        for (int label = 0; label < transforms::label_cardinality(task); ++label) {
          const int q = task == transforms::TaskKind::LorotE ? label / 4 : quadrant;
          transforms::TransformParams params = transforms::RotationStep(label % 4);
          if (task == transforms::TaskKind::QuadFlip) params = label == 1;
          if (task == transforms::TaskKind::ChannelShuffle) params = transforms::Permutation3(label);
          auto t = transforms::apply_outcome(img, transforms::make_outcome(task, transforms::QuadrantId(q), params));
          cells.push_back({std::move(t.image), t.label});
        }
        const fs::path p = fs::path(f.out) / (std::string(transforms::task_name(task)) + ".png");
        io::write_png(p, grid(cells, cols));
        out << p.string() << "\n";
      }
      return kExitOk;
    }
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace gssl::cli
