// SPDX-License-Identifier: Apache-2.0
#include "gssl/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>

#include "gssl/checkpoint.hpp"
#include "gssl/errors.hpp"
#include "gssl/report.hpp"

namespace gssl::train {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kOrderStream = 0x0a11;
constexpr std::uint64_t kBatchStream = 0xba7c;
constexpr std::uint64_t kInitStream = 0x1417;
constexpr const char* kMomentumPrefix = "optim.momentum.";

void copy_image(const ImageTensor& img, double* dst) {
  auto px = img.pixels();
  for (std::size_t k = 0; k < px.size(); ++k) dst[k] = px[k];
}

}  // namespace

void Sgd::step(const std::vector<nn::Parameter*>& params, double lr) {
  for (nn::Parameter* p : params) {
    auto [it, inserted] = velocity_.try_emplace(p->name, p->value.shape(), 0.0);
    Tensor& v = it->second;
    if (!v.same_shape(p->value)) throw ShapeError("momentum buffer shape mismatch for " + p->name);
    double* w = p->value.data();
    const double* g = p->grad.data();
    double* vel = v.data();
    const std::size_t n = p->value.size();
    for (std::size_t k = 0; k < n; ++k) {
      const double d = g[k] + weight_decay_ * w[k];
      vel[k] = momentum_ * vel[k] + d;
      w[k] -= lr * vel[k];
    }
  }
}

Tensor stack_images(std::span<const data::LabeledExample> examples) {
  if (examples.empty()) throw ShapeError("cannot stack an empty batch");
  const int h = examples.front().image.height();
  const int w = examples.front().image.width();
  Tensor out({static_cast<int>(examples.size()), 3, h, w});
  const std::size_t plane = static_cast<std::size_t>(3) * h * w;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& img = examples[i].image;
    if (img.height() != h || img.width() != w) throw ShapeError("batch images differ in size");
    copy_image(img, out.data() + i * plane);
  }
  return out;
}

Batch build_batch(std::span<const data::LabeledExample> examples, std::span<const transforms::TaskKind> tasks,
                  Rng& rng) {
  if (tasks.empty()) throw ConfigError("build_batch needs at least one pretext task");
  if (examples.empty()) throw ShapeError("cannot build an empty batch");
  const int b = static_cast<int>(examples.size());
  const int h = examples.front().image.height();
  const int w = examples.front().image.width();
  for (const auto& ex : examples) {
    if (ex.image.height() != h || ex.image.width() != w) throw ShapeError("batch images differ in size");
  }
  std::vector<std::uint64_t> seeds(examples.size());
  for (auto& s : seeds) s = rng.next();

  Batch batch;
  batch.images = Tensor({b, 3, h, w});
  batch.class_targets.resize(examples.size());
  batch.ssl_targets.assign(tasks.size(), std::vector<int>(examples.size()));
  const std::size_t plane = static_cast<std::size_t>(3) * h * w;

#pragma omp parallel for schedule(static)
  for (int i = 0; i < b; ++i) {
    Rng local(seeds[i]);
    std::vector<transforms::TransformOutcome> outcomes;
    outcomes.reserve(tasks.size());
    for (auto t : tasks) outcomes.push_back(transforms::sample_outcome(t, local));
    auto composed = transforms::apply_composed(examples[i].image, outcomes);
    copy_image(composed.image, batch.images.data() + i * plane);
    batch.class_targets[i] = examples[i].class_label;
    for (std::size_t n = 0; n < tasks.size(); ++n) batch.ssl_targets[n][i] = composed.labels[n];
  }
  return batch;
}

void normalize_images(Tensor& images, const data::ChannelStats& stats) {
  if (images.rank() != 4 || images.dim(1) != 3) throw ShapeError("normalize_images expects (B,3,H,W)");
  const std::size_t plane = static_cast<std::size_t>(images.dim(2)) * images.dim(3);
  double* p = images.data();
  for (int i = 0; i < images.dim(0); ++i) {
    for (int c = 0; c < 3; ++c) {
      const double m = stats.mean[c];
      const double inv = 1.0 / stats.stddev[c];
      for (std::size_t k = 0; k < plane; ++k, ++p) *p = (*p - m) * inv;
    }
  }
}

std::vector<int> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("argmax_rows expects a rank-2 tensor");
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (int i = 0; i < logits.rows(); ++i) {
    auto r = logits.row(i);
    out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

int count_correct(const Tensor& logits, std::span<const int> labels) {
  auto pred = argmax_rows(logits);
  if (pred.size() != labels.size()) throw ShapeError("count_correct: label count does not match rows");
  int c = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) c += pred[i] == labels[i];
  return c;
}

json to_json(const EpochMetrics& m, const std::vector<transforms::TaskKind>& tasks) {
  json gated = json::object(), ssl = json::object(), gate = json::object();
  for (std::size_t n = 0; n < tasks.size(); ++n) {
    const std::string key(transforms::task_name(tasks[n]));
    gated[key] = m.gated_losses.at(n);
    ssl[key] = m.ssl_accuracy.at(n);
    gate[key] = m.mean_gate.at(n);
  }
  return {{"epoch", m.epoch},
          {"lr", m.lr},
          {"drw_active", m.drw_active},
          {"steps", m.steps},
          {"l_c", m.l_c},
          {"l_tot", m.l_tot},
          {"gated_loss", gated},
          {"ssl_accuracy", ssl},
          {"mean_gate", gate},
          {"train_accuracy", m.train_accuracy},
          {"test_accuracy", m.test_accuracy ? json(*m.test_accuracy) : json(nullptr)}};
}

// ---------------------------------------------------------------------------

Trainer::Trainer(TrainConfig config, data::Dataset train, data::Dataset test)
    : config_(std::move(config)),
      train_(std::move(train)),
      test_(std::move(test)),
      model_(nn::GatedModel::assemble(config_.backbone, train_.num_classes(), config_.tasks,
                                      derive_seed(config_.seed, kInitStream))),
      optimizer_(config_.momentum, config_.weight_decay) {
  validate(config_);
  if (train_.size() == 0) throw DataError("training set is empty");
  counts_ = data::per_class_counts(train_.labels(), train_.num_classes());
  margins_ = loss::ldam_margins(counts_, config_.max_margin, config_.logit_scale);
  weights_ = loss::drw_weights(counts_, config_.drw_beta);
  if (config_.normalize && !config_.channel_stats) config_.channel_stats = data::compute_channel_stats(train_);
}

Tensor Trainer::prepare_images(Tensor images) const {
  if (config_.normalize && config_.channel_stats) normalize_images(images, *config_.channel_stats);
  return images;
}

StepResult Trainer::train_step(const Batch& batch, int epoch) {
  const int b = static_cast<int>(batch.class_targets.size());
  const int t = model_.num_tasks();
  model_.zero_grad();
  auto out = model_.forward(prepare_images(batch.images), nn::Mode::Train);
  Tensor gate = nn::gate_distribution(out.gate_logits);

  const bool drw = drw_active(epoch);
  auto ldam = loss::ldam_loss(out.class_logits, batch.class_targets, margins_, drw ? &weights_ : nullptr);

  std::vector<loss::TaskCeResult> ce;
  std::vector<std::vector<double>> task_losses;
  for (int n = 0; n < t; ++n) {
    ce.push_back(loss::task_ce(out.ssl_logits[n], batch.ssl_targets.at(n)));
    task_losses.push_back(ce.back().per_sample);
  }
  auto gated = loss::gated_total_loss(ldam.mean, gate, task_losses, config_.lambda);
  gated.breakdown.class_weighted = drw;
  if (!std::isfinite(gated.breakdown.l_tot)) {
    throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " (l_c=" +
                       std::to_string(gated.breakdown.l_c) + ")");
  }

  nn::ForwardGrads grads;
  grads.class_logits = std::move(ldam.grad);
  grads.gate_logits = Tensor({b, t});
  for (int n = 0; n < t; ++n) {
    Tensor g = std::move(ce[n].grad);
    if (config_.ssl_in_loss) {
      for (int i = 0; i < b; ++i) {
        const double s = gated.grad_task_losses[n][i];
        for (double& v : g.row(i)) v *= s;
      }
    } else {
      g.zero();
    }
    grads.ssl_logits.push_back(std::move(g));
  }
  if (config_.ssl_in_loss) grads.gate_logits = nn::gate_distribution_backward(gate, gated.grad_gate);
  model_.backward(grads, config_.detach_gate_input);
  optimizer_.step(model_.parameters(), lr_at(epoch, config_.lr));

  StepResult r;
  r.loss = std::move(gated.breakdown);
  r.batch_size = b;
  r.gate_sum.assign(t, 0.0);
  for (int i = 0; i < b; ++i)
    for (int n = 0; n < t; ++n) r.gate_sum[n] += gate.at(i, n);
  for (int n = 0; n < t; ++n) r.ssl_correct.push_back(count_correct(out.ssl_logits[n], batch.ssl_targets[n]));
  r.class_correct = count_correct(out.class_logits, batch.class_targets);
  return r;
}

std::vector<std::size_t> Trainer::epoch_order(int epoch) const {
  std::vector<std::size_t> order(train_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(config_.seed, kOrderStream, static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order.begin(), order.end());
  return order;
}

Batch Trainer::make_batch(std::span<const std::size_t> indices, int epoch, int batch_index) const {
  std::vector<data::LabeledExample> examples;
  examples.reserve(indices.size());
  for (auto i : indices) examples.push_back(train_.example(i));
  Rng rng(derive_seed(derive_seed(config_.seed, kBatchStream), static_cast<std::uint64_t>(epoch),
                      static_cast<std::uint64_t>(batch_index)));
  return build_batch(examples, config_.tasks, rng);
}

EpochMetrics Trainer::train_epoch(int epoch, const StepCallback& callback) {
  const int t = model_.num_tasks();
  EpochMetrics m;
  m.epoch = epoch;
  m.lr = lr_at(epoch, config_.lr);
  m.drw_active = drw_active(epoch);
  m.gated_losses.assign(t, 0.0);
  m.ssl_accuracy.assign(t, 0.0);
  m.mean_gate.assign(t, 0.0);

  auto order = epoch_order(epoch);
  const std::size_t bs = static_cast<std::size_t>(config_.batch_size);
  std::size_t seen = 0;
  int correct = 0;
  std::vector<int> ssl_correct(t, 0);
  for (std::size_t start = 0, step = 0; start < order.size(); start += bs, ++step) {
    const std::size_t len = std::min(bs, order.size() - start);
    auto batch = make_batch(std::span(order).subspan(start, len), epoch, static_cast<int>(step));
    auto r = train_step(batch, epoch);
    const double w = static_cast<double>(len);
    m.l_c += r.loss.l_c * w;
    m.l_tot += r.loss.l_tot * w;
    for (int n = 0; n < t; ++n) {
      m.gated_losses[n] += r.loss.per_task_gated[n] * w;
      m.mean_gate[n] += r.gate_sum[n];
      ssl_correct[n] += r.ssl_correct[n];
    }
    correct += r.class_correct;
    seen += len;
    ++m.steps;
    if (callback) callback(epoch, static_cast<int>(step), r);
  }
  const double total = static_cast<double>(seen);
  m.l_c /= total;
  m.l_tot /= total;
  for (int n = 0; n < t; ++n) {
    m.gated_losses[n] /= total;
    m.mean_gate[n] /= total;
    m.ssl_accuracy[n] = ssl_correct[n] / total;
  }
  m.train_accuracy = correct / total;
  return m;
}

double Trainer::evaluate(const data::Dataset& dataset) {
  if (dataset.size() == 0) throw DataError("cannot evaluate on an empty dataset");
  const std::size_t bs = static_cast<std::size_t>(config_.eval_batch_size);
  int correct = 0;
  for (std::size_t start = 0; start < dataset.size(); start += bs) {
    const std::size_t len = std::min(bs, dataset.size() - start);
    std::vector<data::LabeledExample> ex;
    std::vector<int> labels;
    for (std::size_t i = start; i < start + len; ++i) {
      ex.push_back(dataset.example(i));
      labels.push_back(ex.back().class_label);
    }
    auto out = model_.forward(prepare_images(stack_images(ex)), nn::Mode::Eval);
    correct += count_correct(out.class_logits, labels);
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

std::vector<double> Trainer::evaluate_ssl(const data::Dataset& dataset, std::uint64_t stream) {
  if (dataset.size() == 0) throw DataError("cannot evaluate on an empty dataset");
  const int t = model_.num_tasks();
  const std::size_t bs = static_cast<std::size_t>(config_.eval_batch_size);
  std::vector<int> correct(t, 0);
  for (std::size_t start = 0, k = 0; start < dataset.size(); start += bs, ++k) {
    const std::size_t len = std::min(bs, dataset.size() - start);
    std::vector<data::LabeledExample> ex;
    for (std::size_t i = start; i < start + len; ++i) ex.push_back(dataset.example(i));
    Rng rng(derive_seed(config_.seed, stream, k));
    auto batch = build_batch(ex, config_.tasks, rng);
    auto out = model_.forward(prepare_images(std::move(batch.images)), nn::Mode::Eval);
    for (int n = 0; n < t; ++n) correct[n] += count_correct(out.ssl_logits[n], batch.ssl_targets[n]);
  }
  std::vector<double> acc(t);
  for (int n = 0; n < t; ++n) acc[n] = static_cast<double>(correct[n]) / static_cast<double>(dataset.size());
  return acc;
}

void Trainer::save_checkpoint(const fs::path& path, int epoch) {
  ckpt::Archive a;
  json tasks = json::array();
  for (auto t : config_.tasks) tasks.push_back(std::string(transforms::task_name(t)));
  a.manifest = {{"backbone", std::string(nn::backbone_name(config_.backbone))},
                {"num_classes", model_.num_classes()},
                {"tasks", tasks},
                {"seed", config_.seed},
                {"epoch", epoch}};
  a.tensors = model_.state();
  for (const auto& [name, v] : optimizer_.state()) a.tensors.emplace(kMomentumPrefix + name, v);
  ckpt::write_archive(path, a);
}

int Trainer::load_checkpoint(const fs::path& path) {
  auto a = ckpt::read_archive(path);
  const auto& m = a.manifest;
  json tasks = json::array();
  for (auto t : config_.tasks) tasks.push_back(std::string(transforms::task_name(t)));
  if (m.value("backbone", "") != nn::backbone_name(config_.backbone) ||
      m.value("num_classes", -1) != model_.num_classes() || m.value("tasks", json::array()) != tasks) {
    throw ConfigError("checkpoint " + path.string() + " does not match the configured model");
  }
  std::map<std::string, Tensor> model_state, momentum;
  const std::string prefix = kMomentumPrefix;
  for (auto& [name, v] : a.tensors) {
    if (name.rfind(prefix, 0) == 0) momentum.emplace(name.substr(prefix.size()), std::move(v));
    else model_state.emplace(name, std::move(v));
  }
  model_.load_state(model_state);
  optimizer_.load_state(std::move(momentum));
  return m.at("epoch").get<int>();
}

// ---------------------------------------------------------------------------

namespace {

fs::path resolve_root(const TrainConfig& c) {
  if (!c.data_root.empty()) return c.data_root;
  if (const char* env = std::getenv("DATA_ROOT"); env && *env) return env;
  throw ConfigError("no data root: pass --data-root or set DATA_ROOT");
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + p.string());
  f << text;
  if (!f) throw DataError("write failed for " + p.string());
}

}  // namespace

TrainingData load_training_data(const TrainConfig& c) {
  auto name = data::parse_dataset_name(c.dataset);
  if (!name) throw ConfigError("unknown dataset '" + c.dataset + "'");
  data::DatasetSplits splits;
  switch (*name) {
    case data::DatasetName::Cifar10: splits = data::load_cifar10(resolve_root(c)); break;
    case data::DatasetName::Cifar100: splits = data::load_cifar100(resolve_root(c)); break;
    case data::DatasetName::TinyImageNet: splits = data::load_tiny_imagenet(resolve_root(c)); break;
    case data::DatasetName::Synthetic:
      splits = data::synthetic_dataset(c.synthetic.classes, c.synthetic.per_class, c.synthetic.side, c.seed);
      break;
  }
  TrainingData out;
  if (!c.subsample_file.empty()) {
    auto [header, indices] = data::read_subsample_file(c.subsample_file);
    if (header.dataset != c.dataset) {
      throw ConfigError("subsample file is for '" + header.dataset + "', not '" + c.dataset + "'");
    }
    for (auto i : indices) {
      if (i >= splits.train.size()) throw DataError("subsample index " + std::to_string(i) + " out of range");
    }
    out.subsample = std::move(indices);
  } else if (c.imbalance_ratio) {
    const int k = splits.train.num_classes();
    auto counts = data::per_class_counts(splits.train.labels(), k);
    const int n_max = *std::min_element(counts.begin(), counts.end());
    auto profile = data::exponential_profile(k, n_max, *c.imbalance_ratio);
    out.subsample = data::subsample_indices(splits.train.labels(), profile, c.seed);
  }
  out.train = out.subsample.empty() ? std::move(splits.train) : splits.train.subset(out.subsample);
  out.test = std::move(splits.test);
  return out;
}

std::optional<std::pair<int, fs::path>> latest_checkpoint(const fs::path& run_dir) {
  const fs::path dir = run_dir / "checkpoints";
  if (!fs::is_directory(dir)) return std::nullopt;
  static const std::regex pattern(R"(epoch_(\d+)\.ckpt)");
  std::optional<std::pair<int, fs::path>> best;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (!std::regex_match(name, m, pattern)) continue;
    const int e = std::stoi(m[1].str());
    if (!best || e > best->first) best = std::make_pair(e, entry.path());
  }
  return best;
}

RunResult run(TrainConfig config, const RunOptions& options) {
  if (options.out_dir.empty()) throw ConfigError("an output directory is required");
  const fs::path out = options.out_dir;
  const fs::path config_path = out / "config.json";
  const fs::path metrics_path = out / "metrics.jsonl";

  std::optional<std::pair<int, fs::path>> resume_from;
  if (options.resume) {
    if (!fs::exists(config_path)) throw ConfigError("cannot resume: " + config_path.string() + " not found");
    std::ifstream f(config_path);
    json j;
    try {
      j = json::parse(f);
    } catch (const json::exception& e) {
      throw FormatError(config_path.string() + ": " + e.what());
    }
    config = config_from_json(j);
    resume_from = latest_checkpoint(out);
    if (!resume_from) throw ConfigError("cannot resume: no checkpoint under " + (out / "checkpoints").string());
  }
  validate(config);

  auto data = load_training_data(config);
  fs::create_directories(out / "checkpoints");
  if (!data.subsample.empty() && config.subsample_file.empty()) {
    data::SubsampleHeader h{config.dataset, config.imbalance_ratio.value_or(1.0), config.seed,
                            data::per_class_counts(data.train.labels(), data.train.num_classes())};
    write_subsample_file(out / "subsample.txt", h, data.subsample);
  }

  Trainer trainer(config, std::move(data.train), std::move(data.test));
  const auto& frozen = trainer.config();
  if (!resume_from) write_text(config_path, to_json(frozen).dump(2) + "\n");

  int start_epoch = 0;
  std::vector<std::string> kept;
  if (resume_from) {
    const int done = trainer.load_checkpoint(resume_from->second);
    start_epoch = done + 1;
    std::ifstream f(metrics_path);
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.contains("epoch")) continue;
      if (j["epoch"].get<int>() <= done) kept.push_back(line);
    }
  }
  {
    std::ostringstream s;
    for (const auto& l : kept) s << l << "\n";
    write_text(metrics_path, s.str());
  }

  RunResult result;
  result.out_dir = out;
  result.epochs_completed = start_epoch;
  std::ofstream metrics(metrics_path, std::ios::app);
  for (int epoch = start_epoch; epoch < frozen.epochs; ++epoch) {
    auto m = trainer.train_epoch(epoch, options.on_step);
    m.test_accuracy = trainer.evaluate_test();
    metrics << to_json(m, frozen.tasks).dump() << "\n";
    metrics.flush();
    result.epochs_completed = epoch + 1;
    result.final_test_accuracy = m.test_accuracy;
    if (options.on_epoch) options.on_epoch(m);
    const bool last = epoch + 1 == frozen.epochs;
    const bool stopping = options.stop_after_epoch && epoch >= *options.stop_after_epoch;
    if (last || stopping || (epoch + 1) % frozen.checkpoint_every == 0) {
      trainer.save_checkpoint(out / "checkpoints" / ("epoch_" + std::to_string(epoch) + ".ckpt"), epoch);
    }
    if (stopping && !last) return result;
  }
  metrics.close();
  if (auto summary = report::summarize_run(out)) {
    write_text(out / "report.md", report::to_markdown(report::build_table({*summary})));
  }
  return result;
}

}  // namespace gssl::train
