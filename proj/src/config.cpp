// SPDX-License-Identifier: Apache-2.0
#include "gssl/config.hpp"

#include <set>
#include <sstream>

#include "gssl/errors.hpp"

namespace gssl::train {

using json = nlohmann::json;

double lr_at(int epoch, const LrSchedule& schedule) {
  double lr = schedule.initial;
  for (const auto& [at, factor] : schedule.milestones) {
    if (at <= epoch) lr *= factor;
  }
  return lr;
}

LrSchedule cifar_schedule() { return {0.1, {{160, 0.01}, {180, 0.01}}}; }

LrSchedule tiny_imagenet_schedule(int epochs) {
  LrSchedule s{0.1, {}};
  for (int e = 75; e < epochs; e += 75) s.milestones.emplace_back(e, 0.1);
  return s;
}

TrainConfig default_config(data::DatasetName dataset) {
  TrainConfig c;
  c.dataset = std::string(data::dataset_name(dataset));
  switch (dataset) {
    case data::DatasetName::Cifar10:
    case data::DatasetName::Cifar100:
      break;
    case data::DatasetName::TinyImageNet:
      c.batch_size = 256;
      c.backbone = nn::BackboneKind::ResNet18;
      c.lr = tiny_imagenet_schedule(300);
      c.drw_epoch.reset();
      break;
    case data::DatasetName::Synthetic:
      c.backbone = nn::BackboneKind::TinyCnn;
      c.batch_size = 32;
      c.epochs = 25;
      c.lr = {0.05, {}};
      c.drw_epoch.reset();
      c.checkpoint_every = 5;
      break;
  }
  return c;
}

void validate(const TrainConfig& c) {
  if (!data::parse_dataset_name(c.dataset)) throw ConfigError("unknown dataset '" + c.dataset + "'");
  if (c.imbalance_ratio && !(*c.imbalance_ratio > 0.0 && *c.imbalance_ratio <= 1.0))
    throw ConfigError("imbalance ratio must lie in (0,1]");
  if (c.tasks.empty()) throw ConfigError("at least one pretext task is required");
  std::set<transforms::TaskKind> seen(c.tasks.begin(), c.tasks.end());
  if (seen.size() != c.tasks.size()) throw ConfigError("pretext tasks must not repeat");
  if (!(c.lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (c.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (c.eval_batch_size < 1) throw ConfigError("eval_batch_size must be >= 1");
  if (!(c.lr.initial > 0.0)) throw ConfigError("initial learning rate must be positive");
  int prev = -1;
  for (const auto& [at, factor] : c.lr.milestones) {
    if (at <= prev) throw ConfigError("lr milestones must be strictly increasing");
    if (at < 0 || at >= c.epochs) throw ConfigError("lr milestone " + std::to_string(at) + " outside [0, epochs)");
    if (!(factor > 0.0 && factor <= 1.0)) throw ConfigError("lr factors must lie in (0,1]");
    prev = at;
  }
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) throw ConfigError("momentum must lie in [0,1)");
  if (!(c.weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (c.drw_epoch && *c.drw_epoch < 0) throw ConfigError("drw_epoch must be >= 0");
  if (!(c.max_margin > 0.0)) throw ConfigError("max_margin must be positive");
  if (!(c.logit_scale > 0.0)) throw ConfigError("logit_scale must be positive");
  if (!(c.drw_beta > 0.0 && c.drw_beta < 1.0)) throw ConfigError("drw_beta must lie in (0,1)");
  if (c.checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
  if (c.synthetic.classes < 2 || c.synthetic.per_class < 1 || c.synthetic.side < 2 || c.synthetic.side % 2)
    throw ConfigError("invalid synthetic dataset spec");
}

json to_json(const TrainConfig& c) {
  json tasks = json::array();
  for (auto t : c.tasks) tasks.push_back(std::string(transforms::task_name(t)));
  json milestones = json::array();
  for (const auto& [at, f] : c.lr.milestones) milestones.push_back({at, f});
  json j = {
      {"dataset", c.dataset},
      {"data_root", c.data_root},
      {"imbalance_ratio", c.imbalance_ratio ? json(*c.imbalance_ratio) : json(nullptr)},
      {"subsample_file", c.subsample_file},
      {"synthetic", {{"classes", c.synthetic.classes}, {"per_class", c.synthetic.per_class}, {"side", c.synthetic.side}}},
      {"tasks", tasks},
      {"lambda", c.lambda},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"eval_batch_size", c.eval_batch_size},
      {"lr", {{"initial", c.lr.initial}, {"milestones", milestones}}},
      {"momentum", c.momentum},
      {"weight_decay", c.weight_decay},
      {"drw_epoch", c.drw_epoch ? json(*c.drw_epoch) : json(nullptr)},
      {"max_margin", c.max_margin},
      {"logit_scale", c.logit_scale},
      {"drw_beta", c.drw_beta},
      {"seed", c.seed},
      {"backbone", std::string(nn::backbone_name(c.backbone))},
      {"detach_gate_input", c.detach_gate_input},
      {"ssl_in_loss", c.ssl_in_loss},
      {"normalize", c.normalize},
      {"checkpoint_every", c.checkpoint_every},
  };
  if (c.channel_stats) {
    j["channel_stats"] = {{"mean", c.channel_stats->mean}, {"std", c.channel_stats->stddev}};
  } else {
    j["channel_stats"] = nullptr;
  }
  return j;
}

TrainConfig config_from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known = {
      "dataset", "data_root", "imbalance_ratio", "subsample_file", "synthetic", "tasks", "lambda", "epochs",
      "batch_size", "eval_batch_size", "lr", "momentum", "weight_decay", "drw_epoch", "max_margin", "logit_scale",
      "drw_beta", "seed", "backbone", "detach_gate_input", "ssl_in_loss", "normalize", "channel_stats",
      "checkpoint_every"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  try {
    if (j.contains("dataset")) c.dataset = j["dataset"].get<std::string>();
    if (j.contains("data_root")) c.data_root = j["data_root"].get<std::string>();
    if (j.contains("imbalance_ratio")) {
      if (j["imbalance_ratio"].is_null()) c.imbalance_ratio.reset();
      else c.imbalance_ratio = j["imbalance_ratio"].get<double>();
    }
    if (j.contains("subsample_file")) c.subsample_file = j["subsample_file"].get<std::string>();
    if (j.contains("synthetic")) {
      const auto& s = j["synthetic"];
      c.synthetic.classes = s.value("classes", c.synthetic.classes);
      c.synthetic.per_class = s.value("per_class", c.synthetic.per_class);
      c.synthetic.side = s.value("side", c.synthetic.side);
    }
    if (j.contains("tasks")) {
      c.tasks.clear();
      for (const auto& t : j["tasks"]) {
        auto k = transforms::parse_task(t.get<std::string>());
        if (!k) throw ConfigError("unknown task '" + t.get<std::string>() + "' (valid: lorot_e, flip, shuffle)");
        c.tasks.push_back(*k);
      }
    }
    if (j.contains("lambda")) c.lambda = j["lambda"].get<double>();
    if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
    if (j.contains("eval_batch_size")) c.eval_batch_size = j["eval_batch_size"].get<int>();
    if (j.contains("lr")) {
      const auto& l = j["lr"];
      if (l.is_number()) {
        c.lr.initial = l.get<double>();
      } else {
        c.lr.initial = l.value("initial", c.lr.initial);
        if (l.contains("milestones")) {
          c.lr.milestones.clear();
          for (const auto& m : l["milestones"]) c.lr.milestones.emplace_back(m.at(0).get<int>(), m.at(1).get<double>());
        }
      }
    }
    if (j.contains("momentum")) c.momentum = j["momentum"].get<double>();
    if (j.contains("weight_decay")) c.weight_decay = j["weight_decay"].get<double>();
    if (j.contains("drw_epoch")) {
      if (j["drw_epoch"].is_null()) c.drw_epoch.reset();
      else c.drw_epoch = j["drw_epoch"].get<int>();
    }
    if (j.contains("max_margin")) c.max_margin = j["max_margin"].get<double>();
    if (j.contains("logit_scale")) c.logit_scale = j["logit_scale"].get<double>();
    if (j.contains("drw_beta")) c.drw_beta = j["drw_beta"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("backbone")) {
      auto b = nn::parse_backbone(j["backbone"].get<std::string>());
      if (!b) throw ConfigError("unknown backbone '" + j["backbone"].get<std::string>() +
                                "' (valid: resnet32-cifar, resnet18, tinycnn)");
      c.backbone = *b;
    }
    if (j.contains("detach_gate_input")) c.detach_gate_input = j["detach_gate_input"].get<bool>();
    if (j.contains("ssl_in_loss")) c.ssl_in_loss = j["ssl_in_loss"].get<bool>();
    if (j.contains("normalize")) c.normalize = j["normalize"].get<bool>();
    if (j.contains("checkpoint_every")) c.checkpoint_every = j["checkpoint_every"].get<int>();
    if (j.contains("channel_stats")) {
      if (j["channel_stats"].is_null()) {
        c.channel_stats.reset();
      } else {
        data::ChannelStats s;
        s.mean = j["channel_stats"].at("mean").get<std::array<double, 3>>();
        s.stddev = j["channel_stats"].at("std").get<std::array<double, 3>>();
        c.channel_stats = s;
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return c;
}

TrainConfig config_from_json(const json& j) {
  std::string name = "cifar10";
  if (j.is_object() && j.contains("dataset") && j["dataset"].is_string()) name = j["dataset"].get<std::string>();
  auto d = data::parse_dataset_name(name);
  if (!d) throw ConfigError("unknown dataset '" + name + "' (valid: cifar10, cifar100, tiny-imagenet, synthetic)");
  return config_from_json(j, default_config(*d));
}

std::vector<transforms::TaskKind> parse_task_list(const std::string& csv) {
  std::vector<transforms::TaskKind> tasks;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    auto t = transforms::parse_task(item);
    if (!t) throw ConfigError("unknown task '" + item + "' (valid: lorot_e, flip, shuffle)");
    tasks.push_back(*t);
  }
  if (tasks.empty()) throw ConfigError("empty task list (valid: lorot_e, flip, shuffle)");
  return tasks;
}

std::string method_label(const std::vector<transforms::TaskKind>& tasks) {
  if (tasks.size() == 1) return "+" + std::string(transforms::task_display_name(tasks.front()));
  auto sorted = tasks;
  std::sort(sorted.begin(), sorted.end());
  std::string s = "+MoE(";
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i) s += "+";
    s += transforms::task_display_name(sorted[i]);
  }
  return s + ")";
}

}  // namespace gssl::train
