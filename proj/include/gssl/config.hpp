// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gssl/backbones.hpp"
#include "gssl/datasets.hpp"
#include "gssl/transforms.hpp"

namespace gssl::train {

struct LrSchedule {
  double initial = 0.1;
  std::vector<std::pair<int, double>> milestones;  // (epoch, multiplicative factor)
};

/// initial * product of factors whose milestone <= epoch.
double lr_at(int epoch, const LrSchedule& schedule);

/// 0.1, dropped by 0.01 at epochs 160 and 180.
LrSchedule cifar_schedule();
/// 0.1, decayed by 0.1 every 75 epochs below `epochs`.
LrSchedule tiny_imagenet_schedule(int epochs = 300);

struct SyntheticSpec {
  int classes = 4;
  int per_class = 64;
  int side = 8;
};

struct TrainConfig {
  std::string dataset = "cifar10";
  std::string data_root;
  std::optional<double> imbalance_ratio;
  std::string subsample_file;
  SyntheticSpec synthetic;

  std::vector<transforms::TaskKind> tasks{transforms::TaskKind::LorotE, transforms::TaskKind::QuadFlip,
                                          transforms::TaskKind::ChannelShuffle};
  double lambda = 0.1;
  int epochs = 300;
  int batch_size = 128;
  int eval_batch_size = 256;
  LrSchedule lr = cifar_schedule();
  double momentum = 0.9;
  double weight_decay = 2e-4;
  std::optional<int> drw_epoch = 160;
  double max_margin = 0.5;
  double logit_scale = 30.0;
  double drw_beta = 0.9999;
  std::uint64_t seed = 0;
  nn::BackboneKind backbone = nn::BackboneKind::ResNet32Cifar;

  /// Stop the gate's gradient at the pooled features.
  bool detach_gate_input = false;
  /// When false the pretext and gate losses are computed and logged but
  /// contribute no gradient.
  bool ssl_in_loss = true;
  bool normalize = true;
  std::optional<data::ChannelStats> channel_stats;
  int checkpoint_every = 10;
};

/// Dataset-specific defaults (schedule, batch size, backbone, DRW epoch).
TrainConfig default_config(data::DatasetName dataset);

/// Throws ConfigError describing the first violated constraint.
void validate(const TrainConfig& config);

nlohmann::json to_json(const TrainConfig& config);
/// Keys absent from `j` keep the values of `base`; unknown keys throw.
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base);
/// Picks dataset defaults from j["dataset"] and overlays the rest.
TrainConfig config_from_json(const nlohmann::json& j);

/// Parses "lorot_e,shuffle"; unknown names throw ConfigError listing valid ones.
std::vector<transforms::TaskKind> parse_task_list(const std::string& csv);

/// "+LoRot-E" for one task, "+MoE(LoRot-E+Flip)" for several.
std::string method_label(const std::vector<transforms::TaskKind>& tasks);

}  // namespace gssl::train
