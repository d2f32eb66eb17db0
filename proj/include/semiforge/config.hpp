#pragma once

#include <string>

#include "semiforge/trainer.hpp"

namespace semiforge {

// Line-based `key = value` config with `#` comments. Unknown keys are hard
// errors. Every TrainConfig/SemiHyper/AugmentConfig field is addressable.
TrainConfig parse_config_text(const std::string& text, const TrainConfig& base = TrainConfig{});
TrainConfig load_config(const std::string& path, const TrainConfig& base = TrainConfig{});

// Full dump in the same format; parse(dump(cfg)) == cfg.
std::string dump_config(const TrainConfig& cfg);

}  // namespace semiforge
