#pragma once

// JSON round-trips for the config structs; keys match the field names.

#include "dbgfqn/harness.hpp"

#include <string>

namespace dbgfqn {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string encoder_config_to_json(const EncoderConfig& cfg);
EncoderConfig encoder_config_from_json(const std::string& text);

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

std::string experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const std::string& text);

ExperimentConfig load_experiment_config(const std::string& path);
void save_experiment_config(const ExperimentConfig& cfg, const std::string& path);

}  // namespace dbgfqn
