#include "dbgfqn/config_io.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

namespace dbgfqn {

using nlohmann::json;

namespace {

std::string variant_key(SublayerVariant v) {
  switch (v) {
    case SublayerVariant::Ffn: return "FFN";
    case SublayerVariant::Rnn: return "RNN";
    case SublayerVariant::Lstm: return "LSTM";
    case SublayerVariant::Gru: return "GRU";
    case SublayerVariant::BiRnn: return "BiRNN";
    case SublayerVariant::BiLstm: return "BiLSTM";
    case SublayerVariant::BiGru: return "BiGRU";
  }
  throw ConfigError("unencodable sublayer variant");
}

SublayerVariant variant_from_key(const std::string& s) {
  if (s == "FFN") return SublayerVariant::Ffn;
  if (s == "RNN") return SublayerVariant::Rnn;
  if (s == "LSTM") return SublayerVariant::Lstm;
  if (s == "GRU") return SublayerVariant::Gru;
  if (s == "BiRNN") return SublayerVariant::BiRnn;
  if (s == "BiLSTM") return SublayerVariant::BiLstm;
  if (s == "BiGRU") return SublayerVariant::BiGru;
  throw ConfigError("unknown sublayer_variant: " + s);
}

json encoder_to_json(const EncoderConfig& c) {
  return json{{"embed_dim", c.embed_dim},
              {"heads", c.heads},
              {"encoder_layers", c.encoder_layers},
              {"context_length", c.context_length},
              {"sublayer_variant", variant_key(c.sublayer_variant)},
              {"ffn", json{{"stages", c.ffn.stages}, {"hidden_mult", c.ffn.hidden_mult}}},
              {"recurrent_hidden", c.recurrent_hidden},
              {"obs_width", c.obs_width},
              {"action_count", c.action_count}};
}

EncoderConfig encoder_from_json(const json& j) {
  EncoderConfig c;
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.heads = j.value("heads", c.heads);
  c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
  c.context_length = j.value("context_length", c.context_length);
  if (j.contains("sublayer_variant")) c.sublayer_variant = variant_from_key(j.at("sublayer_variant"));
  if (j.contains("ffn")) {
    c.ffn.stages = j.at("ffn").value("stages", c.ffn.stages);
    c.ffn.hidden_mult = j.at("ffn").value("hidden_mult", c.ffn.hidden_mult);
  }
  c.recurrent_hidden = j.value("recurrent_hidden", c.recurrent_hidden);
  c.obs_width = j.value("obs_width", c.obs_width);
  c.action_count = j.value("action_count", c.action_count);
  return c;
}

json train_to_json(const TrainConfig& c) {
  return json{{"total_steps", c.total_steps},
              {"target_sync_period", c.target_sync_period},
              {"lr", c.lr},
              {"batch_size", c.batch_size},
              {"gamma", c.gamma},
              {"epsilon_start", c.epsilon_start},
              {"epsilon_final", c.epsilon_final},
              {"epsilon_fraction", c.epsilon_fraction},
              {"warmup_steps", c.warmup_steps},
              {"buffer_capacity", c.buffer_capacity},
              {"grad_clip", c.grad_clip},
              {"huber_loss", c.huber_loss},
              {"seed", c.seed}};
}

TrainConfig train_from_json(const json& j) {
  TrainConfig c;
  c.total_steps = j.value("total_steps", c.total_steps);
  c.target_sync_period = j.value("target_sync_period", c.target_sync_period);
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.gamma = j.value("gamma", c.gamma);
  c.epsilon_start = j.value("epsilon_start", c.epsilon_start);
  c.epsilon_final = j.value("epsilon_final", c.epsilon_final);
  c.epsilon_fraction = j.value("epsilon_fraction", c.epsilon_fraction);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.buffer_capacity = j.value("buffer_capacity", c.buffer_capacity);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.huber_loss = j.value("huber_loss", c.huber_loss);
  c.seed = j.value("seed", c.seed);
  return c;
}

json experiment_to_json(const ExperimentConfig& c) {
  return json{{"env_name", c.env_name},
              {"encoder", encoder_to_json(c.encoder)},
              {"train", train_to_json(c.train)},
              {"seeds", c.seeds},
              {"out_dir", c.out_dir},
              {"checkpoint_period", c.checkpoint_period},
              {"metrics_flush_period", c.metrics_flush_period},
              {"early_stop_success", c.early_stop_success},
              {"success_window", c.success_window},
              {"deterministic", c.deterministic}};
}

ExperimentConfig experiment_from_json(const json& j) {
  ExperimentConfig c;
  c.env_name = j.value("env_name", c.env_name);
  if (j.contains("encoder")) c.encoder = encoder_from_json(j.at("encoder"));
  if (j.contains("train")) c.train = train_from_json(j.at("train"));
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<uint64_t>>();
  c.out_dir = j.value("out_dir", c.out_dir);
  c.checkpoint_period = j.value("checkpoint_period", c.checkpoint_period);
  c.metrics_flush_period = j.value("metrics_flush_period", c.metrics_flush_period);
  c.early_stop_success = j.value("early_stop_success", c.early_stop_success);
  c.success_window = j.value("success_window", c.success_window);
  c.deterministic = j.value("deterministic", c.deterministic);
  return c;
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
}

}  // namespace

std::string encoder_config_to_json(const EncoderConfig& cfg) { return encoder_to_json(cfg).dump(2); }
EncoderConfig encoder_config_from_json(const std::string& text) { return encoder_from_json(parse(text)); }

std::string train_config_to_json(const TrainConfig& cfg) { return train_to_json(cfg).dump(2); }
TrainConfig train_config_from_json(const std::string& text) { return train_from_json(parse(text)); }

std::string experiment_config_to_json(const ExperimentConfig& cfg) { return experiment_to_json(cfg).dump(2); }
ExperimentConfig experiment_config_from_json(const std::string& text) {
  return experiment_from_json(parse(text));
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return experiment_config_from_json(buf.str());
}

void save_experiment_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ConfigError("cannot write config file: " + path);
  f << experiment_config_to_json(cfg) << "\n";
}

}  // namespace dbgfqn
