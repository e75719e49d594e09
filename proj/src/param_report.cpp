#include "dbgfqn/param_report.hpp"

#include <sstream>
#include <stdexcept>

namespace dbgfqn {

std::vector<ReferenceEnvSpec> reference_env_rows() {
  return {
      {"carflag", 64, false, 3, 0, 3},
      {"hallway", 64, true, 1, 23, 5},
      {"heavenhell", 64, true, 1, 17, 4},
      {"gridverse", 128, true, 6, 23, 6},
      {"memory_cards", 128, true, 10, 9, 10},
  };
}

std::vector<std::string> reference_variant_keys() {
  return {"dtqn1", "dtqn2", "dtqn3", "drfqn", "dlfqn", "dgfqn", "dbrfqn", "dblfqn", "dbgfqn"};
}

namespace {

struct VariantShape {
  bool ffn = false;
  int ffn_mult = 0;   // hidden width multiplier for FFN variants
  int gates = 0;      // recurrent gate count
  bool bidirectional = false;
};

VariantShape variant_shape(const std::string& v) {
  if (v == "dtqn1") return {true, 1, 0, false};
  if (v == "dtqn2") return {true, 2, 0, false};
  if (v == "dtqn3") return {true, 3, 0, false};
  if (v == "dtqn4") return {true, 4, 0, false};
  if (v == "drfqn") return {false, 0, 1, false};
  if (v == "dlfqn") return {false, 0, 4, false};
  if (v == "dgfqn") return {false, 0, 3, false};
  if (v == "dbrfqn") return {false, 0, 1, true};
  if (v == "dblfqn") return {false, 0, 4, true};
  if (v == "dbgfqn") return {false, 0, 3, true};
  throw std::invalid_argument("unknown variant key: " + v);
}

}  // namespace

ParameterCountReport reference_parameter_count(const ReferenceEnvSpec& env, const std::string& variant) {
  const VariantShape vs = variant_shape(variant);
  const long D = env.embed_dim, K = env.context_length, L = env.layers, A = env.action_count;
  ParameterCountReport rep;

  // Discrete observations go through an 8-wide per-symbol embedding table,
  // then a linear map to D; continuous ones are mapped directly.
  if (env.discrete) {
    constexpr long kSymbolDim = 8;
    rep.add("embed.table", kSymbolDim * env.vocab);
    rep.add("embed.linear", kSymbolDim * env.obs_dim * D + D);
  } else {
    rep.add("embed.linear", static_cast<long>(env.obs_dim) * D + D);
  }
  rep.add("pos", K * D);

  long sublayer;
  if (vs.ffn) {
    const long Hd = vs.ffn_mult * D;
    sublayer = (D * Hd + Hd) + (Hd * D + D);
  } else {
    const long H = vs.bidirectional ? D / 2 : D;
    const long per_dir = vs.gates * (H * (D + H) + 2 * H);
    sublayer = vs.bidirectional ? 2 * per_dir : per_dir;
  }
  for (long l = 0; l < L; ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    rep.add(p + "attn", 4 * D * D + 4 * D);
    rep.add(p + "layer_norms", 4 * D);
    rep.add(p + "sublayer", sublayer);
    rep.add(p + "causal_mask_buffer", K * K);  // non-learnable, counted in state-dict totals
  }
  rep.add("final_layer_norm", 2 * D);
  rep.add("head", D * D + D + D * A + A);  // linear D->D, ReLU, linear D->A
  return rep;
}

std::string report_parameters_csv(const EncoderConfig* cfg) {
  std::ostringstream os;
  os << "env,variant,submodule,count\n";
  for (const auto& env : reference_env_rows()) {
    long bigru_total = 0, ffn4_total = 0;
    for (const auto& key : reference_variant_keys()) {
      const ParameterCountReport rep = reference_parameter_count(env, key);
      for (const auto& [name, n] : rep.items) os << env.name << "," << key << "," << name << "," << n << "\n";
      os << env.name << "," << key << ",total," << rep.total << "\n";
      if (key == "dbgfqn") bigru_total = rep.total;
    }
    ffn4_total = reference_parameter_count(env, "dtqn4").total;
    os << env.name << ",dbgfqn_vs_ffn4x,reduction_pct,"
       << 100.0 * (1.0 - static_cast<double>(bigru_total) / static_cast<double>(ffn4_total)) << "\n";
  }
  if (cfg) {
    QNetwork<float> net(*cfg);
    const ParameterCountReport rep = net.parameter_count();
    for (const auto& [name, n] : rep.items) os << "allocated,current," << name << "," << n << "\n";
    os << "allocated,current,total," << rep.total << "\n";
  }
  return os.str();
}

}  // namespace dbgfqn
