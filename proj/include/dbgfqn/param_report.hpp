#pragma once

// Parameter accounting: exact counts for the networks this library allocates,
// plus a reference calculator for the published ablation study's counting
// conventions (embedding tables for discrete observations, a two-layer head,
// a final layer norm, and per-layer causal-mask buffers included in the
// state-dict totals). The reference model is documented in the README.

#include "dbgfqn/model.hpp"

#include <string>
#include <vector>

namespace dbgfqn {

// One environment row of the reference study.
struct ReferenceEnvSpec {
  std::string name;
  int embed_dim = 64;
  bool discrete = false;
  int obs_dim = 0;   // continuous: vector width; discrete: number of symbols per obs
  int vocab = 0;     // discrete only: per-symbol vocabulary size
  int action_count = 0;
  int context_length = 50;
  int layers = 2;
  int heads = 8;
};

// Variant keys: dtqn1, dtqn2, dtqn3, drfqn, dlfqn, dgfqn, dbrfqn, dblfqn, dbgfqn.
ParameterCountReport reference_parameter_count(const ReferenceEnvSpec& env, const std::string& variant);

std::vector<ReferenceEnvSpec> reference_env_rows();  // carflag, hallway, heavenhell, gridverse, memory_cards
std::vector<std::string> reference_variant_keys();

// CSV sweep: one line per (env, variant, submodule) plus totals and the
// bigru-vs-4x-ffn reduction percentage per env row. When `cfg` is given the
// allocated QNetwork counts for that config are appended for comparison.
std::string report_parameters_csv(const EncoderConfig* cfg = nullptr);

}  // namespace dbgfqn
