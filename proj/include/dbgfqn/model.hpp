#pragma once

// The DBGFQN encoder family: observation embedding + learned positional
// table, causal multi-head self-attention, a pluggable sublayer (feed-forward
// or uni/bi-directional RNN/LSTM/GRU), post-norm residual wiring, and a
// linear Q head. Per-timestep Q-values are produced for the whole context.

#include "dbgfqn/checkpoint.hpp"
#include "dbgfqn/rng.hpp"
#include "dbgfqn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace dbgfqn {

enum class SublayerVariant { Ffn, Rnn, Lstm, Gru, BiRnn, BiLstm, BiGru };

inline bool is_recurrent(SublayerVariant v) { return v != SublayerVariant::Ffn; }
inline bool is_bidirectional(SublayerVariant v) {
  return v == SublayerVariant::BiRnn || v == SublayerVariant::BiLstm || v == SublayerVariant::BiGru;
}
inline int gate_count(SublayerVariant v) {
  switch (v) {
    case SublayerVariant::Rnn:
    case SublayerVariant::BiRnn:
      return 1;
    case SublayerVariant::Gru:
    case SublayerVariant::BiGru:
      return 3;
    case SublayerVariant::Lstm:
    case SublayerVariant::BiLstm:
      return 4;
    default:
      return 0;
  }
}

inline std::string variant_name(SublayerVariant v) {
  switch (v) {
    case SublayerVariant::Ffn: return "FFN";
    case SublayerVariant::Rnn: return "RNN";
    case SublayerVariant::Lstm: return "LSTM";
    case SublayerVariant::Gru: return "GRU";
    case SublayerVariant::BiRnn: return "BiRNN";
    case SublayerVariant::BiLstm: return "BiLSTM";
    case SublayerVariant::BiGru: return "BiGRU";
  }
  return "?";
}

// Feed-forward sublayer shape. hidden_mult == 0 with stages == 1 selects a
// single D -> D linear; otherwise the network is
// D -> mD (ReLU) -> [mD -> mD (ReLU)] x (stages-1) -> D.
struct FfnSpec {
  int stages = 1;
  int hidden_mult = 4;
  bool operator==(const FfnSpec&) const = default;
};

struct EncoderConfig {
  int embed_dim = 64;
  int heads = 8;
  int encoder_layers = 2;
  int context_length = 50;
  SublayerVariant sublayer_variant = SublayerVariant::BiGru;
  FfnSpec ffn;
  int recurrent_hidden = 32;
  int obs_width = 0;
  int action_count = 0;

  bool operator==(const EncoderConfig&) const = default;

  void validate() const {
    if (embed_dim <= 0 || heads <= 0 || encoder_layers <= 0 || context_length <= 0 || obs_width <= 0 ||
        action_count <= 0)
      throw DimensionError("encoder config has non-positive extents");
    if (embed_dim % heads != 0)
      throw DimensionError("embed_dim " + std::to_string(embed_dim) + " not divisible by heads " +
                           std::to_string(heads));
    if (is_recurrent(sublayer_variant)) {
      if (is_bidirectional(sublayer_variant)) {
        if (2 * recurrent_hidden != embed_dim)
          throw DimensionError("bidirectional sublayer requires 2*recurrent_hidden == embed_dim, got " +
                               std::to_string(recurrent_hidden) + " vs " + std::to_string(embed_dim));
      } else if (recurrent_hidden != embed_dim) {
        throw DimensionError("unidirectional sublayer requires recurrent_hidden == embed_dim, got " +
                             std::to_string(recurrent_hidden) + " vs " + std::to_string(embed_dim));
      }
    } else {
      if (ffn.stages < 1 || ffn.stages > 4 || ffn.hidden_mult < 0)
        throw DimensionError("ffn spec out of range");
      if (ffn.hidden_mult == 0 && ffn.stages != 1)
        throw DimensionError("plain linear ffn must have a single stage");
    }
  }
};

// Recurrent cell weights, PyTorch-style split into input-to-hidden and
// hidden-to-hidden parts with separate biases. For the GRU the candidate
// hidden weights (applied to r * h_prev) are held separately so the reset
// gate can act before the matmul.
template <typename T>
struct RecurrentCellWeights {
  Tensor<T> w_ih, b_ih;  // D x gH
  Tensor<T> w_hh, b_hh;  // H x gH (GRU: H x 2H for the r/z gates)
  Tensor<T> w_hn, b_hn;  // GRU candidate only: H x H
};

// r = sigmoid(W_r.[h,x] + b_r); z = sigmoid(W_z.[h,x] + b_z);
// n = tanh(W_h.[r*h, x] + b_h); h' = (1-z)*h + z*n.
// gate_x carries x.W_ih + b_ih for all gates (precomputable per sequence).
template <typename T>
Tensor<T> gru_cell_from_gates(Tensor<T> gate_x, Tensor<T> h_prev, const RecurrentCellWeights<T>& w) {
  const int batch = h_prev.dim(0), H = h_prev.dim(1);
  Tensor<T> rz_x = block(gate_x, 0, batch, 0, 2 * H);
  Tensor<T> n_x = block(std::move(gate_x), 0, batch, 2 * H, H);
  Tensor<T> rz = sigmoid(add(std::move(rz_x), add_bias(matmul(h_prev, w.w_hh), w.b_hh)));
  Tensor<T> r = block(rz, 0, batch, 0, H);
  Tensor<T> z = block(std::move(rz), 0, batch, H, H);
  Tensor<T> n = tanh_op(add(std::move(n_x), add_bias(matmul(mul(std::move(r), h_prev), w.w_hn), w.b_hn)));
  Tensor<T> ones = Tensor<T>::full({batch, H}, T(1));
  Tensor<T> keep = mul(sub(std::move(ones), z), std::move(h_prev));
  return add(std::move(keep), mul(std::move(z), std::move(n)));
}

template <typename T>
Tensor<T> gru_cell(Tensor<T> x_t, Tensor<T> h_prev, const RecurrentCellWeights<T>& w) {
  Tensor<T> gate_x = add_bias(matmul(std::move(x_t), w.w_ih), w.b_ih);
  return gru_cell_from_gates(std::move(gate_x), std::move(h_prev), w);
}

// Standard LSTM cell (input/forget/output gates + cell state), gate order i,f,g,o.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> lstm_cell_from_gates(Tensor<T> gate_x, Tensor<T> h_prev, Tensor<T> c_prev,
                                                     const RecurrentCellWeights<T>& w) {
  const int batch = h_prev.dim(0), H = h_prev.dim(1);
  Tensor<T> gates = add(std::move(gate_x), add_bias(matmul(std::move(h_prev), w.w_hh), w.b_hh));
  Tensor<T> i = sigmoid(block(gates, 0, batch, 0, H));
  Tensor<T> f = sigmoid(block(gates, 0, batch, H, H));
  Tensor<T> g = tanh_op(block(gates, 0, batch, 2 * H, H));
  Tensor<T> o = sigmoid(block(std::move(gates), 0, batch, 3 * H, H));
  Tensor<T> c = add(mul(std::move(f), std::move(c_prev)), mul(std::move(i), std::move(g)));
  Tensor<T> h = mul(std::move(o), tanh_op(c));
  return {std::move(h), std::move(c)};
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> lstm_cell(Tensor<T> x_t, Tensor<T> h_prev, Tensor<T> c_prev,
                                          const RecurrentCellWeights<T>& w) {
  Tensor<T> gate_x = add_bias(matmul(std::move(x_t), w.w_ih), w.b_ih);
  return lstm_cell_from_gates(std::move(gate_x), std::move(h_prev), std::move(c_prev), w);
}

// Vanilla tanh recurrence.
template <typename T>
Tensor<T> rnn_cell_from_gates(Tensor<T> gate_x, Tensor<T> h_prev, const RecurrentCellWeights<T>& w) {
  return tanh_op(add(std::move(gate_x), add_bias(matmul(std::move(h_prev), w.w_hh), w.b_hh)));
}

template <typename T>
Tensor<T> rnn_cell(Tensor<T> x_t, Tensor<T> h_prev, const RecurrentCellWeights<T>& w) {
  Tensor<T> gate_x = add_bias(matmul(std::move(x_t), w.w_ih), w.b_ih);
  return rnn_cell_from_gates(std::move(gate_x), std::move(h_prev), w);
}

struct ParameterCountReport {
  std::vector<std::pair<std::string, long>> items;
  long total = 0;
  void add(const std::string& name, long n) {
    items.emplace_back(name, n);
    total += n;
  }
};

template <typename T>
class QNetwork {
 public:
  explicit QNetwork(EncoderConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    allocate();
  }

  const EncoderConfig& config() const { return cfg_; }

  void init_params(Rng& rng) {
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (names_[i] == "pos") {
        for (auto& v : p.values()) v = static_cast<T>(rng.normal(0.0, 0.02));
      } else if (p.rank() == 2) {
        const T bound = T(1) / std::sqrt(static_cast<T>(p.dim(0)));
        for (auto& v : p.values()) v = static_cast<T>(rng.uniform(-bound, bound));
      } else {
        // layer-norm gains stay at 1; every other rank-1 tensor starts at 0
        const bool ln_gain = names_[i].size() > 2 && names_[i].ends_with(".g");
        std::fill(p.values().begin(), p.values().end(), ln_gain ? T(1) : T(0));
      }
    }
  }

  std::vector<Tensor<T>>& parameters() { return params_; }
  const std::vector<std::string>& parameter_names() const { return names_; }

  Tensor<T> parameter(const std::string& name) {
    for (size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return params_[i];
    throw DimensionError("unknown parameter: " + name);
  }

  void set_requires_grad(bool f) {
    for (auto& p : params_) p.set_requires_grad(f);
  }
  void zero_grads() {
    for (auto& p : params_) p.zero_grad();
  }

  // Hard parameter copy; shapes must agree.
  void copy_from(const QNetwork& other) {
    if (other.params_.size() != params_.size()) throw DimensionError("network config mismatch in copy_from");
    for (size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].shape() != other.params_[i].shape())
        throw DimensionError("parameter shape mismatch in copy_from: " + names_[i]);
      params_[i].values() = other.params_[i].values();
    }
  }

  // obs: (batch * K) x obs_width, sequences right-padded to K with zero rows.
  // Returns (batch * K) x action_count.
  Tensor<T> forward(Tensor<T> obs, int batch, const std::vector<int>& valid_len) {
    const int K = cfg_.context_length;
    if (obs.rank() != 2 || obs.dim(1) != cfg_.obs_width || obs.dim(0) != batch * K)
      throw DimensionError("forward obs shape " + shape_str(obs.shape()) + " does not match config");
    if (static_cast<int>(valid_len.size()) != batch) throw DimensionError("valid_len size mismatch");
    for (int v : valid_len)
      if (v < 1 || v > K) throw DimensionError("valid_len out of range");

    Tensor<T> x = embed_history(obs, batch);
    for (int l = 0; l < cfg_.encoder_layers; ++l) x = encoder_block(x, l, batch, valid_len);
    return matmul(x, head_w_);
  }

  // X = phi(O) + P_E, with the positional table tiled across the batch.
  Tensor<T> embed_history(Tensor<T> obs, int batch) {
    const int K = cfg_.context_length;
    Tensor<T> x = add_bias(matmul(std::move(obs), embed_w_), embed_b_);
    std::vector<int> tile(batch * K);
    for (int b = 0; b < batch; ++b)
      for (int t = 0; t < K; ++t) tile[b * K + t] = t;
    return add(std::move(x), gather_rows(pos_, std::move(tile)));
  }

  Tensor<T> encoder_block(Tensor<T> x, int layer, int batch, const std::vector<int>& valid_len) {
    const Block& blk = blocks_[layer];
    Tensor<T> q = add_bias(matmul(x, blk.wq), blk.bq);
    Tensor<T> k = add_bias(matmul(x, blk.wk), blk.bk);
    Tensor<T> v = add_bias(matmul(x, blk.wv), blk.bv);
    Tensor<T> attn = multihead_causal_attention(std::move(q), std::move(k), std::move(v), batch,
                                                cfg_.context_length, cfg_.heads);
    Tensor<T> a = add_bias(matmul(std::move(attn), blk.wh), blk.bh);
    Tensor<T> l1 = layer_norm(add(std::move(x), relu(std::move(a))), blk.ln1_g, blk.ln1_b, T(1e-5));
    Tensor<T> s = is_recurrent(cfg_.sublayer_variant) ? recurrent_sublayer(l1, layer, batch, valid_len)
                                                      : ffn_sublayer(l1, layer);
    return layer_norm(add(std::move(l1), relu(std::move(s))), blk.ln2_g, blk.ln2_b, T(1e-5));
  }

  Tensor<T> ffn_sublayer(Tensor<T> x, int layer) {
    const Block& blk = blocks_[layer];
    Tensor<T> h = std::move(x);
    for (size_t i = 0; i < blk.ffn_w.size(); ++i) {
      h = add_bias(matmul(std::move(h), blk.ffn_w[i]), blk.ffn_b[i]);
      if (i + 1 < blk.ffn_w.size()) h = relu(std::move(h));
    }
    return h;
  }

  // Runs the configured recurrent cell over the valid span of each sequence.
  // Forward pass starts from zero state at t=0; the backward pass of
  // bidirectional variants is anchored at the last valid position, so pad
  // rows never feed real positions. Pad outputs are zero.
  Tensor<T> recurrent_sublayer(Tensor<T> x, int layer, int batch, const std::vector<int>& valid_len) {
    Tensor<T> fwd = run_direction(x, blocks_[layer].rec_fwd, batch, valid_len, /*reverse=*/false);
    if (!is_bidirectional(cfg_.sublayer_variant)) return fwd;
    Tensor<T> bwd = run_direction(std::move(x), blocks_[layer].rec_bwd, batch, valid_len, /*reverse=*/true);
    return concat_cols(std::move(fwd), std::move(bwd));
  }

  ParameterCountReport parameter_count() const {
    ParameterCountReport rep;
    const long D = cfg_.embed_dim, K = cfg_.context_length, H = cfg_.recurrent_hidden;
    rep.add("embed", static_cast<long>(cfg_.obs_width) * D + D);
    rep.add("pos", K * D);
    for (int l = 0; l < cfg_.encoder_layers; ++l) {
      const std::string p = "block" + std::to_string(l) + ".";
      rep.add(p + "attn", 4 * D * D + 4 * D);
      rep.add(p + "layer_norms", 4 * D);
      if (is_recurrent(cfg_.sublayer_variant)) {
        const long g = gate_count(cfg_.sublayer_variant);
        const long per_dir = g * (H * (D + H) + 2 * H);
        rep.add(p + "sublayer", is_bidirectional(cfg_.sublayer_variant) ? 2 * per_dir : per_dir);
      } else {
        long n = 0;
        if (cfg_.ffn.hidden_mult == 0) {
          n = D * D + D;
        } else {
          const long Hd = static_cast<long>(cfg_.ffn.hidden_mult) * D;
          n = D * Hd + Hd;                            // in
          n += (cfg_.ffn.stages - 1) * (Hd * Hd + Hd);  // middle
          n += Hd * D + D;                            // out
        }
        rep.add(p + "sublayer", n);
      }
    }
    rep.add("head", D * static_cast<long>(cfg_.action_count));
    return rep;
  }

  // Cross-check: sum of actually allocated parameter tensors.
  long enumerate_parameters() const {
    long n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

  double parameter_checksum() const {
    double s = 0;
    for (const auto& p : params_)
      for (T v : p.values()) s += static_cast<double>(v);
    return s;
  }

  void save(Archive& a, const std::string& prefix = "") const {
    for (size_t i = 0; i < params_.size(); ++i) {
      std::vector<int64_t> shape(params_[i].shape().begin(), params_[i].shape().end());
      if constexpr (std::is_same_v<T, float>) {
        a.put_f32(prefix + names_[i], shape, params_[i].values().data(), params_[i].values().size());
      } else {
        a.put_f64(prefix + names_[i], shape, params_[i].values().data(), params_[i].values().size());
      }
    }
  }
  void load(const Archive& a, const std::string& prefix = "") {
    for (size_t i = 0; i < params_.size(); ++i) {
      std::vector<T> vals;
      if constexpr (std::is_same_v<T, float>) {
        auto v = a.get_f32(prefix + names_[i]);
        vals.assign(v.begin(), v.end());
      } else {
        auto v = a.get_f64(prefix + names_[i]);
        vals.assign(v.begin(), v.end());
      }
      if (static_cast<long>(vals.size()) != params_[i].size())
        throw ArchiveError("checkpoint size mismatch for " + names_[i]);
      params_[i].values() = std::move(vals);
    }
  }

 private:
  using RecWeights = RecurrentCellWeights<T>;
  struct Block {
    Tensor<T> wq, wk, wv, wh, bq, bk, bv, bh;
    Tensor<T> ln1_g, ln1_b, ln2_g, ln2_b;
    std::vector<Tensor<T>> ffn_w, ffn_b;
    RecWeights rec_fwd, rec_bwd;
  };

  Tensor<T> reg(const std::string& name, Shape shape) {
    Tensor<T> t = Tensor<T>::zeros(std::move(shape));
    names_.push_back(name);
    params_.push_back(t);
    return t;
  }

  void allocate_rec(RecWeights& w, const std::string& prefix) {
    const int D = cfg_.embed_dim, H = cfg_.recurrent_hidden;
    const int g = gate_count(cfg_.sublayer_variant);
    w.w_ih = reg(prefix + ".w_ih", {D, g * H});
    w.b_ih = reg(prefix + ".b_ih", {g * H});
    if (cfg_.sublayer_variant == SublayerVariant::Gru || cfg_.sublayer_variant == SublayerVariant::BiGru) {
      w.w_hh = reg(prefix + ".w_hh", {H, 2 * H});
      w.b_hh = reg(prefix + ".b_hh", {2 * H});
      w.w_hn = reg(prefix + ".w_hn", {H, H});
      w.b_hn = reg(prefix + ".b_hn", {H});
    } else {
      w.w_hh = reg(prefix + ".w_hh", {H, g * H});
      w.b_hh = reg(prefix + ".b_hh", {g * H});
    }
  }

  void allocate() {
    const int D = cfg_.embed_dim;
    embed_w_ = reg("embed.w", {cfg_.obs_width, D});
    embed_b_ = reg("embed.b", {D});
    pos_ = reg("pos", {cfg_.context_length, D});
    blocks_.resize(cfg_.encoder_layers);
    for (int l = 0; l < cfg_.encoder_layers; ++l) {
      Block& b = blocks_[l];
      const std::string p = "block" + std::to_string(l) + ".";
      b.wq = reg(p + "attn.wq", {D, D});
      b.bq = reg(p + "attn.bq", {D});
      b.wk = reg(p + "attn.wk", {D, D});
      b.bk = reg(p + "attn.bk", {D});
      b.wv = reg(p + "attn.wv", {D, D});
      b.bv = reg(p + "attn.bv", {D});
      b.wh = reg(p + "attn.wh", {D, D});
      b.bh = reg(p + "attn.bh", {D});
      b.ln1_g = reg(p + "ln1.g", {D});
      b.ln1_b = reg(p + "ln1.b", {D});
      b.ln2_g = reg(p + "ln2.g", {D});
      b.ln2_b = reg(p + "ln2.b", {D});
      if (is_recurrent(cfg_.sublayer_variant)) {
        allocate_rec(b.rec_fwd, p + "rec.fwd");
        if (is_bidirectional(cfg_.sublayer_variant)) allocate_rec(b.rec_bwd, p + "rec.bwd");
      } else {
        std::vector<int> dims;
        if (cfg_.ffn.hidden_mult == 0) {
          dims = {D, D};
        } else {
          dims.push_back(D);
          for (int s = 0; s < cfg_.ffn.stages; ++s) dims.push_back(cfg_.ffn.hidden_mult * D);
          dims.push_back(D);
        }
        for (size_t i = 0; i + 1 < dims.size(); ++i) {
          b.ffn_w.push_back(reg(p + "ffn.l" + std::to_string(i) + ".w", {dims[i], dims[i + 1]}));
          b.ffn_b.push_back(reg(p + "ffn.l" + std::to_string(i) + ".b", {dims[i + 1]}));
        }
      }
    }
    head_w_ = reg("head.w", {D, cfg_.action_count});

    // set gates to 1 for layer norms so a fresh network is usable before init
    for (auto& blk : blocks_) {
      std::fill(blk.ln1_g.values().begin(), blk.ln1_g.values().end(), T(1));
      std::fill(blk.ln2_g.values().begin(), blk.ln2_g.values().end(), T(1));
    }
  }

  // One recurrent direction over a padded batch. `mask_t` zeroes state and
  // output at pad positions, which also anchors the reverse pass at the last
  // valid position of each sequence.
  Tensor<T> run_direction(Tensor<T> x, const RecWeights& w, int batch, const std::vector<int>& valid_len,
                          bool reverse) {
    const int K = cfg_.context_length;
    const int H = cfg_.recurrent_hidden;
    const SublayerVariant var = cfg_.sublayer_variant;
    const int g = gate_count(var);

    Tensor<T> gate_x = add_bias(matmul(std::move(x), w.w_ih), w.b_ih);  // (B*K) x gH

    Tensor<T> h = Tensor<T>::zeros({batch, H});
    Tensor<T> c = Tensor<T>::zeros({batch, H});  // LSTM cell state
    std::vector<Tensor<T>> outputs(K);
    std::vector<int> rows(batch);
    for (int step = 0; step < K; ++step) {
      const int t = reverse ? K - 1 - step : step;
      for (int b = 0; b < batch; ++b) rows[b] = b * K + t;
      Tensor<T> gx = gather_rows(gate_x, rows);

      Tensor<T> mask = Tensor<T>::zeros({batch, H});
      for (int b = 0; b < batch; ++b)
        if (t < valid_len[b]) std::fill_n(&mask.values()[b * H], H, T(1));

      if (var == SublayerVariant::Rnn || var == SublayerVariant::BiRnn) {
        h = rnn_cell_from_gates(std::move(gx), std::move(h), w);
      } else if (var == SublayerVariant::Gru || var == SublayerVariant::BiGru) {
        h = gru_cell_from_gates(std::move(gx), std::move(h), w);
      } else {  // LSTM
        auto [nh, nc] = lstm_cell_from_gates(std::move(gx), std::move(h), std::move(c), w);
        h = std::move(nh);
        c = mul(std::move(nc), mask);
      }
      h = mul(std::move(h), mask);
      outputs[t] = h;
      (void)g;
    }
    // time-major stack, then reorder to (b*K + t) rows
    Tensor<T> stacked = concat_rows(outputs);  // (K*B) x H in t-major order
    std::vector<int> perm(batch * K);
    for (int b = 0; b < batch; ++b)
      for (int t = 0; t < K; ++t) perm[b * K + t] = t * batch + b;
    return gather_rows(std::move(stacked), std::move(perm));
  }

  EncoderConfig cfg_;
  std::vector<Tensor<T>> params_;
  std::vector<std::string> names_;
  Tensor<T> embed_w_, embed_b_, pos_, head_w_;
  std::vector<Block> blocks_;
};

// Greedy action from the acting position's Q row; ties break to the lowest
// index for determinism.
template <typename T>
int select_action(const std::vector<T>& q_last) {
  if (q_last.empty()) throw DimensionError("select_action on empty Q vector");
  int best = 0;
  for (size_t i = 1; i < q_last.size(); ++i)
    if (q_last[i] > q_last[best]) best = static_cast<int>(i);
  return best;
}

}  // namespace dbgfqn
