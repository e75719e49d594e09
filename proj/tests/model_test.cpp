#include "dbgfqn/model.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace dbgfqn;

namespace {

EncoderConfig tiny_config(SublayerVariant v) {
  EncoderConfig cfg;
  cfg.embed_dim = 8;
  cfg.heads = 2;
  cfg.encoder_layers = 1;
  cfg.context_length = 4;
  cfg.sublayer_variant = v;
  cfg.recurrent_hidden = is_bidirectional(v) ? 4 : 8;
  cfg.obs_width = 3;
  cfg.action_count = 2;
  return cfg;
}

const SublayerVariant kAllVariants[] = {SublayerVariant::Ffn,    SublayerVariant::Rnn,
                                        SublayerVariant::Lstm,   SublayerVariant::Gru,
                                        SublayerVariant::BiRnn,  SublayerVariant::BiLstm,
                                        SublayerVariant::BiGru};

template <typename T>
Tensor<T> random_obs(int rows, int cols, std::mt19937& gen) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Tensor<T> t = Tensor<T>::zeros({rows, cols});
  for (auto& v : t.values()) v = static_cast<T>(d(gen));
  return t;
}

}  // namespace

TEST_CASE("config invariants reject bad dimension pairings") {
  EncoderConfig cfg = tiny_config(SublayerVariant::BiGru);
  cfg.recurrent_hidden = 3;  // 2*3 != 8
  CHECK_THROWS_AS(QNetwork<double>{cfg}, DimensionError);
  cfg = tiny_config(SublayerVariant::Gru);
  cfg.recurrent_hidden = 4;  // != 8
  CHECK_THROWS_AS(QNetwork<double>{cfg}, DimensionError);
  cfg = tiny_config(SublayerVariant::Ffn);
  cfg.heads = 3;  // 8 % 3 != 0
  CHECK_THROWS_AS(QNetwork<double>{cfg}, DimensionError);
}

TEST_CASE("gru cell zero fixed point and halving under zero weights") {
  RecurrentCellWeights<double> w;
  w.w_ih = Tensor<double>::zeros({3, 6});
  w.b_ih = Tensor<double>::zeros({6});
  w.w_hh = Tensor<double>::zeros({2, 4});
  w.b_hh = Tensor<double>::zeros({4});
  w.w_hn = Tensor<double>::zeros({2, 2});
  w.b_hn = Tensor<double>::zeros({2});

  auto x = Tensor<double>::from({1, 3}, {1.0, -2.0, 0.5});
  auto h0 = Tensor<double>::zeros({1, 2});
  auto h = gru_cell(x, h0, w);
  CHECK(h.values()[0] == doctest::Approx(0.0));
  CHECK(h.values()[1] == doctest::Approx(0.0));

  auto hv = Tensor<double>::from({1, 2}, {0.8, -0.4});
  auto h2 = gru_cell(x, hv, w);
  CHECK(h2.values()[0] == doctest::Approx(0.4));
  CHECK(h2.values()[1] == doctest::Approx(-0.2));
}

TEST_CASE("gru cell matches the scalar hand computation") {
  // scalar case: all gate weights [1, 1], biases 0, x=1, h_prev=0
  RecurrentCellWeights<double> w;
  w.w_ih = Tensor<double>::from({1, 3}, {1.0, 1.0, 1.0});
  w.b_ih = Tensor<double>::zeros({3});
  w.w_hh = Tensor<double>::from({1, 2}, {1.0, 1.0});
  w.b_hh = Tensor<double>::zeros({2});
  w.w_hn = Tensor<double>::from({1, 1}, {1.0});
  w.b_hn = Tensor<double>::zeros({1});

  auto x = Tensor<double>::from({1, 1}, {1.0});
  auto h0 = Tensor<double>::zeros({1, 1});
  auto h = gru_cell(x, h0, w);
  const double z = 1.0 / (1.0 + std::exp(-1.0));   // 0.7311
  const double n = std::tanh(1.0);                  // 0.7616
  CHECK(h.values()[0] == doctest::Approx(z * n).epsilon(1e-6));
  CHECK(h.values()[0] == doctest::Approx(0.5568).epsilon(1e-3));
}

TEST_CASE("recurrent sublayer with zero weights outputs zero for every variant") {
  std::mt19937 gen(2);
  for (SublayerVariant v : {SublayerVariant::Rnn, SublayerVariant::Gru, SublayerVariant::Lstm,
                            SublayerVariant::BiRnn, SublayerVariant::BiGru, SublayerVariant::BiLstm}) {
    QNetwork<double> net(tiny_config(v));  // allocated zero
    auto x = random_obs<double>(4, 8, gen);
    auto out = net.recurrent_sublayer(x, 0, 1, {4});
    for (double val : out.values()) CHECK(val == doctest::Approx(0.0));
  }
}

TEST_CASE("bidirectional outputs are zero at pad rows and defined at a single valid position") {
  std::mt19937 gen(4);
  QNetwork<double> net(tiny_config(SublayerVariant::BiGru));
  Rng rng(9);
  net.init_params(rng);
  auto x = random_obs<double>(4, 8, gen);
  auto out = net.recurrent_sublayer(x, 0, 1, {1});
  for (int c = 0; c < 8; ++c) CHECK(std::abs(out.values()[c]) > 0.0);  // row 0 live
  for (int r = 1; r < 4; ++r)
    for (int c = 0; c < 8; ++c) CHECK(out.values()[r * 8 + c] == doctest::Approx(0.0));

  // forward and backward passes each see exactly one step from h=0, so the two
  // halves equal the single-step cell outputs of their own weight sets
  auto full = net.recurrent_sublayer(x, 0, 1, {4});
  CHECK(std::abs(full.values()[3 * 8 + 0]) > 0.0);
}

TEST_CASE("bigru reversal symmetry: swapped directions on reversed input") {
  std::mt19937 gen(6);
  QNetwork<double> net(tiny_config(SublayerVariant::BiGru));
  Rng rng(10);
  net.init_params(rng);
  auto x = random_obs<double>(4, 8, gen);
  auto out = net.recurrent_sublayer(x, 0, 1, {4});

  // reverse the input in time
  Tensor<double> xr = Tensor<double>::zeros({4, 8});
  for (int t = 0; t < 4; ++t)
    for (int c = 0; c < 8; ++c) xr.values()[t * 8 + c] = x.values()[(3 - t) * 8 + c];

  // swap forward/backward weight sets
  QNetwork<double> swapped(tiny_config(SublayerVariant::BiGru));
  swapped.copy_from(net);
  for (const char* leaf : {"w_ih", "b_ih", "w_hh", "b_hh", "w_hn", "b_hn"}) {
    auto f = swapped.parameter(std::string("block0.rec.fwd.") + leaf);
    auto b = swapped.parameter(std::string("block0.rec.bwd.") + leaf);
    std::swap(f.values(), b.values());
  }
  auto out_r = swapped.recurrent_sublayer(xr, 0, 1, {4});
  // time-reverse of the original, with the direction halves exchanged
  for (int t = 0; t < 4; ++t)
    for (int c = 0; c < 4; ++c) {
      CHECK(out_r.values()[t * 8 + c] == doctest::Approx(out.values()[(3 - t) * 8 + 4 + c]).epsilon(1e-10));
      CHECK(out_r.values()[t * 8 + 4 + c] == doctest::Approx(out.values()[(3 - t) * 8 + c]).epsilon(1e-10));
    }
}

TEST_CASE("encoder block with zero sublayer weights reduces to layer norm of L1") {
  std::mt19937 gen(8);
  EncoderConfig cfg = tiny_config(SublayerVariant::Ffn);
  QNetwork<double> net(cfg);
  Rng rng(11);
  net.init_params(rng);
  // zero out the ffn weights; relu(0) = 0 so out = LN(L1 + 0)
  for (const char* name : {"block0.ffn.l0.w", "block0.ffn.l0.b", "block0.ffn.l1.w", "block0.ffn.l1.b"}) {
    auto p = net.parameter(name);
    std::fill(p.values().begin(), p.values().end(), 0.0);
  }
  auto x = random_obs<double>(4, 8, gen);

  auto q = add_bias(matmul(x, net.parameter("block0.attn.wq")), net.parameter("block0.attn.bq"));
  auto k = add_bias(matmul(x, net.parameter("block0.attn.wk")), net.parameter("block0.attn.bk"));
  auto v = add_bias(matmul(x, net.parameter("block0.attn.wv")), net.parameter("block0.attn.bv"));
  auto attn = multihead_causal_attention(q, k, v, 1, 4, 2);
  auto a = add_bias(matmul(attn, net.parameter("block0.attn.wh")), net.parameter("block0.attn.bh"));
  auto l1 = layer_norm(add(x, relu(a)), net.parameter("block0.ln1.g"), net.parameter("block0.ln1.b"), 1e-5);
  auto expect = layer_norm(l1, net.parameter("block0.ln2.g"), net.parameter("block0.ln2.b"), 1e-5);

  auto got = net.encoder_block(x, 0, 1, {4});
  for (long i = 0; i < got.size(); ++i)
    CHECK(got.values()[i] == doctest::Approx(expect.values()[i]).epsilon(1e-12));
}

TEST_CASE("single D->D identity ffn is the identity") {
  EncoderConfig cfg = tiny_config(SublayerVariant::Ffn);
  cfg.ffn.stages = 1;
  cfg.ffn.hidden_mult = 0;  // plain linear
  QNetwork<double> net(cfg);
  auto w = net.parameter("block0.ffn.l0.w");
  for (int i = 0; i < 8; ++i) w.values()[i * 8 + i] = 1.0;
  std::mt19937 gen(12);
  auto x = random_obs<double>(4, 8, gen);
  auto y = net.ffn_sublayer(x, 0);
  for (long i = 0; i < x.size(); ++i) CHECK(y.values()[i] == doctest::Approx(x.values()[i]));
}

TEST_CASE("embed_history splits into projection plus positional rows") {
  EncoderConfig cfg = tiny_config(SublayerVariant::BiGru);
  QNetwork<double> net(cfg);
  Rng rng(13);
  net.init_params(rng);

  // zero observation: output row equals the positional row alone (bias is zero)
  auto zero_obs = Tensor<double>::zeros({4, 3});
  auto x = net.embed_history(zero_obs, 1);
  auto pos = net.parameter("pos");
  for (long i = 0; i < x.size(); ++i) CHECK(x.values()[i] == doctest::Approx(pos.values()[i]));

  // P_E = 0: output equals the linear embedding exactly
  std::fill(pos.values().begin(), pos.values().end(), 0.0);
  std::mt19937 gen(14);
  auto obs = random_obs<double>(4, 3, gen);
  auto x2 = net.embed_history(obs, 1);
  auto expect = add_bias(matmul(obs, net.parameter("embed.w")), net.parameter("embed.b"));
  for (long i = 0; i < x2.size(); ++i) CHECK(x2.values()[i] == doctest::Approx(expect.values()[i]));
}

TEST_CASE("select_action argmax with lowest-index ties") {
  CHECK(select_action(std::vector<double>{0.1, 0.9, 0.3}) == 1);
  CHECK(select_action(std::vector<double>{0.5, 0.5}) == 0);
  CHECK(select_action(std::vector<double>{2.0, 4.0, 1.0}) ==
        select_action(std::vector<double>{1.0, 2.0, 0.5}));  // positive scaling invariance
  CHECK_THROWS_AS(select_action(std::vector<double>{}), DimensionError);
}

TEST_CASE("parameter counts: closed form equals exhaustive enumeration for every variant") {
  for (SublayerVariant v : kAllVariants) {
    QNetwork<double> net(tiny_config(v));
    CHECK(net.parameter_count().total == net.enumerate_parameters());
  }
}

TEST_CASE("ffn sublayer count for one 4x stage at D=64") {
  EncoderConfig cfg;
  cfg.embed_dim = 64;
  cfg.heads = 8;
  cfg.encoder_layers = 1;
  cfg.context_length = 4;
  cfg.sublayer_variant = SublayerVariant::Ffn;
  cfg.ffn = {1, 4};
  cfg.obs_width = 3;
  cfg.action_count = 2;
  QNetwork<double> net(cfg);
  long ffn = 0;
  for (const auto& [name, n] : net.parameter_count().items)
    if (name == "block0.sublayer") ffn = n;
  // (64*256 + 256) + (256*64 + 64)
  CHECK(ffn == 33088);
  CHECK(net.parameter_count().total == net.enumerate_parameters());
}

TEST_CASE("q_forward matches an independent straight-line oracle (no tape)") {
  EncoderConfig cfg = tiny_config(SublayerVariant::BiGru);
  QNetwork<double> net(cfg);
  Rng rng(21);
  net.init_params(rng);
  std::mt19937 gen(22);
  auto obs = random_obs<double>(4, 3, gen);
  const std::vector<int> valid{4};
  auto q = net.forward(obs, 1, valid);
  CHECK(q.shape() == Shape{4, 2});

  // straight-line recomputation with plain loops over raw values
  const int K = 4, D = 8, H = 4;
  auto val = [](const Tensor<double>& t) { return t.values(); };
  auto P = [&](const char* n) { return net.parameter(n).values(); };

  // embed + pos
  std::vector<double> x(K * D);
  {
    auto ew = P("embed.w");
    auto eb = P("embed.b");
    auto pos = P("pos");
    for (int t = 0; t < K; ++t)
      for (int jd = 0; jd < D; ++jd) {
        double s = eb[jd];
        for (int c = 0; c < 3; ++c) s += val(obs)[t * 3 + c] * ew[c * D + jd];
        x[t * D + jd] = s + pos[t * D + jd];
      }
  }
  auto linear = [&](const std::vector<double>& in, const std::vector<double>& w,
                    const std::vector<double>& b, int rows, int cin, int cout) {
    std::vector<double> out(rows * cout);
    for (int r = 0; r < rows; ++r)
      for (int j = 0; j < cout; ++j) {
        double s = b.empty() ? 0.0 : b[j];
        for (int c = 0; c < cin; ++c) s += in[r * cin + c] * w[c * cout + j];
        out[r * cout + j] = s;
      }
    return out;
  };
  auto ln = [&](std::vector<double> in, const std::vector<double>& g, const std::vector<double>& b) {
    for (int r = 0; r < K; ++r) {
      double mean = 0, var = 0;
      for (int c = 0; c < D; ++c) mean += in[r * D + c];
      mean /= D;
      for (int c = 0; c < D; ++c) var += (in[r * D + c] - mean) * (in[r * D + c] - mean);
      var /= D;
      for (int c = 0; c < D; ++c)
        in[r * D + c] = (in[r * D + c] - mean) / std::sqrt(var + 1e-5) * g[c] + b[c];
    }
    return in;
  };

  // attention (2 heads of width 4)
  auto qp = linear(x, P("block0.attn.wq"), P("block0.attn.bq"), K, D, D);
  auto kp = linear(x, P("block0.attn.wk"), P("block0.attn.bk"), K, D, D);
  auto vp = linear(x, P("block0.attn.wv"), P("block0.attn.bv"), K, D, D);
  std::vector<double> attn(K * D, 0.0);
  for (int h = 0; h < 2; ++h) {
    const int co = h * 4;
    for (int t = 0; t < K; ++t) {
      std::vector<double> w(t + 1);
      double mx = -1e300;
      for (int s = 0; s <= t; ++s) {
        double dot = 0;
        for (int c = 0; c < 4; ++c) dot += qp[t * D + co + c] * kp[s * D + co + c];
        w[s] = dot / 2.0;  // 1/sqrt(4)
        mx = std::max(mx, w[s]);
      }
      double denom = 0;
      for (int s = 0; s <= t; ++s) denom += (w[s] = std::exp(w[s] - mx));
      for (int s = 0; s <= t; ++s)
        for (int c = 0; c < 4; ++c) attn[t * D + co + c] += w[s] / denom * vp[s * D + co + c];
    }
  }
  auto proj = linear(attn, P("block0.attn.wh"), P("block0.attn.bh"), K, D, D);
  std::vector<double> l1(K * D);
  for (int i = 0; i < K * D; ++i) l1[i] = x[i] + std::max(0.0, proj[i]);
  l1 = ln(l1, P("block0.ln1.g"), P("block0.ln1.b"));

  // bigru over l1
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  auto run_dir = [&](const char* prefix, bool reverse) {
    auto w_ih = P((std::string(prefix) + ".w_ih").c_str());
    auto b_ih = P((std::string(prefix) + ".b_ih").c_str());
    auto w_hh = P((std::string(prefix) + ".w_hh").c_str());
    auto b_hh = P((std::string(prefix) + ".b_hh").c_str());
    auto w_hn = P((std::string(prefix) + ".w_hn").c_str());
    auto b_hn = P((std::string(prefix) + ".b_hn").c_str());
    std::vector<double> h(H, 0.0), out(K * H, 0.0);
    for (int step = 0; step < K; ++step) {
      const int t = reverse ? K - 1 - step : step;
      std::vector<double> gx(3 * H);
      for (int j = 0; j < 3 * H; ++j) {
        double s = b_ih[j];
        for (int c = 0; c < D; ++c) s += l1[t * D + c] * w_ih[c * 3 * H + j];
        gx[j] = s;
      }
      std::vector<double> rz(2 * H);
      for (int j = 0; j < 2 * H; ++j) {
        double s = gx[j] + b_hh[j];
        for (int c = 0; c < H; ++c) s += h[c] * w_hh[c * 2 * H + j];
        rz[j] = sig(s);
      }
      std::vector<double> hn(H);
      for (int j = 0; j < H; ++j) {
        double s = gx[2 * H + j] + b_hn[j];
        for (int c = 0; c < H; ++c) s += rz[c] * h[c] * w_hn[c * H + j];
        hn[j] = std::tanh(s);
      }
      for (int j = 0; j < H; ++j) h[j] = (1.0 - rz[H + j]) * h[j] + rz[H + j] * hn[j];
      for (int j = 0; j < H; ++j) out[t * H + j] = h[j];
    }
    return out;
  };
  auto fwd = run_dir("block0.rec.fwd", false);
  auto bwd = run_dir("block0.rec.bwd", true);
  std::vector<double> sub(K * D);
  for (int t = 0; t < K; ++t) {
    for (int j = 0; j < H; ++j) sub[t * D + j] = fwd[t * H + j];
    for (int j = 0; j < H; ++j) sub[t * D + H + j] = bwd[t * H + j];
  }
  std::vector<double> l2(K * D);
  for (int i = 0; i < K * D; ++i) l2[i] = l1[i] + std::max(0.0, sub[i]);
  l2 = ln(l2, P("block0.ln2.g"), P("block0.ln2.b"));
  auto qv = linear(l2, P("head.w"), {}, K, D, 2);

  for (int i = 0; i < K * 2; ++i) CHECK(q.values()[i] == doctest::Approx(qv[i]).epsilon(1e-9));
}

TEST_CASE("zero head weights give all-zero Q-values") {
  QNetwork<double> net(tiny_config(SublayerVariant::Gru));
  Rng rng(23);
  net.init_params(rng);
  auto hw = net.parameter("head.w");
  std::fill(hw.values().begin(), hw.values().end(), 0.0);
  std::mt19937 gen(24);
  auto obs = random_obs<double>(4, 3, gen);
  auto q = net.forward(obs, 1, {4});
  for (double v : q.values()) CHECK(v == 0.0);
}

TEST_CASE("per-timestep causality for ffn and unidirectional variants") {
  std::mt19937 gen(31);
  for (SublayerVariant v :
       {SublayerVariant::Ffn, SublayerVariant::Rnn, SublayerVariant::Lstm, SublayerVariant::Gru}) {
    QNetwork<double> net(tiny_config(v));
    Rng rng(32);
    net.init_params(rng);
    auto obs = random_obs<double>(4, 3, gen);
    auto base = net.forward(obs, 1, {4});
    for (int t = 1; t < 4; ++t) {
      auto perturbed = Tensor<double>::from(obs.shape(), obs.values());
      for (int c = 0; c < 3; ++c) perturbed.values()[t * 3 + c] += 0.37 * (c + 1);
      auto q = net.forward(perturbed, 1, {4});
      for (int s = 0; s < t; ++s)
        for (int a = 0; a < 2; ++a) CHECK(q.values()[s * 2 + a] == base.values()[s * 2 + a]);  // bit-exact
    }
  }
}

TEST_CASE("acting position is invariant to pad rows for bidirectional variants") {
  std::mt19937 gen(33);
  for (SublayerVariant v : {SublayerVariant::BiRnn, SublayerVariant::BiLstm, SublayerVariant::BiGru}) {
    QNetwork<double> net(tiny_config(v));
    Rng rng(34);
    net.init_params(rng);
    auto obs = random_obs<double>(4, 3, gen);
    const int valid = 2;
    for (int t = valid; t < 4; ++t)
      for (int c = 0; c < 3; ++c) obs.values()[t * 3 + c] = 0.0;
    auto base = net.forward(obs, 1, {valid});
    auto junk = Tensor<double>::from(obs.shape(), obs.values());
    for (int t = valid; t < 4; ++t)
      for (int c = 0; c < 3; ++c) junk.values()[t * 3 + c] = 7.0 + t + c;
    auto q = net.forward(junk, 1, {valid});
    for (int a = 0; a < 2; ++a)
      CHECK(q.values()[(valid - 1) * 2 + a] == base.values()[(valid - 1) * 2 + a]);
  }
}

TEST_CASE("full-network gradient check per variant stays under 1e-4") {
  std::mt19937 gen(41);
  for (SublayerVariant v : kAllVariants) {
    QNetwork<double> net(tiny_config(v));
    Rng rng(42);
    net.init_params(rng);
    auto obs = random_obs<double>(4, 3, gen);
    std::vector<Tensor<double>> inputs = net.parameters();
    auto f = [&](std::vector<Tensor<double>>&) {
      auto q = net.forward(obs, 1, {3});
      return sum(mul(q, q));
    };
    CHECK(grad_check<double>(f, inputs, 1e-4) < 1e-4);
  }
}

TEST_CASE("checkpoint save/load round-trips bit-exactly and copy_from isolates") {
  QNetwork<float> net(tiny_config(SublayerVariant::BiGru));
  Rng rng(51);
  net.init_params(rng);
  Archive a;
  net.save(a, "m.");
  QNetwork<float> other(tiny_config(SublayerVariant::BiGru));
  other.load(a, "m.");
  CHECK(other.parameter_checksum() == net.parameter_checksum());

  QNetwork<float> copy(tiny_config(SublayerVariant::BiGru));
  copy.copy_from(net);
  net.parameter("embed.w").values()[0] += 1.0f;
  CHECK(copy.parameter("embed.w").values()[0] != net.parameter("embed.w").values()[0]);
}

TEST_CASE("determinism: same seed and config give bit-identical forwards") {
  std::mt19937 gen(61);
  auto obs = random_obs<float>(4, 3, gen);
  std::vector<float> first;
  for (int run = 0; run < 2; ++run) {
    QNetwork<float> net(tiny_config(SublayerVariant::BiGru));
    Rng rng(62);
    net.init_params(rng);
    auto q = net.forward(obs, 1, {4});
    if (run == 0)
      first = q.values();
    else
      CHECK(first == q.values());
  }
}
