// Python bindings for the main operations: environments, the Q-network
// forward pass, parameter accounting, and the training harness.

#include "dbgfqn/envs.hpp"
#include "dbgfqn/harness.hpp"
#include "dbgfqn/param_report.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

namespace py = pybind11;
using namespace dbgfqn;

namespace {

py::array_t<float> to_array(const std::vector<float>& v) {
  py::array_t<float> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

class PyEnv {
 public:
  explicit PyEnv(const std::string& name) : env_(make_env(name)) {}

  py::array_t<float> reset(uint64_t seed) { return to_array(env_->reset(seed)); }

  py::tuple step(int action) {
    StepResult r = env_->step(action);
    return py::make_tuple(to_array(r.obs), r.reward, r.done, r.success);
  }

  int obs_width() const { return env_->obs_width(); }
  int action_count() const { return env_->action_count(); }
  int max_episode_steps() const { return env_->max_episode_steps(); }
  std::string name() const { return env_->name(); }

 private:
  std::unique_ptr<PomdpEnv> env_;
};

class PyQNetwork {
 public:
  explicit PyQNetwork(const EncoderConfig& cfg) : net_(cfg) {}

  void init_params(uint64_t seed) {
    Rng rng(seed);
    net_.init_params(rng);
  }

  // obs: (batch * context_length, obs_width); returns per-timestep Q-values
  // with shape (batch * context_length, action_count).
  py::array_t<double> forward(py::array_t<double, py::array::c_style | py::array::forcecast> obs,
                              const std::vector<int>& valid_len) {
    if (obs.ndim() != 2) throw DimensionError("forward expects a rank-2 observation array");
    const auto& cfg = net_.config();
    Tensor<double> x = Tensor<double>::zeros(
        {static_cast<int>(obs.shape(0)), static_cast<int>(obs.shape(1))});
    std::copy(obs.data(), obs.data() + obs.size(), x.values().begin());
    Tensor<double> q = net_.forward(x, static_cast<int>(valid_len.size()), valid_len);
    py::array_t<double> out({static_cast<py::ssize_t>(q.dim(0)), static_cast<py::ssize_t>(q.dim(1))});
    std::copy(q.values().begin(), q.values().end(), out.mutable_data());
    return out;
  }

  long parameter_count() const { return net_.parameter_count().total; }
  std::vector<std::pair<std::string, long>> parameter_items() const { return net_.parameter_count().items; }
  uint64_t parameter_checksum() const { return net_.parameter_checksum(); }
  const EncoderConfig& config() const { return net_.config(); }

 private:
  QNetwork<double> net_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Transformer-encoder DQN with recurrent sublayers: environments, "
            "networks, and the training harness";

  py::enum_<SublayerVariant>(m, "SublayerVariant")
      .value("Ffn", SublayerVariant::Ffn)
      .value("Rnn", SublayerVariant::Rnn)
      .value("Lstm", SublayerVariant::Lstm)
      .value("Gru", SublayerVariant::Gru)
      .value("BiRnn", SublayerVariant::BiRnn)
      .value("BiLstm", SublayerVariant::BiLstm)
      .value("BiGru", SublayerVariant::BiGru);

  py::class_<FfnSpec>(m, "FfnSpec")
      .def(py::init<>())
      .def_readwrite("stages", &FfnSpec::stages)
      .def_readwrite("hidden_mult", &FfnSpec::hidden_mult);

  py::class_<EncoderConfig>(m, "EncoderConfig")
      .def(py::init<>())
      .def_readwrite("embed_dim", &EncoderConfig::embed_dim)
      .def_readwrite("heads", &EncoderConfig::heads)
      .def_readwrite("encoder_layers", &EncoderConfig::encoder_layers)
      .def_readwrite("context_length", &EncoderConfig::context_length)
      .def_readwrite("sublayer_variant", &EncoderConfig::sublayer_variant)
      .def_readwrite("ffn", &EncoderConfig::ffn)
      .def_readwrite("recurrent_hidden", &EncoderConfig::recurrent_hidden)
      .def_readwrite("obs_width", &EncoderConfig::obs_width)
      .def_readwrite("action_count", &EncoderConfig::action_count)
      .def("validate", &EncoderConfig::validate);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("total_steps", &TrainConfig::total_steps)
      .def_readwrite("target_sync_period", &TrainConfig::target_sync_period)
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("gamma", &TrainConfig::gamma)
      .def_readwrite("epsilon_start", &TrainConfig::epsilon_start)
      .def_readwrite("epsilon_final", &TrainConfig::epsilon_final)
      .def_readwrite("epsilon_fraction", &TrainConfig::epsilon_fraction)
      .def_readwrite("warmup_steps", &TrainConfig::warmup_steps)
      .def_readwrite("buffer_capacity", &TrainConfig::buffer_capacity)
      .def_readwrite("grad_clip", &TrainConfig::grad_clip)
      .def_readwrite("huber_loss", &TrainConfig::huber_loss)
      .def("validate", &TrainConfig::validate);

  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def(py::init<>())
      .def_readwrite("env_name", &ExperimentConfig::env_name)
      .def_readwrite("encoder", &ExperimentConfig::encoder)
      .def_readwrite("train", &ExperimentConfig::train)
      .def_readwrite("seeds", &ExperimentConfig::seeds)
      .def_readwrite("out_dir", &ExperimentConfig::out_dir)
      .def_readwrite("checkpoint_period", &ExperimentConfig::checkpoint_period)
      .def_readwrite("early_stop_success", &ExperimentConfig::early_stop_success)
      .def_readwrite("success_window", &ExperimentConfig::success_window);

  py::class_<MetricsRecord>(m, "MetricsRecord")
      .def_readonly("global_step", &MetricsRecord::global_step)
      .def_readonly("episode_index", &MetricsRecord::episode_index)
      .def_readonly("episode_return", &MetricsRecord::episode_return)
      .def_readonly("success", &MetricsRecord::success)
      .def_readonly("running_success_rate", &MetricsRecord::running_success_rate)
      .def_readonly("epsilon", &MetricsRecord::epsilon)
      .def_readonly("loss_avg", &MetricsRecord::loss_avg);

  py::class_<SeedResult>(m, "SeedResult")
      .def_readonly("seed", &SeedResult::seed)
      .def_readonly("final_rate", &SeedResult::final_rate)
      .def_readonly("best_rate", &SeedResult::best_rate)
      .def_readonly("episodes", &SeedResult::episodes)
      .def_readonly("steps", &SeedResult::steps)
      .def_readonly("metrics_path", &SeedResult::metrics_path);

  py::class_<ExperimentSummary>(m, "ExperimentSummary")
      .def_readonly("seeds", &ExperimentSummary::seeds)
      .def_readonly("mean_final", &ExperimentSummary::mean_final)
      .def_readonly("mean_best", &ExperimentSummary::mean_best);

  py::class_<PyEnv>(m, "Env")
      .def(py::init<const std::string&>(), py::arg("name"))
      .def("reset", &PyEnv::reset, py::arg("seed"))
      .def("step", &PyEnv::step, py::arg("action"))
      .def_property_readonly("obs_width", &PyEnv::obs_width)
      .def_property_readonly("action_count", &PyEnv::action_count)
      .def_property_readonly("max_episode_steps", &PyEnv::max_episode_steps)
      .def_property_readonly("name", &PyEnv::name);

  py::class_<PyQNetwork>(m, "QNetwork")
      .def(py::init<const EncoderConfig&>(), py::arg("config"))
      .def("init_params", &PyQNetwork::init_params, py::arg("seed"))
      .def("forward", &PyQNetwork::forward, py::arg("obs"), py::arg("valid_len"))
      .def("parameter_count", &PyQNetwork::parameter_count)
      .def("parameter_items", &PyQNetwork::parameter_items)
      .def("parameter_checksum", &PyQNetwork::parameter_checksum)
      .def_property_readonly("config", &PyQNetwork::config);

  py::class_<ReferenceEnvSpec>(m, "ReferenceEnvSpec")
      .def(py::init<>())
      .def_readwrite("name", &ReferenceEnvSpec::name)
      .def_readwrite("embed_dim", &ReferenceEnvSpec::embed_dim)
      .def_readwrite("discrete", &ReferenceEnvSpec::discrete)
      .def_readwrite("obs_dim", &ReferenceEnvSpec::obs_dim)
      .def_readwrite("vocab", &ReferenceEnvSpec::vocab)
      .def_readwrite("action_count", &ReferenceEnvSpec::action_count)
      .def_readwrite("context_length", &ReferenceEnvSpec::context_length)
      .def_readwrite("layers", &ReferenceEnvSpec::layers)
      .def_readwrite("heads", &ReferenceEnvSpec::heads);

  m.def("known_env_names", &known_env_names);
  m.def("variant_from_flag", &variant_from_flag, py::arg("flag"));
  m.def("flag_from_variant", &flag_from_variant, py::arg("variant"));
  m.def("run_experiment", &run_experiment, py::arg("config"),
        py::call_guard<py::gil_scoped_release>());
  m.def("run_single_seed", &run_single_seed, py::arg("config"), py::arg("seed"),
        py::call_guard<py::gil_scoped_release>());
  m.def("import_metrics", &import_metrics, py::arg("path"));
  m.def("report_parameters_csv", []() { return report_parameters_csv(); });
  m.def("reference_env_rows", &reference_env_rows);
  m.def("reference_variant_keys", &reference_variant_keys);
  m.def(
      "reference_parameter_count",
      [](const ReferenceEnvSpec& env, const std::string& variant) {
        auto rep = reference_parameter_count(env, variant);
        return py::make_tuple(rep.total, rep.items);
      },
      py::arg("env"), py::arg("variant"));
}
