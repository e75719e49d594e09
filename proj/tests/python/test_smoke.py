import numpy as np
import pytest

import dbgfqn


def test_env_roundtrip():
    env = dbgfqn.Env("carflag")
    assert env.obs_width == 3 and env.action_count == 3
    obs = env.reset(7)
    assert obs.shape == (3,)
    obs, reward, done, success = env.step(1)
    assert obs.shape == (3,) and not done
    names = dbgfqn.known_env_names()
    assert "gv_memory_5x5" in names and "carflag" in names


def test_gridverse_episode_terminates():
    env = dbgfqn.Env("gv_memory_5x5")
    env.reset(3)
    rng = np.random.default_rng(0)
    for _ in range(env.max_episode_steps):
        _, _, done, _ = env.step(int(rng.integers(env.action_count)))
        if done:
            break
    assert done


def test_qnetwork_forward_shapes_and_determinism():
    cfg = dbgfqn.EncoderConfig()
    cfg.embed_dim = 8
    cfg.heads = 2
    cfg.encoder_layers = 1
    cfg.context_length = 4
    cfg.sublayer_variant = dbgfqn.SublayerVariant.BiGru
    cfg.recurrent_hidden = 4
    cfg.obs_width = 3
    cfg.action_count = 2
    net = dbgfqn.QNetwork(cfg)
    net.init_params(11)
    other = dbgfqn.QNetwork(cfg)
    other.init_params(11)
    assert net.parameter_checksum() == other.parameter_checksum()

    obs = np.linspace(-1.0, 1.0, 12).reshape(4, 3)
    q = net.forward(obs, [3])
    assert q.shape == (4, 2)
    assert np.array_equal(q, other.forward(obs, [3]))
    total = net.parameter_count()
    assert total == sum(n for _, n in net.parameter_items())


def test_reference_counts_match_allocation_claims():
    rows = {env.name: env for env in dbgfqn.reference_env_rows()}
    total, items = dbgfqn.reference_parameter_count(rows["carflag"], "dbrfqn")
    assert total == 59275
    assert total == sum(n for _, n in items)
    csv = dbgfqn.report_parameters_csv()
    assert "carflag" in csv and "dbgfqn" in csv


def test_variant_flags():
    v = dbgfqn.variant_from_flag("dbgfqn")
    assert v == dbgfqn.SublayerVariant.BiGru
    assert dbgfqn.flag_from_variant(v) == "dbgfqn"
    with pytest.raises(Exception):
        dbgfqn.variant_from_flag("dqn")


def test_tiny_training_run(tmp_path):
    cfg = dbgfqn.ExperimentConfig()
    cfg.env_name = "carflag"
    cfg.encoder.embed_dim = 8
    cfg.encoder.heads = 2
    cfg.encoder.encoder_layers = 1
    cfg.encoder.context_length = 4
    cfg.encoder.sublayer_variant = dbgfqn.SublayerVariant.BiGru
    cfg.encoder.recurrent_hidden = 4
    cfg.encoder.obs_width = 0
    cfg.encoder.action_count = 0
    cfg.train.total_steps = 500
    cfg.train.warmup_steps = 50
    cfg.train.batch_size = 4
    cfg.train.buffer_capacity = 1000
    cfg.train.target_sync_period = 100
    cfg.seeds = [5]
    cfg.out_dir = str(tmp_path / "run")
    cfg.checkpoint_period = 0
    summary = dbgfqn.run_experiment(cfg)
    assert len(summary.seeds) == 1
    result = summary.seeds[0]
    assert result.steps == 500
    records = dbgfqn.import_metrics(result.metrics_path)
    assert records and records[-1].global_step <= 500
