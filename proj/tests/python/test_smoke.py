import math

import pytest

import qtlab


def small_sim():
    sim = qtlab.SimConfig()
    sim.lookback = 4
    sim.bars_per_day = 20
    sim.reward_window = 10
    sim.slippage = 0.01
    return sim


def sine_series(length=200, seed=11):
    params = qtlab.SynthParams()
    params.base = 100.0
    params.amplitude = 3.0
    params.period = 8.0
    params.noise = 0.0
    return qtlab.synth_series("sine", length, seed, params)


def test_synth_is_deterministic():
    a = sine_series().closes()
    b = sine_series().closes()
    assert a == b
    assert len(a) == 200


def test_dual_thrust_worked_example():
    history = [qtlab.DayAggregate(110.0, 100.0, 108.0, 95.0)]
    lines = qtlab.dual_thrust_lines(history, 100.0, qtlab.DualThrustParams(n=1, k1=0.5, k2=0.5))
    assert lines.range_val == pytest.approx(13.0)
    assert lines.buy_line == pytest.approx(106.5)
    assert lines.sell_line == pytest.approx(93.5)
    assert qtlab.dual_thrust_signal(107.0, lines, 0) == 1
    assert qtlab.dual_thrust_signal(93.0, lines, 0) == -1
    assert qtlab.dual_thrust_signal(100.0, lines, -1) == -1


def test_hindsight_expert_labels():
    labels = qtlab.hindsight_expert([100.0, 98.0, 103.0, 101.0])
    assert labels == {1: 1, 2: -1}
    assert qtlab.hindsight_expert([5.0, 5.0, 5.0]) == {}


def test_env_fill_arithmetic():
    sim = qtlab.SimConfig()
    sim.lookback = 4
    sim.bars_per_day = 20
    sim.reward_window = 10
    flat_params = qtlab.SynthParams()
    flat_params.amplitude = 0.0
    flat = qtlab.synth_series("sine", 80, 0, flat_params)
    env = qtlab.TradingEnv(flat, sim, qtlab.DualThrustParams(n=2))
    obs = env.reset(40)
    assert len(obs) == 4 * sim.lookback + 5
    result = env.step(1)
    fill = 100.0 + sim.slippage
    fee = sim.fee_rate * fill
    assert result.fees_paid == pytest.approx(fee)
    assert result.account_profit == pytest.approx((100.0 - fill) - fee, abs=1e-9)


def test_metrics_hand_cases():
    assert qtlab.max_drawdown([100.0, 120.0, 90.0, 110.0]) == pytest.approx(0.25)
    assert qtlab.sharpe([0.02, 0.00, 0.01]) == pytest.approx(1.224744871391589, rel=1e-12)
    assert qtlab.total_return([1_000_000.0, 1_200_000.0]) == pytest.approx(0.2)
    with pytest.raises(qtlab.QtlabError):
        qtlab.sharpe([0.01, 0.01])


def test_demonstrations_and_buffer():
    series = sine_series()
    sim = small_sim()
    dt = qtlab.DualThrustParams(n=2, k1=0.1, k2=0.1)
    demos = qtlab.generate_demonstrations(series, dt, sim, reward="raw_return")
    assert len(demos) == 8
    assert all(ep.is_demo for ep in demos)
    assert all(s in (-1, 1) for ep in demos for s in ep.actions())

    buffer = qtlab.PrioritizedBuffer()
    for ep in demos:
        buffer.add(ep)
    assert len(buffer) == 8
    assert buffer.demo_count() == 8
    probs = buffer.probabilities()
    assert sum(probs) == pytest.approx(1.0, abs=1e-12)

    batch = buffer.sample(16, seed=3, demos_only=True)
    assert len(batch) == 16
    assert all(item["weight"] <= 1.0 for item in batch)


def test_baseline_backtests():
    series = sine_series()
    sim = small_sim()
    dt = qtlab.DualThrustParams(n=2, k1=0.1, k2=0.1)
    out = qtlab.run_baseline(series, "long-hold", sim, dt)
    assert out["episodes"] == 8
    assert out["metrics"]["mdd"] >= 0.0
    assert math.isfinite(out["metrics"]["tr"])


def test_training_step_and_checkpoint(tmp_path):
    series = sine_series()
    sim = small_sim()
    dt = qtlab.DualThrustParams(n=2, k1=0.1, k2=0.1)
    demos = qtlab.generate_demonstrations(series, dt, sim, reward="raw_return")
    buffer = qtlab.PrioritizedBuffer()
    for ep in demos:
        buffer.add(ep)

    net = qtlab.NetConfig(cell="gru", obs_dim=4 * sim.lookback + 5, hidden_dim=8,
                          critic_hidden=8)
    agent = qtlab.QTAgent(net, seed=5)
    cfg = qtlab.TrainConfig()
    cfg.batch_size = 4
    stats = qtlab.train_step(agent, buffer, cfg, seed=1, demos_only=True)
    assert stats["step"] == 1
    assert math.isfinite(stats["critic_loss"])

    qtlab.pretrain(agent, buffer, cfg, steps=3, seed=2)
    assert agent.train_steps() == 4

    path = tmp_path / "agent.ckpt"
    agent.save(str(path))
    loaded = qtlab.QTAgent.load(str(path))
    assert loaded.train_steps() == agent.train_steps()
    assert loaded.act_greedy(demos[0]) == agent.act_greedy(demos[0])
    assert 0.0 <= qtlab.action_agreement(agent, demos) <= 1.0
