"""Minute-bar trading lab: simulator, Dual Thrust demonstrations and a
recurrent policy-gradient agent, backed by the C++ core."""

from ._core import (
    AccountState,
    Bar,
    BufferConfig,
    DayAggregate,
    DualThrustParams,
    Episode,
    EpisodeStep,
    IndicatorVector,
    NetConfig,
    PriceSeries,
    PrioritizedBuffer,
    QTAgent,
    QtlabError,
    SimConfig,
    StepResult,
    SynthParams,
    TradingEnv,
    TrainConfig,
    action_agreement,
    compute_metrics,
    dual_thrust_lines,
    dual_thrust_signal,
    generate_demonstrations,
    hindsight_expert,
    load_csv,
    max_drawdown,
    pretrain,
    run_baseline,
    sharpe,
    synth_series,
    total_return,
    train_step,
    volatility,
    write_csv,
)

__version__ = "0.1.0"

__all__ = [
    "AccountState",
    "Bar",
    "BufferConfig",
    "DayAggregate",
    "DualThrustParams",
    "Episode",
    "EpisodeStep",
    "IndicatorVector",
    "NetConfig",
    "PriceSeries",
    "PrioritizedBuffer",
    "QTAgent",
    "QtlabError",
    "SimConfig",
    "StepResult",
    "SynthParams",
    "TradingEnv",
    "TrainConfig",
    "action_agreement",
    "compute_metrics",
    "dual_thrust_lines",
    "dual_thrust_signal",
    "generate_demonstrations",
    "hindsight_expert",
    "load_csv",
    "max_drawdown",
    "pretrain",
    "run_baseline",
    "sharpe",
    "synth_series",
    "total_return",
    "train_step",
    "volatility",
    "write_csv",
]
