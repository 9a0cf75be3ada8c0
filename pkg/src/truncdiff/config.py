"""Run configuration: every tunable in one JSON document.

Unknown keys are rejected at every level; missing keys take the defaults
below.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ConfigError


@dataclass
class ScheduleSection:
    total_steps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    trunc_fraction: float = 0.05


@dataclass
class AnchorSection:
    K: int = 32
    n_restarts: int = 10
    max_iters: int = 100


@dataclass
class CascadeSection:
    n_stages: int = 2
    hidden: int = 64
    t_embed: int = 16
    t_embed_raw: int = 16
    horizon: int = 8


@dataclass
class TrainSection:
    epochs: int = 150
    batch_size: int = 16
    learning_rate: float = 1e-3
    lr_schedule: str = "cosine"
    lr_floor: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    lambda_rec: float = 1.0
    lambda_cls: float = 1.0
    deep_supervision: bool = True
    diffuse_source: str = "anchor"
    rec_anchors: str = "positive"
    vanilla_samples: int = 16
    label_threshold: float = 0.5


@dataclass
class PolicySection:
    traj_scale: float = 10.0
    n_steps: int = 2
    vanilla_steps: int = 20
    vanilla_samples: int = 32


@dataclass
class DataSection:
    n_train: int = 500
    n_eval: int = 100
    dt: float = 0.5


@dataclass
class EvalSection:
    coverage_threshold: float = 0.5
    diversity: str = "final"  # or "path"


@dataclass
class BenchSection:
    scenes: int = 50


@dataclass
class PathSection:
    corpus: str = "data/corpus.jsonl"
    model: str = "out/truncated.tdp"
    baseline_model: str = "out/vanilla.tdp"
    report: str = "out/report.json"


@dataclass
class RunConfig:
    seed: int = 42
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    anchors: AnchorSection = field(default_factory=AnchorSection)
    cascade: CascadeSection = field(default_factory=CascadeSection)
    train: TrainSection = field(default_factory=TrainSection)
    policy: PolicySection = field(default_factory=PolicySection)
    data: DataSection = field(default_factory=DataSection)
    eval: EvalSection = field(default_factory=EvalSection)
    bench: BenchSection = field(default_factory=BenchSection)
    paths: PathSection = field(default_factory=PathSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        cfg = _build(cls, d, "")
        validate(cfg)
        return cfg


def _check_type(value, ftype, where: str):
    if ftype is bool or ftype == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean, got {value!r}")
        return value
    if ftype is int or ftype == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if ftype is float or ftype == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if ftype is str or ftype == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{where}: unsupported field type {ftype!r}")


def _build(cls, d, prefix: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{prefix or 'config'}: expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - set(fields))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(prefix + k for k in unknown)}")
    kwargs = {}
    for name, value in d.items():
        f = fields[name]
        where = prefix + name
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else None
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, where + ".")
        else:
            kwargs[name] = _check_type(value, f.type, where)
    return cls(**kwargs)


def validate(cfg: RunConfig) -> None:
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    s = cfg.schedule
    need(s.total_steps >= 2, "schedule.total_steps must be >= 2")
    need(0 < s.beta_start <= s.beta_end < 1, "need 0 < schedule.beta_start <= schedule.beta_end < 1")
    need(0 < s.trunc_fraction <= 1 and s.trunc_fraction * s.total_steps >= 1, "schedule.trunc_fraction out of range")
    need(cfg.anchors.K >= 1 and cfg.anchors.n_restarts >= 1 and cfg.anchors.max_iters >= 1, "anchors.* must be positive")
    c = cfg.cascade
    need(min(c.n_stages, c.hidden, c.t_embed, c.t_embed_raw, c.horizon) >= 1, "cascade.* must be positive")
    need(c.hidden % 2 == 0 and c.t_embed_raw % 2 == 0, "cascade.hidden and cascade.t_embed_raw must be even")
    t = cfg.train
    need(t.epochs >= 0 and t.batch_size >= 1 and t.vanilla_samples >= 1, "train counts out of range")
    need(t.learning_rate > 0 and t.adam_eps > 0, "train.learning_rate and train.adam_eps must be > 0")
    need(t.lr_schedule in ("constant", "cosine"), "train.lr_schedule must be 'constant' or 'cosine'")
    need(t.diffuse_source in ("anchor", "gt"), "train.diffuse_source must be 'anchor' or 'gt'")
    need(t.rec_anchors in ("positive", "all"), "train.rec_anchors must be 'positive' or 'all'")
    p = cfg.policy
    need(p.traj_scale > 0, "policy.traj_scale must be > 0")
    need(1 <= p.n_steps <= max(1, round(s.trunc_fraction * s.total_steps)), "policy.n_steps exceeds the truncated range")
    need(1 <= p.vanilla_steps <= s.total_steps and p.vanilla_samples >= 1, "policy.vanilla_* out of range")
    need(cfg.data.n_train >= 0 and cfg.data.n_eval >= 0 and cfg.data.dt > 0, "data.* out of range")
    need(cfg.eval.coverage_threshold > 0, "eval.coverage_threshold must be > 0")
    need(cfg.eval.diversity in ("final", "path"), "eval.diversity must be 'final' or 'path'")
    need(cfg.bench.scenes >= 1, "bench.scenes must be >= 1")


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e.msg} at line {e.lineno})") from None
    return RunConfig.from_dict(data)
