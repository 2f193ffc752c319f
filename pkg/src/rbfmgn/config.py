"""Run configuration: a single fail-closed JSON file drives every command.

Unknown keys are rejected at every nesting level so that typos in sweep
scripts surface as configuration errors instead of silently running with
defaults.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .geometry import DomainSpec, mesh_domain
from .problems import PROBLEM_KINDS, ProblemSpec, problem_from_config
from .stencils import KERNEL_KINDS, RbfKernel
from .training import TrainConfig

__all__ = [
    "EvalSection",
    "ModelSection",
    "RbfSection",
    "RunConfig",
    "SweepSection",
    "TrainSection",
    "config_digest",
    "load_config",
    "parse_config",
]

SWEEP_PARAMETERS = ("tau", "lambda", "epsilon", "n", "m")


def _reject_extras(obj: dict, allowed: set[str], context: str) -> None:
    extras = sorted(set(obj) - allowed)
    if extras:
        raise ConfigurationError(
            f"{context}: unknown key(s) {', '.join(repr(k) for k in extras)}"
        )


def _require(obj: dict, key: str, context: str):
    if key not in obj:
        raise ConfigurationError(f"{context}: missing required key {key!r}")
    return obj[key]


def _as_number(value, context: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{context}: expected a number, got {value!r}")
    return float(value)


def _as_int(value, context: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigurationError(f"{context}: expected an integer, got {value!r}")
    return int(value)


def _as_bool(value, context: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigurationError(f"{context}: expected true/false, got {value!r}")
    return value


def _as_str(value, context: str) -> str:
    if not isinstance(value, str):
        raise ConfigurationError(f"{context}: expected a string, got {value!r}")
    return value


@dataclass
class RbfSection:
    kind: str = "ph3"
    epsilon: float = 1.0
    m: int = 15
    poly_order: int = 2

    def kernel(self) -> RbfKernel:
        return RbfKernel(self.kind, self.epsilon)


@dataclass
class ModelSection:
    latent_dim: int = 64
    blocks: int = 8
    hidden: int = 64


@dataclass
class TrainSection:
    iterations: int = 200
    batch_size: int = 5
    learning_rate: float = 1e-3
    t_train: float | None = None
    seed: int | None = None
    time_reversed: bool = False
    resume: str | None = None

    def to_train_config(self) -> TrainConfig:
        return TrainConfig(
            iterations=self.iterations,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            time_reversed=self.time_reversed,
        )


@dataclass
class SweepSection:
    parameter: str
    values: list[float]


@dataclass
class EvalSection:
    times: list[float] = field(default_factory=list)
    sweep: SweepSection | None = None


@dataclass
class RunConfig:
    kind: str
    coefficient: float
    domain: DomainSpec
    tau: float
    t_final: float
    n_interior: int
    n_boundary: int
    seed: int
    rbf: RbfSection
    model: ModelSection
    train: TrainSection
    eval: EvalSection

    def problem(self) -> ProblemSpec:
        return problem_from_config(
            self.kind, self.coefficient, self.domain, self.tau, self.t_final
        )

    def mesh(self):
        return mesh_domain(self.domain, self.n_interior, self.n_boundary, self.seed)

    @property
    def t_train(self) -> float:
        return self.train.t_train if self.train.t_train is not None else self.t_final

    @property
    def n_train_levels(self) -> int:
        return int(round(self.t_train / self.tau))

    @property
    def n_total_levels(self) -> int:
        return int(round(self.t_final / self.tau))

    @property
    def model_seed(self) -> int:
        return self.train.seed if self.train.seed is not None else self.seed

    @property
    def node_in(self) -> int:
        # field snapshot(s) plus the interior/boundary one-hot pair
        return 4 if self.kind == "wave" else 3


def _parse_domain(obj, context: str) -> DomainSpec:
    if not isinstance(obj, dict):
        raise ConfigurationError(f"{context}: expected an object")
    _reject_extras(obj, {"kind", "params"}, context)
    kind = _as_str(_require(obj, "kind", context), f"{context}.kind")
    params = obj.get("params", {})
    if not isinstance(params, dict):
        raise ConfigurationError(f"{context}.params: expected an object")
    if kind == "polygon":
        _reject_extras(params, {"vertices"}, f"{context}.params")
        verts = params.get("vertices")
        if not isinstance(verts, list):
            raise ConfigurationError(
                f"{context}.params.vertices: expected a list of [x, y] pairs"
            )
        params = {"vertices": np.asarray(verts, dtype=float)}
    else:
        _reject_extras(params, set(), f"{context}.params")
    return DomainSpec(kind, params)


def _parse_rbf(obj, context: str) -> RbfSection:
    if not isinstance(obj, dict):
        raise ConfigurationError(f"{context}: expected an object")
    _reject_extras(obj, {"kind", "epsilon", "m", "poly_order"}, context)
    kind = _as_str(_require(obj, "kind", context), f"{context}.kind")
    if kind not in KERNEL_KINDS:
        raise ConfigurationError(
            f"{context}.kind: {kind!r} is not one of {KERNEL_KINDS}"
        )
    section = RbfSection(
        kind=kind,
        epsilon=_as_number(_require(obj, "epsilon", context), f"{context}.epsilon"),
        m=_as_int(_require(obj, "m", context), f"{context}.m"),
        poly_order=_as_int(obj.get("poly_order", 2), f"{context}.poly_order"),
    )
    if section.m < 1:
        raise ConfigurationError(f"{context}.m: must be >= 1")
    if section.poly_order < 0:
        raise ConfigurationError(f"{context}.poly_order: must be >= 0")
    return section


def _parse_model(obj, context: str) -> ModelSection:
    if not isinstance(obj, dict):
        raise ConfigurationError(f"{context}: expected an object")
    _reject_extras(obj, {"latent_dim", "blocks", "hidden"}, context)
    section = ModelSection(
        latent_dim=_as_int(obj.get("latent_dim", 64), f"{context}.latent_dim"),
        blocks=_as_int(obj.get("blocks", 8), f"{context}.blocks"),
        hidden=_as_int(obj.get("hidden", 64), f"{context}.hidden"),
    )
    for name in ("latent_dim", "blocks", "hidden"):
        if getattr(section, name) < 1:
            raise ConfigurationError(f"{context}.{name}: must be >= 1")
    return section


def _parse_train(obj, context: str) -> TrainSection:
    if not isinstance(obj, dict):
        raise ConfigurationError(f"{context}: expected an object")
    allowed = {
        "iterations", "batch_size", "learning_rate", "t_train",
        "seed", "time_reversed", "resume",
    }
    _reject_extras(obj, allowed, context)
    section = TrainSection(
        iterations=_as_int(obj.get("iterations", 200), f"{context}.iterations"),
        batch_size=_as_int(obj.get("batch_size", 5), f"{context}.batch_size"),
        learning_rate=_as_number(
            obj.get("learning_rate", 1e-3), f"{context}.learning_rate"
        ),
        t_train=(
            None
            if obj.get("t_train") is None
            else _as_number(obj["t_train"], f"{context}.t_train")
        ),
        seed=(
            None
            if obj.get("seed") is None
            else _as_int(obj["seed"], f"{context}.seed")
        ),
        time_reversed=_as_bool(
            obj.get("time_reversed", False), f"{context}.time_reversed"
        ),
        resume=(
            None
            if obj.get("resume") is None
            else _as_str(obj["resume"], f"{context}.resume")
        ),
    )
    if section.iterations < 0:
        raise ConfigurationError(f"{context}.iterations: must be >= 0")
    if section.batch_size < 1:
        raise ConfigurationError(f"{context}.batch_size: must be >= 1")
    if not section.learning_rate > 0.0:
        raise ConfigurationError(f"{context}.learning_rate: must be positive")
    if section.t_train is not None and not section.t_train > 0.0:
        raise ConfigurationError(f"{context}.t_train: must be positive")
    return section


def _parse_eval(obj, context: str) -> EvalSection:
    if not isinstance(obj, dict):
        raise ConfigurationError(f"{context}: expected an object")
    _reject_extras(obj, {"times", "sweep"}, context)
    times_raw = obj.get("times", [])
    if not isinstance(times_raw, list):
        raise ConfigurationError(f"{context}.times: expected a list of numbers")
    times = [
        _as_number(t, f"{context}.times[{i}]") for i, t in enumerate(times_raw)
    ]
    sweep = None
    if "sweep" in obj and obj["sweep"] is not None:
        sobj = obj["sweep"]
        if not isinstance(sobj, dict):
            raise ConfigurationError(f"{context}.sweep: expected an object")
        _reject_extras(sobj, {"parameter", "values"}, f"{context}.sweep")
        parameter = _as_str(
            _require(sobj, "parameter", f"{context}.sweep"),
            f"{context}.sweep.parameter",
        )
        if parameter not in SWEEP_PARAMETERS:
            raise ConfigurationError(
                f"{context}.sweep.parameter: {parameter!r} is not one of "
                f"{SWEEP_PARAMETERS}"
            )
        values_raw = _require(sobj, "values", f"{context}.sweep")
        if not isinstance(values_raw, list) or not values_raw:
            raise ConfigurationError(
                f"{context}.sweep.values: expected a non-empty list"
            )
        values = [
            _as_number(v, f"{context}.sweep.values[{i}]")
            for i, v in enumerate(values_raw)
        ]
        sweep = SweepSection(parameter=parameter, values=values)
    return EvalSection(times=times, sweep=sweep)


TOP_LEVEL_KEYS = {
    "kind", "coefficient", "domain", "tau", "T_final",
    "n_interior", "n_boundary", "seed", "rbf", "model", "train", "eval",
}


def parse_config(obj: dict) -> RunConfig:
    if not isinstance(obj, dict):
        raise ConfigurationError("config root: expected a JSON object")
    _reject_extras(obj, TOP_LEVEL_KEYS, "config root")
    kind = _as_str(_require(obj, "kind", "config root"), "kind")
    if kind not in PROBLEM_KINDS:
        raise ConfigurationError(f"kind: {kind!r} is not one of {PROBLEM_KINDS}")
    cfg = RunConfig(
        kind=kind,
        coefficient=_as_number(
            _require(obj, "coefficient", "config root"), "coefficient"
        ),
        domain=_parse_domain(_require(obj, "domain", "config root"), "domain"),
        tau=_as_number(_require(obj, "tau", "config root"), "tau"),
        t_final=_as_number(_require(obj, "T_final", "config root"), "T_final"),
        n_interior=_as_int(
            _require(obj, "n_interior", "config root"), "n_interior"
        ),
        n_boundary=_as_int(
            _require(obj, "n_boundary", "config root"), "n_boundary"
        ),
        seed=_as_int(_require(obj, "seed", "config root"), "seed"),
        rbf=_parse_rbf(_require(obj, "rbf", "config root"), "rbf"),
        model=_parse_model(obj.get("model", {}), "model"),
        train=_parse_train(obj.get("train", {}), "train"),
        eval=_parse_eval(obj.get("eval", {}), "eval"),
    )
    if not cfg.tau > 0.0:
        raise ConfigurationError("tau: must be positive")
    if not cfg.t_final > 0.0:
        raise ConfigurationError("T_final: must be positive")
    if cfg.n_interior < 3 or cfg.n_boundary < 3:
        raise ConfigurationError("n_interior and n_boundary must each be >= 3")
    if cfg.t_train > cfg.t_final + 1e-12:
        raise ConfigurationError("train.t_train: must not exceed T_final")
    # constructing the problem validates coefficient/kind combinations early
    cfg.problem()
    return cfg


def load_config(path: str) -> tuple[RunConfig, bytes]:
    """Parse the file and return the config plus its exact bytes (for hashing)."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path!r}: {exc}") from exc
    try:
        obj = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"config {path!r} is not valid JSON: {exc}") from exc
    return parse_config(obj), raw


def config_digest(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()
