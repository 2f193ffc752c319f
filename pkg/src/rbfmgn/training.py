"""Physics-constrained training loop, autoregressive rollout, and metrics.

The objective never sees solution data at the predicted level: each batch
level contributes the L2 norm of the discrete update residual with the
network's prediction substituted for the unknown next (or, in time-reversed
mode, previous) snapshot. Training data are teacher-forced snapshots from
the analytic solution when one exists, otherwise from the classical direct
stepper.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .assembly import (
    ResidualSystem,
    Trajectory,
    WaveSystem,
    analytic_trajectory,
    assemble_heat,
    assemble_wave,
    nearest_interior,
    rollout_direct,
)
from .errors import ConfigurationError, DivergenceError
from .geometry import Graph, NodeSet
from .gnn import (
    AdamState,
    GnnModel,
    adam_step,
    clear_grads,
    predict_next,
)
from .problems import ProblemSpec, boundary_values, initial_condition
from .stencils import StencilSet

__all__ = [
    "TrainConfig",
    "TrainResult",
    "batch_levels",
    "first_trainable_level",
    "max_abs_error",
    "pde_loss",
    "relative_l2",
    "rollout_model",
    "rollout_model_reversed",
    "teacher_trajectory",
    "train",
    "trainable_levels",
]

DIVERGENCE_FACTOR = 1e6


@dataclass
class TrainConfig:
    """Knobs for the optimizer loop; defaults follow the reference recipe."""

    iterations: int = 200
    batch_size: int = 5
    learning_rate: float = 1e-3
    time_reversed: bool = False
    divergence_factor: float = DIVERGENCE_FACTOR

    def __post_init__(self) -> None:
        if self.iterations < 0:
            raise ConfigurationError("iterations must be >= 0")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if not self.learning_rate > 0.0:
            raise ConfigurationError("learning_rate must be positive")


@dataclass
class TrainResult:
    history: list[float]
    state: AdamState


def teacher_trajectory(
    problem: ProblemSpec,
    nodes: NodeSet,
    stencil_set: StencilSet | None = None,
    n_levels: int | None = None,
) -> Trajectory:
    """Snapshots used as teacher-forced inputs: analytic when available."""
    if problem.has_analytic:
        return analytic_trajectory(problem, nodes, n_levels)
    if stencil_set is None:
        raise ConfigurationError(
            "problem has no closed-form solution; a stencil set is required "
            "to generate teacher snapshots with the direct stepper"
        )
    return rollout_direct(problem, nodes, stencil_set, n_levels)


def assemble_all(
    nodes: NodeSet,
    stencil_set: StencilSet,
    problem: ProblemSpec,
    n_levels: int,
) -> list[ResidualSystem | WaveSystem]:
    """One per-level system for levels 0..n_levels-1."""
    if problem.kind == "wave":
        return [
            assemble_wave(nodes, stencil_set, problem, level)
            for level in range(n_levels)
        ]
    return [
        assemble_heat(nodes, stencil_set, problem, level)
        for level in range(n_levels)
    ]


def model_inputs(
    trajectory_values: np.ndarray,
    level: int,
    wave: bool,
    time_reversed: bool,
) -> list[np.ndarray]:
    """Teacher-forced snapshots the network sees when predicting level+1.

    Wave inputs carry the current and previous snapshots (the level-0 input
    repeats the at-rest start). Time-reversed mode feeds the later snapshot
    and asks for the earlier one.
    """
    if wave:
        if time_reversed:
            raise ConfigurationError("time-reversed training supports heat kinds only")
        prev = trajectory_values[level - 1] if level > 0 else trajectory_values[0]
        return [trajectory_values[level], prev]
    if time_reversed:
        return [trajectory_values[level + 1]]
    return [trajectory_values[level]]


def _heat_level_norm(
    system: ResidualSystem,
    u_levels: np.ndarray,
    pred_flat: ad.Tensor,
    time_reversed: bool,
) -> ad.Tensor:
    """L2 norm of the level residual with the prediction substituted in."""
    n_c = system.n_interior
    level = system.level
    if time_reversed:
        # The prediction plays the earlier snapshot inside the operator;
        # its boundary entries are the known Dirichlet data.
        u_hat = ad.concat(
            [pred_flat, ad.Tensor(system.h_vec[n_c:])], axis=0
        )
        op_rows = ad.stencil_matvec(system.vals, system.cols, u_hat)
        const = (
            -system.h_vec[:n_c]
            + system.f_vec[:n_c]
            - u_levels[level + 1][:n_c] / system.tau
        )
        r_int = ad.add(op_rows, ad.Tensor(const))
        bnd_sq = 0.0  # identity rows minus the same Dirichlet data
    else:
        full = system.matvec(u_levels[level]) - system.h_vec + system.f_vec
        r_int = ad.sub(ad.Tensor(full[:n_c]), ad.scale(pred_flat, 1.0 / system.tau))
        bnd_sq = float((full[n_c:] ** 2).sum())
    sq = ad.tensor_sum(ad.square(r_int))
    return ad.sqrt(ad.add(sq, ad.Tensor(bnd_sq)))


def _wave_level_norm(
    system: WaveSystem, u_levels: np.ndarray, pred_flat: ad.Tensor
) -> ad.Tensor:
    n_c = system.n_interior
    level = system.level
    u_cur = u_levels[level]
    u_prev = u_levels[level - 1] if level > 0 else u_levels[0]
    tau2 = system.tau**2
    const = (system.vals * u_cur[system.cols]).sum(axis=1) + (
        2.0 * u_cur[:n_c] - u_prev[:n_c]
    ) / tau2
    r_int = ad.sub(ad.Tensor(const), ad.scale(pred_flat, 1.0 / tau2))
    bnd = u_cur[n_c:] - u_cur[system.mirror]
    sq = ad.tensor_sum(ad.square(r_int))
    return ad.sqrt(ad.add(sq, ad.Tensor(float((bnd**2).sum()))))


def pde_loss(
    model: GnnModel | None,
    graph: Graph,
    systems: list[ResidualSystem | WaveSystem],
    trajectory: Trajectory,
    levels: list[int],
    time_reversed: bool = False,
    inject: dict[int, np.ndarray] | None = None,
) -> ad.Tensor:
    """Mean over batch levels of the residual norm with predictions in place.

    ``inject`` substitutes given interior values for the network output at a
    level (used to check that exact update values zero the objective).
    """
    if not levels:
        raise ValueError("pde_loss needs at least one level")
    n_c = graph.n_interior
    values = trajectory.values
    total: ad.Tensor | None = None
    for level in levels:
        system = systems[level]
        wave = isinstance(system, WaveSystem)
        if inject is not None and level in inject:
            pred_flat = ad.Tensor(np.asarray(inject[level], dtype=float))
        else:
            snaps = model_inputs(values, level, wave, time_reversed)
            pred = predict_next(model, graph, snaps, n_c)
            pred_flat = ad.reshape(pred, (n_c,))
        if pred_flat.value.shape != (n_c,):
            raise ValueError("prediction must cover exactly the interior nodes")
        if wave:
            norm = _wave_level_norm(system, values, pred_flat)
        elif time_reversed:
            norm = _heat_level_norm(system, values, pred_flat, True)
        else:
            norm = _heat_level_norm(system, values, pred_flat, False)
        if not np.isfinite(norm.value):
            raise DivergenceError(f"residual norm is non-finite at level {level}")
        total = norm if total is None else ad.add(total, norm)
    return ad.scale(total, 1.0 / len(levels))


def trainable_levels(trajectory: Trajectory) -> int:
    """Number of level pairs (l, l+1) the trajectory supports."""
    return trajectory.values.shape[0] - 1


def first_trainable_level(problem: ProblemSpec) -> int:
    """First level whose residual has all its inputs available.

    Wave residuals read two prior snapshots, so the pair (0 -> 1) is driven
    by the direct stepper's zero-velocity start instead of the loss.
    """
    return 1 if problem.kind == "wave" else 0


def batch_levels(iteration: int, n_pairs: int, batch_size: int) -> list[int]:
    """Deterministic batch of consecutive levels, cycling over the horizon."""
    if n_pairs <= batch_size:
        return list(range(n_pairs))
    n_windows = n_pairs - batch_size + 1
    start = (iteration * batch_size) % n_windows
    return list(range(start, start + batch_size))


def train(
    model: GnnModel,
    graph: Graph,
    nodes: NodeSet,
    stencil_set: StencilSet,
    problem: ProblemSpec,
    trajectory: Trajectory,
    config: TrainConfig,
    state: AdamState | None = None,
) -> TrainResult:
    """Optimize the model against the discrete residual over the trajectory.

    Returns one loss value per iteration. A non-finite loss, or one beyond
    ``divergence_factor`` times the first, aborts with the partial history
    attached to the raised error.
    """
    # The wave residual needs two genuine prior snapshots, so its first
    # usable level pair is (1 -> 2); heat problems start at (0 -> 1).
    start_level = first_trainable_level(problem)
    n_pairs = trainable_levels(trajectory) - start_level
    if n_pairs < 1:
        raise ConfigurationError("trajectory must span at least one level pair")
    systems = assemble_all(nodes, stencil_set, problem, start_level + n_pairs)
    if state is None:
        state = AdamState.for_model(model, lr=config.learning_rate)
    history: list[float] = []
    initial: float | None = None
    for it in range(config.iterations):
        levels = [
            start_level + lvl
            for lvl in batch_levels(it, n_pairs, config.batch_size)
        ]
        clear_grads(model)
        try:
            loss = pde_loss(
                model, graph, systems, trajectory, levels,
                time_reversed=config.time_reversed,
            )
        except DivergenceError as exc:
            exc.history = history  # type: ignore[attr-defined]
            raise
        value = float(loss.value)
        history.append(value)
        if initial is None:
            initial = value
        if not np.isfinite(value) or (
            initial > 0.0 and value > config.divergence_factor * initial
        ):
            err = DivergenceError(
                f"loss {value:.6g} at iteration {it} exceeds "
                f"{config.divergence_factor:g} times the initial {initial:.6g}"
            )
            err.history = history  # type: ignore[attr-defined]
            raise err
        loss.backward()
        adam_step(model, state)
    return TrainResult(history=history, state=state)


def rollout_model(
    model: GnnModel,
    graph: Graph,
    nodes: NodeSet,
    problem: ProblemSpec,
    n_levels: int,
    start: np.ndarray | None = None,
) -> Trajectory:
    """Autoregressive prediction from the initial state.

    Heat-family boundaries are overwritten with the Dirichlet data at each
    new time; wave boundaries copy their nearest interior node, matching the
    direct stepper.
    """
    n_c = graph.n_interior
    coords_bnd = graph.coords[n_c:]
    u = (
        np.asarray(start, dtype=float)
        if start is not None
        else initial_condition(problem, graph.coords)
    )
    if u.shape != (graph.n,):
        raise ValueError(f"start must have shape ({graph.n},)")
    values = [u]
    wave = problem.kind == "wave"
    if wave:
        mirror = nearest_interior(nodes)
        u_prev = u.copy()
    for level in range(n_levels):
        if wave:
            pred = predict_next(model, graph, [u, u_prev], n_c)
        else:
            pred = predict_next(model, graph, [u], n_c)
        u_next = np.empty(graph.n)
        u_next[:n_c] = pred.value.ravel()
        if wave:
            u_next[n_c:] = u_next[mirror]
        else:
            u_next[n_c:] = boundary_values(
                problem, coords_bnd, (level + 1) * problem.tau
            )
        if not np.all(np.isfinite(u_next)):
            raise DivergenceError(
                f"model rollout produced non-finite values at level {level + 1}"
            )
        if wave:
            u_prev = u
        u = u_next
        values.append(u)
    times = problem.tau * np.arange(n_levels + 1)
    return Trajectory(
        values=np.stack(values), times=times, provenance="predicted"
    )


def rollout_model_reversed(
    model: GnnModel,
    graph: Graph,
    problem: ProblemSpec,
    n_levels: int,
    start: np.ndarray,
) -> Trajectory:
    """Reconstruct earlier states from the final one (time-reversed models).

    ``start`` is the snapshot at level ``n_levels``; predictions walk down to
    level 0 with boundaries overwritten by the Dirichlet data of their time.
    """
    if problem.kind == "wave":
        raise ConfigurationError("time-reversed rollout supports heat kinds only")
    n_c = graph.n_interior
    coords_bnd = graph.coords[n_c:]
    u = np.asarray(start, dtype=float)
    if u.shape != (graph.n,):
        raise ValueError(f"start must have shape ({graph.n},)")
    values = [u]
    for level in range(n_levels, 0, -1):
        pred = predict_next(model, graph, [u], n_c)
        u_prev = np.empty(graph.n)
        u_prev[:n_c] = pred.value.ravel()
        u_prev[n_c:] = boundary_values(problem, coords_bnd, (level - 1) * problem.tau)
        if not np.all(np.isfinite(u_prev)):
            raise DivergenceError(
                f"model rollout produced non-finite values at level {level - 1}"
            )
        u = u_prev
        values.append(u)
    values.reverse()
    times = problem.tau * np.arange(n_levels + 1)
    return Trajectory(values=np.stack(values), times=times, provenance="predicted")


def relative_l2(pred: np.ndarray, truth: np.ndarray) -> float:
    """Euclidean error norm over the reference norm."""
    pred = np.asarray(pred, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if pred.shape != truth.shape:
        raise ValueError("prediction and reference must have the same shape")
    diff = float(np.sqrt(((pred - truth) ** 2).sum()))
    denom = float(np.sqrt((truth**2).sum()))
    if denom == 0.0:
        raise ValueError(
            f"reference field has zero norm; absolute error norm is {diff:.17g}"
        )
    return diff / denom


def max_abs_error(pred: np.ndarray, truth: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if pred.shape != truth.shape:
        raise ValueError("prediction and reference must have the same shape")
    return float(np.abs(pred - truth).max())
