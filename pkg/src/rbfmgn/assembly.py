"""Per-level system assembly, residuals, and the classical direct stepper.

The heat-family discretization puts the stencil operator and the backward
time difference on the known level l and leaves the next level explicit:
interior row i of A holds alpha * w plus 1/tau on the diagonal, boundary rows
are identity rows. The level residual is

    r = A u_l - (1/tau) [u_hat; 0] - H_l + F_l

which vanishes exactly when u_hat is the explicit update of u_l. Wave systems
follow the same layout with a second-order time difference and mirror rows
instead of Dirichlet rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InstabilityError
from .geometry import NodeSet
from .problems import (
    ProblemSpec,
    analytic_solution,
    boundary_values,
    initial_condition,
    source_term,
)
from .stencils import StencilSet


def _check_layout(nodes: NodeSet, stencil_set: StencilSet) -> None:
    n_c = nodes.n_interior
    if stencil_set.n_stencils != n_c or not np.array_equal(
        stencil_set.centers, np.arange(n_c)
    ):
        raise ValueError(
            "stencil set must cover exactly the interior nodes 0..n_interior-1"
        )


def effective_diffusion(problem: ProblemSpec) -> float:
    """Coefficient on lap(u) in update form u_{l+1} = u_l + tau*(a*lap u + s).

    The sourced problem is stated as u_t + c*lap(u) + f = 0, so its diffusion
    enters with -c and its forcing with -f.
    """
    if problem.kind == "poisson_source":
        return -problem.coefficient
    return problem.coefficient


def update_forcing(problem: ProblemSpec, coords: np.ndarray, t: float) -> np.ndarray:
    """Forcing s in update form; see effective_diffusion."""
    if problem.kind == "poisson_source":
        return -source_term(problem, coords, t)
    return np.zeros(np.asarray(coords).shape[0])


@dataclass
class ResidualSystem:
    """One heat-family level: operator rows plus boundary and forcing data."""

    cols: np.ndarray
    vals: np.ndarray
    h_vec: np.ndarray
    f_vec: np.ndarray
    tau: float
    n_interior: int
    n: int
    level: int
    time: float

    def matvec(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = np.empty(self.n)
        out[: self.n_interior] = (self.vals * u[self.cols]).sum(axis=1)
        out[self.n_interior :] = u[self.n_interior :]
        return out


@dataclass
class WaveSystem:
    """One wave level: scaled stencil rows plus mirror pairs for the boundary."""

    cols: np.ndarray
    vals: np.ndarray
    mirror: np.ndarray
    tau: float
    n_interior: int
    n: int
    level: int
    time: float

    def matvec(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = np.empty(self.n)
        out[: self.n_interior] = (self.vals * u[self.cols]).sum(axis=1)
        out[self.n_interior :] = u[self.n_interior :]
        return out


def assemble_heat(
    nodes: NodeSet,
    stencil_set: StencilSet,
    problem: ProblemSpec,
    level: int,
) -> ResidualSystem:
    """Assemble the level-l system for heat_plain or poisson_source."""
    if problem.kind == "wave":
        raise ValueError("wave problems assemble through assemble_wave")
    _check_layout(nodes, stencil_set)
    n_c = nodes.n_interior
    n = nodes.n
    tau = problem.tau
    t_l = level * tau

    alpha = effective_diffusion(problem)
    vals = alpha * stencil_set.weights.copy()
    vals[:, 0] += 1.0 / tau

    h_vec = np.zeros(n)
    h_vec[n_c:] = boundary_values(problem, nodes.coords[n_c:], t_l)
    f_vec = np.zeros(n)
    f_vec[:n_c] = update_forcing(problem, nodes.coords[:n_c], t_l)

    return ResidualSystem(
        cols=stencil_set.neighbors,
        vals=vals,
        h_vec=h_vec,
        f_vec=f_vec,
        tau=tau,
        n_interior=n_c,
        n=n,
        level=level,
        time=t_l,
    )


def nearest_interior(nodes: NodeSet) -> np.ndarray:
    """For each boundary node, the index of its nearest interior node."""
    n_c = nodes.n_interior
    bnd = nodes.coords[n_c:]
    inn = nodes.coords[:n_c]
    d = np.hypot(
        bnd[:, 0][:, None] - inn[None, :, 0], bnd[:, 1][:, None] - inn[None, :, 1]
    )
    return np.argmin(d, axis=1)


def assemble_wave(
    nodes: NodeSet,
    stencil_set: StencilSet,
    problem: ProblemSpec,
    level: int,
) -> WaveSystem:
    """Assemble the level-l wave system with mirror boundary pairs."""
    if problem.kind != "wave":
        raise ValueError("assemble_wave only accepts wave problems")
    _check_layout(nodes, stencil_set)
    return WaveSystem(
        cols=stencil_set.neighbors,
        vals=problem.coefficient * stencil_set.weights,
        mirror=nearest_interior(nodes),
        tau=problem.tau,
        n_interior=nodes.n_interior,
        n=nodes.n,
        level=level,
        time=level * problem.tau,
    )


def residual(
    system: ResidualSystem, u_cur: np.ndarray, u_next_interior: np.ndarray
) -> np.ndarray:
    """Level residual; zero iff u_next_interior is the explicit update of u_cur."""
    u_cur = np.asarray(u_cur, dtype=float)
    u_next_interior = np.asarray(u_next_interior, dtype=float)
    if u_cur.shape != (system.n,):
        raise ValueError(f"u_cur must have shape ({system.n},)")
    if u_next_interior.shape != (system.n_interior,):
        raise ValueError(f"u_next_interior must have shape ({system.n_interior},)")
    r = system.matvec(u_cur) - system.h_vec + system.f_vec
    r[: system.n_interior] -= u_next_interior / system.tau
    return r


def wave_residual(
    system: WaveSystem,
    u_prev: np.ndarray,
    u_cur: np.ndarray,
    u_next_interior: np.ndarray,
) -> np.ndarray:
    """Second-order-in-time residual with mirror rows on the boundary."""
    u_prev = np.asarray(u_prev, dtype=float)
    u_cur = np.asarray(u_cur, dtype=float)
    u_next_interior = np.asarray(u_next_interior, dtype=float)
    n_c = system.n_interior
    tau2 = system.tau**2
    r = np.empty(system.n)
    r[:n_c] = (
        (system.vals * u_cur[system.cols]).sum(axis=1)
        - u_next_interior / tau2
        + (2.0 * u_cur[:n_c] - u_prev[:n_c]) / tau2
    )
    r[n_c:] = u_cur[n_c:] - u_cur[system.mirror]
    return r


def _check_finite(values: np.ndarray, level: int) -> None:
    if np.all(np.isfinite(values)):
        return
    raise InstabilityError(
        f"direct step at level {level} produced non-finite values; the time "
        f"step is too large for this node spacing (see stability_indicator)"
    )


def direct_step(system: ResidualSystem, u_cur: np.ndarray, problem: ProblemSpec,
                boundary_coords: np.ndarray) -> np.ndarray:
    """One explicit update: the unique u_next with zero interior residual.

    Boundary entries come from the Dirichlet data at the next time.
    """
    u_cur = np.asarray(u_cur, dtype=float)
    n_c = system.n_interior
    au = system.matvec(u_cur)
    u_next = np.empty(system.n)
    u_next[:n_c] = system.tau * (au[:n_c] + system.f_vec[:n_c])
    u_next[n_c:] = boundary_values(problem, boundary_coords, system.time + system.tau)
    _check_finite(u_next, system.level)
    return u_next


def wave_direct_step(
    system: WaveSystem, u_prev: np.ndarray, u_cur: np.ndarray
) -> np.ndarray:
    """One explicit second-order update; boundary copies its mirror node."""
    u_prev = np.asarray(u_prev, dtype=float)
    u_cur = np.asarray(u_cur, dtype=float)
    n_c = system.n_interior
    lap = (system.vals * u_cur[system.cols]).sum(axis=1)
    u_next = np.empty(system.n)
    u_next[:n_c] = 2.0 * u_cur[:n_c] - u_prev[:n_c] + system.tau**2 * lap
    u_next[n_c:] = u_next[system.mirror]
    _check_finite(u_next, system.level)
    return u_next


def stability_indicator(stencil_set: StencilSet, problem: ProblemSpec) -> float:
    """Dimensionless explicit-step size indicator; order one means trouble."""
    w = stencil_set.max_weight()
    if problem.kind == "wave":
        return problem.tau**2 * problem.coefficient * w
    return problem.tau * abs(effective_diffusion(problem)) * w


@dataclass
class Trajectory:
    """Field values at levels 0..L over a fixed node set."""

    values: np.ndarray
    times: np.ndarray
    provenance: str

    @property
    def n_levels(self) -> int:
        return self.values.shape[0] - 1


def analytic_trajectory(
    problem: ProblemSpec, nodes: NodeSet, n_levels: int | None = None
) -> Trajectory:
    levels = problem.n_levels if n_levels is None else n_levels
    times = problem.tau * np.arange(levels + 1)
    values = np.stack(
        [analytic_solution(problem, nodes.coords, float(t)) for t in times]
    )
    return Trajectory(values=values, times=times, provenance="analytic")


def rollout_direct(
    problem: ProblemSpec,
    nodes: NodeSet,
    stencil_set: StencilSet,
    n_levels: int | None = None,
) -> Trajectory:
    """Roll the classical explicit stepper from the initial condition."""
    levels = problem.n_levels if n_levels is None else n_levels
    n_c = nodes.n_interior
    u = initial_condition(problem, nodes.coords)
    out = [u]
    if problem.kind == "wave":
        u_prev = u.copy()
        for level in range(levels):
            system = assemble_wave(nodes, stencil_set, problem, level)
            u_next = wave_direct_step(system, u_prev, u)
            u_prev, u = u, u_next
            out.append(u)
    else:
        bnd = nodes.coords[n_c:]
        for level in range(levels):
            system = assemble_heat(nodes, stencil_set, problem, level)
            u = direct_step(system, u, problem, bnd)
            out.append(u)
    times = problem.tau * np.arange(levels + 1)
    return Trajectory(values=np.stack(out), times=times, provenance="direct")
