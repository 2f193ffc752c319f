"""Problem catalog: governing equations, analytic solutions, and field data.

Three problem kinds are supported. ``heat_plain`` evolves u_t = c * lap(u).
``poisson_source`` evolves u_t + c * lap(u) + f = 0 with the fixed polynomial
source f = -3 - 2c(x + y), which makes u = x y^2 + y x^2 + 3t exact on the
unit square for every c. ``wave`` evolves u_tt = c * lap(u) from a Gaussian
displacement at rest, with no closed-form solution.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError, RbfMgnError
from .geometry import DomainSpec

PROBLEM_KINDS = ("heat_plain", "poisson_source", "wave")

AnalyticFn = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


class MissingAnalyticError(RbfMgnError):
    """The problem has no closed-form solution to evaluate."""


@dataclass(frozen=True)
class ProblemSpec:
    """One evolution problem on one domain.

    ``analytic`` doubles as initial and Dirichlet boundary data when present.
    Wave problems carry an ``initial_displacement`` instead and use
    mirror boundary handling downstream, so they have no Dirichlet data here.
    """

    kind: str
    coefficient: float
    domain: DomainSpec
    tau: float
    t_final: float
    analytic: AnalyticFn | None = None
    initial_displacement: AnalyticFn | None = None
    name: str = ""

    def __post_init__(self) -> None:
        if self.kind not in PROBLEM_KINDS:
            raise ConfigurationError(f"unknown problem kind {self.kind!r}")
        if not self.tau > 0.0:
            raise ConfigurationError("tau must be positive")
        if not self.t_final > 0.0:
            raise ConfigurationError("t_final must be positive")
        if self.kind != "wave" and not self.coefficient > 0.0:
            raise ConfigurationError("diffusion coefficient must be positive")
        if self.kind == "wave" and not self.coefficient > 0.0:
            raise ConfigurationError("wave speed coefficient must be positive")

    @property
    def has_analytic(self) -> bool:
        return self.analytic is not None

    @property
    def n_levels(self) -> int:
        """Number of time steps from t=0 to t_final at step tau."""
        return int(round(self.t_final / self.tau))


@dataclass
class FieldSnapshot:
    """Per-node field values at one time level."""

    values: np.ndarray
    time: float
    level: int


def analytic_solution(problem: ProblemSpec, coords: np.ndarray, t: float) -> np.ndarray:
    if problem.analytic is None:
        raise MissingAnalyticError(
            f"problem {problem.name or problem.kind!r} has no analytic solution"
        )
    coords = np.asarray(coords, dtype=float)
    return np.asarray(problem.analytic(coords[:, 0], coords[:, 1], t), dtype=float)


def initial_condition(problem: ProblemSpec, coords: np.ndarray) -> np.ndarray:
    coords = np.asarray(coords, dtype=float)
    if problem.analytic is not None:
        return analytic_solution(problem, coords, 0.0)
    if problem.initial_displacement is not None:
        return np.asarray(
            problem.initial_displacement(coords[:, 0], coords[:, 1], 0.0), dtype=float
        )
    raise MissingAnalyticError(
        f"problem {problem.name or problem.kind!r} has neither analytic solution "
        f"nor initial displacement"
    )


def boundary_values(problem: ProblemSpec, coords: np.ndarray, t: float) -> np.ndarray:
    """Dirichlet data at the given (boundary) coordinates."""
    if problem.kind == "wave":
        raise MissingAnalyticError(
            "wave problems use mirror boundary handling, not Dirichlet data"
        )
    return analytic_solution(problem, coords, t)


def source_term(problem: ProblemSpec, coords: np.ndarray, t: float) -> np.ndarray:
    """The stated source f; zero for kinds without one."""
    coords = np.asarray(coords, dtype=float)
    if problem.kind == "poisson_source":
        c = problem.coefficient
        return -3.0 - 2.0 * c * (coords[:, 0] + coords[:, 1])
    return np.zeros(coords.shape[0])


def _square_analytic(x: np.ndarray, y: np.ndarray, t: float) -> np.ndarray:
    return x * y**2 + y * x**2 + 3.0 * t


def _amoeba_analytic(lam: float) -> AnalyticFn:
    def fn(x: np.ndarray, y: np.ndarray, t: float) -> np.ndarray:
        return lam * np.exp(-lam * t) * (np.cos(x) + np.cos(y))

    return fn


def _butterfly_analytic(x: np.ndarray, y: np.ndarray, t: float) -> np.ndarray:
    qx = np.pi * x / 2.0 - np.pi / 4.0
    qy = np.pi * y / 2.0 - np.pi / 4.0
    return np.exp(-np.pi**2 * t / 4.0) * (y * np.sin(qx) + x * np.sin(qy))


def _gaussian_bump(x: np.ndarray, y: np.ndarray, t: float) -> np.ndarray:
    return np.exp(-8.0 * ((x - 1.0) ** 2 + (y - 1.0) ** 2))


def square_source_problem(
    gamma: float = 1.0, tau: float = 0.01, t_final: float = 1.0
) -> ProblemSpec:
    """Sourced evolution on the unit square with a polynomial exact solution."""
    return ProblemSpec(
        kind="poisson_source",
        coefficient=gamma,
        domain=DomainSpec("unit_square"),
        tau=tau,
        t_final=t_final,
        analytic=_square_analytic,
        name="square_source",
    )


def amoeba_heat_problem(
    lam: float = 1.0, tau: float = 0.01, t_final: float = 2.0
) -> ProblemSpec:
    """Heat flow on the amoeba domain; solution decays like exp(-lam t)."""
    return ProblemSpec(
        kind="heat_plain",
        coefficient=lam,
        domain=DomainSpec("amoeba"),
        tau=tau,
        t_final=t_final,
        analytic=_amoeba_analytic(lam),
        name="amoeba_heat",
    )


def butterfly_heat_problem(tau: float = 0.01, t_final: float = 1.0) -> ProblemSpec:
    """Unit-coefficient heat flow on the butterfly domain."""
    return ProblemSpec(
        kind="heat_plain",
        coefficient=1.0,
        domain=DomainSpec("butterfly"),
        tau=tau,
        t_final=t_final,
        analytic=_butterfly_analytic,
        name="butterfly_heat",
    )


def lshape_wave_problem(
    d: float = 1e-6, tau: float = 0.1, t_final: float = 3.0
) -> ProblemSpec:
    """Slow wave on the L-shaped domain from a Gaussian bump at rest."""
    return ProblemSpec(
        kind="wave",
        coefficient=d,
        domain=DomainSpec("l_shape"),
        tau=tau,
        t_final=t_final,
        analytic=None,
        initial_displacement=_gaussian_bump,
        name="lshape_wave",
    )


def attach_analytic(
    kind: str, domain: DomainSpec, coefficient: float
) -> AnalyticFn | None:
    """Closed-form solution for (kind, domain, coefficient) when one is known."""
    if kind == "poisson_source" and domain.kind == "unit_square":
        return _square_analytic
    if kind == "heat_plain" and domain.kind == "amoeba":
        return _amoeba_analytic(coefficient)
    if kind == "heat_plain" and domain.kind == "butterfly" and coefficient == 1.0:
        return _butterfly_analytic
    return None


def problem_from_config(
    kind: str,
    coefficient: float,
    domain: DomainSpec,
    tau: float,
    t_final: float,
) -> ProblemSpec:
    """Assemble a ProblemSpec the way the CLI config layer does."""
    analytic = attach_analytic(kind, domain, coefficient)
    init = _gaussian_bump if kind == "wave" else None
    return ProblemSpec(
        kind=kind,
        coefficient=coefficient,
        domain=domain,
        tau=tau,
        t_final=t_final,
        analytic=analytic,
        initial_displacement=init,
        name=f"{kind}_{domain.kind}",
    )
