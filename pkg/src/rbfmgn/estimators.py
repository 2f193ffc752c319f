"""Estimator-style wrappers around the functional core.

Both classes follow the fit/transform/predict convention: constructor takes
hyperparameters only, ``fit`` does the work and stores results on
trailing-underscore attributes, and ``get_params``/``set_params`` support
grid-style composition without any external dependency.
"""

from __future__ import annotations

import inspect

import numpy as np

from .errors import RbfMgnError
from .geometry import DomainSpec, NodeSet, build_graph, sample_nodes, triangulate
from .gnn import build_model
from .problems import problem_from_config
from .stencils import RbfKernel, apply_operator, build_stencil_set
from .training import (
    TrainConfig,
    relative_l2,
    rollout_model,
    teacher_trajectory,
    train,
)

__all__ = ["NotFittedError", "RbfLaplacian", "RbfMgnRegressor"]


class NotFittedError(RbfMgnError):
    """fit() has not been called yet."""


class _ParamsMixin:
    """Constructor-signature-driven get_params/set_params."""

    @classmethod
    def _param_names(cls) -> list[str]:
        sig = inspect.signature(cls.__init__)
        return [name for name in sig.parameters if name != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError(
                    f"invalid parameter {name!r} for {type(self).__name__}; "
                    f"valid parameters are {sorted(valid)}"
                )
            setattr(self, name, value)
        return self

    def _check_fitted(self, attr: str) -> None:
        if not hasattr(self, attr):
            raise NotFittedError(
                f"this {type(self).__name__} instance is not fitted yet; "
                f"call fit() first"
            )


class RbfLaplacian(_ParamsMixin):
    """Laplacian operator weights over scattered 2-D points.

    ``fit(X)`` builds one stencil per requested center; ``transform(u)`` maps
    per-point field values to per-center Laplacian estimates.
    """

    def __init__(self, kernel: str = "ph3", epsilon: float = 1.0,
                 m: int = 15, poly_order: int = 2):
        self.kernel = kernel
        self.epsilon = epsilon
        self.m = m
        self.poly_order = poly_order

    def fit(self, X: np.ndarray, centers: np.ndarray | None = None):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != 2:
            raise ValueError("X must have shape (n, 2)")
        self.stencils_ = build_stencil_set(
            X,
            RbfKernel(self.kernel, self.epsilon),
            m=self.m,
            poly_order=self.poly_order,
            centers=centers,
        )
        self.n_points_ = X.shape[0]
        return self

    def transform(self, u: np.ndarray) -> np.ndarray:
        self._check_fitted("stencils_")
        return apply_operator(self.stencils_, np.asarray(u, dtype=float))

    def fit_transform(self, X: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.fit(X).transform(u)


class RbfMgnRegressor(_ParamsMixin):
    """End-to-end pipeline: mesh, stencils, residual-driven training, rollout.

    ``fit()`` needs no labeled data — the physics residual is the objective.
    ``predict(times)`` returns the autoregressive field prediction at each
    requested time (rows align with the sampled node set, ``nodes_``).
    """

    def __init__(
        self,
        kind: str = "heat_plain",
        coefficient: float = 1.0,
        domain: str = "amoeba",
        tau: float = 0.01,
        t_final: float = 1.0,
        n_interior: int = 195,
        n_boundary: int = 64,
        kernel: str = "ph3",
        epsilon: float = 1.0,
        m: int = 15,
        poly_order: int = 2,
        latent_dim: int = 64,
        blocks: int = 8,
        hidden: int = 64,
        iterations: int = 200,
        batch_size: int = 5,
        learning_rate: float = 1e-3,
        seed: int = 0,
    ):
        self.kind = kind
        self.coefficient = coefficient
        self.domain = domain
        self.tau = tau
        self.t_final = t_final
        self.n_interior = n_interior
        self.n_boundary = n_boundary
        self.kernel = kernel
        self.epsilon = epsilon
        self.m = m
        self.poly_order = poly_order
        self.latent_dim = latent_dim
        self.blocks = blocks
        self.hidden = hidden
        self.iterations = iterations
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed

    def fit(self, X=None, y=None):
        problem = problem_from_config(
            self.kind,
            self.coefficient,
            DomainSpec(self.domain),
            self.tau,
            self.t_final,
        )
        nodes = sample_nodes(
            problem.domain, self.n_interior, self.n_boundary, self.seed
        )
        graph = build_graph(nodes, triangulate(nodes, problem.domain))
        stencils = build_stencil_set(
            nodes.coords,
            RbfKernel(self.kernel, self.epsilon),
            m=self.m,
            poly_order=self.poly_order,
            centers=np.arange(nodes.n_interior),
        )
        trajectory = teacher_trajectory(problem, nodes, stencils)
        model = build_model(
            node_in=4 if self.kind == "wave" else 3,
            latent_dim=self.latent_dim,
            blocks=self.blocks,
            hidden=self.hidden,
            seed=self.seed,
        )
        result = train(
            model, graph, nodes, stencils, problem, trajectory,
            TrainConfig(
                iterations=self.iterations,
                batch_size=self.batch_size,
                learning_rate=self.learning_rate,
            ),
        )
        self.problem_ = problem
        self.nodes_ = nodes
        self.graph_ = graph
        self.stencils_ = stencils
        self.model_ = model
        self.history_ = result.history
        self.teacher_ = trajectory
        return self

    def predict(self, times) -> np.ndarray:
        self._check_fitted("model_")
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if times.size == 0:
            return np.empty((0, self.graph_.n))
        levels = np.rint(times / self.tau).astype(int)
        if (levels < 0).any():
            raise ValueError("times must be non-negative")
        rollout = rollout_model(
            self.model_, self.graph_, self.nodes_, self.problem_,
            int(levels.max()),
        )
        return rollout.values[levels]

    def score(self, times) -> float:
        """Negative mean relative L2 versus the teacher trajectory."""
        self._check_fitted("model_")
        preds = self.predict(times)
        levels = np.rint(np.atleast_1d(times) / self.tau).astype(int)
        errs = [
            relative_l2(p, self.teacher_.values[l])
            for p, l in zip(preds, levels)
        ]
        return -float(np.mean(errs))
