"""RBF-FD stencils: per-node Laplacian weights from kernel plus polynomial tail.

Weights at a center node come from a dense saddle solve over its m nearest
neighbors: kernel Gram block A, monomial Vandermonde block P, right-hand side
the kernel Laplacian profile at the center and the monomial Laplacians at the
origin. Solving in coordinates shifted to the center keeps P well scaled.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, StencilConditioningError, StencilError

KERNEL_KINDS = ("ga", "imq", "ph3")
CONDITION_LIMIT = 1e14


@dataclass(frozen=True)
class RbfKernel:
    """Radial kernel with shape parameter. ph3 is scale-free up to epsilon**3."""

    kind: str
    epsilon: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in KERNEL_KINDS:
            raise ConfigurationError(f"unknown kernel kind {self.kind!r}")
        if not self.epsilon > 0.0:
            raise ConfigurationError("kernel epsilon must be positive")


def kernel_value(kernel: RbfKernel, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    er = kernel.epsilon * r
    if kernel.kind == "ga":
        return np.exp(-(er**2))
    if kernel.kind == "imq":
        return 1.0 / np.sqrt(1.0 + er**2)
    return er**3


def kernel_laplacian(kernel: RbfKernel, r) -> np.ndarray:
    """2-D Laplacian of the radial kernel profile, phi'' + phi'/r."""
    r = np.asarray(r, dtype=float)
    eps = kernel.epsilon
    er = eps * r
    if kernel.kind == "ga":
        return 4.0 * eps**2 * (er**2 - 1.0) * np.exp(-(er**2))
    if kernel.kind == "imq":
        return eps**2 * (er**2 - 2.0) / (1.0 + er**2) ** 2.5
    return 9.0 * eps**3 * r


def monomial_exponents(poly_order: int) -> list[tuple[int, int]]:
    """Graded ordering: 1; x, y; x^2, xy, y^2; ..."""
    out = []
    for deg in range(poly_order + 1):
        for ax in range(deg, -1, -1):
            out.append((ax, deg - ax))
    return out


def poly_term_count(poly_order: int) -> int:
    return (poly_order + 1) * (poly_order + 2) // 2


def nearest_neighbors(coords: np.ndarray, centers: np.ndarray, m: int) -> np.ndarray:
    """Indices of the m nearest nodes to each center, center itself first.

    Brute-force over all pairs; distance ties break toward the lower node
    index. Returns shape (len(centers), m).
    """
    coords = np.asarray(coords, dtype=float)
    centers = np.asarray(centers, dtype=int)
    n = coords.shape[0]
    if m > n:
        raise StencilError(f"stencil size m={m} exceeds node count {n}")
    d = np.hypot(
        coords[centers, 0][:, None] - coords[None, :, 0],
        coords[centers, 1][:, None] - coords[None, :, 1],
    )
    order = np.argsort(d, axis=1, kind="stable")
    nb = order[:, :m]
    # the center has distance zero; force it into slot 0 even if another node
    # ties at zero distance upstream of the duplicate check
    for row, c in enumerate(centers):
        pos = np.nonzero(nb[row] == c)[0]
        if pos.size == 0:
            nb[row, 1:] = nb[row, :-1].copy()
            nb[row, 0] = c
        elif pos[0] != 0:
            p = pos[0]
            nb[row, 1 : p + 1] = nb[row, :p].copy()
            nb[row, 0] = c
    return nb


def _independent_columns(p_blk: np.ndarray, rtol: float = 1e-10) -> list[int]:
    """Greedy left-to-right selection of numerically independent columns."""
    kept: list[int] = []
    basis: list[np.ndarray] = []
    for j in range(p_blk.shape[1]):
        col = p_blk[:, j]
        resid = col.copy()
        for qvec in basis:
            resid = resid - (qvec @ resid) * qvec
        nrm0 = float(np.linalg.norm(col))
        if float(np.linalg.norm(resid)) <= rtol * max(nrm0, 1e-30):
            continue
        kept.append(j)
        basis.append(resid / np.linalg.norm(resid))
    return kept


def stencil_weights(
    center: np.ndarray,
    neighbors: np.ndarray,
    kernel: RbfKernel,
    poly_order: int,
) -> np.ndarray:
    """Laplacian weights over one stencil from the augmented saddle system.

    The system is assembled in coordinates shifted to the center and scaled to
    unit stencil radius, with epsilon scaled to compensate; that combination
    leaves the exact weights unchanged up to the 1/scale^2 covariance factor
    and keeps the dense solve well conditioned at any spacing. Monomial
    columns that are linearly dependent on this particular geometry are
    dropped when their Laplacian constraint is implied by the kept ones (the
    symmetric 5-point cross is the canonical case); an unsatisfiable
    constraint raises instead.
    """
    local = np.asarray(neighbors, dtype=float) - np.asarray(center, dtype=float)
    m = local.shape[0]
    q = poly_term_count(poly_order)

    radius = np.hypot(local[:, 0], local[:, 1])
    scale = float(radius.max())
    if scale <= 0.0:
        raise StencilError("all stencil points coincide with the center")
    xs = local / scale
    scaled_kernel = RbfKernel(kernel.kind, kernel.epsilon * scale)

    diff = xs[:, None, :] - xs[None, :, :]
    r = np.hypot(diff[..., 0], diff[..., 1])
    a_blk = kernel_value(scaled_kernel, r)

    exps = monomial_exponents(poly_order)
    p_blk = np.empty((m, q))
    c_vec = np.empty(q)
    for col, (ax, ay) in enumerate(exps):
        p_blk[:, col] = xs[:, 0] ** ax * xs[:, 1] ** ay
        c_vec[col] = 2.0 if (ax, ay) in ((2, 0), (0, 2)) else 0.0

    kept = _independent_columns(p_blk)
    dropped = [j for j in range(q) if j not in kept]
    if dropped:
        combo, *_ = np.linalg.lstsq(p_blk[:, kept], p_blk[:, dropped], rcond=None)
        implied = c_vec[kept] @ combo
        if np.max(np.abs(implied - c_vec[dropped])) > 1e-8:
            raise StencilError(
                f"polynomial constraints of degree {poly_order} are infeasible on "
                f"this stencil geometry (m={m}, q={q}); raise m or lower poly_order"
            )

    qk = len(kept)
    rhs = np.empty(m + qk)
    rhs[:m] = kernel_laplacian(scaled_kernel, radius / scale)
    rhs[m:] = c_vec[kept]

    saddle = np.zeros((m + qk, m + qk))
    saddle[:m, :m] = a_blk
    saddle[:m, m:] = p_blk[:, kept]
    saddle[m:, :m] = p_blk[:, kept].T

    cond = np.linalg.cond(saddle)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise StencilConditioningError(
            f"saddle system condition {cond:.3e} exceeds {CONDITION_LIMIT:.0e}; "
            f"kernel {kernel.kind} epsilon={kernel.epsilon} is ill-suited to this "
            f"node spacing"
        )
    sol = np.linalg.solve(saddle, rhs)
    return sol[:m] / scale**2


@dataclass
class StencilSet:
    """Laplacian weights for a batch of center nodes over shared geometry."""

    kernel: RbfKernel
    m: int
    poly_order: int
    centers: np.ndarray
    neighbors: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        self.centers = np.asarray(self.centers, dtype=int)
        self.neighbors = np.asarray(self.neighbors, dtype=int)
        self.weights = np.asarray(self.weights, dtype=float)
        k = self.centers.shape[0]
        if self.neighbors.shape != (k, self.m) or self.weights.shape != (k, self.m):
            raise ValueError("neighbors and weights must have shape (k, m)")

    @property
    def n_stencils(self) -> int:
        return self.centers.shape[0]

    def max_weight(self) -> float:
        return float(np.abs(self.weights).max())


def build_stencil_set(
    coords: np.ndarray,
    kernel: RbfKernel,
    m: int,
    poly_order: int = 2,
    centers: np.ndarray | None = None,
) -> StencilSet:
    """Stencils for the given centers (default: every node)."""
    coords = np.asarray(coords, dtype=float)
    if centers is None:
        centers = np.arange(coords.shape[0])
    centers = np.asarray(centers, dtype=int)
    nb = nearest_neighbors(coords, centers, m)
    weights = np.empty((centers.shape[0], m))
    for row, c in enumerate(centers):
        try:
            weights[row] = stencil_weights(
                coords[c], coords[nb[row]], kernel, poly_order
            )
        except StencilError as exc:
            raise type(exc)(f"node {int(c)}: {exc}") from exc
    return StencilSet(
        kernel=kernel,
        m=m,
        poly_order=poly_order,
        centers=centers,
        neighbors=nb,
        weights=weights,
    )


def apply_operator(stencil_set: StencilSet, field: np.ndarray) -> np.ndarray:
    """Discrete Laplacian values at the stencil centers."""
    field = np.asarray(field, dtype=float)
    if field.ndim != 1:
        raise ValueError("field must be a flat per-node vector")
    if field.shape[0] <= int(stencil_set.neighbors.max()):
        raise ValueError(
            f"field has {field.shape[0]} entries but stencils reference "
            f"node {int(stencil_set.neighbors.max())}"
        )
    return (stencil_set.weights * field[stencil_set.neighbors]).sum(axis=1)


def stencil_set_to_json(stencil_set: StencilSet) -> str:
    payload = {
        "m": int(stencil_set.m),
        "kernel": {
            "kind": stencil_set.kernel.kind,
            "epsilon": float(stencil_set.kernel.epsilon),
        },
        "poly_order": int(stencil_set.poly_order),
        "stencils": [
            {
                "center": int(c),
                "neighbors": [int(j) for j in nbr],
                "weights": [float(w) for w in wts],
            }
            for c, nbr, wts in zip(
                stencil_set.centers, stencil_set.neighbors, stencil_set.weights
            )
        ],
    }
    return json.dumps(payload, separators=(",", ":"))


def stencil_set_from_json(text: str) -> StencilSet:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"stencil JSON is unparseable: {exc}") from exc
    try:
        kernel = RbfKernel(payload["kernel"]["kind"], payload["kernel"]["epsilon"])
        m = int(payload["m"])
        poly_order = int(payload["poly_order"])
        rows = payload["stencils"]
        centers = np.array([r["center"] for r in rows], dtype=int)
        neighbors = np.array([r["neighbors"] for r in rows], dtype=int)
        weights = np.array([r["weights"] for r in rows], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"stencil JSON has a bad field: {exc}") from exc
    return StencilSet(
        kernel=kernel,
        m=m,
        poly_order=poly_order,
        centers=centers,
        neighbors=neighbors,
        weights=weights,
    )
