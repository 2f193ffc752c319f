"""Graph network over a triangulated node set: encode, message-pass, decode.

Per-node and per-edge inputs are lifted to a shared latent width, refined by
a fixed number of edge-then-node update blocks with residual connections and
sum aggregation over incoming directed edges, and decoded into an additive
correction of the current field. All parameters live on the autodiff tape.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError
from .geometry import Graph, graph_to_json

__all__ = [
    "AdamState",
    "GnnModel",
    "Mlp",
    "adam_step",
    "build_model",
    "checkpoint_from_json",
    "checkpoint_to_json",
    "decode",
    "edge_inputs",
    "encode",
    "graph_hash",
    "mlp_forward",
    "node_inputs",
    "predict_next",
    "process",
]

DEFAULT_LATENT_DIM = 64
DEFAULT_BLOCKS = 8
DEFAULT_HIDDEN = 64


@dataclass
class Mlp:
    """Two ReLU hidden layers plus a linear head; weights are (in, out)."""

    name: str
    weights: list[ad.Tensor]
    biases: list[ad.Tensor]

    @property
    def in_dim(self) -> int:
        return self.weights[0].value.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].value.shape[1]


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _make_mlp(
    name: str, dims: list[int], rng: np.random.Generator
) -> Mlp:
    weights = []
    biases = []
    for a, b in zip(dims[:-1], dims[1:]):
        weights.append(ad.Tensor(_glorot(rng, a, b), requires_grad=True))
        biases.append(ad.Tensor(np.zeros(b), requires_grad=True))
    return Mlp(name=name, weights=weights, biases=biases)


def mlp_forward(mlp: Mlp, x: ad.Tensor) -> ad.Tensor:
    if x.value.ndim != 2 or x.value.shape[1] != mlp.in_dim:
        raise ValueError(
            f"{mlp.name}: input has shape {x.value.shape}, "
            f"expected (*, {mlp.in_dim})"
        )
    h = x
    last = len(mlp.weights) - 1
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        h = ad.add(ad.matmul(h, w), b)
        if i < last:
            h = ad.relu(h)
    return h


@dataclass
class GnnModel:
    """All learnable pieces plus the structural hyperparameters."""

    latent_dim: int
    blocks: int
    hidden: int
    node_in: int
    node_encoder: Mlp = field(repr=False, default=None)
    edge_encoder: Mlp = field(repr=False, default=None)
    block_edge: list[Mlp] = field(repr=False, default=None)
    block_node: list[Mlp] = field(repr=False, default=None)
    decoder: Mlp = field(repr=False, default=None)
    seed: int = 0

    def mlps(self) -> list[Mlp]:
        out = [self.node_encoder, self.edge_encoder]
        for e, v in zip(self.block_edge, self.block_node):
            out.extend([e, v])
        out.append(self.decoder)
        return out

    def parameters(self) -> list[ad.Tensor]:
        params = []
        for m in self.mlps():
            for w, b in zip(m.weights, m.biases):
                params.extend([w, b])
        return params

    def zero_(self) -> None:
        """Null model: every weight and bias set to zero."""
        for p in self.parameters():
            p.value[...] = 0.0


EDGE_IN = 3  # dx, dy, distance


def build_model(
    node_in: int,
    latent_dim: int = DEFAULT_LATENT_DIM,
    blocks: int = DEFAULT_BLOCKS,
    hidden: int = DEFAULT_HIDDEN,
    seed: int = 0,
) -> GnnModel:
    """Seeded construction; parameter order is fixed by the architecture."""
    if node_in < 1 or latent_dim < 1 or blocks < 1 or hidden < 1:
        raise ConfigurationError("model dimensions must be positive")
    rng = np.random.default_rng(seed)
    d = latent_dim
    model = GnnModel(
        latent_dim=d, blocks=blocks, hidden=hidden, node_in=node_in, seed=seed
    )
    model.node_encoder = _make_mlp("node_encoder", [node_in, hidden, hidden, d], rng)
    model.edge_encoder = _make_mlp("edge_encoder", [EDGE_IN, hidden, hidden, d], rng)
    model.block_edge = []
    model.block_node = []
    for k in range(blocks):
        model.block_edge.append(
            _make_mlp(f"block{k}_edge", [3 * d, hidden, hidden, d], rng)
        )
        model.block_node.append(
            _make_mlp(f"block{k}_node", [2 * d, hidden, hidden, d], rng)
        )
    model.decoder = _make_mlp("decoder", [d, hidden, hidden, 1], rng)
    return model


def node_inputs(graph: Graph, snapshots: list[np.ndarray]) -> np.ndarray:
    """Feature rows: field snapshot(s), then interior/boundary one-hot."""
    cols = [np.asarray(s, dtype=float) for s in snapshots]
    for c in cols:
        if c.shape != (graph.n,):
            raise ValueError("snapshot length must match the node count")
    onehot_int = (~graph.is_boundary).astype(float)
    onehot_bnd = graph.is_boundary.astype(float)
    return np.column_stack(cols + [onehot_int, onehot_bnd])


def edge_inputs(graph: Graph) -> np.ndarray:
    """Per directed edge: receiver-minus-sender offset and its length."""
    src, dst = graph.edges[:, 0], graph.edges[:, 1]
    d = graph.coords[dst] - graph.coords[src]
    return np.column_stack([d, np.hypot(d[:, 0], d[:, 1])])


def encode(
    model: GnnModel, node_feats: np.ndarray, edge_feats: np.ndarray
) -> tuple[ad.Tensor, ad.Tensor]:
    v = mlp_forward(model.node_encoder, ad.Tensor(node_feats))
    e = mlp_forward(model.edge_encoder, ad.Tensor(edge_feats))
    return v, e


def process(
    model: GnnModel, v: ad.Tensor, e: ad.Tensor, graph: Graph
) -> tuple[ad.Tensor, ad.Tensor]:
    src, dst = graph.edges[:, 0], graph.edges[:, 1]
    n = graph.n
    for edge_mlp, node_mlp in zip(model.block_edge, model.block_node):
        e_in = ad.concat([e, ad.gather(v, src), ad.gather(v, dst)], axis=1)
        e = ad.add(e, mlp_forward(edge_mlp, e_in))
        agg = ad.scatter_sum(e, dst, n)
        v_in = ad.concat([v, agg], axis=1)
        v = ad.add(v, mlp_forward(node_mlp, v_in))
    return v, e


def decode(
    model: GnnModel, v: ad.Tensor, u_cur: np.ndarray, n_interior: int
) -> ad.Tensor:
    """Interior predictions: current values plus the decoded correction."""
    delta = mlp_forward(model.decoder, v)
    flat = ad.slice_rows(delta, 0, n_interior)
    base = ad.Tensor(np.asarray(u_cur, dtype=float)[:n_interior, None])
    return ad.add(base, flat)


def predict_next(
    model: GnnModel,
    graph: Graph,
    snapshots: list[np.ndarray],
    n_interior: int,
) -> ad.Tensor:
    """Full encode-process-decode pass; returns (n_interior, 1) predictions."""
    v, e = encode(model, node_inputs(graph, snapshots), edge_inputs(graph))
    v, e = process(model, v, e, graph)
    return decode(model, v, snapshots[0], n_interior)


@dataclass
class AdamState:
    """Bias-corrected first/second moment accumulators, one pair per tensor."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_model(cls, model: GnnModel, lr: float = 1e-3) -> "AdamState":
        state = cls(lr=lr)
        for p in model.parameters():
            state.m.append(np.zeros_like(p.value))
            state.v.append(np.zeros_like(p.value))
        return state


def adam_step(model: GnnModel, state: AdamState) -> None:
    """One in-place update from the gradients stored on the parameters."""
    params = model.parameters()
    if len(state.m) != len(params):
        raise ValueError("optimizer state does not match the parameter list")
    state.t += 1
    b1t = 1.0 - state.beta1**state.t
    b2t = 1.0 - state.beta2**state.t
    for i, p in enumerate(params):
        g = p.grad if p.grad is not None else np.zeros_like(p.value)
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g**2
        m_hat = state.m[i] / b1t
        v_hat = state.v[i] / b2t
        p.value -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def clear_grads(model: GnnModel) -> None:
    for p in model.parameters():
        p.grad = None


def graph_hash(graph: Graph) -> str:
    return hashlib.sha256(graph_to_json(graph).encode()).hexdigest()


def checkpoint_to_json(
    model: GnnModel, state: AdamState | None = None, graph_digest: str = ""
) -> str:
    """Weights serialized as (out, in) matrices, optimizer state alongside."""
    mlps = {}
    for m in model.mlps():
        mlps[m.name] = {
            "layers": [
                {"w": w.value.T.tolist(), "b": b.value.tolist()}
                for w, b in zip(m.weights, m.biases)
            ]
        }
    payload: dict = {
        "latent_dim": model.latent_dim,
        "blocks": model.blocks,
        "hidden": model.hidden,
        "node_in": model.node_in,
        "mlps": mlps,
        "seed": model.seed,
        "graph_hash": graph_digest,
    }
    if state is not None:
        payload["adam"] = {
            "t": state.t,
            "lr": state.lr,
            "m": [a.tolist() for a in state.m],
            "v": [a.tolist() for a in state.v],
        }
    return json.dumps(payload, separators=(",", ":"))


def checkpoint_from_json(text: str) -> tuple[GnnModel, AdamState | None, str]:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"checkpoint is unparseable: {exc}") from exc
    try:
        model = build_model(
            node_in=int(payload["node_in"]),
            latent_dim=int(payload["latent_dim"]),
            blocks=int(payload["blocks"]),
            hidden=int(payload["hidden"]),
            seed=int(payload["seed"]),
        )
        for m in model.mlps():
            layers = payload["mlps"][m.name]["layers"]
            if len(layers) != len(m.weights):
                raise ConfigurationError(
                    f"checkpoint mlp {m.name!r} has {len(layers)} layers, "
                    f"expected {len(m.weights)}"
                )
            for w, b, layer in zip(m.weights, m.biases, layers):
                wv = np.asarray(layer["w"], dtype=float).T
                bv = np.asarray(layer["b"], dtype=float)
                if wv.shape != w.value.shape or bv.shape != b.value.shape:
                    raise ConfigurationError(
                        f"checkpoint mlp {m.name!r} has a mis-shaped layer"
                    )
                w.value[...] = wv
                b.value[...] = bv
        state = None
        if "adam" in payload:
            state = AdamState.for_model(model)
            state.t = int(payload["adam"]["t"])
            state.lr = float(payload["adam"].get("lr", 1e-3))
            ms = payload["adam"]["m"]
            vs = payload["adam"]["v"]
            if len(ms) != len(state.m) or len(vs) != len(state.v):
                raise ConfigurationError("checkpoint optimizer state mismatch")
            for i in range(len(state.m)):
                mv = np.asarray(ms[i], dtype=float)
                vv = np.asarray(vs[i], dtype=float)
                if mv.shape != state.m[i].shape or vv.shape != state.v[i].shape:
                    raise ConfigurationError("checkpoint optimizer state mismatch")
                state.m[i] = mv
                state.v[i] = vv
        digest = str(payload.get("graph_hash", ""))
    except ConfigurationError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"checkpoint has a bad field: {exc}") from exc
    return model, state, digest
