"""Command-line pipeline runner.

Subcommands: mesh, stencils, solve-direct, train, eval, sweep. One JSON
config file drives everything; artifacts land in --out. Exit codes: 0
success, 2 configuration problems, 3 numerical instability of the direct
stepper, 4 training divergence. Identical config and seed reproduce every
output byte for byte, which is why the run manifest carries no wall-clock
fields.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import logging
import os
import sys

import numpy as np

from .assembly import (
    analytic_trajectory,
    assemble_heat,
    assemble_wave,
    rollout_direct,
    stability_indicator,
)
from .config import RunConfig, config_digest, load_config
from .errors import (
    ConfigurationError,
    DivergenceError,
    InstabilityError,
    RbfMgnError,
)
from .geometry import NodeSet, graph_to_json
from .gnn import (
    build_model,
    checkpoint_from_json,
    checkpoint_to_json,
    graph_hash,
)
from .stencils import build_stencil_set, stencil_set_to_json
from .training import (
    max_abs_error,
    relative_l2,
    rollout_model,
    rollout_model_reversed,
    teacher_trajectory,
    train,
)

__all__ = ["main"]

log = logging.getLogger("rbfmgn")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INSTABILITY = 3
EXIT_DIVERGENCE = 4

# explicit-step safety gate: tau * |alpha| * max|w| above this aborts the
# classical solver before it amplifies noise past any useful accuracy
STABILITY_GATE = 1.0


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _write_bytes(path: str, data: bytes) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(data)


def _write_text(path: str, text: str) -> None:
    _write_bytes(path, text.encode("utf-8"))


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(
            ",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row)
        )
    _write_text(path, "\n".join(lines) + "\n")


def _write_manifest(out_dir: str, raw_config: bytes, seed: int,
                    artifacts: dict[str, str]) -> None:
    manifest = {
        "config_sha256": config_digest(raw_config),
        "seed": seed,
        "timestamps": None,
        "artifacts": artifacts,
    }
    _write_text(
        os.path.join(out_dir, "manifest.json"),
        json.dumps(manifest, sort_keys=True, separators=(",", ":")) + "\n",
    )
    _write_bytes(os.path.join(out_dir, "config.json"), raw_config)


def _build_geometry(cfg: RunConfig):
    graph = cfg.mesh()
    nodes = NodeSet(coords=graph.coords, is_boundary=graph.is_boundary)
    return graph, nodes


def _build_stencils(cfg: RunConfig, nodes: NodeSet):
    return build_stencil_set(
        nodes.coords,
        cfg.rbf.kernel(),
        m=cfg.rbf.m,
        poly_order=cfg.rbf.poly_order,
        centers=np.arange(nodes.n_interior),
    )


def _dump_system(cfg: RunConfig, nodes: NodeSet, stencils, out_dir: str,
                 artifacts: dict[str, str]) -> None:
    problem = cfg.problem()
    if problem.kind == "wave":
        system = assemble_wave(nodes, stencils, problem, 0)
        payload = {
            "kind": "wave",
            "cols": system.cols.tolist(),
            "vals": system.vals.tolist(),
            "mirror": system.mirror.tolist(),
            "tau": system.tau,
        }
    else:
        system = assemble_heat(nodes, stencils, problem, 0)
        payload = {
            "kind": "heat",
            "cols": system.cols.tolist(),
            "vals": system.vals.tolist(),
            "h": system.h_vec.tolist(),
            "f": system.f_vec.tolist(),
            "tau": system.tau,
        }
    name = "system_level0.json"
    _write_text(
        os.path.join(out_dir, name),
        json.dumps(payload, separators=(",", ":")) + "\n",
    )
    artifacts["system_level0"] = name


def _error_rows(pred_values: np.ndarray, truth_values: np.ndarray,
                times: np.ndarray) -> list[list]:
    rows = []
    for level in range(pred_values.shape[0]):
        rows.append(
            [
                level,
                float(times[level]),
                relative_l2(pred_values[level], truth_values[level]),
                max_abs_error(pred_values[level], truth_values[level]),
            ]
        )
    return rows


def cmd_mesh(cfg: RunConfig, raw: bytes, out_dir: str, args) -> int:
    graph, _ = _build_geometry(cfg)
    _write_text(os.path.join(out_dir, "graph.json"), graph_to_json(graph) + "\n")
    _write_manifest(out_dir, raw, cfg.seed, {"graph": "graph.json"})
    print(
        f"nodes={graph.n} interior={graph.n_interior} "
        f"boundary={graph.n_boundary} triangles={graph.triangles.shape[0]}"
    )
    return EXIT_OK


def cmd_stencils(cfg: RunConfig, raw: bytes, out_dir: str, args) -> int:
    graph, nodes = _build_geometry(cfg)
    stencils = _build_stencils(cfg, nodes)
    _write_text(
        os.path.join(out_dir, "stencils.json"), stencil_set_to_json(stencils) + "\n"
    )
    artifacts = {"stencils": "stencils.json"}
    if args.dump_system:
        _dump_system(cfg, nodes, stencils, out_dir, artifacts)
    _write_manifest(out_dir, raw, cfg.seed, artifacts)
    indicator = stability_indicator(stencils, cfg.problem())
    print(
        f"stencils={stencils.n_stencils} max_weight={_fmt(stencils.max_weight())} "
        f"stability_indicator={_fmt(indicator)}"
    )
    return EXIT_OK


def cmd_solve_direct(cfg: RunConfig, raw: bytes, out_dir: str, args) -> int:
    graph, nodes = _build_geometry(cfg)
    stencils = _build_stencils(cfg, nodes)
    problem = cfg.problem()
    indicator = stability_indicator(stencils, problem)
    if indicator > STABILITY_GATE:
        raise InstabilityError(
            f"explicit step size indicator tau*|alpha|*max|w| = {indicator:.6g} "
            f"exceeds {STABILITY_GATE:g}; reduce tau or coarsen the node set"
        )
    trajectory = rollout_direct(problem, nodes, stencils, cfg.n_total_levels)
    artifacts = {"trajectory": "trajectory_direct.json"}
    _write_text(
        os.path.join(out_dir, "trajectory_direct.json"),
        json.dumps(
            {
                "provenance": trajectory.provenance,
                "times": trajectory.times.tolist(),
                "values": trajectory.values.tolist(),
            },
            separators=(",", ":"),
        )
        + "\n",
    )
    if args.dump_system:
        _dump_system(cfg, nodes, stencils, out_dir, artifacts)
    if problem.has_analytic:
        truth = analytic_trajectory(problem, nodes, cfg.n_total_levels)
        rows = _error_rows(trajectory.values, truth.values, trajectory.times)
        _write_csv(
            os.path.join(out_dir, "errors_direct.csv"),
            ["level", "time", "rel_l2", "max_abs"],
            rows,
        )
        artifacts["errors"] = "errors_direct.csv"
        print(
            f"levels={trajectory.n_levels} "
            f"final_rel_l2={_fmt(rows[-1][2])} final_max_abs={_fmt(rows[-1][3])}"
        )
    else:
        print(f"levels={trajectory.n_levels} (no analytic reference)")
    _write_manifest(out_dir, raw, cfg.seed, artifacts)
    return EXIT_OK


def _train_pipeline(cfg: RunConfig):
    """Shared by train/eval/sweep: geometry, stencils, teacher, model."""
    graph, nodes = _build_geometry(cfg)
    stencils = _build_stencils(cfg, nodes)
    problem = cfg.problem()
    trajectory = teacher_trajectory(problem, nodes, stencils, cfg.n_train_levels)
    model = build_model(
        node_in=cfg.node_in,
        latent_dim=cfg.model.latent_dim,
        blocks=cfg.model.blocks,
        hidden=cfg.model.hidden,
        seed=cfg.model_seed,
    )
    return graph, nodes, stencils, problem, trajectory, model


def cmd_train(cfg: RunConfig, raw: bytes, out_dir: str, args) -> int:
    graph, nodes, stencils, problem, trajectory, model = _train_pipeline(cfg)
    state = None
    if cfg.train.resume is not None:
        try:
            with open(cfg.train.resume, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigurationError(
                f"cannot read resume checkpoint {cfg.train.resume!r}: {exc}"
            ) from exc
        model, state, digest = checkpoint_from_json(text)
        if digest and digest != graph_hash(graph):
            raise ConfigurationError(
                "resume checkpoint was trained on a different graph "
                "(graph hash mismatch)"
            )
        if model.node_in != cfg.node_in:
            raise ConfigurationError(
                "resume checkpoint input width does not match the problem kind"
            )
    artifacts: dict[str, str] = {}
    if args.dump_system:
        _dump_system(cfg, nodes, stencils, out_dir, artifacts)
    try:
        result = train(
            model, graph, nodes, stencils, problem, trajectory,
            cfg.train.to_train_config(), state=state,
        )
    except DivergenceError as exc:
        history = getattr(exc, "history", [])
        _write_csv(
            os.path.join(out_dir, "loss.csv"),
            ["step", "loss"],
            [[i, float(v)] for i, v in enumerate(history)],
        )
        artifacts["loss"] = "loss.csv"
        _write_manifest(out_dir, raw, cfg.seed, artifacts)
        raise
    _write_csv(
        os.path.join(out_dir, "loss.csv"),
        ["step", "loss"],
        [[i, float(v)] for i, v in enumerate(result.history)],
    )
    _write_text(
        os.path.join(out_dir, "checkpoint.json"),
        checkpoint_to_json(model, result.state, graph_hash(graph)) + "\n",
    )
    artifacts.update({"loss": "loss.csv", "checkpoint": "checkpoint.json"})
    _write_manifest(out_dir, raw, cfg.seed, artifacts)
    if result.history:
        print(
            f"iterations={len(result.history)} "
            f"initial_loss={_fmt(result.history[0])} "
            f"final_loss={_fmt(result.history[-1])}"
        )
    else:
        print("iterations=0 (model unchanged)")
    return EXIT_OK


def _load_checkpoint_for(cfg: RunConfig, graph, path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read checkpoint {path!r}: {exc}") from exc
    model, _, digest = checkpoint_from_json(text)
    if digest != graph_hash(graph):
        raise ConfigurationError(
            "checkpoint/config mismatch: the stored graph hash differs from "
            "the graph this config generates"
        )
    if model.node_in != cfg.node_in:
        raise ConfigurationError(
            "checkpoint input width does not match the problem kind"
        )
    return model


def _truth_trajectory(cfg: RunConfig, problem, nodes, stencils, n_levels: int):
    if problem.has_analytic:
        return analytic_trajectory(problem, nodes, n_levels)
    return rollout_direct(problem, nodes, stencils, n_levels)


def cmd_eval(cfg: RunConfig, raw: bytes, out_dir: str, args) -> int:
    graph, nodes = _build_geometry(cfg)
    stencils = _build_stencils(cfg, nodes)
    problem = cfg.problem()
    model = _load_checkpoint_for(cfg, graph, args.checkpoint)
    n_levels = cfg.n_total_levels
    truth = _truth_trajectory(cfg, problem, nodes, stencils, n_levels)
    if cfg.train.time_reversed:
        predicted = rollout_model_reversed(
            model, graph, problem, n_levels, truth.values[n_levels]
        )
    else:
        predicted = rollout_model(model, graph, nodes, problem, n_levels)
    rows = _error_rows(predicted.values, truth.values, predicted.times)
    _write_csv(
        os.path.join(out_dir, "errors_model.csv"),
        ["level", "time", "rel_l2", "max_abs"],
        rows,
    )
    artifacts = {"errors": "errors_model.csv"}
    for i, t in enumerate(cfg.eval.times):
        level = int(round(t / cfg.tau))
        if not 0 <= level <= n_levels:
            raise ConfigurationError(
                f"eval.times[{i}] = {t} is outside [0, T_final]"
            )
        records = [
            {
                "node": node,
                "pred": float(predicted.values[level][node]),
                "truth": float(truth.values[level][node]),
                "abs_err": float(
                    abs(predicted.values[level][node] - truth.values[level][node])
                ),
            }
            for node in range(graph.n)
        ]
        name = f"field_t{t:g}.json"
        _write_text(
            os.path.join(out_dir, name),
            json.dumps(
                {"time": float(t), "level": level, "records": records},
                separators=(",", ":"),
            )
            + "\n",
        )
        artifacts[f"field_{i}"] = name
    _write_manifest(out_dir, raw, cfg.seed, artifacts)
    print(
        f"levels={n_levels} final_rel_l2={_fmt(rows[-1][2])} "
        f"final_max_abs={_fmt(rows[-1][3])}"
    )
    return EXIT_OK


def _apply_sweep_value(obj: dict, parameter: str, value: float) -> dict:
    out = json.loads(json.dumps(obj))  # deep copy
    if parameter == "tau":
        out["tau"] = value
    elif parameter == "lambda":
        out["coefficient"] = value
    elif parameter == "epsilon":
        out.setdefault("rbf", {})["epsilon"] = value
    elif parameter == "n":
        out["n_interior"] = int(round(value))
    elif parameter == "m":
        out.setdefault("rbf", {})["m"] = int(round(value))
    else:
        raise ConfigurationError(f"unknown sweep parameter {parameter!r}")
    return out


def _sweep_point(payload: tuple[str, int, dict]) -> list:
    """Train and evaluate one sweep point; returns (value, rel_l2, max_abs)."""
    parameter, index, obj = payload
    from .config import parse_config

    cfg = parse_config(obj)
    graph, nodes, stencils, problem, trajectory, model = _train_pipeline(cfg)
    result = train(
        model, graph, nodes, stencils, problem, trajectory,
        cfg.train.to_train_config(),
    )
    n_levels = cfg.n_total_levels
    truth = _truth_trajectory(cfg, problem, nodes, stencils, n_levels)
    predicted = rollout_model(model, graph, nodes, problem, n_levels)
    return [
        index,
        relative_l2(predicted.values[n_levels], truth.values[n_levels]),
        max_abs_error(predicted.values[n_levels], truth.values[n_levels]),
        result.history[-1] if result.history else float("nan"),
    ]


def cmd_sweep(cfg: RunConfig, raw: bytes, out_dir: str, args) -> int:
    if cfg.eval.sweep is None:
        raise ConfigurationError(
            "sweep requires an eval.sweep section with parameter and values"
        )
    sweep = cfg.eval.sweep
    base_obj = json.loads(raw.decode("utf-8"))  # --seed already folded into raw
    jobs = max(1, args.jobs)
    payloads = [
        (sweep.parameter, i, _apply_sweep_value(base_obj, sweep.parameter, v))
        for i, v in enumerate(sweep.values)
    ]
    if jobs == 1:
        results = [_sweep_point(p) for p in payloads]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_point, payloads))
    results.sort(key=lambda row: row[0])
    rows = [
        [sweep.values[int(r[0])], float(r[1]), float(r[2]), float(r[3])]
        for r in results
    ]
    _write_csv(
        os.path.join(out_dir, "sweep.csv"),
        [sweep.parameter, "rel_l2", "max_abs", "final_loss"],
        rows,
    )
    _write_manifest(out_dir, raw, cfg.seed, {"sweep": "sweep.csv"})
    for row in rows:
        print(
            f"{sweep.parameter}={_fmt(row[0])} rel_l2={_fmt(row[1])} "
            f"max_abs={_fmt(row[2])}"
        )
    return EXIT_OK


COMMANDS = {
    "mesh": cmd_mesh,
    "stencils": cmd_stencils,
    "solve-direct": cmd_solve_direct,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
}


def _make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rbfmgn",
        description="Mesh, stencil, training, and evaluation pipeline runner.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--out", default="out", help="artifact directory")
        p.add_argument(
            "--seed", type=int, default=None, help="override the config seed"
        )
        p.add_argument(
            "--jobs", type=int, default=1, help="concurrent sweep points"
        )
        p.add_argument(
            "--dump-system",
            action="store_true",
            help="also write the assembled level-0 system for debugging",
        )
        if name == "eval":
            p.add_argument(
                "--checkpoint", required=True, help="trained checkpoint to evaluate"
            )
    return parser


def _configure_logging() -> None:
    level_name = os.environ.get("RBFMGN_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level_name not in levels:
        raise ConfigurationError(
            f"RBFMGN_LOG must be one of {sorted(levels)}, got {level_name!r}"
        )
    logging.basicConfig(level=levels[level_name], stream=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    parser = _make_parser()
    args = parser.parse_args(argv)
    try:
        _configure_logging()
        cfg, raw = load_config(args.config)
        if args.seed is not None:
            obj = json.loads(raw.decode("utf-8"))
            obj["seed"] = args.seed
            raw = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
            from .config import parse_config

            cfg = parse_config(obj)
        os.makedirs(args.out, exist_ok=True)
        log.info("command=%s config=%s out=%s", args.command, args.config, args.out)
        return COMMANDS[args.command](cfg, raw, args.out, args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InstabilityError as exc:
        print(f"instability: {exc}", file=sys.stderr)
        return EXIT_INSTABILITY
    except DivergenceError as exc:
        print(f"training divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except RbfMgnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
