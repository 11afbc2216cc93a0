"""``vrstab`` command line: JSON config in, CSV/SVG files and a manifest out.

Exit codes: 0 ok, 1 validation or regime error, 2 runtime or IO error,
3 optimizer divergence. Every failure prints one ``error_code=`` line to
stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import bounds as B
from .data import ParseError, PreprocessError, format_libsvm, load_libsvm, parse_libsvm
from .harness import (DataSource, ExperimentConfig, emit_results, run_convergence,
                      run_coupled_stability, run_epr_sweep)
from .optim import DivergenceError

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_DIVERGENCE = 0, 1, 2, 3

SUBCOMMANDS = ("stability", "convergence", "epr", "check-losses", "parse-data", "select-params")
METHODS = ("svrg", "saga", "sgd")
LOSSES = ("logistic", "least_squares", "smoothed_hinge", "huber")
REGIMES = ("convex", "strongly_convex")
SOURCE_KEYS = {"path": str, "task": str, "n": int, "dimension": int, "noise_std": float,
               "weight_scale": float}
# key -> accepted python types; None in the tuple allows null
SCHEMA = {
    "experiment": (str,), "method": (str,), "loss": (str,), "l2": (float,), "delta": (float,),
    "dataset": (str, dict), "train_fraction": (float,), "step_size": (float, str, list),
    "m": (int, None), "epochs": (float,), "outer_iters": (int, None), "init_option": (str, None),
    "regime": (str,), "replicates": (int,), "seed": (int,), "n_grid": (list,),
    "checkpoints": (int,), "out": (str,), "compare_bound": (bool,), "preprocess": (bool,),
    "workers": (int, None), "preset": (str,),
    # select-params inputs
    "n": (int,), "L_w1": (float,), "alpha": (float,), "mu": (float, None),
}
ALIASES = {"eta": "step_size", "R": "replicates"}


class ValidationError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


def preset(name: str) -> dict:
    fname = name if name.endswith(".json") else f"{name}.json"
    try:
        text = resources.files("vrstab").joinpath("presets", fname).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError([f"unknown preset {name!r}"]) from None
    return json.loads(text)


def _type_ok(value, types) -> bool:
    for t in types:
        if t is None and value is None:
            return True
        if t is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            return True
        if t is int and isinstance(value, int) and not isinstance(value, bool):
            return True
        if t in (str, dict, list, bool) and isinstance(value, t):
            return True
    return False


def _tname(types) -> str:
    return " or ".join("null" if t is None else t.__name__ for t in types)


def parse_override(text: str):
    """``key=value`` with the value read as JSON when it parses, else as a string."""
    if "=" not in text:
        raise ValidationError([f"override {text!r} is not key=value"])
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def apply_overrides(raw: dict, overrides) -> dict:
    out = json.loads(json.dumps(raw))
    for item in overrides or ():
        key, value = parse_override(item) if isinstance(item, str) else item
        parts = key.split(".")
        node = out
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                node[p] = {}
            node = node[p]
        node[parts[-1]] = value
    return out


def validate(config, overrides=()) -> tuple[ExperimentConfig, list[str]]:
    """Parse, merge with the shipped defaults, type-check and build an ExperimentConfig.

    ``config`` is JSON text or an already-decoded dict. Raises
    :class:`ValidationError` with every problem found.
    """
    if isinstance(config, (str, bytes)):
        try:
            raw = json.loads(config)
        except json.JSONDecodeError as exc:
            raise ValidationError([f"config is not valid JSON: {exc}"]) from None
    else:
        raw = dict(config)
    if not isinstance(raw, dict):
        raise ValidationError(["config must be a JSON object"])
    raw = apply_overrides(raw, overrides)
    errors: list[str] = []
    user = {}
    for k, v in raw.items():
        key = ALIASES.get(k, k)
        if key not in SCHEMA:
            errors.append(f"unknown key {k!r}")
            continue
        if not _type_ok(v, SCHEMA[key]):
            errors.append(f"{k} must be {_tname(SCHEMA[key])}, got {type(v).__name__}")
            continue
        user[key] = v
    merged = preset("defaults")
    if "preset" in user:
        try:
            merged.update(preset(user["preset"]))
        except ValidationError as exc:
            errors.extend(exc.errors)
    merged.update(user)
    merged.pop("preset", None)

    for key, allowed in (("method", METHODS), ("loss", LOSSES), ("regime", REGIMES),
                         ("experiment", ("stability", "convergence", "epr"))):
        if merged.get(key) not in allowed:
            errors.append(f"{key} must be one of {', '.join(allowed)}")
    if merged.get("init_option") not in (None, "I", "II"):
        errors.append("init_option must be I or II")

    steps = merged.get("step_size")
    if steps is None and merged["experiment"] != "epr":
        errors.append("step_size is required")
    step_list = steps if isinstance(steps, list) else [steps]
    if steps is not None:
        if not step_list:
            errors.append("step_size list is empty")
        for s in step_list:
            if s == "auto":
                continue
            if isinstance(s, bool) or not isinstance(s, (int, float)):
                errors.append(f"step_size entries must be numbers or 'auto', got {s!r}")
            elif not (s > 0 and math.isfinite(s)):
                errors.append("step_size must be positive")
    m = merged.get("m")
    if m is not None and m <= 0:
        errors.append("m must be positive")
    if merged["outer_iters"] is not None and merged["outer_iters"] <= 0:
        errors.append("outer_iters must be positive")
    if not 0 < merged["train_fraction"] <= 1:
        errors.append("train_fraction must lie in (0, 1]")
    if merged["epochs"] <= 0:
        errors.append("epochs must be positive")
    if merged["replicates"] < 1:
        errors.append("replicates must be >= 1")
    if merged["l2"] < 0:
        errors.append("l2 must be nonnegative")
    if merged["delta"] <= 0:
        errors.append("delta must be positive")
    if merged["checkpoints"] < 1:
        errors.append("checkpoints must be >= 1")
    if merged["regime"] == "strongly_convex" and merged["l2"] <= 0:
        errors.append("strongly_convex regime needs l2 > 0 (mu = l2)")
    if any(not isinstance(v, int) or v < 1 for v in merged["n_grid"]):
        errors.append("n_grid entries must be positive integers")
    if merged["experiment"] == "epr" and not merged["n_grid"]:
        errors.append("epr needs a nonempty n_grid")

    source = None
    ds = merged.get("dataset")
    if ds is None:
        errors.append("dataset is required")
    elif isinstance(ds, str):
        source = DataSource(path=ds, preprocess=merged["preprocess"])
    else:
        bad = [k for k in ds if k not in SOURCE_KEYS]
        errors.extend(f"unknown dataset key {k!r}" for k in bad)
        for k, t in SOURCE_KEYS.items():
            if k in ds and not _type_ok(ds[k], (t,)):
                errors.append(f"dataset.{k} must be {t.__name__}")
        if not bad and not any(e.startswith("dataset.") for e in errors):
            if ds.get("path") is None and ds.get("n") is None and merged["experiment"] != "epr":
                errors.append("synthetic dataset needs n")
            if ds.get("task", "classification") not in ("classification", "regression"):
                errors.append("dataset.task must be classification or regression")
            if ds.get("noise_std", 1.0) < 0:
                errors.append("dataset.noise_std must be nonnegative")
            if ds.get("n") is not None and ds["n"] < 1:
                errors.append("dataset.n must be positive")
            if ds.get("dimension", 20) < 1:
                errors.append("dataset.dimension must be positive")
            source = DataSource(preprocess=merged["preprocess"],
                                **{k: (float(v) if SOURCE_KEYS[k] is float else v) for k, v in ds.items()})
    if errors:
        raise ValidationError(errors)

    cfg = ExperimentConfig(
        experiment=merged["experiment"], method=merged["method"], loss=merged["loss"],
        l2=float(merged["l2"]), delta=float(merged["delta"]), source=source,
        train_fraction=float(merged["train_fraction"]),
        step_size=step_list[0] if step_list[0] == "auto" else float(step_list[0] if step_list[0] is not None else 1.0),
        m=m, epochs=float(merged["epochs"]), outer_iters=merged["outer_iters"],
        init_option=merged["init_option"], regime=merged["regime"],
        replicates=int(merged["replicates"]), seed=int(merged["seed"]),
        n_grid=tuple(merged["n_grid"]), checkpoints=int(merged["checkpoints"]),
        out_dir=merged["out"], compare_bound=bool(merged["compare_bound"]),
    )
    return cfg, [s if s == "auto" else float(s) for s in step_list if s is not None]


def bound_precondition(cfg: ExperimentConfig, eta: float, alpha: float, n: int) -> str | None:
    """Why the requested bound is unavailable at this step size, or None."""
    if cfg.method == "sgd":
        return None
    if cfg.regime == "convex":
        if cfg.experiment == "convergence" and not eta < 1 / (2 * alpha):
            return f"eta={eta:g} violates eta < 1/(2 alpha) = {1 / (2 * alpha):g}"
        if cfg.experiment == "stability" and not eta <= 1 / (2 * alpha):
            return f"eta={eta:g} violates eta <= 1/(2 alpha) = {1 / (2 * alpha):g}"
    return None


def certified_alpha(cfg: ExperimentConfig) -> tuple[float, int]:
    """Smoothness constant and training size of the config's data, without running."""
    from .harness import _fixed_dataset, _load_base
    from .losses import make_model

    data = _fixed_dataset(cfg, _load_base(cfg))
    return make_model(cfg.loss, data, cfg.l2, cfg.delta).alpha, len(data)


# ------------------------------------------------------------------ commands

def _run_experiment(cfg: ExperimentConfig, steps: list, workers: int | None, out=sys.stdout) -> list[Path]:
    written: list[Path] = []
    if cfg.experiment == "epr":
        res = run_epr_sweep(cfg, workers=workers)
        return emit_results(res, cfg.out_dir, f"epr_{cfg.method}_{cfg.regime}")
    alpha, n = certified_alpha(cfg)
    for eta in steps:
        run_cfg = replace(cfg, step_size=eta)
        if eta != "auto":
            note = bound_precondition(run_cfg, eta, alpha, n)
            if note is not None:
                print(f"warning: {note}; bound comparison disabled", file=sys.stderr)
                run_cfg = replace(run_cfg, compare_bound=False)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            if cfg.experiment == "stability":
                res = run_coupled_stability(run_cfg, workers=workers)
            else:
                res = run_convergence(run_cfg, workers=workers)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        written += emit_results(res, cfg.out_dir)
    return written


def cmd_experiment(args) -> int:
    raw = _read_config(args)
    overrides = list(args.set or [])
    overrides.insert(0, f"experiment={json.dumps(args.command)}")
    if args.replicates is not None:
        overrides.append(f"replicates={args.replicates}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.out is not None:
        overrides.append(f"out={json.dumps(args.out)}")
    cfg, steps = validate(raw, overrides)
    workers = args.workers if args.workers is not None else raw.get("workers")
    for p in _run_experiment(cfg, steps, workers):
        print(p)
    return EXIT_OK


def cmd_select_params(args) -> int:
    raw = apply_overrides(_read_config(args, required=False), args.set)
    errors = []
    for key in ("n", "L_w1", "alpha"):
        if key not in raw:
            errors.append(f"select-params needs {key}")
        elif not _type_ok(raw[key], SCHEMA[key]):
            errors.append(f"{key} must be {_tname(SCHEMA[key])}")
    regime = raw.get("regime", "convex")
    if regime not in REGIMES:
        errors.append(f"regime must be one of {', '.join(REGIMES)}")
    method = raw.get("method", "svrg")
    if method not in ("svrg", "saga"):
        errors.append("method must be svrg or saga")
    if errors:
        raise ValidationError(errors)
    p = B.select_params(regime, int(raw["n"]), float(raw["L_w1"]), float(raw["alpha"]),
                        raw.get("mu"), method)
    out = {"regime": p.regime, "method": p.method, "n": p.n, "eta": p.eta, "m": p.m, "t": p.t,
           "gamma": p.gamma, "c": p.c, "rho": p.rho, "conditions": p.conditions,
           "satisfied": p.satisfied}
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_parse_data(args) -> int:
    raw = apply_overrides(_read_config(args, required=False), args.set)
    path = args.path or raw.get("dataset")
    if not isinstance(path, str):
        raise ValidationError(["parse-data needs a dataset path"])
    data = load_libsvm(path)
    labels = sorted(set(data.labels.tolist()))
    print(f"samples={len(data)} dimension={data.dimension} nnz={data.indices.size} "
          f"labels={len(labels)}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        dest = out / (Path(path).stem + ".libsvm")
        text = format_libsvm(data)
        if parse_libsvm(text) != data:
            raise RuntimeError("round trip changed the dataset")
        dest.write_text(text, encoding="utf-8")
        print(dest)
    return EXIT_OK


def check_losses(n_pairs: int = 1000, seed: int = 0, dim: int = 5) -> dict:
    """Finite-difference, self-bounding and coercivity checks on random pairs."""
    from .data import Sample
    from .losses import (LossModel, coercivity_gap, loss_gradient, loss_value,
                         self_bounding_gap)

    rng = np.random.default_rng(seed)
    report = {}
    for kind in LOSSES:
        worst_fd, worst_sb, worst_co = 0.0, math.inf, math.inf
        for _ in range(n_pairs):
            x = rng.standard_normal(dim)
            y = float(rng.choice([-1.0, 1.0])) if kind in ("logistic", "smoothed_hinge") else float(rng.standard_normal())
            z = Sample.from_dense(x, y)
            xx = float(x @ x)
            curv = {"logistic": 0.25, "least_squares": 1.0, "smoothed_hinge": 1.0, "huber": 1.0}[kind]
            model = LossModel(kind, curv * xx * y ** 2 if kind in ("logistic", "smoothed_hinge") else curv * xx)
            w, w2 = rng.standard_normal(dim), rng.standard_normal(dim)
            g = loss_gradient(model, w, z)
            fd = np.empty(dim)
            for j in range(dim):
                h = 1e-6 * max(1.0, abs(w[j]))
                e = np.zeros(dim)
                e[j] = h
                fd[j] = (loss_value(model, w + e, z) - loss_value(model, w - e, z)) / (2 * h)
            scale = max(np.linalg.norm(g), 1e-8)
            worst_fd = max(worst_fd, float(np.linalg.norm(fd - g)) / scale)
            worst_sb = min(worst_sb, self_bounding_gap(model, w, z))
            worst_co = min(worst_co, coercivity_gap(model, w, w2, z))
        report[kind] = {"max_fd_rel_error": worst_fd, "min_self_bounding_gap": worst_sb,
                        "min_coercivity_gap": worst_co}
    return report


def cmd_check_losses(args) -> int:
    raw = apply_overrides(_read_config(args, required=False), args.set)
    report = check_losses(int(raw.get("pairs", 1000)), int(args.seed or raw.get("seed", 0)))
    ok = True
    for kind, r in report.items():
        good = r["max_fd_rel_error"] <= 1e-5 and r["min_self_bounding_gap"] >= -1e-12 \
            and r["min_coercivity_gap"] >= -1e-12
        ok &= good
        print(f"{kind}: fd={r['max_fd_rel_error']:.2e} self_bounding={r['min_self_bounding_gap']:.2e} "
              f"coercivity={r['min_coercivity_gap']:.2e} {'ok' if good else 'FAIL'}")
    if not ok:
        raise RuntimeError("loss checks failed")
    return EXIT_OK


def _read_config(args, required: bool = True) -> dict:
    if not args.config:
        if required:
            raise ValidationError(["--config is required"])
        return {}
    text = Path(args.config).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError([f"config is not valid JSON: {exc}"]) from None
    if not isinstance(raw, dict):
        raise ValidationError(["config must be a JSON object"])
    return raw


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vrstab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable, applied in order)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--replicates", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int, help="worker processes (default $VRSTAB_WORKERS or 1)")
        if name == "parse-data":
            p.add_argument("path", nargs="?")
    return ap


HANDLERS = {
    "stability": cmd_experiment, "convergence": cmd_experiment, "epr": cmd_experiment,
    "check-losses": cmd_check_losses, "parse-data": cmd_parse_data,
    "select-params": cmd_select_params,
}


def _fail(code: int, kind: str, msg: str) -> int:
    print(f"error_code={code} kind={kind} message={json.dumps(msg)}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            return EXIT_OK
        return _fail(EXIT_VALIDATION, "usage", "invalid command line")
    try:
        return HANDLERS[args.command](args)
    except ValidationError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return _fail(EXIT_VALIDATION, "validation", str(exc))
    except B.RegimeError as exc:
        return _fail(EXIT_VALIDATION, "regime", str(exc))
    except DivergenceError as exc:
        cause = f": {exc.__cause__}" if exc.__cause__ else ""
        return _fail(EXIT_DIVERGENCE, "divergence", f"{exc}{cause}")
    except (ParseError, PreprocessError) as exc:
        return _fail(EXIT_RUNTIME, "data", str(exc))
    except OSError as exc:
        return _fail(EXIT_RUNTIME, "io", str(exc))
    except (RuntimeError, ValueError) as exc:
        return _fail(EXIT_RUNTIME, "runtime", str(exc))


if __name__ == "__main__":
    sys.exit(main())
