"""Coupled stability runs, convergence runs and excess-risk sweeps.

Every replicate is a pure function of ``(config, replicate id)``; replicates
may run in worker processes and are reduced in replicate-id order afterwards,
so the output does not depend on the worker count.
"""

from __future__ import annotations

import csv
import io
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import bounds as B
from .data import (Dataset, NeighborPair, SyntheticSpec, generate_synthetic,
                   generate_synthetic_classification, load_libsvm, make_neighbor,
                   population_minimizer_ls, population_risk_ls, preprocess, split_train)
from .losses import LossModel, empirical_risk, make_model, minimize_full_gradient
from .optim import (DivergenceError, IndexStream, SagaConfig, SvrgConfig, derive_seed,
                    run_method)

N_CHECKPOINTS = 50


@dataclass(frozen=True)
class DataSource:
    """Either a LIBSVM file or a synthetic generator.

    Synthetic data is Gaussian with ``true_weights = weight_scale * 1/sqrt(d)``;
    ``task="classification"`` takes signs as labels and scales rows to unit norm.
    """

    path: str | None = None
    task: str = "classification"
    n: int | None = None
    dimension: int = 20
    noise_std: float = 1.0
    weight_scale: float = 1.0
    preprocess: bool = True

    @property
    def synthetic(self) -> bool:
        return self.path is None

    def spec(self, seed: int) -> SyntheticSpec:
        w = np.full(self.dimension, self.weight_scale / math.sqrt(self.dimension))
        return SyntheticSpec(self.dimension, w, self.noise_std, seed)

    def generate(self, n: int, seed: int) -> Dataset:
        gen = generate_synthetic_classification if self.task == "classification" else generate_synthetic
        return gen(self.spec(seed), n)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "stability"        # stability | convergence | epr
    method: str = "svrg"                 # svrg | saga | sgd
    loss: str = "logistic"
    l2: float = 0.0
    delta: float = 1.0
    source: DataSource = field(default_factory=DataSource)
    train_fraction: float = 0.8
    step_size: float | str = 0.1         # a number, or "auto" for the regime's choice
    m: int | None = None                 # None means m = n
    epochs: float = 8.0                  # inner steps / n for SVRG, steps / n otherwise
    outer_iters: int | None = None       # overrides epochs for SVRG
    init_option: str | None = None       # None: I for convex, II for strongly convex
    regime: str = "convex"
    replicates: int = 100
    seed: int = 0
    n_grid: tuple = ()
    checkpoints: int = N_CHECKPOINTS
    out_dir: str = "results"
    compare_bound: bool = True

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.epochs <= 0:
            raise ValueError("epochs must be positive")
        if self.step_size != "auto" and not float(self.step_size) > 0:
            raise ValueError("step_size must be positive")

    @property
    def option(self) -> str:
        if self.init_option is not None:
            return self.init_option
        return "II" if self.regime == "strongly_convex" else "I"


# ------------------------------------------------------------------ aggregation

@dataclass(frozen=True)
class AggregateStats:
    mean: float
    std: float
    count: int
    std_defined: bool = True


def aggregate(values: Sequence[float]) -> AggregateStats:
    """Mean and sample std (divisor ``R - 1``) with exactly rounded sums in the given order."""
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("aggregate needs at least one value")
    r = len(vals)
    mean = math.fsum(vals) / r
    if r == 1:
        return AggregateStats(mean, 0.0, 1, std_defined=False)
    var = math.fsum((v - mean) ** 2 for v in vals) / (r - 1)
    return AggregateStats(mean, math.sqrt(var), r)


def _column_stats(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean and std of a ``(R, K)`` array via :func:`aggregate`."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ValueError("expected a 2-d array")
    stats = [aggregate(rows[:, j]) for j in range(rows.shape[1])]
    return np.array([s.mean for s in stats]), np.array([s.std for s in stats])


def _fmean(rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    flat = rows.reshape(rows.shape[0], -1)
    out = np.array([math.fsum(flat[:, j]) for j in range(flat.shape[1])]) / rows.shape[0]
    return out.reshape(rows.shape[1:])


@dataclass(frozen=True)
class BoundReport:
    fraction_dominated: float
    min_margin: float
    margins: np.ndarray


def compare_bound(mean_sq_distances, bound_values, slack=None) -> BoundReport:
    """Margins ``bound + slack - mean_sq`` per checkpoint, compared in squared distance."""
    d = np.asarray(mean_sq_distances, dtype=np.float64)
    b = np.asarray(bound_values, dtype=np.float64)
    if d.shape != b.shape:
        raise ValueError(f"checkpoint grids differ: {d.shape} vs {b.shape}")
    s = np.zeros_like(d) if slack is None else np.broadcast_to(np.asarray(slack, dtype=np.float64), d.shape)
    if d.size == 0:
        return BoundReport(1.0, math.inf, d)
    margins = b + s - d
    ok = margins >= 0
    return BoundReport(float(ok.mean()), float(np.min(margins)), margins)


def _map(fn, jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("VRSTAB_WORKERS", "1") or 1)
    return max(1, int(workers))


# ------------------------------------------------------------------ instances

def _load_base(cfg: ExperimentConfig) -> Dataset | None:
    src = cfg.source
    if src.synthetic:
        return None
    data = load_libsvm(src.path)
    if src.preprocess and cfg.loss in ("logistic", "smoothed_hinge"):
        data = preprocess(data)
    return data


def _neighbor_pair(cfg: ExperimentConfig, base: Dataset | None, seed: int) -> NeighborPair:
    src = cfg.source
    if base is None:
        full = src.generate(src.n + 1, seed)
        train, pool = full.subset(range(src.n)), full.subset([src.n])
    else:
        train, pool = split_train(base, cfg.train_fraction, seed)
    return make_neighbor(train, pool, seed)


def _fixed_dataset(cfg: ExperimentConfig, base: Dataset | None) -> Dataset:
    if base is None:
        return cfg.source.generate(cfg.source.n, cfg.seed)
    return split_train(base, cfg.train_fraction, cfg.seed)[0]


def _pair_model(cfg: ExperimentConfig, pair: NeighborPair) -> LossModel:
    a = make_model(cfg.loss, pair.base, cfg.l2, cfg.delta)
    b = make_model(cfg.loss, pair.neighbor, cfg.l2, cfg.delta)
    return a if a.alpha >= b.alpha else b


@dataclass(frozen=True)
class RunPlan:
    """Resolved optimizer parameters shared by all replicates."""

    method: str
    eta: float
    m: int | None
    outer_iters: int | None
    total_steps: int
    option: str
    regime: B.RegimeParams | None = None


def plan_run(cfg: ExperimentConfig, model: LossModel, n: int) -> RunPlan:
    regime = None
    eta = cfg.step_size
    m = cfg.m
    outer = cfg.outer_iters
    if eta == "auto":
        if cfg.regime == "strongly_convex":
            regime = B.select_params("strongly_convex", n, 1.0, model.alpha, model.mu,
                                     "saga" if cfg.method == "saga" else "svrg")
        else:
            raise ValueError("step_size 'auto' needs regime strongly_convex (convex needs L(w1))")
        eta = regime.eta
        if cfg.method == "svrg":
            m = regime.m if m is None else m
    eta = float(eta)
    if cfg.method == "svrg":
        m = n if m is None else int(m)
        if outer is None:
            outer = max(1, int(round(cfg.epochs * n / m)))
        return RunPlan("svrg", eta, m, outer, m * outer, cfg.option, regime)
    total = max(1, int(round(cfg.epochs * n)))
    return RunPlan(cfg.method, eta, None, None, total, cfg.option, regime)


def checkpoint_grid(total: int, points: int = N_CHECKPOINTS) -> np.ndarray:
    """``points`` evenly spaced step counts in ``[1, total]`` (fewer if ``total < points``)."""
    if total < 1:
        return np.zeros(0, dtype=np.int64)
    j = np.arange(1, points + 1, dtype=np.int64)
    return np.unique((j * total + points - 1) // points)


def _method_config(plan: RunPlan, seed: int, checkpoints, record: bool):
    ck = None if checkpoints is None else tuple(int(c) for c in checkpoints)
    if plan.method == "svrg":
        return SvrgConfig(plan.eta, plan.m, plan.outer_iters, plan.option, seed, record, ck)
    return SagaConfig(plan.eta, plan.total_steps, seed, record, ck)


# ------------------------------------------------------------------ stability

@dataclass(frozen=True)
class DistanceTrace:
    epochs: np.ndarray
    distances: np.ndarray
    sq_distances: np.ndarray

    @property
    def checkpoints(self):
        return list(zip(self.epochs.tolist(), self.distances.tolist(), self.sq_distances.tolist()))


@dataclass
class ReplicateOutcome:
    replicate: int
    sq: np.ndarray | None = None
    risks: np.ndarray | None = None
    initial_risk: float = 0.0
    alpha: float = 0.0
    failure: str | None = None
    extra: dict = field(default_factory=dict)


def _stability_job(job) -> ReplicateOutcome:
    cfg, plan, base, r, grid = job
    seed_r = derive_seed(cfg.seed, r)
    pair = _neighbor_pair(cfg, base, seed_r)
    model = _pair_model(cfg, pair)
    n = len(pair.base)
    stream = IndexStream(derive_seed(seed_r, 0))
    sc_svrg = plan.method == "svrg" and cfg.regime == "strongly_convex"
    ck = None if sc_svrg else grid
    try:
        ta = run_method(plan.method, model, pair.base, _method_config(plan, 0, ck, not sc_svrg),
                        stream.copy())
        tb = run_method(plan.method, model, pair.neighbor, _method_config(plan, 0, ck, False), stream.copy())
    except DivergenceError as exc:
        return ReplicateOutcome(r, failure=str(exc))
    if sc_svrg:
        diff = ta.references[1:] - tb.references[1:]
        risks = ta.reference_risks[1:]
    else:
        diff = ta.iterates - tb.iterates
        risks = ta.inner_risks
    sq = np.einsum("ij,ij->i", diff, diff)
    w1_risk = float(empirical_risk(model, np.zeros(pair.base.dimension), pair.base))
    return ReplicateOutcome(r, sq, risks, w1_risk, model.alpha, extra={"n": n, "mu": model.mu})


@dataclass
class StabilityResult:
    config: ExperimentConfig
    plan: RunPlan
    steps: np.ndarray
    epochs: np.ndarray
    traces: list
    risk_logs: list
    initial_risks: np.ndarray
    bound_inputs: list
    bound_sq: np.ndarray
    mean_distance: np.ndarray
    std_distance: np.ndarray
    mean_sq_distance: np.ndarray
    std_sq_distance: np.ndarray
    alpha: float
    warnings: list = field(default_factory=list)

    def report(self, slack_se: float = 0.0) -> BoundReport:
        r = len(self.traces)
        slack = slack_se * self.std_sq_distance / math.sqrt(r)
        return compare_bound(self.mean_sq_distance, self.bound_sq, slack)


def _stability_bounds(cfg, plan, steps, risk_logs, initial_risks, alpha, mu, n):
    """Pooled bound at every checkpoint from replicate-mean risks."""
    L1 = math.fsum(initial_risks) / len(initial_risks)
    out, inputs, notes = [], [], []
    if plan.method == "sgd" or not cfg.compare_bound:
        return np.full(len(steps), np.nan), [None] * len(steps), notes
    sc = cfg.regime == "strongly_convex"
    mean_risks = _fmean(np.stack(risk_logs))
    if plan.method == "svrg" and not sc:
        loop_sums = np.array([math.fsum(row) for row in mean_risks])
    for s in steps:
        s = int(s)
        if plan.method == "svrg":
            t = -(-s // plan.m)
            rs = mean_risks[:t] if sc else loop_sums[:t]
            inp = B.BoundInputs(alpha, plan.eta, n, t, rs, L1, m=plan.m, mu=mu)
            fn = B.svrg_stability_sc if sc else B.svrg_stability_convex
        else:
            inp = B.BoundInputs(alpha, plan.eta, n, s, mean_risks[:s], L1, mu=mu)
            fn = B.saga_stability_sc if sc else B.saga_stability_convex
        try:
            out.append(fn(inp))
        except B.BoundDomainError as exc:
            if not notes:
                notes.append(f"bound comparison disabled: {exc}")
            out.append(math.nan)
        inputs.append(inp)
    return np.array(out), inputs, notes


def run_coupled_stability(cfg: ExperimentConfig, workers: int | None = None) -> StabilityResult:
    """Coupled runs on ``S`` and ``S^(i)`` with one shared index stream per replicate."""
    base = _load_base(cfg)
    probe = _neighbor_pair(cfg, base, derive_seed(cfg.seed, 0))
    n = len(probe.base)
    plan = plan_run(cfg, _pair_model(cfg, probe), n)
    sc_svrg = plan.method == "svrg" and cfg.regime == "strongly_convex"
    grid = checkpoint_grid(plan.total_steps, cfg.checkpoints)
    jobs = [(cfg, plan, base, r, grid) for r in range(cfg.replicates)]
    outs = sorted(_map(_stability_job, jobs, resolve_workers(workers)), key=lambda o: o.replicate)
    failed = [o for o in outs if o.failure]
    if failed:
        raise DivergenceError(plan.method, -1) from RuntimeError(
            "; ".join(f"replicate {o.replicate}: {o.failure}" for o in failed[:5]))
    steps = np.arange(1, plan.outer_iters + 1) * plan.m if sc_svrg else grid
    epochs = steps / n
    traces = []
    for o in outs:
        sq = o.sq
        traces.append(DistanceTrace(epochs, np.sqrt(sq), sq))
    sq_rows = np.stack([t.sq_distances for t in traces])
    d_rows = np.stack([t.distances for t in traces])
    mean_d, std_d = _column_stats(d_rows)
    mean_sq, std_sq = _column_stats(sq_rows)
    alpha = max(o.alpha for o in outs)
    init = np.array([o.initial_risk for o in outs])
    bound_sq, inputs, notes = _stability_bounds(
        cfg, plan, steps, [o.risks for o in outs], init, alpha, outs[0].extra["mu"], n)
    for msg in notes:
        warnings.warn(msg, stacklevel=2)
    return StabilityResult(cfg, plan, steps, epochs, traces, [o.risks for o in outs], init,
                           inputs, bound_sq, mean_d, std_d, mean_sq, std_sq, alpha, notes)


# ------------------------------------------------------------------ convergence

@dataclass
class ConvergenceResult:
    config: ExperimentConfig
    plan: RunPlan
    outer_steps: np.ndarray
    subopt: np.ndarray           # (R, K)
    mean_subopt: np.ndarray
    std_subopt: np.ndarray
    bound: np.ndarray
    w_star: np.ndarray
    risk_star: float
    alpha: float
    rho: float | None = None
    warnings: list = field(default_factory=list)


def _convergence_job(job):
    cfg, plan, data, model, risk_star, r = job
    stream = IndexStream(derive_seed(cfg.seed, r))
    sc = cfg.regime == "strongly_convex"
    if plan.method == "svrg":
        ck = None
    else:
        ck = tuple(range(len(data), plan.total_steps + 1, len(data))) or (plan.total_steps,)
    try:
        tr = run_method(plan.method, model, data, _method_config(plan, 0, ck, False), stream)
    except DivergenceError as exc:
        return r, None, str(exc)
    if plan.method == "svrg" and sc:
        vals = tr.reference_risks - risk_star
    else:
        pts = tr.iterates if sc else tr.averages
        vals = np.array([empirical_risk(model, p, data) for p in pts]) - risk_star
    return r, vals, None


def run_convergence(cfg: ExperimentConfig, workers: int | None = None,
                    oracle_tol: float = 1e-10) -> ConvergenceResult:
    """Suboptimality per outer step against the matching theoretical curve.

    Convex: ``L_S(w_bar) - L_S(w_S)`` after each outer step (SVRG) or each
    epoch (SAGA/SGD). Strongly convex SVRG: ``L_S(w_t) - L_S(w_S)`` for the
    references ``w_1 .. w_{T+1}``.
    """
    base = _load_base(cfg)
    data = _fixed_dataset(cfg, base)
    model = make_model(cfg.loss, data, cfg.l2, cfg.delta)
    n = len(data)
    plan = plan_run(cfg, model, n)
    w_star, _, _ = minimize_full_gradient(model, data, tol=oracle_tol)
    risk_star = empirical_risk(model, w_star, data)
    w1 = np.zeros(data.dimension)
    sub0 = empirical_risk(model, w1, data) - risk_star
    dist0 = float(w_star @ w_star)
    sc = cfg.regime == "strongly_convex"
    jobs = [(cfg, plan, data, model, risk_star, r) for r in range(cfg.replicates)]
    outs = sorted(_map(_convergence_job, jobs, resolve_workers(workers)), key=lambda o: o[0])
    bad = [o for o in outs if o[2]]
    if bad:
        raise DivergenceError(plan.method, -1) from RuntimeError(bad[0][2])
    rows = np.stack([o[1] for o in outs])
    mean, std = _column_stats(rows)
    notes, rho = [], None
    if plan.method == "svrg" and sc:
        steps = np.arange(1, plan.outer_iters + 2)
        c = plan.m * plan.eta * model.mu
        try:
            rho = B.svrg_rho_sc(plan.eta, model.alpha, c)
            bound = np.array([B.svrg_opt_sc(rho, int(t), sub0) for t in steps])
        except B.BoundDomainError as exc:
            notes.append(f"bound disabled: {exc}")
            bound = np.full(len(steps), np.nan)
    else:
        if plan.method == "svrg":
            steps = np.arange(1, plan.outer_iters + 1)
        else:
            steps = np.arange(n, plan.total_steps + 1, n) if plan.total_steps >= n else np.array([plan.total_steps])
        bound = np.full(len(steps), np.nan)
        if not sc and plan.method != "sgd":
            try:
                fn = B.svrg_opt_convex if plan.method == "svrg" else B.saga_opt_convex
                bound = np.array([
                    fn(B.BoundInputs(model.alpha, plan.eta, n, int(t), (), m=plan.m or 1), dist0, sub0)
                    for t in steps])
            except B.BoundDomainError as exc:
                notes.append(f"bound disabled: {exc}")
    for msg in notes:
        warnings.warn(msg, stacklevel=2)
    return ConvergenceResult(cfg, plan, steps, rows, mean, std, bound, w_star, risk_star,
                             model.alpha, rho, notes)


# ------------------------------------------------------------------ EPR sweep

@dataclass
class EprResult:
    config: ExperimentConfig
    n_grid: np.ndarray
    values: list                 # per n: array of excess risks over pairs
    mean_epr: np.ndarray
    std_epr: np.ndarray
    slope: float
    slopes_to_date: np.ndarray
    params: list                 # RegimeParams of the first pair at each n
    conditions_met: np.ndarray   # fraction of pairs whose side conditions held


def loglog_slope(ns, values) -> float:
    ns = np.asarray(ns, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if ns.size < 2 or np.any(values <= 0):
        return math.nan
    x, y = np.log(ns), np.log(values)
    return float(np.polyfit(x, y, 1)[0])


def _epr_job(job):
    cfg, n, r = job
    src = cfg.source
    seed = derive_seed(derive_seed(cfg.seed, n), r)
    spec = src.spec(seed)
    data = generate_synthetic(spec, n)
    sc = cfg.regime == "strongly_convex"
    mu = cfg.l2 if sc else None
    model = make_model("least_squares", data, cfg.l2)
    L_w1 = population_risk_ls(spec, np.zeros(spec.dimension), model)
    params = B.select_params(cfg.regime, n, L_w1, model.alpha, mu, cfg.method)
    stream = IndexStream(derive_seed(seed, 0))
    if cfg.method == "svrg":
        opt = "II" if sc else cfg.option
        scfg = SvrgConfig(params.eta, params.m, params.t, opt, 0, False, (params.m * params.t,))
        tr = run_method("svrg", model, data, scfg, stream)
        w = tr.references[-1] if sc else tr.final_average
    else:
        tr = run_method("saga", model, data, SagaConfig(params.eta, params.t, 0, False, (params.t,)), stream)
        w = tr.final if sc else tr.final_average
    w_opt = population_minimizer_ls(spec, cfg.l2)
    excess = population_risk_ls(spec, w, model) - population_risk_ls(spec, w_opt, model)
    return n, r, excess, params


def run_epr_sweep(cfg: ExperimentConfig, n_grid: Sequence[int] | None = None,
                  workers: int | None = None) -> EprResult:
    """Mean excess population risk over fresh (dataset, run) pairs at each ``n``."""
    if cfg.loss != "least_squares" or not cfg.source.synthetic:
        raise ValueError("EPR sweeps need the least-squares synthetic family")
    if cfg.source.task != "regression":
        cfg = replace(cfg, source=replace(cfg.source, task="regression"))
    grid = [int(v) for v in (n_grid if n_grid is not None else cfg.n_grid)]
    if not grid:
        raise ValueError("empty n grid")
    jobs = [(cfg, n, r) for n in grid for r in range(cfg.replicates)]
    outs = sorted(_map(_epr_job, jobs, resolve_workers(workers)), key=lambda o: (grid.index(o[0]), o[1]))
    values, params, cond = [], [], []
    for n in grid:
        rows = [o for o in outs if o[0] == n]
        values.append(np.array([o[2] for o in rows]))
        params.append(rows[0][3])
        cond.append(np.mean([o[3].satisfied for o in rows]))
    stats = [aggregate(v) for v in values]
    mean = np.array([s.mean for s in stats])
    std = np.array([s.std for s in stats])
    slopes = np.array([loglog_slope(grid[:k + 1], mean[:k + 1]) for k in range(len(grid))])
    return EprResult(cfg, np.array(grid), values, mean, std, float(slopes[-1]), slopes, params,
                     np.array(cond))


# ------------------------------------------------------------------ output

def _num(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _csv_text(header: list, rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_num(v) for v in row])
    return buf.getvalue()


def _svg(x, mean, std, title: str, xlabel: str, ylabel: str, extra=None, log_x=False) -> str:
    W, H, L, R, T, Bm = 800, 600, 80, 30, 50, 60
    x = np.asarray(x, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
             f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
             f'<text x="{W / 2:.1f}" y="28" text-anchor="middle" font-size="18">{title}</text>',
             f'<text x="{W / 2:.1f}" y="{H - 15}" text-anchor="middle" font-size="14">{xlabel}</text>',
             f'<text x="20" y="{H / 2:.1f}" text-anchor="middle" font-size="14" '
             f'transform="rotate(-90 20 {H / 2:.1f})">{ylabel}</text>',
             f'<rect x="{L}" y="{T}" width="{W - L - R}" height="{H - T - Bm}" fill="none" stroke="black"/>']
    if x.size:
        xs = np.log(x) if log_x else x
        ys = [mean - std, mean + std]
        if extra is not None:
            ys.append(np.asarray(extra, dtype=np.float64))
        allv = np.concatenate([v[np.isfinite(v)] for v in ys] + [mean[np.isfinite(mean)]])
        lo, hi = (float(allv.min()), float(allv.max())) if allv.size else (0.0, 1.0)
        if hi <= lo:
            hi = lo + 1.0
        x0, x1 = float(xs.min()), float(xs.max())
        if x1 <= x0:
            x1 = x0 + 1.0

        def px(v):
            return L + (v - x0) / (x1 - x0) * (W - L - R)

        def py(v):
            return H - Bm - (v - lo) / (hi - lo) * (H - T - Bm)

        upper = [f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs, mean + std)]
        lower = [f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs[::-1], (mean - std)[::-1])]
        lines.append(f'<polygon points="{" ".join(upper + lower)}" fill="#1f77b4" fill-opacity="0.25" stroke="none"/>')
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs, mean))
        lines.append(f'<polyline points="{pts}" fill="none" stroke="#1f77b4" stroke-width="2"/>')
        if extra is not None:
            e = np.asarray(extra, dtype=np.float64)
            ok = np.isfinite(e)
            if ok.any():
                pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs[ok], e[ok]))
                lines.append(f'<polyline points="{pts}" fill="none" stroke="#d62728" '
                             f'stroke-width="2" stroke-dasharray="6 4"/>')
        for v, anchor in ((lo, H - Bm), (hi, T)):
            lines.append(f'<text x="{L - 6}" y="{anchor + 4:.1f}" text-anchor="end" font-size="12">{v:.3g}</text>')
        for v, pos in ((x0, L), (x1, W - R)):
            label = math.exp(v) if log_x else v
            lines.append(f'<text x="{pos:.1f}" y="{H - Bm + 18}" text-anchor="middle" font-size="12">{label:.4g}</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def result_tables(result) -> tuple[list, list, dict]:
    """CSV header, rows and plot arguments for any result type."""
    if isinstance(result, StabilityResult):
        header = ["epoch", "mean_distance", "std_distance", "mean_sq_distance", "bound_sq"]
        rows = list(zip(result.epochs, result.mean_distance, result.std_distance,
                        result.mean_sq_distance, result.bound_sq))
        plot = dict(x=result.epochs, mean=result.mean_distance, std=result.std_distance,
                    xlabel="epoch", ylabel="distance", extra=np.sqrt(result.bound_sq))
    elif isinstance(result, ConvergenceResult):
        header = ["outer_step", "mean_subopt", "std_subopt", "bound"]
        rows = list(zip(result.outer_steps, result.mean_subopt, result.std_subopt, result.bound))
        plot = dict(x=result.outer_steps, mean=result.mean_subopt, std=result.std_subopt,
                    xlabel="outer step", ylabel="suboptimality", extra=result.bound)
    elif isinstance(result, EprResult):
        header = ["n", "mean_epr", "std_epr", "slope_to_date"]
        rows = list(zip(result.n_grid, result.mean_epr, result.std_epr, result.slopes_to_date))
        plot = dict(x=result.n_grid, mean=result.mean_epr, std=result.std_epr,
                    xlabel="n", ylabel="excess risk", log_x=True)
    else:
        raise TypeError(f"unsupported result {type(result).__name__}")
    return header, rows, plot


def result_name(result) -> str:
    cfg = result.config
    eta = getattr(getattr(result, "plan", None), "eta", None)
    tag = f"{cfg.experiment}_{cfg.method}"
    if eta is not None:
        tag += f"_eta{eta:.6g}"
    return tag


def emit_results(result, out_dir: str | Path, name: str | None = None) -> list[Path]:
    """Write ``<name>.csv`` and ``<name>.svg``; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = name or result_name(result)
    header, rows, plot = result_tables(result)
    csv_path, svg_path = out / f"{name}.csv", out / f"{name}.svg"
    csv_path.write_text(_csv_text(header, rows), encoding="utf-8")
    svg_path.write_text(_svg(plot.pop("x"), plot.pop("mean"), plot.pop("std"), name, **plot),
                        encoding="utf-8")
    return [csv_path, svg_path]


def csv_bytes(result) -> bytes:
    header, rows, _ = result_tables(result)
    return _csv_text(header, rows).encode("utf-8")
