"""SVRG, SAGA and SGD on a :class:`Dataset` with counter-based index streams.

Two runs fed copies of the same :class:`IndexStream` draw identical indices
(and, for SVRG, identical reference choices), which is how coupled
stability runs on neighboring datasets are produced.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .data import Dataset
from .losses import LossModel, empirical_gradient, loss_gradient

MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed: int, replicate: int) -> int:
    """Per-replicate seed: splitmix64 finalizer over ``base_seed`` and the replicate id."""
    return mix64((base_seed & MASK64) + (replicate + 1) * _GAMMA)


def stream_draw(seed: int, position: int, upper: int) -> int:
    state = ((seed & MASK64) + (position + 1) * _GAMMA) & MASK64
    u = (mix64(state) >> 11) * (1.0 / 9007199254740992.0)
    return int(u * upper)


@dataclass
class IndexStream:
    """Counter-based uniform index source; position ``k`` always yields the same value."""

    seed: int
    counter: int = 0

    def next_index(self, n: int) -> int:
        v = stream_draw(self.seed, self.counter, n)
        self.counter += 1
        return v

    def peek(self, offset: int, upper: int) -> int:
        return stream_draw(self.seed, self.counter + offset, upper)

    def copy(self) -> IndexStream:
        return IndexStream(self.seed, self.counter)

    @property
    def kernel_seed(self) -> np.uint64:
        return np.uint64(self.seed & MASK64)


class DivergenceError(RuntimeError):
    def __init__(self, method: str, t: int, k: int | None = None):
        where = f"outer step {t}, inner step {k}" if k is not None else f"step {t}"
        super().__init__(f"{method} produced a non-finite iterate at {where}")
        self.method = method
        self.t = t
        self.k = k


@dataclass(frozen=True)
class SvrgConfig:
    step_size: float
    inner_length: int
    outer_iters: int
    init_option: str = "I"
    seed: int = 0
    record_inner_risks: bool = False
    checkpoints: tuple | None = None  # global inner-step counts to snapshot

    def __post_init__(self):
        if not self.step_size >= 0:
            raise ValueError("step_size must be nonnegative")
        if self.inner_length < 1 or self.outer_iters < 1:
            raise ValueError("inner_length and outer_iters must be >= 1")
        if self.init_option not in ("I", "II"):
            raise ValueError("init_option is 'I' or 'II'")

    @property
    def total_steps(self) -> int:
        return self.inner_length * self.outer_iters


@dataclass(frozen=True)
class SagaConfig:
    step_size: float
    total_iters: int
    seed: int = 0
    record_risks: bool = False
    checkpoints: tuple | None = None

    def __post_init__(self):
        if not self.step_size >= 0:
            raise ValueError("step_size must be nonnegative")
        if self.total_iters < 1:
            raise ValueError("total_iters must be >= 1")

    @property
    def total_steps(self) -> int:
        return self.total_iters


SgdConfig = SagaConfig


@dataclass
class Trajectory:
    """What a run recorded.

    ``iterates[j]`` and ``averages[j]`` are the current iterate and the running
    average after ``steps[j]`` updates. For SVRG the average runs over the inner
    iterates ``x_0 .. x_{m-1}`` of each completed step; for SAGA/SGD over
    ``w_1 .. w_t``. ``inner_risks`` holds ``L_S(x_k^{t+1})`` with shape
    ``(T, m)`` for SVRG and ``L_S(w_k)`` with shape ``(T,)`` otherwise.
    """

    method: str
    n: int
    steps: np.ndarray
    iterates: np.ndarray
    averages: np.ndarray
    gradient_evals: np.ndarray
    final: np.ndarray
    final_average: np.ndarray
    total_steps: int
    inner_risks: np.ndarray | None = None
    references: np.ndarray | None = None
    reference_risks: np.ndarray | None = None
    reference_choices: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    @property
    def epochs(self) -> np.ndarray:
        return self.steps / self.n

    @property
    def outer_iterates(self) -> np.ndarray:
        return self.references if self.references is not None else self.iterates


def _checkpoint_array(requested, total: int, period: int) -> np.ndarray:
    if requested is None:
        pts = list(range(period, total + 1, period))
        if not pts or pts[-1] != total:
            pts.append(total)
        arr = np.array(pts, dtype=np.int64)
    else:
        arr = np.unique(np.asarray(requested, dtype=np.int64))
    if arr.size and (arr[0] < 1 or arr[-1] > total):
        raise ValueError(f"checkpoints must lie in [1, {total}]")
    return arr


def _prepare(model: LossModel, data: Dataset, w1):
    if len(data) == 0:
        raise ValueError("empty dataset")
    d = data.dimension
    w1 = np.zeros(d) if w1 is None else np.array(w1, dtype=np.float64)
    if w1.shape != (d,):
        raise ValueError(f"initial point must have length {d}")
    return w1


def svrg_run(model: LossModel, data: Dataset, cfg: SvrgConfig,
             stream: IndexStream | None = None, w1=None) -> Trajectory:
    """SVRG with inner-loop initialization option I (``x_m^t``) or II (``w_t``).

    Each outer step computes the full gradient at the reference ``w_t`` once,
    takes ``m`` variance-reduced steps, then draws ``w_{t+1}`` uniformly from
    ``x_0 .. x_{m-1}``. ``stream`` is advanced by ``m + 1`` per outer step.
    """
    w1 = _prepare(model, data, w1)
    stream = IndexStream(cfg.seed) if stream is None else stream
    m, T = cfg.inner_length, cfg.outer_iters
    ck = _checkpoint_array(cfg.checkpoints, m * T, m)
    (status, bad_t, bad_k, counter, snaps, avg_snaps, ck_evals, inner, refs, ref_risks,
     choices, x, avg) = K.svrg_kernel(
        data.indptr, data.indices, data.data, data.labels, *model.kernel_args(),
        w1, float(cfg.step_size), m, T, 1 if cfg.init_option == "I" else 2,
        stream.kernel_seed, stream.counter, ck, cfg.record_inner_risks)
    if status != K.OK:
        raise DivergenceError("svrg", int(bad_t) + 1, int(bad_k))
    stream.counter = int(counter)
    return Trajectory(
        method="svrg", n=len(data), steps=ck, iterates=snaps, averages=avg_snaps,
        gradient_evals=ck_evals, final=x, final_average=avg, total_steps=m * T,
        inner_risks=inner if cfg.record_inner_risks else None,
        references=refs, reference_risks=ref_risks, reference_choices=choices,
    )


def saga_run(model: LossModel, data: Dataset, cfg: SagaConfig,
             stream: IndexStream | None = None, w1=None) -> Trajectory:
    """SAGA with a dense table of stored component gradients and its running mean."""
    w1 = _prepare(model, data, w1)
    stream = IndexStream(cfg.seed) if stream is None else stream
    T = cfg.total_iters
    ck = _checkpoint_array(cfg.checkpoints, T, len(data))
    status, bad_t, counter, snaps, avg_snaps, ck_evals, risks, w, avg, table, mean = K.saga_kernel(
        data.indptr, data.indices, data.data, data.labels, *model.kernel_args(),
        w1, float(cfg.step_size), T, stream.kernel_seed, stream.counter, ck, cfg.record_risks)
    if status != K.OK:
        raise DivergenceError("saga", int(bad_t) + 1)
    stream.counter = int(counter)
    return Trajectory(
        method="saga", n=len(data), steps=ck, iterates=snaps, averages=avg_snaps,
        gradient_evals=ck_evals, final=w, final_average=avg, total_steps=T,
        inner_risks=risks if cfg.record_risks else None,
        extras={"table": table, "table_mean": mean},
    )


def sgd_run(model: LossModel, data: Dataset, cfg: SagaConfig,
            stream: IndexStream | None = None, w1=None) -> Trajectory:
    w1 = _prepare(model, data, w1)
    stream = IndexStream(cfg.seed) if stream is None else stream
    T = cfg.total_iters
    ck = _checkpoint_array(cfg.checkpoints, T, len(data))
    status, bad_t, counter, snaps, avg_snaps, ck_evals, risks, w, avg = K.sgd_kernel(
        data.indptr, data.indices, data.data, data.labels, *model.kernel_args(),
        w1, float(cfg.step_size), T, stream.kernel_seed, stream.counter, ck, cfg.record_risks)
    if status != K.OK:
        raise DivergenceError("sgd", int(bad_t) + 1)
    stream.counter = int(counter)
    return Trajectory(
        method="sgd", n=len(data), steps=ck, iterates=snaps, averages=avg_snaps,
        gradient_evals=ck_evals, final=w, final_average=avg, total_steps=T,
        inner_risks=risks if cfg.record_risks else None,
    )


def average_iterate(traj: Trajectory) -> np.ndarray:
    """Uniform average of the iterates the bounds average over (kept online)."""
    if traj.total_steps < 1:
        raise ValueError("empty trajectory")
    return traj.final_average.copy()


# Direction helpers evaluated literally from per-example gradients. The run
# kernels never call these; tests use them to check the identities of the
# estimators independently.

def svrg_direction(model: LossModel, data: Dataset, x, w_ref, i: int,
                   full_grad: np.ndarray | None = None) -> np.ndarray:
    """``grad l(x; z_i) - grad l(w_ref; z_i) + grad L_S(w_ref)`` (``i`` 0-based)."""
    if full_grad is None:
        full_grad = empirical_gradient(model, w_ref, data)
    z = data[i]
    return loss_gradient(model, x, z) - loss_gradient(model, w_ref, z) + full_grad


def saga_direction(model: LossModel, data: Dataset, w, table: np.ndarray, i: int) -> np.ndarray:
    """``grad l(w; z_i) - table[i] + mean(table)`` for a table of stored gradients."""
    return loss_gradient(model, w, data[i]) - table[i] + table.mean(axis=0)


def gradient_table(model: LossModel, data: Dataset, points: np.ndarray) -> np.ndarray:
    """Row ``j`` is ``grad l(points[j]; z_j)``."""
    return np.array([loss_gradient(model, points[j], data[j]) for j in range(len(data))])


def run_method(method: str, model: LossModel, data: Dataset, cfg, stream=None, w1=None) -> Trajectory:
    runner = {"svrg": svrg_run, "saga": saga_run, "sgd": sgd_run}[method]
    return runner(model, data, cfg, stream, w1)
