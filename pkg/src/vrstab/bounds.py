"""Closed-form stability, optimization and risk bounds for SVRG and SAGA.

Expectations inside the bounds (``E[L_S(.)]``) are supplied by the caller,
normally as replicate means. Every evaluator checks the step-size or regime
condition of the result it evaluates and raises :class:`BoundDomainError`
when it fails; pass ``check=False`` to evaluate the formula regardless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

E = math.e


class BoundDomainError(ValueError):
    """A step-size or regime precondition of the bound does not hold."""


class RegimeError(ValueError):
    """Parameter-regime side conditions cannot be met."""


@dataclass(frozen=True)
class BoundInputs:
    """Measured quantities fed to the bound evaluators.

    ``inner_risk_sums`` has one entry per step ``l = 1..t``: for the convex
    SVRG bound the inner sum ``sum_k E[L_S(x_k^{l+1})]``, for the strongly
    convex SVRG bound ``E[L_S(w_{l+1})]``, for SAGA ``E[L_S(w_l)]``. The
    optimization bounds ignore it, so it may be left empty there.
    """

    alpha: float
    eta: float
    n: int
    t: int
    inner_risk_sums: Sequence[float] = ()
    initial_risk: float = 0.0
    m: int = 1
    mu: float = 0.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0 or self.eta <= 0:
            raise ValueError("alpha and eta must be positive")
        if self.n < 1 or self.t < 1 or self.m < 1:
            raise ValueError("n, t, m must be >= 1")
        if self.mu < 0 or self.initial_risk < 0:
            raise ValueError("mu and initial_risk must be nonnegative")
        risks = tuple(float(r) for r in self.inner_risk_sums)
        if risks and len(risks) != self.t:
            raise ValueError(f"expected {self.t} risk entries, got {len(risks)}")
        if any(r < 0 for r in risks):
            raise ValueError("risks must be nonnegative")
        object.__setattr__(self, "inner_risk_sums", risks)

    @property
    def risk_sum(self) -> float:
        return math.fsum(self.inner_risk_sums)


def _require(cond: bool, msg: str, check: bool):
    if check and not cond:
        raise BoundDomainError(msg)


def m_factor(eta: float, alpha: float) -> float:
    """1 for ``eta <= 1/(4 alpha)``, ``2(1 - 2 alpha eta)`` up to ``1/(2 alpha)``."""
    if not 0 < eta < 1 / (2 * alpha):
        raise BoundDomainError(f"eta={eta} outside (0, 1/(2 alpha)) with alpha={alpha}")
    if eta <= 1 / (4 * alpha):
        return 1.0
    return 2.0 * (1.0 - 2.0 * alpha * eta)


def svrg_stability_convex(inp: BoundInputs, check: bool = True) -> float:
    a, eta, m, n, t = inp.alpha, inp.eta, inp.m, inp.n, inp.t
    _require(eta <= 1 / (2 * a), "SVRG stability needs eta <= 1/(2 alpha)", check)
    head = 16 * E * a * m * eta ** 2 / n * inp.initial_risk
    tail = 8 * E * a * (4 + m * t / n) / n * eta ** 2 * inp.risk_sum
    return head + tail


def saga_stability_convex(inp: BoundInputs, check: bool = True) -> float:
    a, eta, n, t = inp.alpha, inp.eta, inp.n, inp.t
    _require(eta <= 1 / (2 * a), "SAGA stability needs eta <= 1/(2 alpha)", check)
    tail = 8 * E * a * (4 + t / n) / n * eta ** 2 * inp.risk_sum
    head = 16 * E * a * eta ** 2 * inp.initial_risk
    return tail + head


def svrg_opt_convex(inp: BoundInputs, init_dist_sq: float, init_subopt: float) -> float:
    """Bound on ``E[L_S(w_bar_t)] - L_S(w_S)`` for the averaged inner iterates."""
    big_m = m_factor(inp.eta, inp.alpha)
    m, eta, t = inp.m, inp.eta, inp.t
    return (init_dist_sq + 4 * inp.alpha * m * eta ** 2 * init_subopt) / (2 * big_m * m * eta * t)


def saga_opt_convex(inp: BoundInputs, init_dist_sq: float, init_subopt: float) -> float:
    big_m = m_factor(inp.eta, inp.alpha)
    n, eta, t = inp.n, inp.eta, inp.t
    return (init_dist_sq + 4 * n * inp.alpha * eta ** 2 * init_subopt) / (2 * big_m * eta * t)


def svrg_stability_sc(inp: BoundInputs, check: bool = True) -> float:
    a, eta, m, n, t, mu = inp.alpha, inp.eta, inp.m, inp.n, inp.t, inp.mu
    c = m * eta * mu
    _require(c > 2, f"needs c = m eta mu > 2, got {c}", check)
    _require(n > 2 and eta <= (n - 2) / (2 * a * (1 + c) * (n - 1)),
             "needs eta <= (n-2)/(2 alpha (1+c)(n-1))", check)
    head = 16 * a * m * eta ** 2 / ((c - 1) ** t * n) * inp.initial_risk
    weighted = math.fsum(r / (c - 1) ** (t - l) for l, r in enumerate(inp.inner_risk_sums, start=1))
    tail = 8 * a * m * (4 + m * t / n) / n * eta ** 2 * weighted
    return head + tail


def saga_stability_sc(inp: BoundInputs, check: bool = True) -> float:
    a, eta, n, t, mu = inp.alpha, inp.eta, inp.n, inp.t, inp.mu
    _require(mu > 0 and eta <= 1 / (2 * mu * n), "needs eta <= 1/(2 mu n)", check)
    _require(n > 2 and eta <= (n - 2) / (6 * a * (n - 1)), "needs eta <= (n-2)/(6 alpha (n-1))", check)
    base = 1 + 1 / t - eta * mu
    coef = 8 * a * (6 + t / n) / n * eta ** 2
    tail = math.fsum(base ** (t - k) * coef * r for k, r in enumerate(inp.inner_risk_sums, start=1))
    return tail + 32 * a * eta ** 2 * base ** t * inp.initial_risk


def svrg_rho_sc(eta: float, alpha: float, c: float) -> float:
    """Linear-rate factor of option-II SVRG; contraction only when the result is < 1."""
    if not 0 < eta < 1 / (2 * alpha):
        raise BoundDomainError("rho needs 0 < eta < 1/(2 alpha)")
    q = 1 - 2 * alpha * eta
    return 1 / (c * q) + 2 * alpha * eta / q


def svrg_opt_sc(rho: float, t: int, init_subopt: float) -> float:
    return rho ** (t - 1) * init_subopt


def generalization_gap_bound(alpha: float, gamma: float, mean_train_risk: float,
                             mean_sq_stability: float) -> float:
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return alpha / gamma * mean_train_risk + (alpha + gamma) / 2 * mean_sq_stability


# Order-level right-hand sides of the excess-risk bounds. They carry an
# unknown universal constant, so they are diagnostics, never asserted bounds.

def svrg_epr_convex_order(m, t, eta, gamma, n, L_star, L_w1, dist_sq) -> float:
    core = dist_sq + m * eta ** 2 * L_w1
    return (1 / gamma * (L_star + core / (m * eta * t))
            + (1 + gamma) * (1 + m * t / n) / n * eta ** 2 * (m * t * L_star + core / eta)
            + (1 + gamma) * m * eta ** 2 / n * L_w1
            + core / (m * eta * t))


def saga_epr_convex_order(t, eta, gamma, n, L_star, L_w1, dist_sq) -> float:
    core = dist_sq + n * eta ** 2 * L_w1
    return (1 / gamma * (L_star + core / (eta * t))
            + (1 + gamma) * (1 + t / n) / n * eta ** 2 * (t * L_star + core / eta)
            + (1 + gamma) * eta ** 2 * L_w1
            + core / (eta * t))


def svrg_epr_sc_order(m, t, eta, gamma, n, L_star, L_w1) -> float:
    h = 2.0 ** -t
    return (1 / gamma * (L_star + L_w1 * h)
            + (1 + gamma) * m * (1 + m * t / n) / n * eta ** 2 * (L_star + t * L_w1 * h)
            + (1 + gamma) * m * eta ** 2 * L_w1 * h / n
            + L_w1 * h)


def saga_epr_sc_order(t, eta, mu, gamma, n, L_star, L_w1) -> float:
    decay = (1 - eta * mu) ** t / mu
    base = 1 + 1 / t - eta * mu
    return (1 / gamma * (L_star + decay)
            + (1 + gamma) * (1 + t / n) / n * eta ** 2
            * (L_star / (eta * mu - 1 / t) + t * base ** t / mu)
            + (1 + gamma) * eta ** 2 * L_w1
            + decay)


# ------------------------------------------------------------------ regimes

@dataclass(frozen=True)
class RegimeParams:
    regime: str
    method: str
    n: int
    eta: float
    t: int
    gamma: float
    m: int | None = None
    c: float | None = None
    rho: float | None = None
    conditions: dict = field(default_factory=dict)

    @property
    def satisfied(self) -> bool:
        return all(self.conditions.values())


def _ceil(x: float) -> int:
    # absorb representation error such as 3540.0000000000005
    return math.ceil(x - 1e-9 * max(1.0, abs(x)))


def select_params(regime: str, n: int, L_w1: float, alpha: float, mu: float | None = None,
                  method: str = "svrg") -> RegimeParams:
    """Step size, loop lengths and gamma for a regime, with every ``≍`` constant set to 1."""
    if n < 1:
        raise RegimeError("n must be >= 1")
    if method not in ("svrg", "saga"):
        raise RegimeError(f"unknown method {method!r}")
    if regime == "convex":
        if L_w1 <= 0:
            raise RegimeError("convex regime needs L(w1) > 0")
        eta = 1 / math.sqrt(n * L_w1)
        gamma = math.sqrt(n * L_w1)
        conds = {"eta < 1/(2 alpha)": eta < 1 / (2 * alpha)}
        if method == "svrg":
            return RegimeParams(regime, method, n, eta, 1, gamma, m=n, conditions=conds)
        return RegimeParams(regime, method, n, eta, n, gamma, conditions=conds)

    if regime != "strongly_convex":
        raise RegimeError(f"unknown regime {regime!r}")
    if mu is None or mu <= 0:
        raise RegimeError("strongly convex regime needs mu > 0")
    if mu * n <= 1:
        raise RegimeError(f"needs mu > 1/n, got mu*n = {mu * n}")
    if method == "svrg":
        eta = 1 / (mu * n + 18 * alpha)
        m = _ceil(3 / (eta * mu))
        c = m * eta * mu
        t = max(1, _ceil(math.log2(mu * n)))
        gamma = mu * n / math.sqrt(math.log2(mu * n))
        conds = {
            "c >= 3": c >= 3,
            "eta <= 1/(18 alpha)": eta <= 1 / (18 * alpha),
            "eta <= (n-2)/(2 alpha (1+c)(n-1))": n > 2 and eta <= (n - 2) / (2 * alpha * (1 + c) * (n - 1)),
        }
        rho = svrg_rho_sc(eta, alpha, c)
        return RegimeParams(regime, method, n, eta, t, gamma, m=m, c=c, rho=rho, conditions=conds)
    eta = 1 / (2 * mu * n + 12 * alpha)
    logn = math.log(n) if n > 1 else 1.0
    t = _ceil(n * logn)
    gamma = mu * n / logn ** (2 / 3)
    conds = {
        "eta <= 1/(2 mu n)": eta <= 1 / (2 * mu * n),
        "eta <= (n-2)/(6 alpha (n-1))": n > 2 and eta <= (n - 2) / (6 * alpha * (n - 1)),
        "t > 1/(eta mu)": t > 1 / (eta * mu),
    }
    return RegimeParams(regime, method, n, eta, t, gamma, conditions=conds)


# --------------------------------------------------------------- Lyapunov

def lyapunov_svrg_U(w_pair, ref_grads_pair, m: int, eta: float, n: int) -> float:
    """``||x - x'||^2 + (2 m eta^2 / n) sum_j ||G_j - G'_j||^2``.

    ``ref_grads_pair`` holds the ``(n, d)`` per-example gradients at the two
    reference points, each on its own dataset.
    """
    x, x2 = (np.asarray(v, dtype=np.float64) for v in w_pair)
    G, G2 = (np.asarray(v, dtype=np.float64) for v in ref_grads_pair)
    diff = x - x2
    return float(diff @ diff) + 2 * m * eta ** 2 / n * float(np.sum((G - G2) ** 2))


def lyapunov_saga_Phi(w_pair, table_grads_pair, eta: float) -> float:
    w, w2 = (np.asarray(v, dtype=np.float64) for v in w_pair)
    T, T2 = (np.asarray(v, dtype=np.float64) for v in table_grads_pair)
    diff = w - w2
    return float(diff @ diff) + 2 * eta ** 2 * float(np.sum((T - T2) ** 2))
