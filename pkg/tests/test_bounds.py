import math

import mpmath as mp
import numpy as np
import pytest

from vrstab import bounds as B
from vrstab.bounds import BoundDomainError, BoundInputs, RegimeError

mp.mp.dps = 40


def inp(**kw):
    base = dict(alpha=1.0, eta=0.1, n=10, t=1, inner_risk_sums=[1.0], initial_risk=1.0, m=2)
    base.update(kw)
    return BoundInputs(**base)


# ---------------------------------------------------------------- m_factor

def test_m_factor_branches():
    assert B.m_factor(0.25, 1.0) == 1.0
    assert B.m_factor(0.3, 1.0) == pytest.approx(0.8, rel=1e-15)
    with pytest.raises(BoundDomainError):
        B.m_factor(0.5, 1.0)
    with pytest.raises(BoundDomainError):
        B.m_factor(0.0, 1.0)


def test_m_factor_continuous_at_quarter():
    a = 2.0
    left = B.m_factor(1 / (4 * a), a)
    right = B.m_factor(np.nextafter(1 / (4 * a), 1.0), a)
    assert left == 1.0 and right == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------- stability, convex

def test_svrg_stability_convex_example():
    v = B.svrg_stability_convex(inp())
    oracle = mp.e * (mp.mpf(16) * 2 * mp.mpf("0.01") / 10 + 8 * (4 + mp.mpf("0.2")) / 10 * mp.mpf("0.01"))
    assert v == pytest.approx(float(oracle), rel=1e-14)
    assert v == pytest.approx(0.17832, abs=5e-6)


def test_svrg_stability_convex_zero_and_monotone():
    assert B.svrg_stability_convex(inp(inner_risk_sums=[0.0], initial_risk=0.0)) == 0.0
    a = B.svrg_stability_convex(inp(n=10))
    b = B.svrg_stability_convex(inp(n=20))
    assert b < a


def test_saga_stability_convex_example():
    v = B.saga_stability_convex(inp(t=2, inner_risk_sums=[0.5, 0.5]))
    assert v == pytest.approx(float(mp.mpf("0.1936") * mp.e), rel=1e-14)
    assert v == pytest.approx(0.526259, abs=5e-7)
    assert B.saga_stability_convex(inp(t=2, inner_risk_sums=[0, 0], initial_risk=0)) == 0.0


@pytest.mark.parametrize("fn", [B.svrg_stability_convex, B.saga_stability_convex])
def test_stability_scales_as_eta_squared(fn):
    a = fn(inp(eta=0.05, t=3, inner_risk_sums=[0.3, 0.2, 0.7]))
    b = fn(inp(eta=0.1, t=3, inner_risk_sums=[0.3, 0.2, 0.7]))
    assert b / a == 4.0


def test_stability_domain_boundary_admits_equality():
    assert B.svrg_stability_convex(inp(eta=0.5)) > 0
    assert B.saga_stability_convex(inp(eta=0.5)) > 0
    with pytest.raises(BoundDomainError):
        B.svrg_stability_convex(inp(eta=0.5000001))
    with pytest.raises(BoundDomainError):
        B.saga_stability_convex(inp(eta=0.51))


# ---------------------------------------------------------------- optimization, convex

def test_svrg_opt_convex_example_and_scaling():
    i = inp(m=10, t=5, inner_risk_sums=())
    assert B.svrg_opt_convex(i, 1.0, 0.5) == pytest.approx(0.12, rel=1e-14)
    assert B.svrg_opt_convex(i, 0.0, 0.0) == 0.0
    i2 = inp(m=10, t=10, inner_risk_sums=())
    assert B.svrg_opt_convex(i2, 1.0, 0.5) == B.svrg_opt_convex(i, 1.0, 0.5) / 2
    with pytest.raises(BoundDomainError):
        B.svrg_opt_convex(inp(eta=0.5), 1.0, 1.0)


def test_saga_opt_convex_example_and_affinity():
    i = inp(n=5, t=10, inner_risk_sums=())
    assert B.saga_opt_convex(i, 1.0, 1.0) == pytest.approx(0.6, rel=1e-14)
    assert B.saga_opt_convex(i, 0.0, 0.0) == 0.0
    f = [B.saga_opt_convex(i, d, 1.0) for d in (0.0, 1.0, 2.0)]
    assert f[2] - f[1] == pytest.approx(f[1] - f[0], rel=1e-14)


def test_opt_bound_uses_m_factor_branch():
    i = inp(eta=0.3, m=4, t=2, inner_risk_sums=())
    expect = (1.0 + 4 * 1 * 4 * 0.09 * 0.5) / (2 * 0.8 * 4 * 0.3 * 2)
    assert B.svrg_opt_convex(i, 1.0, 0.5) == pytest.approx(expect, rel=1e-14)


# ---------------------------------------------------------------- strongly convex

def _svrg_sc_oracle(alpha, m, eta, mu, n, t, L1, risks):
    alpha, eta, mu = mp.mpf(alpha), mp.mpf(eta), mp.mpf(mu)
    c = m * eta * mu
    head = 16 * alpha * m * eta ** 2 / ((c - 1) ** t * n) * L1
    tail = 8 * alpha * m * (4 + mp.mpf(m) * t / n) / n * eta ** 2 * mp.fsum(
        mp.mpf(r) / (c - 1) ** (t - l) for l, r in enumerate(risks, 1))
    return head + tail


def test_svrg_stability_sc_worked_example():
    i = inp(alpha=1.0, m=4, eta=0.1, mu=7.5, n=100, t=1, inner_risk_sums=[0.5], initial_risk=1.0)
    v = B.svrg_stability_sc(i)
    oracle = _svrg_sc_oracle("1", 4, "0.1", "7.5", 100, 1, 1, ["0.5"])
    assert v == pytest.approx(float(oracle), rel=1e-13)
    # the first term carries (c-1)^{-t} = 1/2 here
    assert v == pytest.approx(0.0032 + 0.006464, rel=1e-12)


def test_svrg_stability_sc_geometric_first_term():
    vals = [B.svrg_stability_sc(inp(alpha=1.0, m=4, eta=0.1, mu=7.5, n=100, t=t,
                                    inner_risk_sums=[0.0] * t, initial_risk=1.0))
            for t in (5, 6, 7)]
    assert vals[1] / vals[0] == pytest.approx(0.5, rel=1e-12)
    assert vals[2] / vals[1] == pytest.approx(0.5, rel=1e-12)
    zero = B.svrg_stability_sc(inp(alpha=1.0, m=4, eta=0.1, mu=7.5, n=100, t=2,
                                   inner_risk_sums=[0, 0], initial_risk=0))
    assert zero == 0.0


def test_svrg_stability_sc_domain():
    with pytest.raises(BoundDomainError):  # c = 2
        B.svrg_stability_sc(inp(m=4, eta=0.1, mu=5.0, n=100))
    with pytest.raises(BoundDomainError):  # eta too large for (n-2)/(2 alpha (1+c)(n-1))
        B.svrg_stability_sc(inp(alpha=2.0, m=4, eta=0.1, mu=7.5, n=100))


def _saga_sc_oracle(alpha, eta, mu, n, t, L1, risks):
    alpha, eta, mu = mp.mpf(alpha), mp.mpf(eta), mp.mpf(mu)
    base = 1 + mp.mpf(1) / t - eta * mu
    coef = 8 * alpha * (6 + mp.mpf(t) / n) / n * eta ** 2
    return mp.fsum(base ** (t - k) * coef * mp.mpf(r) for k, r in enumerate(risks, 1)) + 32 * alpha * eta ** 2 * base ** t * mp.mpf(L1)


def test_saga_stability_sc_worked_example():
    i = inp(alpha=1.0, eta=0.01, mu=1.0, n=100, t=2, inner_risk_sums=[1.0, 1.0], initial_risk=1.0)
    with pytest.raises(BoundDomainError):  # eta = 0.01 > 1/(2 mu n) = 0.005
        B.saga_stability_sc(i)
    v = B.saga_stability_sc(i, check=False)
    assert v == pytest.approx(float(_saga_sc_oracle(1, "0.01", 1, 100, 2, 1, [1, 1])), rel=1e-13)
    assert v == pytest.approx(7.17584e-5 + 4.816e-5 + 7.10432e-3, rel=1e-5)


def test_saga_stability_sc_admissible_value_and_base_one():
    i = inp(alpha=1.0, eta=0.004, mu=1.0, n=100, t=2, inner_risk_sums=[0.7, 0.4], initial_risk=0.9)
    assert B.saga_stability_sc(i) == pytest.approx(
        float(_saga_sc_oracle(1, "0.004", 1, 100, 2, "0.9", ["0.7", "0.4"])), rel=1e-13)
    # eta mu = 1/t: no contraction
    t = 250
    i = inp(alpha=1.0, eta=0.004, mu=1.0, n=100, t=t, inner_risk_sums=[0.5] * t, initial_risk=1.0)
    flat = 8 * (6 + t / 100) / 100 * 0.004 ** 2 * 0.5 * t + 32 * 0.004 ** 2
    assert B.saga_stability_sc(i) == pytest.approx(flat, rel=1e-9)
    assert B.saga_stability_sc(inp(alpha=1.0, eta=0.004, mu=1.0, n=100, t=1,
                                   inner_risk_sums=[0], initial_risk=0)) == 0.0


def test_rho_examples():
    assert B.svrg_rho_sc(1 / 18, 1.0, 3.0) == pytest.approx(0.5, abs=1e-15)
    assert B.svrg_rho_sc(1 / 18, 1.0, 1e12) == pytest.approx(1 / 8, rel=1e-9)
    assert B.svrg_rho_sc(1e-12, 1.0, 3.0) == pytest.approx(1 / 3, rel=1e-9)
    with pytest.raises(BoundDomainError):
        B.svrg_rho_sc(0.5, 1.0, 3.0)


def test_rho_below_one_on_admissible_grid():
    for c in np.linspace(3, 50, 30):
        for ae in np.linspace(1e-6, 1 / 18, 30):
            assert B.svrg_rho_sc(ae, 1.0, c) < 1


def test_generalization_gap():
    assert B.generalization_gap_bound(1.0, 1.0, 0.5, 0.01) == pytest.approx(0.51)
    assert B.generalization_gap_bound(1.0, 1.0, 0.0, 0.0) == 0.0
    lo = B.generalization_gap_bound(1.0, 0.5, 0.5, 0.0)
    hi = B.generalization_gap_bound(1.0, 2.0, 0.5, 0.0)
    assert hi < lo
    assert B.generalization_gap_bound(1.0, 2.0, 0.0, 0.1) > B.generalization_gap_bound(1.0, 0.5, 0.0, 0.1)
    with pytest.raises(ValueError):
        B.generalization_gap_bound(1.0, 0.0, 0.5, 0.1)


@pytest.mark.parametrize("fn,kw", [
    (B.svrg_stability_convex, dict()),
    (B.saga_stability_convex, dict()),
    (B.svrg_stability_sc, dict(alpha=1.0, m=4, eta=0.1, mu=7.5, n=100)),
    (B.saga_stability_sc, dict(alpha=1.0, eta=0.004, mu=1.0, n=100)),
])
def test_monotone_in_every_risk_input(fn, kw):
    risks = [0.4, 0.3, 0.2]
    base = dict(t=3, inner_risk_sums=risks, initial_risk=0.6)
    base.update(kw)
    ref = fn(inp(**base))
    for j in range(3):
        bumped = list(risks)
        bumped[j] += 0.1
        assert fn(inp(**{**base, "inner_risk_sums": bumped})) >= ref
    assert fn(inp(**{**base, "initial_risk": 0.7})) >= ref


def test_bound_inputs_validation():
    with pytest.raises(ValueError):
        inp(t=2, inner_risk_sums=[1.0])
    with pytest.raises(ValueError):
        inp(inner_risk_sums=[-1.0])
    with pytest.raises(ValueError):
        inp(eta=0.0)


# ---------------------------------------------------------------- regimes

def test_select_params_convex():
    p = B.select_params("convex", 10000, 1.0, 1.0)
    assert p.eta == 0.01 and p.gamma == 100.0
    assert p.m * p.t == 10000 and p.m == 10000 and p.t == 1
    s = B.select_params("convex", 10000, 1.0, 1.0, method="saga")
    assert s.t == 10000 and s.eta == 0.01
    assert p.satisfied


def test_select_params_strongly_convex():
    p = B.select_params("strongly_convex", 1000, 1.0, 1.0, 0.1)
    assert p.eta == pytest.approx(1 / 118)
    assert p.m == 3540 and p.t == 7
    assert p.c >= 3 and p.satisfied
    assert p.rho < 1
    s = B.select_params("strongly_convex", 1000, 1.0, 1.0, 0.1, "saga")
    assert s.eta == pytest.approx(1 / 212) and s.t == math.ceil(1000 * math.log(1000))
    with pytest.raises(RegimeError):
        B.select_params("strongly_convex", 10, 1.0, 1.0, 0.1)
    with pytest.raises(RegimeError):
        B.select_params("strongly_convex", 10, 1.0, 1.0, None)
    with pytest.raises(RegimeError):
        B.select_params("other", 10, 1.0, 1.0)


def test_select_params_reports_failed_condition():
    p = B.select_params("convex", 4, 0.01, 10.0)
    assert not p.satisfied


# ---------------------------------------------------------------- Lyapunov

def test_lyapunov_svrg():
    rng = np.random.default_rng(0)
    x, G = rng.standard_normal(3), rng.standard_normal((5, 3))
    assert B.lyapunov_svrg_U((x, x), (G, G), 4, 0.1, 5) == 0.0
    x2, G2 = rng.standard_normal(3), rng.standard_normal((5, 3))
    d2 = float((x - x2) @ (x - x2))
    assert B.lyapunov_svrg_U((x, x2), (G, G2), 4, 0.0, 5) == d2
    assert B.lyapunov_svrg_U((x, x2), (G, G2), 4, 0.1, 5) >= d2


def test_lyapunov_saga():
    rng = np.random.default_rng(1)
    w, w2 = rng.standard_normal(3), rng.standard_normal(3)
    T = rng.standard_normal((4, 3))
    assert B.lyapunov_saga_Phi((w, w), (T, T), 0.3) == 0.0
    assert B.lyapunov_saga_Phi((w, w2), (T, T), 0.3) == float((w - w2) @ (w - w2))
    assert B.lyapunov_saga_Phi((w, w2), (T, T + 1), 0.3) >= float((w - w2) @ (w - w2))


def test_order_level_epr_terms_positive():
    assert B.svrg_epr_convex_order(100, 1, 0.1, 10, 100, 0.1, 1.0, 1.0) > 0
    assert B.saga_epr_convex_order(100, 0.1, 10, 100, 0.1, 1.0, 1.0) > 0
    assert B.svrg_epr_sc_order(300, 5, 0.01, 10, 100, 0.1, 1.0) > 0
    assert B.saga_epr_sc_order(500, 0.01, 1.0, 10, 100, 0.1, 1.0) > 0
