"""Compiled inner loops shared by the loss, optimizer and oracle code.

Data arrive as CSR triples (indptr, indices, data) with 0-based column
indices plus a label vector. Loss kinds are small integer codes so a single
compiled kernel serves every model.
"""

import math

import numpy as np
from numba import njit

LOGISTIC = 0
LEAST_SQUARES = 1
SMOOTHED_HINGE = 2
HUBER = 3

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV_2_53 = 1.0 / 9007199254740992.0

# status codes returned by the optimizer kernels
OK = 0
DIVERGED = 1


@njit(cache=True)
def mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def draw(seed, position, upper):
    """Uniform integer in [0, upper) at stream ``position`` (counter-based)."""
    state = np.uint64(seed) + (np.uint64(position) + np.uint64(1)) * _GAMMA
    u = float(mix64(state) >> np.uint64(11)) * _INV_2_53
    return int(u * upper)


@njit(cache=True)
def link_value(kind, p, y, delta):
    if kind == LOGISTIC:
        z = -y * p
        if z > 0.0:
            return z + math.log1p(math.exp(-z))
        return math.log1p(math.exp(z))
    elif kind == LEAST_SQUARES:
        r = p - y
        return 0.5 * r * r
    elif kind == SMOOTHED_HINGE:
        mg = y * p
        if mg >= 1.0:
            return 0.0
        if mg >= 1.0 - delta:
            return (1.0 - mg) * (1.0 - mg) / (2.0 * delta)
        return 1.0 - mg - 0.5 * delta
    else:
        r = p - y
        a = abs(r)
        if a <= delta:
            return 0.5 * r * r
        return delta * (a - 0.5 * delta)


@njit(cache=True)
def link_deriv(kind, p, y, delta):
    """Derivative of the link loss with respect to the prediction ``p``."""
    if kind == LOGISTIC:
        z = -y * p
        if z >= 0.0:
            return -y / (1.0 + math.exp(-z))
        e = math.exp(z)
        return -y * e / (1.0 + e)
    elif kind == LEAST_SQUARES:
        return p - y
    elif kind == SMOOTHED_HINGE:
        mg = y * p
        if mg >= 1.0:
            return 0.0
        if mg >= 1.0 - delta:
            return -y * (1.0 - mg) / delta
        return -y
    else:
        r = p - y
        if abs(r) <= delta:
            return r
        if r > 0.0:
            return delta
        return -delta


@njit(cache=True)
def row_dot(indptr, indices, data, i, w):
    s = 0.0
    for q in range(indptr[i], indptr[i + 1]):
        s += data[q] * w[indices[q]]
    return s


@njit(cache=True)
def row_axpy(indptr, indices, data, i, a, out):
    for q in range(indptr[i], indptr[i + 1]):
        out[indices[q]] += a * data[q]


@njit(cache=True)
def sq_norm(v):
    s = 0.0
    for q in range(v.shape[0]):
        s += v[q] * v[q]
    return s


@njit(cache=True)
def all_finite(v):
    for q in range(v.shape[0]):
        if not math.isfinite(v[q]):
            return False
    return True


@njit(cache=True)
def empirical_risk(indptr, indices, data, y, kind, delta, l2, w):
    # Neumaier-compensated sum, fixed left-to-right order
    n = y.shape[0]
    s = 0.0
    c = 0.0
    for i in range(n):
        v = link_value(kind, row_dot(indptr, indices, data, i, w), y[i], delta)
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
    risk = (s + c) / n
    if l2 > 0.0:
        risk += 0.5 * l2 * sq_norm(w)
    return risk


@njit(cache=True)
def full_gradient(indptr, indices, data, y, kind, delta, l2, w, out, p_ref, s_ref):
    """Writes grad L_S(w) into ``out``; caches predictions and link slopes."""
    n = y.shape[0]
    out[:] = 0.0
    for j in range(n):
        p = row_dot(indptr, indices, data, j, w)
        s = link_deriv(kind, p, y[j], delta)
        p_ref[j] = p
        s_ref[j] = s
        row_axpy(indptr, indices, data, j, s, out)
    for q in range(out.shape[0]):
        out[q] = out[q] / n + l2 * w[q]


@njit(cache=True)
def _snapshot(step, ckpt_steps, ck, x, avg, evals, snaps, avg_snaps, ck_evals):
    while ck < ckpt_steps.shape[0] and ckpt_steps[ck] == step:
        snaps[ck, :] = x
        avg_snaps[ck, :] = avg
        ck_evals[ck] = evals
        ck += 1
    return ck


@njit(cache=True)
def svrg_kernel(indptr, indices, data, y, kind, delta, l2, w1, eta, m, n_outer,
                option, seed, counter, ckpt_steps, record_inner):
    n = y.shape[0]
    d = w1.shape[0]
    n_ck = ckpt_steps.shape[0]
    snaps = np.zeros((n_ck, d))
    avg_snaps = np.zeros((n_ck, d))
    ck_evals = np.zeros(n_ck, dtype=np.int64)
    if record_inner:
        inner_risks = np.zeros((n_outer, m))
    else:
        inner_risks = np.zeros((0, 0))
    refs = np.zeros((n_outer + 1, d))
    ref_risks = np.zeros(n_outer + 1)
    choices = np.zeros(n_outer, dtype=np.int64)

    w = w1.copy()
    x = w1.copy()
    chosen = w1.copy()
    avg = np.zeros(d)
    full = np.zeros(d)
    g = np.zeros(d)
    p_ref = np.zeros(n)
    s_ref = np.zeros(n)
    refs[0, :] = w
    ref_risks[0] = empirical_risk(indptr, indices, data, y, kind, delta, l2, w)

    evals = 0
    step = 0
    ck = 0
    n_avg = 0
    for t in range(n_outer):
        full_gradient(indptr, indices, data, y, kind, delta, l2, w, full, p_ref, s_ref)
        evals += n
        if option == 2:
            x[:] = w
        # the reference choice is drawn after the m index draws of this loop
        choice = draw(seed, counter + m, m)
        for k in range(m):
            if record_inner:
                inner_risks[t, k] = empirical_risk(indptr, indices, data, y, kind, delta, l2, x)
            if k == choice:
                chosen[:] = x
            n_avg += 1
            for q in range(d):
                avg[q] += (x[q] - avg[q]) / n_avg
            i = draw(seed, counter + k, n)
            p = row_dot(indptr, indices, data, i, x)
            coef = link_deriv(kind, p, y[i], delta) - s_ref[i]
            for q in range(d):
                g[q] = full[q] + l2 * (x[q] - w[q])
            row_axpy(indptr, indices, data, i, coef, g)
            for q in range(d):
                x[q] -= eta * g[q]
            evals += 2
            step += 1
            if not all_finite(x):
                return (DIVERGED, t, k, counter, snaps, avg_snaps, ck_evals, inner_risks,
                        refs, ref_risks, choices, x, avg)
            ck = _snapshot(step, ckpt_steps, ck, x, avg, evals, snaps, avg_snaps, ck_evals)
        counter += m + 1
        w[:] = chosen
        choices[t] = choice
        refs[t + 1, :] = w
        ref_risks[t + 1] = empirical_risk(indptr, indices, data, y, kind, delta, l2, w)
    return (OK, -1, -1, counter, snaps, avg_snaps, ck_evals, inner_risks,
            refs, ref_risks, choices, x, avg)


@njit(cache=True)
def saga_kernel(indptr, indices, data, y, kind, delta, l2, w1, eta, n_steps,
                seed, counter, ckpt_steps, record_risks):
    n = y.shape[0]
    d = w1.shape[0]
    n_ck = ckpt_steps.shape[0]
    snaps = np.zeros((n_ck, d))
    avg_snaps = np.zeros((n_ck, d))
    ck_evals = np.zeros(n_ck, dtype=np.int64)
    if record_risks:
        risks = np.zeros(n_steps)
    else:
        risks = np.zeros(0)

    w = w1.copy()
    avg = np.zeros(d)
    table = np.zeros((n, d))
    mean = np.zeros(d)
    fresh = np.zeros(d)
    g = np.zeros(d)
    for j in range(n):
        s = link_deriv(kind, row_dot(indptr, indices, data, j, w), y[j], delta)
        for q in range(d):
            table[j, q] = l2 * w[q]
        row_axpy(indptr, indices, data, j, s, table[j])
        for q in range(d):
            mean[q] += table[j, q]
    for q in range(d):
        mean[q] /= n
    evals = n

    ck = 0
    for t in range(n_steps):
        if record_risks:
            risks[t] = empirical_risk(indptr, indices, data, y, kind, delta, l2, w)
        for q in range(d):
            avg[q] += (w[q] - avg[q]) / (t + 1)
        i = draw(seed, counter + t, n)
        s = link_deriv(kind, row_dot(indptr, indices, data, i, w), y[i], delta)
        for q in range(d):
            fresh[q] = l2 * w[q]
        row_axpy(indptr, indices, data, i, s, fresh)
        for q in range(d):
            g[q] = fresh[q] - table[i, q] + mean[q]
            mean[q] += (fresh[q] - table[i, q]) / n
            table[i, q] = fresh[q]
            w[q] -= eta * g[q]
        evals += 1
        if not all_finite(w):
            return (DIVERGED, t, counter, snaps, avg_snaps, ck_evals, risks, w, avg, table, mean)
        ck = _snapshot(t + 1, ckpt_steps, ck, w, avg, evals, snaps, avg_snaps, ck_evals)
    counter += n_steps
    return (OK, -1, counter, snaps, avg_snaps, ck_evals, risks, w, avg, table, mean)


@njit(cache=True)
def sgd_kernel(indptr, indices, data, y, kind, delta, l2, w1, eta, n_steps,
               seed, counter, ckpt_steps, record_risks):
    d = w1.shape[0]
    n = y.shape[0]
    n_ck = ckpt_steps.shape[0]
    snaps = np.zeros((n_ck, d))
    avg_snaps = np.zeros((n_ck, d))
    ck_evals = np.zeros(n_ck, dtype=np.int64)
    if record_risks:
        risks = np.zeros(n_steps)
    else:
        risks = np.zeros(0)
    w = w1.copy()
    avg = np.zeros(d)
    ck = 0
    for t in range(n_steps):
        if record_risks:
            risks[t] = empirical_risk(indptr, indices, data, y, kind, delta, l2, w)
        for q in range(d):
            avg[q] += (w[q] - avg[q]) / (t + 1)
        i = draw(seed, counter + t, n)
        s = link_deriv(kind, row_dot(indptr, indices, data, i, w), y[i], delta)
        for q in range(d):
            w[q] -= eta * l2 * w[q]
        row_axpy(indptr, indices, data, i, -eta * s, w)
        if not all_finite(w):
            return (DIVERGED, t, counter, snaps, avg_snaps, ck_evals, risks, w, avg)
        ck = _snapshot(t + 1, ckpt_steps, ck, w, avg, t + 1, snaps, avg_snaps, ck_evals)
    counter += n_steps
    return (OK, -1, counter, snaps, avg_snaps, ck_evals, risks, w, avg)


@njit(cache=True)
def gd_kernel(indptr, indices, data, y, kind, delta, l2, w0, step, tol, max_iter):
    """Plain full-gradient descent; returns (w, grad_norm, iterations)."""
    n = y.shape[0]
    w = w0.copy()
    grad = np.zeros(w.shape[0])
    p_ref = np.zeros(n)
    s_ref = np.zeros(n)
    for it in range(max_iter):
        full_gradient(indptr, indices, data, y, kind, delta, l2, w, grad, p_ref, s_ref)
        gn = math.sqrt(sq_norm(grad))
        if gn <= tol:
            return w, gn, it
        for q in range(w.shape[0]):
            w[q] -= step * grad[q]
    full_gradient(indptr, indices, data, y, kind, delta, l2, w, grad, p_ref, s_ref)
    return w, math.sqrt(sq_norm(grad)), max_iter


@njit(cache=True)
def risks_at(indptr, indices, data, y, kind, delta, l2, points):
    out = np.zeros(points.shape[0])
    for r in range(points.shape[0]):
        out[r] = empirical_risk(indptr, indices, data, y, kind, delta, l2, points[r])
    return out
