"""Gradient flow integration, energy, decay rates, and pregluing."""

import csv
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from . import geometry as geo
from .errors import (ChartOverflow, DegenerateCritical, EscapedDomain, InsufficientTail,
                     StepCollapse)
from .fields import gradient_norms, riemannian_gradients

EPS_CAPTURE = 1e-6
GRAD_CAPTURE = 1e-6
S_MAX = 500.0
TAU_MONO = 1e-9

# Dormand-Prince 5(4) tableau
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

CAPTURED, UNRESOLVED, ESCAPED, COLLAPSED = "captured", "unresolved", "escaped", "collapsed"


@dataclass(eq=False)
class FlowLine:
    s: np.ndarray
    points: np.ndarray
    values: np.ndarray
    work: np.ndarray  # running integral of |d_s x|^2, same length as s
    source: Optional[str] = None
    target: Optional[str] = None
    status: str = UNRESOLVED
    decay_fit: Optional[dict] = None
    meta: dict = dc_field(default_factory=dict)

    @property
    def samples(self):
        return list(zip(self.s, self.points))

    @property
    def energy(self):
        return energy(self)

    @property
    def monotone_violation(self):
        if len(self.values) < 2:
            return 0.0
        inc = np.diff(self.values) * np.sign(self.s[-1] - self.s[0])
        return float(max(inc.max(), 0.0))

    @property
    def resolved(self):
        return self.status == CAPTURED

    def __len__(self):
        return len(self.s)


class AutonomousFlow:
    """Negative (or positive, when backward) metric gradient field of one function."""

    def __init__(self, model, field, backward=False):
        self.model = model
        self.field = field
        self.sign = 1.0 if backward else -1.0

    def velocity(self, s, X, idx):
        W = riemannian_gradients(self.field, self.model, X)
        if self.model.embedded:
            dens = np.sum(W * W, axis=1)
        else:
            g = geo.metric_matrices(self.model, X)
            dens = np.sum(W * W, axis=1) if g is None else np.einsum("ni,nij,nj->n", W, g, W)
        return self.sign * W, dens

    def values(self, s, X):
        return self.field.values(X)

    def grad_norms(self, s, X):
        return gradient_norms(self.field, self.model, X)

    def capture_allowed(self, s):
        return True


def _scale(Y, Z, atol, rtol):
    return atol + rtol * np.maximum(np.abs(Y), np.abs(Z))


def run_batch(system, model, X0, s0=0.0, direction=1.0, crits=(), capture=None,
              eps_capture=EPS_CAPTURE, grad_capture=GRAD_CAPTURE, s_max=S_MAX,
              rtol=1e-10, atol=1e-12, max_step=0.25, record=True, callback=None,
              fail_on_collapse=False):
    """Integrate many trajectories of ``system`` at once.

    ``direction`` is +1 when flow time runs forward in s and -1 when it runs
    backward (the system's velocity is already expressed per unit flow time).
    ``s0`` and ``s_max`` (flow-time budget) may be per-trajectory arrays.  Returns a dict with the
    per-trajectory status, target index, final points and (optionally) samples.
    """
    X = np.array(np.atleast_2d(X0), dtype=float)
    N, d = X.shape
    s0 = np.broadcast_to(np.asarray(s0, float), (N,)).copy()
    t = np.zeros(N)
    s_max = np.broadcast_to(np.asarray(s_max, float), (N,)).copy()
    work = np.zeros(N)
    C = np.array([c.location for c in crits]).reshape(len(crits), d) if len(crits) else np.zeros((0, d))
    cap_ok = np.ones(len(crits), bool) if capture is None else np.asarray(capture, bool)
    status = np.array([UNRESOLVED] * N, dtype=object)
    target = -np.ones(N, int)
    active = np.ones(N, bool)

    hist_idx, hist_t, hist_x, hist_w = [], [], [], []

    def record_rows(idx):
        if record:
            hist_idx.append(idx.copy())
            hist_t.append(t[idx].copy())
            hist_x.append(X[idx].copy())
            hist_w.append(work[idx].copy())

    def check_stop(idx):
        if model.kind == geo.LINE:
            a, b = model.interval
            out = (X[idx, 0] <= a) | (X[idx, 0] >= b)
            if out.any():
                status[idx[out]] = ESCAPED
                active[idx[out]] = False
        if len(C):
            live = idx[active[idx]]
            if live.size:
                sl = s0[live] + direction * t[live]
                allowed = np.array([system.capture_allowed(v) for v in sl])
                D = np.stack([geo.distance(model, X[live], C[k]) for k in range(len(C))], axis=1)
                D = np.where(cap_ok[None, :], D, np.inf)
                k = np.argmin(D, axis=1)
                near = (D[np.arange(live.size), k] < eps_capture) & allowed
                if near.any():
                    rows = live[near]
                    gn = system.grad_norms(s0[rows] + direction * t[rows], X[rows])
                    hit = gn < grad_capture
                    rows, kk = rows[hit], k[near][hit]
                    status[rows] = CAPTURED
                    target[rows] = kk
                    active[rows] = False
        over = idx[active[idx] & (t[idx] >= s_max[idx])]
        active[over] = False

    idx = np.arange(N)
    record_rows(idx)
    check_stop(idx)

    K1, dens1 = system.velocity(s0, X, idx)
    K1 = K1.copy()
    dens1 = dens1.copy()
    sc = _scale(X, X, atol, rtol)
    vn = np.linalg.norm(K1 / sc, axis=1)
    yn = np.linalg.norm(X / sc, axis=1)
    h = np.where(vn > 1e-300, 0.01 * np.maximum(yn, 1e-5) / np.maximum(vn, 1e-300), max_step)
    h = np.minimum(np.maximum(h, 1e-8), max_step)

    stages = [None] * 7
    dstages = [None] * 7
    while True:
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        Xi = X[idx]
        ti = t[idx]
        si = s0[idx]
        hi = np.minimum(h[idx], s_max[idx] - ti + 1e-12)
        vnorm = np.linalg.norm(K1[idx], axis=1)
        hi = np.minimum(hi, geo.H_MAX / np.maximum(vnorm, 1e-300))
        hi = np.maximum(hi, 1e-300)
        stages[0], dstages[0] = K1[idx], dens1[idx]
        for j in range(1, 7):
            Y = Xi.copy()
            for m, a in enumerate(_A[j]):
                if a:
                    Y += (hi * a)[:, None] * stages[m]
            stages[j], dstages[j] = system.velocity(si + direction * (ti + _C[j] * hi), Y, idx)
        Xn = Xi + hi[:, None] * sum(b * k for b, k in zip(_B5, stages) if b)
        wn = work[idx] + hi * sum(b * k for b, k in zip(_B5, dstages) if b)
        errx = hi[:, None] * sum(e * k for e, k in zip(_E, stages) if e)
        errw = hi * sum(e * k for e, k in zip(_E, dstages) if e)
        err = np.maximum(np.max(np.abs(errx) / _scale(Xi, Xn, atol, rtol), axis=1),
                         np.abs(errw) / _scale(work[idx], wn, atol, rtol))
        err = np.where(np.isfinite(err), err, 1e10)
        ok = err <= 1.0
        fac = np.where(err > 0, 0.9 * np.maximum(err, 1e-300) ** -0.2, 5.0)
        hnew = np.where(ok, hi * np.clip(fac, 0.2, 5.0), hi * np.clip(fac, 0.1, 0.9))
        h[idx] = np.minimum(hnew, max_step)

        acc = idx[ok]
        if acc.size:
            Xa = Xn[ok]
            try:
                Xa = geo.project_points(model, Xa) if model.embedded else geo.wrap(model, Xa)
            except Exception:
                # fall back to per-row projection so one bad row cannot stop the batch
                good = []
                for r in range(len(Xa)):
                    try:
                        Xa[r] = geo.project_points(model, Xa[r:r + 1])[0]
                        good.append(True)
                    except Exception:
                        good.append(False)
                bad = acc[~np.array(good)]
                status[bad] = COLLAPSED
                active[bad] = False
            X[acc] = Xa
            t[acc] += hi[ok]
            work[acc] = wn[ok]
            K1[acc] = stages[6][ok]
            dens1[acc] = dstages[6][ok]
            record_rows(acc)
            if callback is not None:
                callback(acc, s0[acc] + direction * t[acc], X[acc])
            check_stop(acc)
        tiny = idx[~ok & (h[idx] < 1e-13 * (1 + t[idx]))]
        if tiny.size:
            if fail_on_collapse:
                raise StepCollapse("adaptive step collapsed at s=%.6g" % (s0[tiny[0]] + t[tiny[0]]))
            status[tiny] = COLLAPSED
            active[tiny] = False

    out = {"status": status, "target": target, "X": X, "t": t, "work": work, "s0": s0}
    if record:
        I = np.concatenate(hist_idx)
        T = np.concatenate(hist_t)
        order = np.lexsort((T, I))
        I, T = I[order], T[order]
        Xh = np.concatenate(hist_x)[order]
        Wh = np.concatenate(hist_w)[order]
        bounds = np.searchsorted(I, np.arange(N + 1))
        out["samples"] = [(T[bounds[k]:bounds[k + 1]], Xh[bounds[k]:bounds[k + 1]],
                           Wh[bounds[k]:bounds[k + 1]]) for k in range(N)]
    return out


def _lines_from(out, system, crits, direction, source=None):
    lines = []
    for k, (T, P, W) in enumerate(out["samples"]):
        s = out["s0"][k] + direction * T
        vals = _values_along(system, s, P)
        tgt = out["target"][k]
        lines.append(FlowLine(s, P, vals, W, source=source,
                              target=crits[tgt].label if tgt >= 0 else None,
                              status=out["status"][k]))
    return lines


def _values_along(system, s, P):
    if isinstance(system, AutonomousFlow):
        return system.values(None, P)
    return np.array([system.values(si, P[i:i + 1])[0] for i, si in enumerate(s)])


def integrate_many(model, field, starts, crits=(), eps_capture=EPS_CAPTURE, s_max=S_MAX,
                   backward=False, source=None, capture=None, **kw):
    system = AutonomousFlow(model, field, backward)
    out = run_batch(system, model, starts, 0.0, 1.0, crits, capture, eps_capture,
                    s_max=s_max, **kw)
    lines = _lines_from(out, system, list(crits), 1.0, source)
    if backward:
        for ln in lines:
            reverse_line(ln)
    return lines


def reverse_line(line):
    """Turn a backward-integrated line into an ordinary forward flow line."""
    line.s = -line.s[::-1]
    line.points = line.points[::-1]
    line.values = line.values[::-1]
    line.work = line.work[-1] - line.work[::-1]
    line.source, line.target = line.target, line.source
    return line


def integrate(model, field, start, crits=(), eps_capture=EPS_CAPTURE, s_max=S_MAX,
              backward=False, source=None, **kw):
    """Integrate the negative gradient flow (positive when ``backward``) from ``start``."""
    kw.setdefault("fail_on_collapse", True)
    line = integrate_many(model, field, np.asarray(start, float)[None, :], crits, eps_capture,
                          s_max, backward, source, **kw)[0]
    if line.status == ESCAPED:
        raise EscapedDomain("trajectory left the interval near %s" % line.points[-1])
    return line


def energy(line, model=None):
    """Integral of |d_s x|^2 along the line.

    Lines produced by the integrator carry the running integral of the energy
    density, computed with the same embedded Runge-Kutta weights as the state;
    lines assembled by hand fall back to the trapezoid rule on finite differences.
    """
    if len(line.s) < 2:
        return 0.0
    if line.work is not None and len(line.work) == len(line.s):
        return float(abs(line.work[-1] - line.work[0]))
    s = line.s
    P = line.points
    D = np.diff(P, axis=0)
    if model is not None:
        D = geo.displacement(model, P[:-1], P[1:])
    ds = np.diff(s)
    speed2 = np.sum(D * D, axis=1) / ds ** 2
    return float(np.sum(speed2 * np.abs(ds)))


def decay_rate(line, target, model=None, tail_fraction=0.3, min_samples=20):
    """Least-squares exponential rate of approach to ``target`` over the tail."""
    n = len(line.s)
    m = int(np.ceil(tail_fraction * n))
    if m < min_samples or n < min_samples:
        raise InsufficientTail("tail has %d samples, need %d" % (min(m, n), min_samples))
    loc = target.location if hasattr(target, "location") else np.asarray(target, float)
    P = line.points[-m:]
    s = line.s[-m:]
    if model is None:
        d = np.linalg.norm(P - loc, axis=1)
    else:
        d = geo.distance(model, P, loc)
    keep = d > 0
    s, d = s[keep], np.log(d[keep])
    if len(s) < min_samples:
        raise InsufficientTail("tail has %d usable samples" % len(s))
    A = np.stack([s, np.ones_like(s)], axis=1)
    coef, *_ = np.linalg.lstsq(A, d, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - d) ** 2)))
    fit = {"rate": float(-coef[0]), "residual": resid}
    line.decay_fit = fit
    return fit


def _chart(model, crit):
    """Local chart centred at ``crit``: (to_chart, from_chart, frame)."""
    c = np.asarray(crit.location, float)
    F = geo.tangent_frames(model, c[None, :])[0]
    if model.embedded:
        n = model.constraint.grad(c[None, :])[0]
        n = n / np.linalg.norm(n)
        G = model.constraint

        def to_chart(P):
            return (np.atleast_2d(P) - c) @ F

        def from_chart(U, radius=0.5):
            U = np.atleast_2d(U)
            if np.any(np.linalg.norm(U, axis=1) > radius):
                raise ChartOverflow("point leaves the normal chart")
            Y = c + U @ F.T
            tn = np.zeros(len(Y))
            for _ in range(60):
                Z = Y + tn[:, None] * n
                r = G.value(Z)
                dr = G.grad(Z) @ n
                if np.any(np.abs(dr) < 1e-8):
                    raise ChartOverflow("chart inverse is singular")
                tn -= r / dr
                if np.all(np.abs(r) < 1e-14):
                    break
            Z = Y + tn[:, None] * n
            if np.any(np.abs(G.value(Z)) > geo.TAU_SURF):
                raise ChartOverflow("chart inverse did not converge")
            return Z
        return to_chart, from_chart, F

    def to_chart(P):
        return geo.displacement(model, c, np.atleast_2d(P)) @ np.linalg.inv(F).T

    def from_chart(U, radius=0.5):
        U = np.atleast_2d(U)
        if np.any(np.abs(U) >= radius):
            raise ChartOverflow("point leaves the chart")
        return geo.wrap(model, c + U @ F.T) if model.kind == geo.TORUS else c + U @ F.T
    return to_chart, from_chart, F


def smoothstep(s):
    """C^2 step: 0 for s <= 0, 1 for s >= 1, quintic in between."""
    x = np.clip(s, 0.0, 1.0)
    return x ** 3 * (10 - 15 * x + 6 * x * x)


def _rk4_path(model, field, start, n_steps, ds, backward=False):
    sign = 1.0 if backward else -1.0
    X = np.asarray(start, float)[None, :].copy()
    out = [X[0].copy()]

    def v(Y):
        return sign * riemannian_gradients(field, model, Y)
    for _ in range(n_steps):
        k1 = v(X)
        k2 = v(X + 0.5 * ds * k1)
        k3 = v(X + 0.5 * ds * k2)
        k4 = v(X + ds * k3)
        X = X + ds / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        X = geo.project_points(model, X) if model.embedded else geo.wrap(model, X)
        out.append(X[0].copy())
    return np.array(out)


@dataclass
class Preglued:
    s: np.ndarray
    points: np.ndarray
    residual: float


def preglue(model, field, up, down, crit, T, cutoff=smoothstep, ds=0.01, anchor=0.05):
    """Preglue a line ``up`` arriving at ``crit`` with a line ``down`` leaving it.

    In the chart at ``crit`` the path is (1 - b(s + T/2 + 1)) up(s + T) +
    b(s - T/2) down(s - T) on [-T, T], where up(0) and down(0) are the points at
    chart distance ``anchor`` from the critical point.  The pieces are produced by
    fixed-step RK4 on the grid, so the residual measures only the pregluing error.
    """
    to_chart, from_chart, _ = _chart(model, crit)
    n = int(round(2 * T / ds))
    s = np.linspace(-T, T, n + 1)
    ds = s[1] - s[0]
    loc = np.asarray(crit.location, float)

    def anchor_point(line, arriving):
        d = geo.distance(model, line.points, loc)
        if np.all(d < 1e-14):
            return None
        if arriving:
            k = np.nonzero(d <= anchor)[0]
            if k.size == 0:
                raise ChartOverflow("up line never enters the anchor radius")
            return line.points[k[0]]
        k = np.nonzero(d >= anchor)[0]
        if k.size == 0:
            raise ChartOverflow("down line never leaves the anchor radius")
        return line.points[k[0]]

    a_up = anchor_point(up, True)
    a_dn = anchor_point(down, False)
    steps = int(np.ceil((T / 2 + 1) / ds)) + 2
    if a_up is None:
        U_up = np.zeros((steps + 1, model.dim))
    else:
        U_up = to_chart(_rk4_path(model, field, a_up, steps, ds))
    if a_dn is None:
        U_dn = np.zeros((steps + 1, model.dim))
    else:
        U_dn = to_chart(_rk4_path(model, field, a_dn, steps, ds, backward=True))

    U = np.zeros((len(s), model.dim))
    for i, si in enumerate(s):
        w_up = 1.0 - cutoff(si + T / 2 + 1)
        w_dn = cutoff(si - T / 2)
        u = np.zeros(model.dim)
        if w_up > 0:
            j = int(round((si + T) / ds))
            u = u + w_up * U_up[min(j, len(U_up) - 1)]
        if w_dn > 0:
            j = int(round((T - si) / ds))
            u = u + w_dn * U_dn[min(j, len(U_dn) - 1)]
        U[i] = u
    P = from_chart(U)
    D = geo.displacement(model, P[:-2], P[2:]) / (2 * ds)
    R = D + riemannian_gradients(field, model, P[1:-1])
    residual = float(np.max(np.linalg.norm(R, axis=1))) if len(R) else 0.0
    return Preglued(s, P, residual)


def action_energy_kappa(field, model, crit, radius, n_radial=40, n_angular=64):
    """Sampled sup of |f - f(c)| / |grad f|^2 over a punctured chart ball.

    With f = f(c) + (1/2) <v, H v> the sharp constant is 1 / (2 min |eig H|).
    """
    if crit.degenerate:
        raise DegenerateCritical("%s is degenerate" % crit.label)
    _, from_chart, _ = _chart(model, crit)
    dim = model.dim
    rs = radius * np.arange(1, n_radial + 1) / n_radial
    if dim == 1:
        U = np.concatenate([rs, -rs])[:, None]
    else:
        th = 2 * np.pi * np.arange(n_angular) / n_angular
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
        if dim > 2:
            rng = np.random.default_rng(0)
            dirs = rng.normal(size=(n_angular * 4, dim))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        U = (rs[:, None, None] * dirs[None, :, :]).reshape(-1, dim)
    P = from_chart(U, radius=max(radius * 1.01, 1e-12) + 0.5)
    df = np.abs(field.values(P) - crit.value)
    g2 = gradient_norms(field, model, P) ** 2
    ok = g2 > 0
    return float(np.max(df[ok] / g2[ok]))


def write_flow_csv(path, line):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s"] + ["x%d" % i for i in range(line.points.shape[1])] + ["f"])
        for s, p, v in zip(line.s, line.points, line.values):
            w.writerow(["%.12g" % s] + ["%.12g" % x for x in p] + ["%.12g" % v])


def flow_csv_name(scene, line, k):
    return "%s__%s__%s__%d.csv" % (scene, line.source or "none", line.target or "none", k)
