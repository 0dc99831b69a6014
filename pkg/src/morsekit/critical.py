"""Locating and classifying critical points."""

import csv
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from . import geometry as geo
from .errors import NotCriticalError, NotInvariantError
from .fields import TAU_CRIT, gradient_norms, hessian_eigen, sylvester_invariants, SylvesterTriple

TAU_VAL = 1e-9


@dataclass(eq=False)
class CriticalPoint:
    location: np.ndarray
    value: float
    hessian_eigenvalues: tuple
    sylvester: SylvesterTriple
    directions: np.ndarray  # ambient eigen-directions, columns match the eigenvalues
    label: str = ""

    @property
    def morse_index(self):
        return self.sylvester.n_minus

    index = morse_index

    @property
    def degenerate(self):
        return self.sylvester.n_zero > 0

    @property
    def unstable_directions(self):
        return self.directions[:, :self.morse_index]

    @property
    def stable_directions(self):
        return self.directions[:, self.morse_index + self.sylvester.n_zero:]

    def __repr__(self):
        return "CriticalPoint(%s, %s, f=%.6g, index=%d%s)" % (
            self.label, np.array2string(self.location, precision=6), self.value,
            self.morse_index, ", degenerate" if self.degenerate else "")


@dataclass(eq=False)
class CriticalClass:
    """An antipodal orbit of critical points on the covering sphere."""
    label: str
    representatives: tuple
    value: float
    morse_index: int

    index = property(lambda self: self.morse_index)
    orbit_size = property(lambda self: len(self.representatives))

    @property
    def degenerate(self):
        return any(c.degenerate for c in self.representatives)


@dataclass
class SearchStats:
    seeds: int
    converged: int
    distinct: int
    hits: dict


def classify(field, model, p, zero_tol=None, tau_crit=TAU_CRIT):
    p = np.asarray(p, float)
    w, _, A = hessian_eigen(field, model, p, tau_crit)
    H = np.diag(w)
    if zero_tol is None:
        zero_tol = 1e-6 * max(np.abs(w).max(initial=0.0), 1.0)
    syl = sylvester_invariants(H, zero_tol)
    return CriticalPoint(p.copy(), float(field(p)), tuple(float(x) for x in w), syl, A)


def _seeds(model, count):
    lo, hi = model.bbox
    d = len(lo)
    pts = qmc.Halton(d, scramble=False).random(count + 1)[1:]
    return lo + (hi - lo) * pts


def _project_seeds(model, X):
    """Pull seeds onto the constraint set; drop those that fail."""
    G = model.constraint
    keep = np.ones(len(X), bool)
    X = X.copy()
    for _ in range(4 * geo.N_PROJ):
        n = G.grad(X)
        nn = np.sum(n * n, axis=1)
        keep &= nn > geo.EPS_REG ** 2
        r = G.value(X)
        step = np.where(keep, r / np.where(keep, nn, 1.0), 0.0)[:, None] * n
        # cap the step so seeds far from the surface do not overshoot wildly
        ln = np.linalg.norm(step, axis=1, keepdims=True)
        step = np.where(ln > 0.5, step * 0.5 / np.maximum(ln, 1e-300), step)
        X -= step
        if np.all(np.abs(G.value(X[keep])) < 1e-13):
            break
    keep &= np.abs(G.value(X)) < 1e-12
    return X[keep]


def _residual(field, model, Z):
    if model.embedded:
        X, lam = Z[:, :-1], Z[:, -1]
        return np.concatenate([field.grads(X) - lam[:, None] * model.constraint.grad(X),
                               model.constraint.value(X)[:, None]], axis=1)
    return field.grads(Z)


def _jacobian(field, model, Z):
    if model.embedded:
        X, lam = Z[:, :-1], Z[:, -1]
        d = X.shape[1]
        J = np.zeros((len(Z), d + 1, d + 1))
        J[:, :d, :d] = field.hessians(X) - lam[:, None, None] * model.constraint.hess(X)
        n = model.constraint.grad(X)
        J[:, :d, d] = -n
        J[:, d, :d] = n
        return J
    return field.hessians(Z)


def _newton(field, model, Z, max_iter=150):
    """Damped Newton on the stationarity system, run to stagnation."""
    active = np.ones(len(Z), bool)
    for _ in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        Zi = Z[idx]
        F = _residual(field, model, Zi)
        J = _jacobian(field, model, Zi)
        step = -np.einsum("nij,nj->ni", np.linalg.pinv(J), F)
        f0 = np.linalg.norm(F, axis=1)
        alpha = np.ones(len(idx))
        trial = Zi + step
        for _ in range(12):
            trial = Zi + alpha[:, None] * step
            if model.kind == geo.TORUS:
                trial = geo.wrap(model, trial)
            ft = np.linalg.norm(_residual(field, model, trial), axis=1)
            bad = ~(ft <= f0) & (alpha > 1e-3)
            if not bad.any():
                break
            alpha = np.where(bad, alpha * 0.5, alpha)
        Z[idx] = trial
        small = np.linalg.norm(alpha[:, None] * step, axis=1) < 1e-15 * (1 + np.linalg.norm(Zi, axis=1))
        active[idx[small | ~np.all(np.isfinite(trial), axis=1)]] = False
    return Z


def find_critical_points(field, model, seed_count=512, newton_tol=TAU_CRIT, dedup_radius=1e-4,
                         seeds=None, return_stats=False):
    """All critical points reachable by Newton from quasi-random seeds.

    For quotient models the search runs on the covering sphere and every point of
    each orbit is returned.
    """
    cover = geo.covering(model)
    X = _seeds(cover, seed_count) if seeds is None else np.atleast_2d(np.asarray(seeds, float))
    n_seeds = len(X)
    if cover.embedded:
        X = _project_seeds(cover, X)
        n = cover.constraint.grad(X)
        lam = np.sum(field.grads(X) * n, axis=1) / np.sum(n * n, axis=1)
        Z = _newton(field, cover, np.concatenate([X, lam[:, None]], axis=1))
        Z = Z[np.all(np.isfinite(Z), axis=1)]
        X = Z[:, :-1]
        ok = np.abs(cover.constraint.value(X)) < 1e-8
        X = geo.project_points(cover, X[ok])
    else:
        X = _newton(field, cover, X.copy())
        X = X[np.all(np.isfinite(X), axis=1)]
        if cover.kind == geo.LINE:
            a, b = cover.interval
            X = X[(X[:, 0] > a) & (X[:, 0] < b)]
        X = geo.wrap(cover, X)
    gn = gradient_norms(field, cover, X) if len(X) else np.zeros(0)
    good = gn <= newton_tol
    X, gn = X[good], gn[good]

    # deterministic merge: best-converged candidate first, ties by coordinates
    order = np.lexsort(tuple(X.T[::-1]) + (gn,)) if len(X) else np.zeros(0, int)
    reps, hits = [], []
    for i in order:
        if reps:
            d = geo.distance(cover, np.array(reps), X[i])
            j = int(np.argmin(d))
            if d[j] < dedup_radius:
                hits[j] += 1
                continue
        reps.append(X[i])
        hits.append(1)

    crits = [classify(field, cover, p, zero_tol=np.inf) for p in reps]
    if crits:
        scale = max(max(abs(v) for v in c.hessian_eigenvalues) for c in crits)
        tol = 1e-6 * max(scale, 1e-300)
        for c in crits:
            c.sylvester = sylvester_invariants(np.diag(c.hessian_eigenvalues), tol)
    order = sorted(range(len(crits)), key=lambda k: (-round(crits[k].value / TAU_VAL),
                                                      tuple(np.round(crits[k].location, 9))))
    crits = [crits[k] for k in order]
    hits = [hits[k] for k in order]
    for k, c in enumerate(crits):
        c.label = "c%d" % k
    if not crits:
        import warnings
        warnings.warn("EmptyResult: no critical points found", RuntimeWarning)
    if return_stats:
        stats = SearchStats(n_seeds, int(good.sum()), len(crits),
                            {c.label: h for c, h in zip(crits, hits)})
        return crits, stats
    return crits


def spectrum(crits, tol=TAU_VAL):
    vals = sorted(float(c.value) for c in crits)
    out = []
    for v in vals:
        if not out or v - out[-1] > tol:
            out.append(v)
    return out


def quotient_identify(crits, model=None, field=None, tol=1e-10):
    """Group antipodal pairs into orbits.  Each class is labelled by its canonical
    representative (first nonzero coordinate positive)."""
    used = set()
    classes = []
    for i, c in enumerate(crits):
        if i in used:
            continue
        if field is not None and abs(field(c.location) - field(-c.location)) > tol:
            raise NotInvariantError("f(p) != f(-p) at %s" % c.label)
        partner = None
        for j, d in enumerate(crits):
            if j != i and j not in used and np.linalg.norm(d.location + c.location) < 1e-6:
                partner = j
                break
        if partner is None:
            raise NotInvariantError("no antipodal partner for %s" % c.label)
        d = crits[partner]
        if abs(c.value - d.value) > max(tol, TAU_VAL):
            raise NotInvariantError("values differ on the orbit of %s" % c.label)
        used.update((i, partner))
        pair = (c, d) if np.allclose(geo.antipodal_representative(c.location), c.location) else (d, c)
        classes.append(CriticalClass(pair[0].label, pair, c.value, c.morse_index))
    return classes


def critical_rows(crits):
    rows = []
    for c in crits:
        rows.append([c.label] + ["%.12g" % x for x in c.location] +
                    ["%.12g" % c.value, str(c.morse_index),
                     " ".join("%.9g" % x for x in c.hessian_eigenvalues),
                     "true" if c.degenerate else "false"])
    return rows


def write_critical_csv(path, crits):
    dim = len(crits[0].location) if crits else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label"] + ["x%d" % i for i in range(dim)] +
                   ["value", "index", "eigenvalues", "degenerate"])
        w.writerows(critical_rows(crits))


def require_critical(field, model, p, tau_crit=TAU_CRIT):
    gn = float(gradient_norms(field, model, np.asarray(p, float).reshape(1, -1))[0])
    if gn > tau_crit:
        raise NotCriticalError("gradient norm %.3g" % gn)
