"""Manifold models: implicit surfaces, flat tori, antipodal quotients, intervals.

Points are plain numpy arrays in ambient (or chart) coordinates.  Most helpers
accept either one point of shape (d,) or a batch of shape (N, d).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ProjectionDivergence, RegularityError
from .poly import Polynomial, sphere_constraint

IMPLICIT = "implicit-surface"
TORUS = "flat-torus"
QUOTIENT = "antipodal-quotient"
LINE = "real-line"

TAU_SURF = 1e-10
EPS_REG = 1e-6
N_PROJ = 50
H_MAX = 0.1


@dataclass(frozen=True, eq=False)
class Manifold:
    kind: str
    ambient_dim: int
    constraint: Polynomial = None
    metric: object = None  # None, constant SPD matrix, or callable (N, d) -> (N, d, d)
    interval: tuple = None
    bbox: tuple = None
    name: str = ""

    @property
    def dim(self):
        if self.kind in (IMPLICIT, QUOTIENT):
            return self.ambient_dim - 1
        return self.ambient_dim

    @property
    def embedded(self):
        return self.kind in (IMPLICIT, QUOTIENT)

    @property
    def metric_tag(self):
        if self.embedded:
            return "induced-euclidean"
        if self.metric is None:
            return "flat"
        return "explicit"


def implicit_surface(constraint, bbox=None, name="implicit"):
    if bbox is None:
        bbox = (-np.ones(3) * 1.5, np.ones(3) * 1.5)
    return Manifold(IMPLICIT, 3, constraint=constraint, bbox=bbox, name=name)


def round_sphere(radius=1.0):
    r = 1.2 * radius
    return implicit_surface(sphere_constraint(radius), (-r * np.ones(3), r * np.ones(3)), "sphere")


def flat_torus(n=2, metric=None, name="torus"):
    if metric is not None and not callable(metric):
        metric = np.asarray(metric, dtype=float)
    return Manifold(TORUS, n, metric=metric, bbox=(np.zeros(n), np.ones(n)), name=name)


def antipodal_quotient(surface, name=None):
    if surface.kind != IMPLICIT:
        raise ValueError("quotient needs an implicit surface")
    return Manifold(QUOTIENT, surface.ambient_dim, constraint=surface.constraint,
                    bbox=surface.bbox, name=name or surface.name + "/antipodal")


def real_line(a=-5.0, b=5.0, name="line"):
    return Manifold(LINE, 1, interval=(float(a), float(b)),
                    bbox=(np.array([a], float), np.array([b], float)), name=name)


def covering(model):
    """The implicit surface underlying a quotient (or the model itself)."""
    if model.kind == QUOTIENT:
        return Manifold(IMPLICIT, model.ambient_dim, constraint=model.constraint,
                        bbox=model.bbox, name=model.name)
    return model


# -- batch helpers -----------------------------------------------------------

def _rows(p):
    p = np.asarray(p, dtype=float)
    return p.reshape(1, -1) if p.ndim == 1 else p, p.ndim == 1


def constraint_normals(model, X):
    n = model.constraint.grad(X)
    norms = np.linalg.norm(n, axis=1)
    if np.any(norms < EPS_REG):
        raise RegularityError("constraint gradient %.3g below %.1g" % (norms.min(), EPS_REG))
    return n


def metric_matrices(model, X):
    """Metric in coordinate components, shape (N, d, d), or None for the identity."""
    if model.metric is None or model.embedded:
        return None
    if callable(model.metric):
        return np.asarray(model.metric(X), dtype=float)
    return np.broadcast_to(model.metric, (X.shape[0],) + model.metric.shape)


def _inv_sqrt(G):
    w, V = np.linalg.eigh(G)
    return np.einsum("nij,nj,nkj->nik", V, 1.0 / np.sqrt(w), V)


def tangent_frames(model, X):
    """Orthonormal tangent frames, shape (N, ambient_dim, dim).

    On embedded surfaces the frame is Gram-Schmidt applied to the projections of
    the two coordinate axes least aligned with the normal.  On flat models with an
    explicit metric the columns are g^{-1/2}, which is g-orthonormal.
    """
    N = X.shape[0]
    if model.embedded:
        n = constraint_normals(model, X)
        n = n / np.linalg.norm(n, axis=1, keepdims=True)
        order = np.argsort(np.abs(n), axis=1, kind="stable")
        eye = np.eye(model.ambient_dim)
        cols = []
        for k in range(model.dim):
            e = eye[order[:, k]]
            e = e - np.sum(e * n, axis=1, keepdims=True) * n
            for t in cols:
                e = e - np.sum(e * t, axis=1, keepdims=True) * t
            cols.append(e / np.linalg.norm(e, axis=1, keepdims=True))
        return np.stack(cols, axis=2)
    g = metric_matrices(model, X)
    if g is None:
        return np.broadcast_to(np.eye(model.dim), (N, model.dim, model.dim)).copy()
    return _inv_sqrt(g)


def project_points(model, X, tol=1e-13):
    """Newton projection onto {G = 0} along the constraint gradient."""
    if not model.embedded:
        return wrap(model, X)
    X = np.array(X, dtype=float)
    G = model.constraint
    active = np.ones(X.shape[0], bool)
    for _ in range(N_PROJ):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        Y = X[idx]
        r = G.value(Y)
        done = np.abs(r) <= tol
        n = constraint_normals(model, Y)
        step = (r / np.sum(n * n, axis=1))[:, None] * n
        Y = Y - np.where(done[:, None], 0.0, step)
        X[idx] = Y
        small = np.linalg.norm(step, axis=1) < 1e-16
        active[idx[done | small]] = False
    r = np.abs(G.value(X))
    if np.any(r > TAU_SURF) or not np.all(np.isfinite(r)):
        raise ProjectionDivergence("projection left residual %.3g" % np.nanmax(r))
    return X


def wrap(model, X):
    if model.kind != TORUS:
        return X
    Y = np.mod(X, 1.0)
    Y[Y >= 1.0] = 0.0
    return Y


def displacement(model, P, Q):
    """Q - P, wrapped into [-1/2, 1/2) on the torus."""
    D = np.asarray(Q, float) - np.asarray(P, float)
    if model.kind == TORUS:
        D = D - np.round(D)
    return D


# -- single point operations ---------------------------------------------------

def tangent_project(model, p, v):
    P, single = _rows(p)
    V, _ = _rows(v)
    if model.embedded:
        n = constraint_normals(model, P)
        V = V - (np.sum(V * n, axis=1) / np.sum(n * n, axis=1))[:, None] * n
    return V[0] if single else V


def tangent_frame(model, p):
    P, single = _rows(p)
    F = tangent_frames(model, P)
    return F[0] if single else F


def retract(model, p, step):
    P, single = _rows(p)
    S, _ = _rows(step)
    # the step bound protects the Newton projection; wrapping on flat models is exact
    if model.embedded and np.any(np.linalg.norm(S, axis=1) > H_MAX + 1e-15):
        raise ValueError("retraction step longer than %g" % H_MAX)
    Y = project_points(model, P + S) if model.embedded else wrap(model, P + S)
    return Y[0] if single else Y


def metric_at(model, p):
    """Metric on tangent coordinates: the identity in the orthonormal frame of an
    embedded surface, the declared matrix on flat models."""
    P, single = _rows(p)
    g = metric_matrices(model, P)
    if g is None:
        M = np.broadcast_to(np.eye(model.dim), (P.shape[0], model.dim, model.dim)).copy()
    else:
        M = np.array(g)
    return M[0] if single else M


def distance(model, p, q):
    P, single = _rows(p)
    Q, single_q = _rows(q)
    if model.kind == TORUS:
        d = np.linalg.norm(displacement(model, P, Q), axis=1)
    elif model.kind == QUOTIENT:
        d = np.minimum(np.linalg.norm(P - Q, axis=1), np.linalg.norm(P + Q, axis=1))
    else:
        d = np.linalg.norm(P - Q, axis=1)
    return float(d[0]) if (single and single_q) else d


def canonical(model, p):
    """Canonical representative: first nonzero coordinate positive (quotients only)."""
    p = np.asarray(p, float)
    if model.kind != QUOTIENT:
        return p
    return antipodal_representative(p)


def antipodal_representative(p):
    p = np.asarray(p, float)
    nz = np.nonzero(np.abs(p) > 1e-12)[0]
    if nz.size and p[nz[0]] < 0:
        return -p
    return p


def on_model(model, p, tol=TAU_SURF):
    P, _ = _rows(p)
    if model.embedded:
        return bool(np.all(np.abs(model.constraint.value(P)) <= tol))
    if model.kind == TORUS:
        return bool(np.all((P >= 0) & (P < 1)))
    a, b = model.interval
    return bool(np.all((P > a) & (P < b)))
