"""Scalar fields, metric gradients, metric Hessians and Sylvester counts."""

from dataclasses import dataclass, field as dc_field
from typing import Callable, NamedTuple, Optional

import numpy as np

from . import geometry as geo
from .errors import NotCriticalError
from .poly import Polynomial

H_FD = 1e-5
TAU_CRIT = 1e-9
TWO_PI = 2 * np.pi


@dataclass(frozen=True, eq=False)
class ScalarField:
    """A function on ambient (or chart) coordinates, evaluated on (N, d) batches."""
    name: str
    value: Callable
    grad: Optional[Callable] = None
    hess: Optional[Callable] = None
    params: dict = dc_field(default_factory=dict)

    def values(self, X):
        return np.asarray(self.value(np.atleast_2d(X)), dtype=float)

    def grads(self, X):
        X = np.atleast_2d(np.asarray(X, float))
        if self.grad is not None:
            return np.asarray(self.grad(X), dtype=float)
        return fd_gradient(self.value, X)

    def hessians(self, X):
        X = np.atleast_2d(np.asarray(X, float))
        if self.hess is not None:
            return np.asarray(self.hess(X), dtype=float)
        H = fd_jacobian(self.grads, X)
        return 0.5 * (H + np.swapaxes(H, 1, 2))

    def __call__(self, p):
        p = np.asarray(p, float)
        v = self.values(p)
        return float(v[0]) if p.ndim == 1 else v


def fd_gradient(fn, X, h=H_FD):
    G = np.empty(X.shape)
    for i in range(X.shape[1]):
        E = np.zeros(X.shape[1])
        E[i] = h
        G[:, i] = (fn(X + E) - fn(X - E)) / (2 * h)
    return G


def fd_jacobian(fn, X, h=H_FD):
    N, d = X.shape
    J = np.empty((N, d, d))
    for i in range(d):
        E = np.zeros(d)
        E[i] = h
        J[:, :, i] = (fn(X + E) - fn(X - E)) / (2 * h)
    return J


# -- built-in fields -----------------------------------------------------------

def height(axis=2, dim=3):
    def grad(X):
        G = np.zeros(X.shape)
        G[:, axis] = 1.0
        return G
    return ScalarField("height", lambda X: X[:, axis].copy(), grad,
                       lambda X: np.zeros((X.shape[0], dim, dim)), {"axis": axis})


def ellipsoid_quadratic(a=(1.0, 2.0, 3.0)):
    a = np.asarray(a, float)
    return ScalarField("ellipsoid-quadratic", lambda X: (X * X) @ a, lambda X: 2 * X * a,
                       lambda X: np.broadcast_to(np.diag(2 * a), (X.shape[0], a.size, a.size)).copy(),
                       {"a": a.tolist()})


def torus_cosine(coeffs=(1.0, 2.0), shift=None):
    """sum_i c_i cos(2 pi (x_i - shift_i))."""
    c = np.asarray(coeffs, float)
    s = np.zeros_like(c) if shift is None else np.asarray(shift, float)

    def value(X):
        return np.cos(TWO_PI * (X - s)) @ c

    def grad(X):
        return -TWO_PI * c * np.sin(TWO_PI * (X - s))

    def hess(X):
        d = -TWO_PI ** 2 * c * np.cos(TWO_PI * (X - s))
        return d[:, :, None] * np.eye(c.size)

    return ScalarField("torus-cosine", value, grad, hess,
                       {"coeffs": c.tolist(), "shift": s.tolist()})


def monkey_saddle():
    """sin(pi x) sin(pi y) sin(pi (x + y)), a function on the 2-torus."""
    pi = np.pi

    def value(X):
        x, y = X[:, 0], X[:, 1]
        return np.sin(pi * x) * np.sin(pi * y) * np.sin(pi * (x + y))

    def grad(X):
        x, y = pi * X[:, 0], pi * X[:, 1]
        sx, sy, sxy = np.sin(x), np.sin(y), np.sin(x + y)
        cx, cy, cxy = np.cos(x), np.cos(y), np.cos(x + y)
        return pi * np.stack([sy * (cx * sxy + sx * cxy), sx * (cy * sxy + sy * cxy)], axis=1)

    def hess(X):
        x, y = pi * X[:, 0], pi * X[:, 1]
        # d/dx [sy sin(2x + y)] etc. using cx sxy + sx cxy = sin(2x + y)
        sy, sx = np.sin(y), np.sin(x)
        hxx = 2 * sy * np.cos(2 * x + y)
        hyy = 2 * sx * np.cos(x + 2 * y)
        hxy = np.cos(y) * np.sin(2 * x + y) + sy * np.cos(2 * x + y)
        H = np.stack([np.stack([hxx, hxy], 1), np.stack([hxy, hyy], 1)], 1)
        return pi ** 2 * H

    return ScalarField("monkey-saddle", value, grad, hess)


def polynomial(poly, name="polynomial"):
    if not isinstance(poly, Polynomial):
        raise TypeError("expected a Polynomial")
    return ScalarField(name, poly.value, poly.grad, poly.hess, {"terms": poly.terms})


def constant(c, dim):
    return ScalarField("constant", lambda X: np.full(X.shape[0], float(c)),
                       lambda X: np.zeros(X.shape), lambda X: np.zeros((X.shape[0], dim, dim)),
                       {"c": float(c)})


def combination(parts, name=None):
    """Linear combination sum w_i f_i of fields given as [(w, f), ...]."""
    parts = [(float(w), f) for w, f in parts]

    def value(X):
        return sum(w * f.values(X) for w, f in parts)

    def grad(X):
        return sum(w * f.grads(X) for w, f in parts)

    def hess(X):
        return sum(w * f.hessians(X) for w, f in parts)

    label = name or " + ".join("%g*%s" % (w, f.name) for w, f in parts)
    return ScalarField(label, value, grad, hess, {"parts": [(w, f.name) for w, f in parts]})


# -- metric gradient and Hessian -------------------------------------------------

def riemannian_gradients(field, model, X):
    """Metric gradient at each row of X, in ambient/coordinate components."""
    df = field.grads(X)
    if model.embedded:
        n = geo.constraint_normals(model, X)
        return df - (np.sum(df * n, axis=1) / np.sum(n * n, axis=1))[:, None] * n
    g = geo.metric_matrices(model, X)
    if g is None:
        return df
    return np.linalg.solve(g, df[:, :, None])[:, :, 0]


def gradient_norms(field, model, X):
    w = riemannian_gradients(field, model, X)
    g = None if model.embedded else geo.metric_matrices(model, X)
    if g is None:
        return np.linalg.norm(w, axis=1)
    return np.sqrt(np.einsum("ni,nij,nj->n", w, g, w))


def gradient(field, model, p):
    P, single = geo._rows(p)
    W = riemannian_gradients(field, model, P)
    return W[0] if single else W


def metric_hessian(field, model, p, tau_crit=TAU_CRIT, check=True):
    """Metric Hessian in the orthonormal tangent frame at a critical point."""
    p = np.asarray(p, float).reshape(1, -1)
    if check:
        gn = float(gradient_norms(field, model, p)[0])
        if gn > tau_crit:
            raise NotCriticalError("gradient norm %.3g exceeds %.1g" % (gn, tau_crit))
    Hf = field.hessians(p)[0]
    F = geo.tangent_frames(model, p)[0]
    if model.embedded:
        df = field.grads(p)[0]
        n = model.constraint.grad(p)[0]
        lam = df @ n / (n @ n)
        Hf = Hf - lam * model.constraint.hess(p)[0]
    H = F.T @ Hf @ F
    return 0.5 * (H + H.T)


def hessian_eigen(field, model, p, tau_crit=TAU_CRIT):
    """Eigenvalues (ascending) and eigen-directions of the metric Hessian.

    Returns (eigenvalues, frame_vectors, ambient_vectors) where ambient_vectors
    columns are unit directions (in the metric) in ambient/coordinate components.
    """
    H = metric_hessian(field, model, p, tau_crit)
    w, V = np.linalg.eigh(H)
    F = geo.tangent_frames(model, np.asarray(p, float).reshape(1, -1))[0]
    return w, V, F @ V


class SylvesterTriple(NamedTuple):
    n_minus: int
    n_zero: int
    n_plus: int

    @property
    def index(self):
        return self.n_minus


def sylvester_invariants(H, zero_tol=None):
    H = np.atleast_2d(np.asarray(H, float))
    if not np.allclose(H, H.T, atol=1e-12, rtol=0):
        raise ValueError("matrix is not symmetric")
    w = np.linalg.eigvalsh(H) if H.size else np.zeros(0)
    if zero_tol is None:
        zero_tol = 1e-6 * (np.linalg.norm(H, 2) if H.size else 0.0)
    neg = int(np.sum(w < -zero_tol))
    pos = int(np.sum(w > zero_tol))
    return SylvesterTriple(neg, len(w) - neg - pos, pos)
