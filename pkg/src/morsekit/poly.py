"""Multivariate polynomials with analytic derivatives, evaluated row-wise."""

import numpy as np


class Polynomial:
    """Sum of monomials c * prod(x_i ** e_i).

    All evaluation methods take an (N, d) array and work row-wise.
    """

    def __init__(self, terms, dim=None):
        terms = [(float(c), tuple(int(e) for e in exps)) for c, exps in terms if c != 0]
        if dim is None:
            dim = len(terms[0][1]) if terms else 1
        self.dim = dim
        self.terms = terms
        self.coef = np.array([c for c, _ in terms]) if terms else np.zeros(0)
        self.exps = np.array([e for _, e in terms], dtype=int).reshape(len(terms), dim)

    def __repr__(self):
        return "Polynomial(%r)" % (self.terms,)

    @classmethod
    def from_dict(cls, table, dim):
        return cls([(c, e) for e, c in table.items()], dim)

    def _monomials(self, X, exps):
        # X: (N, d), exps: (T, d) with possibly negative entries -> zero monomial
        out = np.ones((X.shape[0], exps.shape[0]))
        top = max(int(exps.max(initial=0)), 0)
        for i in range(self.dim):
            e = exps[:, i]
            # table of powers x^0 .. x^top, plus a zero column for negative exponents
            pw = np.empty((X.shape[0], top + 2))
            pw[:, 0] = 1.0
            for k in range(1, top + 1):
                pw[:, k] = pw[:, k - 1] * X[:, i]
            pw[:, top + 1] = 0.0
            out *= pw[:, np.where(e >= 0, e, top + 1)]
        return out

    def value(self, X):
        X = np.atleast_2d(X)
        if not self.terms:
            return np.zeros(X.shape[0])
        return self._monomials(X, self.exps) @ self.coef

    def grad(self, X):
        X = np.atleast_2d(X)
        G = np.zeros(X.shape)
        if not self.terms:
            return G
        for i in range(self.dim):
            e = self.exps.copy()
            c = self.coef * e[:, i]
            e[:, i] -= 1
            G[:, i] = self._monomials(X, e) @ c
        return G

    def hess(self, X):
        X = np.atleast_2d(X)
        H = np.zeros((X.shape[0], self.dim, self.dim))
        if not self.terms:
            return H
        for i in range(self.dim):
            for j in range(i, self.dim):
                e = self.exps.copy()
                c = self.coef * e[:, i]
                e[:, i] -= 1
                c = c * e[:, j]
                e[:, j] -= 1
                H[:, i, j] = H[:, j, i] = self._monomials(X, e) @ c
        return H


def sphere_constraint(radius=1.0):
    return Polynomial([(1, (2, 0, 0)), (1, (0, 2, 0)), (1, (0, 0, 2)), (-radius ** 2, (0, 0, 0))])


def peanut_constraint(c=1.2):
    # (x^2 - 1)^2 + y^2 + z^2 - c
    return Polynomial([(1, (4, 0, 0)), (-2, (2, 0, 0)), (1, (0, 2, 0)), (1, (0, 0, 2)),
                       (1 - c, (0, 0, 0))])
