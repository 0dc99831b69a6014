"""Index of the linearized operator  xi -> d_s xi + A(s) xi  on the line, half-lines and intervals."""

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.integrate import solve_bvp
from scipy.stats import ortho_group

from .errors import GridTooCoarse, IllConditioned, ThresholdAmbiguity

FULL = "full-line"
MINUS = "half-line-minus"  # (-inf, 0]
PLUS = "half-line-plus"  # [0, inf)
COMPACT = "compact-interval"  # [-T, T]
DOMAINS = (FULL, MINUS, PLUS, COMPACT)

L_DEFAULT = 30.0
L_FACTOR = 15.0  # L >= L_FACTOR / eps_asym on unbounded domains
M_DEFAULT = 400
M_MIN = 200
SIGMA_REL = 1e-6
AMBIGUITY = 10.0
EIG_RANGE = (0.3, 3.0)
GLUE_MAX = 300.0


@dataclass(eq=False)
class OperatorFamily:
    A: object  # callable (N,) -> (N, n, n)
    n: int
    domain: str = FULL
    A_minus: np.ndarray = None
    A_plus: np.ndarray = None
    T: float = 1.0  # half-length of the compact interval
    name: str = ""

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValueError("unknown domain %r" % self.domain)
        for key in ("A_minus", "A_plus"):
            M = getattr(self, key)
            if M is not None:
                M = np.asarray(M, float).reshape(self.n, self.n)
                if not np.allclose(M, M.T):
                    raise ValueError("%s must be symmetric" % key)
                setattr(self, key, M)
        if self.domain in (FULL, MINUS) and self.A_minus is None:
            raise ValueError("this domain needs A_minus")
        if self.domain in (FULL, PLUS) and self.A_plus is None:
            raise ValueError("this domain needs A_plus")

    def __call__(self, s):
        return np.asarray(self.A(np.atleast_1d(np.asarray(s, float))), float)

    @property
    def eps_asym(self):
        lo, hi = self.unbounded_ends()
        mats = [M for M, use in ((self.A_minus, lo), (self.A_plus, hi)) if use and M is not None]
        if not mats:
            return np.inf
        return float(min(np.min(np.abs(np.linalg.eigvalsh(M))) for M in mats))

    def interval(self, L):
        return {FULL: (-L, L), MINUS: (-L, 0.0), PLUS: (0.0, L), COMPACT: (-self.T, self.T)}[self.domain]

    def unbounded_ends(self):
        return {FULL: (True, True), MINUS: (True, False), PLUS: (False, True),
                COMPACT: (False, False)}[self.domain]

    def adjoint(self):
        """The family -A^T on the same domain (its kernel is the cokernel of D_A)."""
        f = self.A
        return OperatorFamily(lambda s: -np.swapaxes(f(s), 1, 2), self.n, self.domain,
                              None if self.A_minus is None else -self.A_minus,
                              None if self.A_plus is None else -self.A_plus, self.T,
                              self.name + "^*")

    def check_asymptotics(self, L, tol=1e-6):
        """||A(+-L) - A^+-|| small at the truncation points."""
        lo, hi = self.interval(L)
        a_lo, a_hi = self.unbounded_ends()
        out = {}
        if a_lo:
            out["minus"] = float(np.linalg.norm(self(lo)[0] - self.A_minus))
        if a_hi:
            out["plus"] = float(np.linalg.norm(self(hi)[0] - self.A_plus))
        return {k: (v, v <= tol) for k, v in out.items()}


def morse_index(M):
    return int(np.sum(np.linalg.eigvalsh(np.asarray(M, float)) < 0))


def predicted_index(family):
    n = family.n
    if family.domain == FULL:
        return morse_index(family.A_minus) - morse_index(family.A_plus)
    if family.domain == MINUS:
        return morse_index(family.A_minus)
    if family.domain == PLUS:
        return n - morse_index(family.A_plus)
    return n


def predicted_kernel(family):
    """Kernel dimension: the restricted operators are onto; on the full line a
    diagonal family with its negative entries listed first at both ends has
    kernel dimension max(mu(A^-) - mu(A^+), 0)."""
    k = predicted_index(family)
    return max(k, 0) if family.domain == FULL else k


# -- families -------------------------------------------------------------------

def constant_family(A, domain=FULL, T=1.0):
    A = np.atleast_2d(np.asarray(A, float))
    n = A.shape[0]
    sym = np.allclose(A, A.T)
    return OperatorFamily(lambda s: np.broadcast_to(A, (len(s), n, n)), n, domain,
                          A if sym else None, A if sym else None, T, "constant")


def tanh_family(A_minus, A_plus, width=1.0, center=0.0, domain=FULL, T=1.0, extra=None):
    """A(s) = A^- + (A^+ - A^-)(1 + tanh((s - center)/width))/2 (+ extra(s))."""
    Am = np.atleast_2d(np.asarray(A_minus, float))
    Ap = np.atleast_2d(np.asarray(A_plus, float))
    n = Am.shape[0]

    def A(s):
        w = 0.5 * (1 + np.tanh((s - center) / width))
        out = Am + w[:, None, None] * (Ap - Am)
        return out if extra is None else out + extra(s)

    return OperatorFamily(A, n, domain, Am, Ap, T, "tanh")


def diagonal_family(a_minus, a_plus, width=1.0, domain=FULL):
    return tanh_family(np.diag(a_minus), np.diag(a_plus), width, domain=domain)


def random_symmetric(rng, n, lo=EIG_RANGE[0], hi=EIG_RANGE[1], mu=None):
    """Symmetric matrix with eigenvalues of absolute value in [lo, hi]; ``mu`` of them negative."""
    mags = rng.uniform(lo, hi, n)
    if mu is None:
        mu = int(rng.integers(0, n + 1))
    signs = np.where(np.arange(n) < mu, -1.0, 1.0)
    Q = ortho_group.rvs(n, random_state=rng) if n > 1 else np.ones((1, 1))
    return (Q * (signs * mags)) @ Q.T


def random_family(rng, domain, n=None, T=None, diagonal=False):
    """Random tanh profile between random symmetric nondegenerate endpoints.  On the
    compact interval the endpoints are arbitrary (not even symmetric)."""
    n = int(rng.integers(1, 4)) if n is None else n
    if domain == COMPACT:
        B0, B1 = rng.normal(size=(2, n, n))
        T = float(rng.uniform(0.5, 3.0)) if T is None else T
        w = float(rng.uniform(0.3, 2.0))
        return OperatorFamily(lambda s: B0 + (0.5 * (1 + np.tanh(s / w)))[:, None, None] * (B1 - B0),
                              n, COMPACT, T=T, name="tanh")
    if diagonal:
        # negative entries first at both ends: then the kernel is as large as the index allows
        a = [np.sort(rng.uniform(*EIG_RANGE, n) * rng.choice([-1.0, 1.0], n)) for _ in range(2)]
        return diagonal_family(a[0], a[1], width=float(rng.uniform(0.3, 2.0)), domain=domain)
    Am, Ap = random_symmetric(rng, n), random_symmetric(rng, n)
    return tanh_family(Am, Ap, width=float(rng.uniform(0.3, 2.0)), domain=domain)


def bump_perturbation(rng, n, size=0.1, support=(-2.0, 2.0)):
    """Continuous compactly supported B(s) with sup ||B(s)|| <= size."""
    C = rng.normal(size=(n, n))
    C *= size / np.linalg.norm(C, 2)
    a, b = support
    mid, half = 0.5 * (a + b), 0.5 * (b - a)

    def B(s):
        w = np.clip(1 - np.abs((s - mid) / half), 0.0, 1.0)
        return w[:, None, None] * C

    return B


def perturbed(family, B):
    f = family.A
    return OperatorFamily(lambda s: f(s) + B(s), family.n, family.domain, family.A_minus,
                          family.A_plus, family.T, family.name + "+B")


# -- discretization ---------------------------------------------------------------

def default_length(family, L=L_DEFAULT):
    eps = family.eps_asym
    return max(L, L_FACTOR / eps) if np.isfinite(eps) else L


def discretize(family, L=None, m=M_DEFAULT, adjoint_rows=False):
    """Weighted box-scheme matrix for xi -> d_s xi + A xi.

    Unknowns are u = exp(-delta |s|) xi at m + 1 grid points (scaled by sqrt(h)),
    rows are the m cell equations of the conjugated operator d_s + A + delta sign(s)
    (midpoint rule), plus decay rows xi(end) at each unbounded end.  With
    ``adjoint_rows`` the finite ends get rows too (the natural boundary condition
    of the adjoint problem).  No other boundary condition is imposed.
    """
    if m < M_MIN:
        raise GridTooCoarse("m = %d is below %d" % (m, M_MIN))
    L = default_length(family) if L is None else L
    ends = family.unbounded_ends()
    eps = family.eps_asym
    if any(ends) and L * eps < 10:
        raise GridTooCoarse("L = %.3g is below 10/eps_asym = %.3g" % (L, 10 / eps))
    delta = 0.5 * eps if np.isfinite(eps) else 0.0
    a, b = family.interval(L)
    s = np.linspace(a, b, m + 1)
    h = s[1] - s[0]
    mid = 0.5 * (s[:-1] + s[1:])
    Am = family(mid)
    n = family.n
    amax = float(np.max(np.abs(np.linalg.eigvals(Am)))) if Am.size else 0.0
    if h * (amax + delta) > 1.0:
        raise GridTooCoarse("h * max|A| = %.3g exceeds 1; use a larger m" % (h * (amax + delta)))
    C = Am + delta * np.sign(mid)[:, None, None] * np.eye(n)
    I = np.eye(n)
    rows = []
    M = np.zeros((m * n, (m + 1) * n))
    for j in range(m):
        r = slice(j * n, (j + 1) * n)
        M[r, j * n:(j + 1) * n] = -I / h + 0.5 * C[j]
        M[r, (j + 1) * n:(j + 2) * n] = I / h + 0.5 * C[j]
    lo_row = ends[0] or adjoint_rows
    hi_row = ends[1] or adjoint_rows
    scale = 1.0 / np.sqrt(h)
    if lo_row:
        R = np.zeros((n, (m + 1) * n))
        R[:, :n] = scale * I
        rows.append(R)
    if hi_row:
        R = np.zeros((n, (m + 1) * n))
        R[:, m * n:] = scale * I
        rows.append(R)
    return np.vstack([M] + rows) if rows else M


def block_structure(M, n):
    """Nonzero pattern of the n x n blocks (used to check decoupling)."""
    r, c = M.shape[0] // n, M.shape[1] // n
    return np.array([[np.any(M[i * n:(i + 1) * n, j * n:(j + 1) * n] != 0) for j in range(c)]
                     for i in range(r)])


@dataclass
class IndexReport:
    dim_ker: int
    dim_coker: int
    index: int
    predicted_index: int = None
    singular_values: list = dc_field(default_factory=list)  # smallest ones of D_A
    coker_singular_values: list = dc_field(default_factory=list)
    sigma_tol: float = 0.0

    @property
    def match(self):
        return self.predicted_index is None or self.index == self.predicted_index

    def to_dict(self):
        return {"dim_ker": self.dim_ker, "dim_coker": self.dim_coker, "index": self.index,
                "predicted_index": self.predicted_index, "match": self.match,
                "sigma_tol": self.sigma_tol,
                "smallest_singular_values": [float(v) for v in self.singular_values],
                "smallest_coker_singular_values": [float(v) for v in self.coker_singular_values]}


def kernel_dimension(M, sigma_tol=None, rel=SIGMA_REL, keep=8):
    """Number of singular values of M below sigma_tol (columns minus rank for wide M).

    Returns (dim, sigma_tol, smallest singular values)."""
    sv = np.linalg.svd(M, compute_uv=False)
    full = np.zeros(M.shape[1])
    full[:len(sv)] = sv  # a wide matrix has at least cols - rows zero singular values
    full = np.sort(full)
    tol = rel * sv.max() if sigma_tol is None else sigma_tol
    near = full[(full > tol / AMBIGUITY) & (full < tol * AMBIGUITY)]
    if near.size:
        raise ThresholdAmbiguity("singular value %.3g within a factor %g of the threshold %.3g"
                                 % (near[0], AMBIGUITY, tol))
    return int(np.sum(full < tol)), float(tol), full[:keep].tolist()


def numeric_index(family, L=None, m=M_DEFAULT, sigma_tol=None):
    """dim ker D_A minus dim ker D_{-A^T}, both from weighted singular values."""
    dk, tol, sv = kernel_dimension(discretize(family, L, m), sigma_tol)
    dc, _, svc = kernel_dimension(discretize(family.adjoint(), L, m, adjoint_rows=True), sigma_tol)
    return IndexReport(dk, dc, dk - dc, None, sv, svc, tol)


@dataclass
class FormulaReport:
    domain: str
    n: int
    mu_minus: int
    mu_plus: int
    numeric: IndexReport
    predicted: int
    match: bool
    kernel_match: bool

    def to_dict(self):
        return {"domain": self.domain, "n": self.n, "mu_minus": self.mu_minus,
                "mu_plus": self.mu_plus, "predicted_index": self.predicted, "match": self.match,
                "kernel_match": self.kernel_match, **self.numeric.to_dict()}


def verify_index_formula(family, L=None, m=M_DEFAULT):
    rep = numeric_index(family, L, m)
    pred = predicted_index(family)
    rep.predicted_index = pred
    mu_m = morse_index(family.A_minus) if family.A_minus is not None else None
    mu_p = morse_index(family.A_plus) if family.A_plus is not None else None
    kmatch = rep.dim_ker == predicted_kernel(family) if family.domain != FULL else True
    return FormulaReport(family.domain, family.n, mu_m, mu_p, rep, pred, rep.index == pred, kmatch)


def sweep(count=20, seed=0, domains=DOMAINS, m=M_DEFAULT, diagonal_full=True):
    """Random families per domain kind; returns a list of FormulaReport.

    On the full line the diagonal families also test the kernel formula."""
    rng = np.random.default_rng(seed)
    out = []
    for dom in domains:
        for k in range(count):
            diag = diagonal_full and dom == FULL and k % 2 == 1
            fam = random_family(rng, dom, diagonal=diag)
            rep = verify_index_formula(fam, m=m)
            if diag:
                rep.kernel_match = rep.numeric.dim_ker == max(rep.mu_minus - rep.mu_plus, 0)
            out.append(rep)
    return out


# -- infinitesimal gluing -----------------------------------------------------------

def _split(H):
    a = np.asarray(H, float)
    a = np.diag(a) if a.ndim == 2 else a
    mu = int(np.sum(a < 0))
    if np.any(a == 0):
        raise ValueError("H must be nondegenerate")
    if np.any(a[:mu] >= 0) or np.any(a[mu:] <= 0):
        raise ValueError("H must list its negative entries first")
    return a, mu


def glue_closed_form(H, T, xi_plus, xi_minus):
    """(exp(2T H_-) xi_-, xi_+, xi_-, exp(-2T H_+) xi_+)."""
    a, mu = _split(H)
    xp = np.asarray(xi_plus, float).reshape(len(a) - mu)
    xm = np.asarray(xi_minus, float).reshape(mu)
    return (np.exp(2 * T * a[:mu]) * xm, xp, xm, np.exp(-2 * T * a[mu:]) * xp)


def preglued_vector(H, T, xi_plus, xi_minus, cutoff=None):
    """Infinitesimal preglued field on [-T, T]: the tail e^{-H(s+T)}(0, xi_+) of the
    first trajectory and the head e^{-H(s-T)}(xi_-, 0) of the second, joined by a
    cutoff of x = s/T that is 0 for x <= -1/2 and 1 for x >= 1/2 (smoothstep by default)."""
    a, mu = _split(H)
    n = len(a)
    u0 = np.zeros(n)
    u0[mu:] = xi_plus
    w0 = np.zeros(n)
    w0[:mu] = xi_minus
    if cutoff is None:
        def cutoff(x):
            x = np.clip(x + 0.5, 0, 1)
            return x * x * (3 - 2 * x)

    def eta(s):
        s = np.atleast_1d(np.asarray(s, float))
        b = cutoff(s / T)[:, None]
        u = np.exp(-np.outer(s + T, a)) * u0
        w = np.exp(-np.outer(s - T, a)) * w0
        return (1 - b) * u + b * w

    return eta


def infinitesimal_glue(H, T, xi_plus, xi_minus, cutoff=None, tol=1e-9):
    """Projection of the preglued vector onto ker(d_s + H) along the complement of
    fields with unstable part zero at T and stable part zero at -T, found by solving
    the two-point boundary value problem; returns the four blocks of its end values
    (xi(-T) unstable, xi(-T) stable, xi(T) unstable, xi(T) stable)."""
    a, mu = _split(H)
    n = len(a)
    if T * np.max(np.abs(a)) > GLUE_MAX:
        raise IllConditioned("T * max|eig| = %.3g exceeds %g" % (T * np.max(np.abs(a)), GLUE_MAX))
    eta = preglued_vector(H, T, xi_plus, xi_minus, cutoff)
    ends = eta(np.array([-T, T]))
    Hm = np.diag(a)
    P = np.zeros((n, n))
    P[:mu, :mu] = np.eye(mu)
    Q = np.eye(n) - P

    def rhs(s, y):
        return -Hm @ y

    def bc(ya, yb):
        return np.concatenate([(Q @ (ya - ends[0]))[mu:], (P @ (yb - ends[1]))[:mu]])

    if n == 0:
        return (np.zeros(0),) * 4
    s = np.linspace(-T, T, int(41 + 20 * T * np.max(np.abs(a))))
    guess = np.zeros((n, s.size))
    sol = solve_bvp(rhs, bc, s, guess, tol=tol, max_nodes=500_000, bc_tol=1e-12)
    if sol.status != 0:
        raise IllConditioned("boundary value solver failed: %s" % sol.message)
    left, right = sol.sol(-T), sol.sol(T)
    return (left[:mu], left[mu:], right[:mu], right[mu:])
