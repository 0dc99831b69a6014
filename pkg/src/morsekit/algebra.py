"""Chain complexes over GF(2): boundary checks, homology, spectral numbers."""

import math
from dataclasses import dataclass, field as dc_field
from itertools import product

import numpy as np

from .errors import (MissingPairError, MorseViolation, NotAComplexError, ZeroClassError)

TAU_VAL = 1e-9
R_MAX = 20


# -- GF(2) linear algebra ---------------------------------------------------------

def gf2(M, shape=None):
    A = np.asarray(M, dtype=np.uint8) % 2 if np.size(M) else np.zeros(shape or (0, 0), np.uint8)
    if shape is not None:
        A = A.reshape(shape)
    return A


def gf2_matmul(A, B):
    A = np.asarray(A, np.int64)
    B = np.asarray(B, np.int64)
    return (A @ B % 2).astype(np.uint8)


def row_reduce(M):
    """Reduced row echelon form over GF(2); returns (R, pivot columns)."""
    R = np.array(M, dtype=np.uint8) % 2
    rows, cols = R.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        hits = np.nonzero(R[r:, c])[0]
        if hits.size == 0:
            continue
        p = r + hits[0]
        if p != r:
            R[[r, p]] = R[[p, r]]
        others = np.nonzero(R[:, c])[0]
        others = others[others != r]
        R[others] ^= R[r]
        pivots.append(c)
        r += 1
    return R, pivots


def rank(M):
    if np.size(M) == 0:
        return 0
    return len(row_reduce(M)[1])


def kernel_basis(M, n_cols=None):
    """Columns spanning the kernel of M (as rows of the returned array)."""
    M = np.asarray(M, np.uint8)
    n = M.shape[1] if M.ndim == 2 else (n_cols or 0)
    if M.size == 0:
        return np.eye(n, dtype=np.uint8)
    R, piv = row_reduce(M)
    free = [c for c in range(n) if c not in piv]
    basis = []
    for f in free:
        v = np.zeros(n, np.uint8)
        v[f] = 1
        for i, p in enumerate(piv):
            v[p] = R[i, f]
        basis.append(v)
    return np.array(basis, np.uint8).reshape(len(basis), n)


def in_span(vectors, v):
    if len(vectors) == 0:
        return not np.any(v)
    A = np.vstack([np.asarray(vectors, np.uint8), v[None, :]])
    return rank(A) == rank(np.asarray(vectors, np.uint8))


# -- complexes -----------------------------------------------------------------------

@dataclass
class Generator:
    label: str
    value: float


@dataclass(eq=False)
class ChainComplex:
    """generators[k] lists the degree-k generators; boundary[k] is the
    (#gen_{k-1}) x (#gen_k) matrix of the map from degree k to k-1."""
    generators: dict
    boundary: dict = dc_field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        for k in list(self.generators):
            self.generators[k] = [g if isinstance(g, Generator) else Generator(*g)
                                  for g in self.generators[k]]
        for k in self.degrees:
            shape = (len(self.gens(k - 1)), len(self.gens(k)))
            if k in self.boundary:
                B = gf2(self.boundary[k], shape)
                if B.shape != shape:
                    raise ValueError("boundary %d has shape %s, expected %s" % (k, B.shape, shape))
                self.boundary[k] = B
            else:
                self.boundary[k] = np.zeros(shape, np.uint8)

    @property
    def degrees(self):
        if not self.generators:
            return []
        return list(range(min(self.generators), max(self.generators) + 2))

    def gens(self, k):
        return self.generators.get(k, [])

    def d(self, k):
        if k in self.boundary:
            return self.boundary[k]
        return np.zeros((len(self.gens(k - 1)), len(self.gens(k))), np.uint8)

    def values(self, k):
        return np.array([g.value for g in self.gens(k)], float)

    def labels(self, k):
        return [g.label for g in self.gens(k)]

    @property
    def size(self):
        return sum(len(v) for v in self.generators.values())

    def to_dict(self):
        out = {"generators": {}, "boundary": {}}
        for k in sorted(self.generators):
            out["generators"][int(k)] = [{"label": g.label, "value": float(g.value)}
                                         for g in self.gens(k)]
        for k in sorted(self.boundary):
            B = self.boundary[k]
            if B.size:
                out["boundary"][int(k)] = [[int(x) for x in row] for row in B]
        return out


def from_abstract(generators, boundary, name=""):
    """Complex from explicit data: {k: [(label, value), ...]}, {k: matrix}."""
    return ChainComplex({int(k): list(v) for k, v in generators.items()},
                        {int(k): np.asarray(v, np.uint8) for k, v in boundary.items()}, name)


def build_complex(crits, counts, name=""):
    """Morse complex from critical points and mod-2 counts of flow lines."""
    bad = [c for c in crits if getattr(c, "degenerate", False)]
    if bad:
        raise MorseViolation("degenerate critical points: %s" % ", ".join(c.label for c in bad), bad)
    gens = {}
    for c in crits:
        gens.setdefault(int(c.morse_index), []).append(Generator(c.label, float(c.value)))
    table = {(m.source, m.target): m.count_mod2 for m in counts}
    bnd = {}
    for k in sorted(gens):
        if k - 1 not in gens:
            continue
        B = np.zeros((len(gens[k - 1]), len(gens[k])), np.uint8)
        for j, up in enumerate(gens[k]):
            for i, down in enumerate(gens[k - 1]):
                key = (up.label, down.label)
                if key not in table:
                    raise MissingPairError("no count for %s -> %s" % key)
                B[i, j] = table[key]
        bnd[k] = B
    return ChainComplex(gens, bnd, name)


@dataclass
class BoundaryReport:
    ok: bool
    degree: int = None


def verify_boundary_squared(cx):
    for k in cx.degrees:
        A, B = cx.d(k - 1), cx.d(k)
        if A.shape[0] == 0 or A.shape[1] == 0 or B.shape[1] == 0:
            continue
        if np.any(gf2_matmul(A, B)):
            return BoundaryReport(False, k)
    return BoundaryReport(True)


@dataclass
class HomologyResult:
    betti: dict
    representatives: dict  # k -> array of kernel vectors (rows)

    def betti_list(self, top=None):
        if not self.betti:
            return []
        top = max(self.betti) if top is None else top
        return [self.betti.get(k, 0) for k in range(0, top + 1)]

    @property
    def total(self):
        return sum(self.betti.values())


def image_basis(cx, k):
    """Row basis of im d_{k+1} inside degree k, as rows."""
    B = cx.d(k + 1)
    if B.size == 0:
        return np.zeros((0, len(cx.gens(k))), np.uint8)
    R, piv = row_reduce(B.T)
    return R[:len(piv)]


def homology(cx):
    if not verify_boundary_squared(cx).ok:
        raise NotAComplexError("boundary does not square to zero")
    betti, reps = {}, {}
    for k in sorted(cx.generators):
        n = len(cx.gens(k))
        K = kernel_basis(cx.d(k), n) if cx.d(k).shape[0] else np.eye(n, dtype=np.uint8)
        I = image_basis(cx, k)
        chosen = list(I)
        out = []
        for v in K:
            if not in_span(chosen, v):
                chosen.append(v)
                out.append(v)
        betti[k] = len(out)
        reps[k] = np.array(out, np.uint8).reshape(len(out), n)
    return HomologyResult(betti, reps)


def betti_brute_force(cx):
    """Dimensions of ker / im by enumerating every GF(2) vector (small complexes)."""
    out = {}
    for k in sorted(cx.generators):
        n = len(cx.gens(k))
        D = cx.d(k)
        ker = 0
        for bits in product((0, 1), repeat=n):
            v = np.array(bits, np.uint8)
            if D.shape[0] == 0 or not np.any(gf2_matmul(D, v[:, None])):
                ker += 1
        m = len(cx.gens(k + 1))
        U = cx.d(k + 1)
        ims = set()
        for bits in product((0, 1), repeat=m):
            w = gf2_matmul(U, np.array(bits, np.uint8)[:, None])[:, 0] if m else np.zeros(n, np.uint8)
            ims.add(w.tobytes())
        out[k] = int(round(math.log2(ker))) - int(round(math.log2(len(ims))))
    return out


@dataclass
class InequalityReport:
    ok: bool
    slack: int


def morse_inequality_check(crits, hom):
    n = len(crits) if not isinstance(crits, ChainComplex) else crits.size
    s = hom.total
    return InequalityReport(n >= s, n - s)


# -- spectral numbers --------------------------------------------------------------

def _order(cx, k):
    """Generators of degree k sorted by (value, label), lowest first."""
    g = cx.gens(k)
    return sorted(range(len(g)), key=lambda i: (g[i].value, g[i].label))


def sigma_of_chain(cx, k, xi):
    xi = np.asarray(xi, np.uint8)
    if not np.any(xi):
        return -math.inf
    return float(cx.values(k)[np.nonzero(xi)[0]].max())


def _is_cycle(cx, k, xi):
    D = cx.d(k)
    return D.shape[0] == 0 or not np.any(gf2_matmul(D, xi[:, None]))


def _is_boundary(cx, k, xi):
    return in_span(image_basis(cx, k), xi)


def spectral_number_greedy(cx, k, xi):
    """Reduce the top generator of xi against image columns with distinct tops.

    The image columns are first reduced so that their highest generators are
    distinct.  Adding a column whose top equals the top of xi removes that top
    and only touches lower generators, so the top of xi strictly decreases until
    it is not a column top.  No element of the coset can then have a lower top.
    """
    xi = np.array(xi, np.uint8) % 2
    pos = np.empty(len(cx.gens(k)), int)
    pos[_order(cx, k)] = np.arange(len(cx.gens(k)))

    def top(v):
        nz = np.nonzero(v)[0]
        return -1 if nz.size == 0 else int(pos[nz].max())
    cols = []
    tops = {}
    for v in image_basis(cx, k):
        v = v.copy()
        while np.any(v) and top(v) in tops:
            v ^= cols[tops[top(v)]]
        if np.any(v):
            tops[top(v)] = len(cols)
            cols.append(v)
    while np.any(xi) and top(xi) in tops:
        xi ^= cols[tops[top(xi)]]
    return sigma_of_chain(cx, k, xi), xi


def spectral_number_exhaustive(cx, k, xi, r_max=R_MAX):
    """Minimum of sigma over the whole coset xi + im d, by Gray-code enumeration."""
    I = image_basis(cx, k)
    r = len(I)
    if r > r_max:
        raise ValueError("image rank %d exceeds %d" % (r, r_max))
    order = _order(cx, k)
    pos = np.empty(len(order), int)
    pos[order] = np.arange(len(order))
    vals = cx.values(k)[order]

    def mask(v):
        m = 0
        for i in np.nonzero(v)[0]:
            m |= 1 << int(pos[i])
        return m
    cur = mask(np.asarray(xi, np.uint8) % 2)
    cols = [mask(v) for v in I]
    best = cur.bit_length()
    best_mask = cur
    for g in range(1, 1 << r):
        flip = (g & -g).bit_length() - 1
        cur ^= cols[flip]
        b = cur.bit_length()
        if b < best:
            best, best_mask = b, cur
    sigma = -math.inf if best == 0 else float(vals[best - 1])
    v = np.zeros(len(order), np.uint8)
    for j in range(len(order)):
        if best_mask >> j & 1:
            v[order[j]] = 1
    return sigma, v


def spectral_number(cx, k, xi, method="auto", r_max=R_MAX):
    """Spectral number of the class of the cycle xi in degree k."""
    xi = np.asarray(xi, np.uint8) % 2
    if not _is_cycle(cx, k, xi):
        raise ValueError("representative is not a cycle")
    if not np.any(xi) or _is_boundary(cx, k, xi):
        raise ZeroClassError("the class is zero")
    return _minimize(cx, k, xi, method, r_max)[0]


def _minimize(cx, k, xi, method="auto", r_max=R_MAX):
    r = len(image_basis(cx, k))
    if method == "exhaustive" or (method == "auto" and r <= r_max):
        return spectral_number_exhaustive(cx, k, xi, r_max)
    return spectral_number_greedy(cx, k, xi)


@dataclass
class SpectralClass:
    degree: int
    coords: tuple  # coordinates in the homology basis
    representative: np.ndarray
    sigma: float
    witness: str  # label of the generator realizing sigma


@dataclass
class SpectralReport:
    classes: list
    spectrum: list
    homological_spectrum: list
    action_gap: float

    def sigma(self, k, coords):
        for c in self.classes:
            if c.degree == k and tuple(c.coords) == tuple(coords):
                return c.sigma
        raise KeyError((k, coords))

    def to_dict(self):
        return {
            "classes": [{"degree": c.degree, "coords": list(c.coords), "sigma": c.sigma,
                         "witness": c.witness,
                         "representative": [int(x) for x in c.representative]}
                        for c in self.classes],
            "spectrum": list(self.spectrum),
            "homological_spectrum": list(self.homological_spectrum),
            "action_gap": self.action_gap if math.isfinite(self.action_gap) else "inf",
        }


def distinct(values, tol=TAU_VAL):
    out = []
    for v in sorted(values):
        if not out or v - out[-1] > tol:
            out.append(v)
    return out


def action_gap(spec, tol=TAU_VAL):
    """Smallest distance between distinct homological spectral values; inf for one value."""
    vals = spec.homological_spectrum if isinstance(spec, SpectralReport) else distinct(spec, tol)
    if len(vals) < 2:
        return math.inf
    return float(np.min(np.diff(vals)))


def spectral_report(cx, hom=None, max_classes=10):
    """Spectral numbers of every nonzero class (of the basis classes when a degree
    has more than ``max_classes`` Betti number)."""
    hom = hom or homology(cx)
    classes = []
    for k in sorted(hom.representatives):
        R = hom.representatives[k]
        b = len(R)
        if b == 0:
            continue
        if b <= max_classes:
            combos = [c for c in product((0, 1), repeat=b) if any(c)]
        else:
            combos = [tuple(int(i == j) for j in range(b)) for i in range(b)]
        for co in combos:
            xi = np.zeros(R.shape[1], np.uint8)
            for a, v in zip(co, R):
                if a:
                    xi ^= v
            s, red = _minimize(cx, k, xi)
            nz = np.nonzero(red)[0]
            top = max(nz, key=lambda i: (cx.gens(k)[i].value, cx.gens(k)[i].label))
            classes.append(SpectralClass(k, co, xi, s, cx.gens(k)[top].label))
    spectrum = distinct([g.value for k in cx.generators for g in cx.gens(k)])
    hs = distinct([c.sigma for c in classes])
    rep = SpectralReport(classes, spectrum, hs, math.inf)
    rep.action_gap = action_gap(rep)
    return rep


def homology_to_dict(hom, cx=None):
    out = {"betti": {int(k): int(v) for k, v in sorted(hom.betti.items())}, "representatives": {}}
    for k, R in sorted(hom.representatives.items()):
        if cx is not None:
            labs = cx.labels(k)
            out["representatives"][int(k)] = [" + ".join(labs[i] for i in np.nonzero(v)[0])
                                              for v in R]
        else:
            out["representatives"][int(k)] = [[int(x) for x in v] for v in R]
    return out


# -- abstract fixtures ---------------------------------------------------------------

def heart_complex():
    """Two maxima, one saddle, one minimum; both maxima bound the saddle."""
    return from_abstract({2: [("x1", 5.0), ("x2", 4.0)], 1: [("y", 2.0)], 0: [("z", 0.0)]},
                         {2: [[1, 1]], 1: [[0]]}, "heart-complex")


def punctured_heart_complex():
    """The heart with the saddle also bounding the minimum; not a complex."""
    return from_abstract({2: [("x1", 5.0), ("x2", 4.0)], 1: [("y", 2.0)], 0: [("z", 0.0)]},
                         {2: [[1, 1]], 1: [[1]]}, "punctured-heart")


def genus_complex(g):
    """Perfect complex of a genus-g surface: one max, 2g saddles, one min."""
    gens = {2: [("max", 2.0)], 1: [("s%d" % i, 1.0 + 0.01 * i) for i in range(2 * g)],
            0: [("min", 0.0)]}
    bnd = {2: np.zeros((2 * g, 1), np.uint8), 1: np.zeros((1, 2 * g), np.uint8)}
    return from_abstract(gens, bnd, "genus-%d-complex" % g)
