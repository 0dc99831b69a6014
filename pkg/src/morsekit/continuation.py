"""Continuation maps between Morse complexes via time-dependent gradient flow."""

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import qmc

from . import algebra as al
from . import flow as fw
from . import geometry as geo
from . import moduli as md
from .errors import BoundViolation, ChainIdentityFailure, NonGenericWarning, NotCauchy
from .fields import ScalarField

T_DEFAULT = 2.0
S_PAD = 10.0
STIFF_MAX = 10.0  # largest 2 T |Hessian eigenvalue| the forward shooting can resolve
TAU_E = 1e-6
CONVEX = "convex-combination"
GENERAL = "general-interpolation"


def smoothstep5(x):
    x = np.clip(x, 0.0, 1.0)
    return x ** 3 * (10 - 15 * x + 6 * x * x)


def smoothstep5_prime(x):
    inside = (x > 0) & (x < 1)
    return np.where(inside, 30 * x * x * (1 - x) ** 2, 0.0)


@dataclass(eq=False)
class Homotopy:
    model: object
    f_minus: ScalarField
    f_plus: ScalarField
    T: float = T_DEFAULT
    mode: str = CONVEX
    g_minus: object = None  # metric matrix on a flat torus; None means the model's own
    g_plus: object = None
    bump: ScalarField = None  # extra term 4 b (1 - b) h in general-interpolation mode
    s_pad: float = S_PAD

    def beta(self, s):
        return smoothstep5((np.asarray(s, float) + self.T) / (2 * self.T))

    def dbeta(self, s):
        return smoothstep5_prime((np.asarray(s, float) + self.T) / (2 * self.T)) / (2 * self.T)

    def _mix(self, s, a, b, c=None):
        s = np.asarray(s, float)
        bt = self.beta(s)
        shape = (-1,) + (1,) * (np.ndim(a) - 1)
        bt = np.broadcast_to(bt, (np.shape(a)[0],)).reshape(shape)
        out = (1 - bt) * a + bt * b
        if c is not None:
            out = out + 4 * bt * (1 - bt) * c
        return out

    def values(self, s, X):
        X = np.atleast_2d(X)
        h = self.bump.values(X) if self.mode == GENERAL and self.bump is not None else None
        return self._mix(s, self.f_minus.values(X), self.f_plus.values(X), h)

    def grads(self, s, X):
        h = self.bump.grads(X) if self.mode == GENERAL and self.bump is not None else None
        return self._mix(s, self.f_minus.grads(X), self.f_plus.grads(X), h)

    def ds_values(self, s, X):
        """Partial derivative of f_s in s."""
        X = np.atleast_2d(X)
        s = np.broadcast_to(np.asarray(s, float), (len(X),))
        bt, db = self.beta(s), self.dbeta(s)
        out = db * (self.f_plus.values(X) - self.f_minus.values(X))
        if self.mode == GENERAL and self.bump is not None:
            out = out + 4 * db * (1 - 2 * bt) * self.bump.values(X)
        return out

    def metrics(self, s, X):
        if self.model.embedded or (self.g_minus is None and self.g_plus is None):
            return geo.metric_matrices(self.model, X)
        base = geo.metric_matrices(self.model, X)
        if base is None:
            base = np.broadcast_to(np.eye(self.model.dim), (len(X), self.model.dim, self.model.dim))
        G = base if self.g_minus is None else np.broadcast_to(np.asarray(self.g_minus, float), base.shape)
        H = base if self.g_plus is None else np.broadcast_to(np.asarray(self.g_plus, float), base.shape)
        return self._mix(s, G, H)

    def reversed(self):
        return Homotopy(self.model, self.f_plus, self.f_minus, self.T, self.mode,
                        self.g_plus, self.g_minus, self.bump, self.s_pad)


def trivial_homotopy(model, f, T=T_DEFAULT):
    return Homotopy(model, f, f, T)


def effective_homotopy(hom, crits_minus, crits_plus, stiff_max=STIFF_MAX):
    """The homotopy used for shooting: same end functions, window shortened when
    the flow is so stiff that the solution tracking a saddle through the window
    sits closer to it than double precision can express (offset ~ exp(-2T lam)).
    Induced maps on homology do not depend on the window length."""
    lam = max(float(np.max(np.abs(c.hessian_eigenvalues))) for c in list(crits_minus) + list(crits_plus))
    if 2 * hom.T * lam <= stiff_max:
        return hom
    return Homotopy(hom.model, hom.f_minus, hom.f_plus, stiff_max / (2 * lam), hom.mode,
                    hom.g_minus, hom.g_plus, hom.bump, hom.s_pad)


class HomotopyFlow:
    """Negative gradient of f_s for the metric g_s, for run_batch.

    ``backward`` integrates towards decreasing s (velocity +grad per unit flow
    time).  Captures are allowed only where f_s is already the end function.
    """

    def __init__(self, hom, backward=False):
        self.hom = hom
        self.backward = backward
        self.sign = 1.0 if backward else -1.0

    def velocity(self, s, X, idx=None):
        hom, model = self.hom, self.hom.model
        s = np.broadcast_to(np.asarray(s, float), (len(X),))
        df = hom.grads(s, X)
        if model.embedded:
            n = geo.constraint_normals(model, X)
            W = df - (np.sum(df * n, axis=1) / np.sum(n * n, axis=1))[:, None] * n
            dens = np.sum(W * W, axis=1)
        else:
            G = hom.metrics(s, X)
            if G is None:
                W = df
                dens = np.sum(W * W, axis=1)
            else:
                W = np.linalg.solve(G, df[:, :, None])[:, :, 0]
                dens = np.einsum("ni,nij,nj->n", W, G, W)
        return self.sign * W, dens

    def values(self, s, X):
        return self.hom.values(s, X)

    def grad_norms(self, s, X):
        _, dens = self.velocity(s, X)
        return np.sqrt(dens)

    def capture_allowed(self, s):
        if self.backward:
            return s <= -self.hom.T
        return s >= self.hom.T


# -- counting ----------------------------------------------------------------------

@dataclass(eq=False)
class ContinuationCounts:
    source: str
    counts: dict  # target label -> count
    witnesses: dict  # target label -> list of FlowLine
    meta: dict = dc_field(default_factory=dict)


def _single(hom, c1, crits_minus, crits_plus, backward, rtol=1e-10, atol=1e-12):
    """Index 0 and top index: one trajectory resting at the point outside the window."""
    system = HomotopyFlow(hom, backward)
    if backward:
        s0, direction, ends = hom.T, -1.0, crits_minus
    else:
        s0, direction, ends = -hom.T, 1.0, crits_plus
    out = fw.run_batch(system, hom.model, c1.location[None, :], s0, direction, ends,
                       rtol=rtol, atol=atol, max_step=0.25)
    ln = fw._lines_from(out, system, list(ends), direction, None)[0]
    if ln.status != fw.CAPTURED:
        raise NonGenericWarning("continuation trajectory from %s unresolved" % c1.label)
    tgt = next(c for c in ends if c.label == ln.target)
    if tgt.morse_index != c1.morse_index:
        raise NonGenericWarning("continuation trajectory from %s ends at %s of index %d"
                                % (c1.label, tgt.label, tgt.morse_index))
    if backward:
        # same solution, listed in increasing s
        ln.s, ln.points, ln.values = ln.s[::-1], ln.points[::-1], ln.values[::-1]
        ln.work = ln.work[-1] - ln.work[::-1]
        ln.source, ln.target = tgt.label, c1.label
    else:
        ln.source = c1.label
    return ln


class _Arc:
    """One-parameter family of solutions sweeping an invariant arc of a critical point.

    Forward arcs start on the unstable arc of a point of f_- (index 1), backward
    arcs on the stable arc of a point of f_+.  For |u| <= 1 the start is
    crit + delta |u| e_(sign u) at the window edge (u = 0 is the solution resting
    at crit until the window opens); for |u| > 1 the start is crit + delta e_(sign u)
    and the solution spends |u| - 1 extra time under the end function before
    reaching the window.  Every member is pushed to the meeting time s = 0.
    """

    def __init__(self, hom, crit, vector, backward, delta=md.DELTA, rtol=1e-10, atol=1e-12):
        self.hom = hom
        self.crit = crit
        self.model = hom.model
        self.e = np.asarray(vector, float)
        self.backward = backward
        self.delta = delta
        self.system = HomotopyFlow(hom, backward)
        self.edge = hom.T if backward else -hom.T
        self.direction = -1.0 if backward else 1.0
        self.kw = dict(rtol=rtol, atol=atol, max_step=0.25)

    def start(self, u):
        u = np.atleast_1d(np.asarray(u, float))
        b = np.where(u >= 0, 1.0, -1.0)
        a = np.abs(u)
        X = self.crit.location + (b * self.delta * np.minimum(a, 1.0))[:, None] * self.e
        X = md._settle(self.model, X)
        s0 = self.edge - self.direction * np.maximum(a - 1.0, 0.0)
        return X, s0

    def push(self, u, record=False):
        X0, s0 = self.start(u)
        return fw.run_batch(self.system, self.model, X0, s0, self.direction, (),
                            s_max=np.abs(s0), record=record, **self.kw)

    def __call__(self, u):
        return self.push(u)["X"]


def _arc_length(model, field, seeds, crits, backward):
    """Autonomous flow time for the delta seeds to settle at the far end of the arc."""
    lines = fw.integrate_many(model, field, seeds, crits, backward=backward, rtol=1e-8, atol=1e-10)
    L = 1.0
    for ln in lines:
        if ln.status != fw.CAPTURED:
            raise NonGenericWarning("arc from a critical point did not settle")
        L = max(L, float(ln.s[-1] - ln.s[0]))
    return L + 1.0


def _sample_arc(arc, grid, h_space=0.02, rounds=14, max_points=200_000):
    """Evaluate the pushed arc on ``grid``, inserting midpoints until consecutive
    points are within ``h_space``."""
    u = np.asarray(grid, float)
    P = arc(u)
    for _ in range(rounds):
        d = np.linalg.norm(geo.displacement(arc.model, P[:-1], P[1:]), axis=1)
        bad = np.nonzero(d > h_space)[0]
        if not bad.size or len(u) + bad.size > max_points:
            break
        mid = 0.5 * (u[bad] + u[bad + 1])
        Q = arc(mid)
        u = np.insert(u, bad + 1, mid)
        P = np.insert(P, bad + 1, Q, axis=0)
    return u, P


def _local(model, base, pts):
    """Coordinates of ``pts`` (rows aligned with ``base``) in a tangent frame at base."""
    D = geo.displacement(model, base, pts)
    F = geo.tangent_frames(model, base)
    return np.einsum("nd,ndk->nk", D, F)


def _segment_hits(model, A0, A1, B0, B1):
    """Crossings of segment pairs (rows aligned).  A segments are half-open at
    their end so a shared vertex is counted once.  Returns (mask, ta, tb, sin)."""
    a1 = _local(model, A0, A1)
    b0 = _local(model, A0, B0)
    b1 = _local(model, A0, B1)
    da, db = a1, b1 - b0
    det = da[:, 0] * db[:, 1] - da[:, 1] * db[:, 0]
    safe = np.where(np.abs(det) > 1e-300, det, 1.0)
    ta = (b0[:, 0] * db[:, 1] - b0[:, 1] * db[:, 0]) / safe
    tb = (b0[:, 0] * da[:, 1] - b0[:, 1] * da[:, 0]) / safe
    hit = (np.abs(det) > 1e-300) & (ta >= 0) & (ta < 1) & (tb >= 0) & (tb <= 1)
    sin = np.abs(det) / np.maximum(np.linalg.norm(da, axis=1) * np.linalg.norm(db, axis=1), 1e-300)
    return hit, ta, tb, sin


def _tree(model, P):
    if model.kind == geo.TORUS:
        return cKDTree(np.mod(P, 1.0), boxsize=1.0)
    return cKDTree(P)


def _polyline_crossings(model, PA, PB):
    """All (i, j, ta, tb, sin) with segment i of PA crossing segment j of PB."""
    if len(PA) < 2 or len(PB) < 2:
        return []
    la = np.linalg.norm(geo.displacement(model, PA[:-1], PA[1:]), axis=1)
    lb = np.linalg.norm(geo.displacement(model, PB[:-1], PB[1:]), axis=1)
    r = float(la.max() + lb.max())
    # segment start points are within r of any crossing of the two segments
    pairs = _tree(model, PA[:-1]).query_ball_tree(_tree(model, PB[:-1]), r)
    I = np.array([i for i, js in enumerate(pairs) for _ in js], int)
    J = np.array([j for js in pairs for j in js], int)
    if not I.size:
        return []
    hit, ta, tb, sin = _segment_hits(model, PA[I], PA[I + 1], PB[J], PB[J + 1])
    return [(int(i), int(j), float(x), float(y), float(z))
            for i, j, x, y, z in zip(I[hit], J[hit], ta[hit], tb[hit], sin[hit])]


def _refine_crossing(A, B, ua, ub, va, vb, tol=md.BISECT_TOL, pieces=4, max_iter=80):
    """Shrink a crossing of the two pushed arcs by repeated subdivision."""
    hit = None
    for _ in range(max_iter):
        if ub - ua <= tol and vb - va <= tol:
            break
        us = np.linspace(ua, ub, pieces + 1)
        vs = np.linspace(va, vb, pieces + 1)
        PA, PB = A(us), B(vs)
        found = []
        for i in range(pieces):
            for j in range(pieces):
                h, ta, tb, sn = _segment_hits(A.model, PA[i:i + 1], PA[i + 1:i + 2],
                                              PB[j:j + 1], PB[j + 1:j + 2])
                if h[0]:
                    found.append((i, j, ta[0], tb[0], sn[0]))
        if len(found) != 1:
            # zero: the chord picture changed at this scale; several: curvature.
            # Either way the current bracket is as good as the polylines allow.
            break
        i, j, ta, tb, sn = found[0]
        ua, ub, va, vb = us[i], us[i + 1], vs[j], vs[j + 1]
        hit = (ta, tb, sn)
    if hit is None:
        return 0.5 * (ua + ub), 0.5 * (va + vb), max(ub - ua, vb - va)
    ta, tb, _ = hit
    return ua + ta * (ub - ua), va + tb * (vb - va), max(ub - ua, vb - va)


def _arc_grid(L, n, offset=False):
    """Grid on [-(1+L), 1+L], dense on the delta part; ``offset`` avoids u = 0."""
    inner = np.linspace(0, 1, n // 4 + 1)[1:]
    if offset:
        inner = inner - 0.5 * inner[0]
    outer = 1 + np.linspace(0, L, n // 4 + 1)[1:]
    half = np.concatenate([inner, outer])
    return np.concatenate([-half[::-1], half] if offset else [-half[::-1], [0.0], half])


@dataclass
class Crossing:
    target: str
    u: float
    v: float
    width: float
    sin_angle: float


def _index1_counts(hom, c1, crits_minus, crits_plus, n_grid=512, delta=md.DELTA,
                   min_sin=1e-6):
    """Solutions from the index-1 point c1 of f_- to index-1 points of f_+,
    found as crossings at s = 0 of the forward-pushed unstable arc of c1 and the
    backward-pushed stable arcs of the targets."""
    model = hom.model
    A = _Arc(hom, c1, c1.unstable_directions[:, 0], backward=False, delta=delta)
    LA = _arc_length(model, hom.f_minus, md.unstable_seeds(c1, model, delta), crits_minus, False)
    ua, PA = _sample_arc(A, _arc_grid(LA, n_grid))
    counts, found, arcs = {}, {}, {}
    for c2 in crits_plus:
        if c2.morse_index != c1.morse_index:
            continue
        B = _Arc(hom, c2, c2.stable_directions[:, 0], backward=True, delta=delta)
        LB = _arc_length(model, hom.f_plus, md.stable_seeds(c2, model, delta), crits_plus, True)
        vb, PB = _sample_arc(B, _arc_grid(LB, n_grid, offset=True))
        hits = _polyline_crossings(model, PA, PB)
        out = []
        for i, j, ta, tb, sn in hits:
            if sn < min_sin:
                raise NonGenericWarning("continuation arcs of %s and %s touch tangentially"
                                        % (c1.label, c2.label))
            u, v, w = _refine_crossing(A, B, ua[i], ua[i + 1], vb[j], vb[j + 1])
            out.append(Crossing(c2.label, u, v, w, sn))
        counts[c2.label] = len(out)
        found[c2.label] = out
        arcs[c2.label] = B
    return counts, found, A, arcs


def _crossing_witness(hom, A, B, cr, c1, crits_minus, crits_plus):
    """The solution through a crossing, as one flow line over increasing s."""
    a = A.push([cr.u], record=True)
    b = B.push([cr.v], record=True)
    Ta, Pa, Wa = a["samples"][0]
    Tb, Pb, Wb = b["samples"][0]
    sa = a["s0"][0] + Ta
    sb = (b["s0"][0] - Tb)[::-1]
    s = np.concatenate([sa, sb[1:]])
    P = np.concatenate([Pa, Pb[::-1][1:]])
    W = np.concatenate([Wa, Wa[-1] + (Wb[-1] - Wb[::-1])[1:]])
    vals = np.array([hom.values(si, p[None, :])[0] for si, p in zip(s, P)])
    gap = float(np.linalg.norm(geo.displacement(hom.model, Pa[-1], Pb[-1])))
    return fw.FlowLine(s, P, vals, W, source=c1.label, target=cr.target, status=fw.CAPTURED,
                       meta={"u": cr.u, "v": cr.v, "gap": gap, "sin_angle": cr.sin_angle})


def continuation_counts(hom, c1, crits_minus, crits_plus, n_grid=512, witnesses=True,
                        adapt=True):
    """Counts of solutions from c1 (a critical point of f_-) to every critical
    point of f_+ of the same index."""
    if adapt:
        hom = effective_homotopy(hom, crits_minus, crits_plus)
    n = hom.model.dim
    same = [c for c in crits_plus if c.morse_index == c1.morse_index]
    counts = {c.label: 0 for c in same}
    wit = {c.label: [] for c in same}
    if c1.morse_index == 0 or c1.morse_index == n:
        ln = _single(hom, c1, crits_minus, crits_plus, backward=c1.morse_index == n)
        if c1.morse_index == n:
            if ln.target != c1.label:
                raise AssertionError("backward line lost its label")
            # the trajectory rests at a maximum of f_+ and comes from ln.source under f_-
            return ContinuationCounts(c1.label, counts, wit, {"line": ln})
        counts[ln.target] = 1
        wit[ln.target].append(ln)
        return ContinuationCounts(c1.label, counts, wit)
    if n != 2 or c1.morse_index != 1:
        raise ValueError("continuation counts are implemented for surfaces and lines")
    cnt, found, A, arcs = _index1_counts(hom, c1, crits_minus, crits_plus, n_grid)
    if witnesses:
        for lab, crs in found.items():
            for c in crs:
                wit[lab].append(_crossing_witness(hom, A, arcs[lab], c, c1, crits_minus, crits_plus))
    return ContinuationCounts(c1.label, cnt, wit, {"crossings": found})


def count_continuation_lines(hom, c1, c2, crits_minus, crits_plus, n_grid=512):
    from .moduli import ModuliCount
    if c1.morse_index != c2.morse_index:
        raise ValueError("continuation lines join points of equal index")
    top = hom.model.dim
    hom = effective_homotopy(hom, crits_minus, crits_plus)
    if c1.morse_index == top:
        ln = _single(hom, c2, crits_minus, crits_plus, backward=True)
        n = int(ln.source == c1.label)
        return ModuliCount(c1.label, c2.label, n, [ln] if n else [], "shooting")
    cc = continuation_counts(hom, c1, crits_minus, crits_plus, n_grid, adapt=False)
    return ModuliCount(c1.label, c2.label, cc.counts.get(c2.label, 0), cc.witnesses.get(c2.label, []),
                       "shooting-bisection" if c1.morse_index not in (0, top) else "shooting")


# -- chain maps ----------------------------------------------------------------------

@dataclass(eq=False)
class ChainMap:
    matrices: dict  # k -> (#gen_k(f_+)) x (#gen_k(f_-)) over GF(2)
    counts: list = dc_field(default_factory=list)
    witnesses: list = dc_field(default_factory=list)
    window: float = T_DEFAULT  # half-length of the homotopy window actually shot

    def to_dict(self):
        return {int(k): [[int(x) for x in row] for row in M] for k, M in sorted(self.matrices.items())}


def chain_map(hom, cx_minus, cx_plus, crits_minus, crits_plus, n_grid=512, check=True):
    """Chain map counting continuation solutions, with the chain identity checked."""
    top = hom.model.dim
    hom = effective_homotopy(hom, crits_minus, crits_plus)
    by_label_m = {c.label: c for c in crits_minus}
    by_label_p = {c.label: c for c in crits_plus}
    mats = {}
    records = []
    wits = []
    degrees = sorted(set(cx_minus.generators) | set(cx_plus.generators))
    for k in degrees:
        rows, cols = cx_plus.labels(k), cx_minus.labels(k)
        M = np.zeros((len(rows), len(cols)), np.uint8)
        if k == top:
            # one backward trajectory per maximum of f_+
            for i, lab in enumerate(rows):
                ln = _single(hom, by_label_p[lab], crits_minus, crits_plus, backward=True)
                j = cols.index(ln.source)
                M[i, j] ^= 1
                records.append((ln.source, lab, 1))
                wits.append(ln)
        else:
            for j, lab in enumerate(cols):
                cc = continuation_counts(hom, by_label_m[lab], crits_minus, crits_plus, n_grid,
                                         adapt=False)
                for i, r in enumerate(rows):
                    n = cc.counts.get(r, 0)
                    M[i, j] = n % 2
                    records.append((lab, r, n))
                    wits.extend(cc.witnesses.get(r, []))
        mats[k] = M
    phi = ChainMap(mats, records, wits, hom.T)
    if check:
        verify_chain_identity(phi, cx_minus, cx_plus)
    return phi


def verify_chain_identity(phi, cx_minus, cx_plus):
    for k in sorted(phi.matrices):
        if k - 1 not in phi.matrices:
            continue
        left = al.gf2_matmul(cx_plus.d(k), phi.matrices[k]) if cx_plus.d(k).size else None
        right = al.gf2_matmul(phi.matrices[k - 1], cx_minus.d(k)) if cx_minus.d(k).size else None
        shape = (len(cx_plus.gens(k - 1)), len(cx_minus.gens(k)))
        left = np.zeros(shape, np.uint8) if left is None else left
        right = np.zeros(shape, np.uint8) if right is None else right
        if np.any(left ^ right):
            raise ChainIdentityFailure("chain identity fails in degree %d" % k, k)
    return True


def identity_chain_map(cx):
    return ChainMap({k: np.eye(len(cx.gens(k)), dtype=np.uint8) for k in cx.generators})


def compose(psi, phi):
    return ChainMap({k: al.gf2_matmul(psi.matrices[k], phi.matrices[k])
                     for k in phi.matrices if k in psi.matrices})


def _coords(v, reps, image):
    """Coordinates of the cycle v in the basis ``reps`` modulo ``image``."""
    b = len(reps)
    m = len(v)
    A = np.vstack([np.asarray(reps, np.uint8).reshape(b, m),
                   np.asarray(image, np.uint8).reshape(len(image), m)]).T
    n = A.shape[1]
    aug = np.concatenate([A, v[:, None]], axis=1)
    R, piv = al.row_reduce(aug)
    if n in piv:
        raise ValueError("vector is not in the span of the cycles")
    x = np.zeros(n, np.uint8)
    for i, p in enumerate(piv):
        x[p] = R[i, n]
    return x[:b]


@dataclass
class InducedMap:
    matrices: dict  # k -> (b_k(f_+)) x (b_k(f_-))
    iso: bool


def induced_map(phi, cx_minus, cx_plus, H_minus, H_plus):
    mats = {}
    iso = True
    for k in sorted(set(H_minus.betti) | set(H_plus.betti)):
        Rm = H_minus.representatives.get(k, np.zeros((0, 0), np.uint8))
        Rp = H_plus.representatives.get(k, np.zeros((0, 0), np.uint8))
        M = np.zeros((len(Rp), len(Rm)), np.uint8)
        img = al.image_basis(cx_plus, k)
        for j, v in enumerate(Rm):
            w = al.gf2_matmul(phi.matrices[k], v[:, None])[:, 0]
            M[:, j] = _coords(w, Rp, img)
        mats[k] = M
        if M.shape[0] != M.shape[1] or al.rank(M) != M.shape[0]:
            iso = False
    return InducedMap(mats, iso)


def compose_induced(psi, phi):
    mats = {k: al.gf2_matmul(psi.matrices[k], phi.matrices[k]) for k in phi.matrices}
    return InducedMap(mats, all(al.rank(M) == M.shape[0] == M.shape[1] for M in mats.values()))


def is_identity(induced):
    return all(M.shape[0] == M.shape[1] and np.array_equal(M, np.eye(M.shape[0], dtype=np.uint8))
               for M in induced.matrices.values())


# -- estimates -----------------------------------------------------------------------

def sample_points(model, n=100_000):
    """Quasi-random points on the model (on the covering sphere for quotients)."""
    cover = geo.covering(model)
    lo, hi = cover.bbox
    d = len(lo)
    P = lo + (hi - lo) * qmc.Halton(d, scramble=False).random(n + 1)[1:]
    if cover.embedded:
        from .critical import _project_seeds
        P = _project_seeds(cover, P)
    return P


def c0_distance(model, f, g, n=100_000, points=None):
    P = sample_points(model, n) if points is None else points
    return float(np.max(np.abs(f.values(P) - g.values(P))))


def sup_norm(model, f, n=100_000, points=None):
    P = sample_points(model, n) if points is None else points
    return float(np.max(np.abs(f.values(P))))


@dataclass
class EnergyReport:
    ok: bool
    rows: list


def energy_bound_check(hom, pairs, crits_minus, crits_plus, n=100_000, tau=TAU_E):
    """Check the action estimate on each (c1, c2, witness) triple.

    f_+(c2) <= f_-(c1) + max(f_+ - f_-) for convex homotopies, and the energy is
    at most |f_-|_inf + |f_+|_inf + 2T |d_s f_s|_inf.
    """
    P = sample_points(hom.model, n)
    diff = hom.f_plus.values(P) - hom.f_minus.values(P)
    up = float(diff.max())
    db_max = float(smoothstep5_prime(np.array([0.5]))[0] / (2 * hom.T))
    ds_sup = db_max * float(np.abs(diff).max())
    if hom.mode == GENERAL and hom.bump is not None:
        ds_sup += 4 * db_max * float(np.abs(hom.bump.values(P)).max())
    ebound = sup_norm(hom.model, hom.f_minus, points=P) + sup_norm(hom.model, hom.f_plus, points=P) \
        + 2 * hom.T * ds_sup
    vm = {c.label: c.value for c in crits_minus}
    vp = {c.label: c.value for c in crits_plus}
    rows = []
    ok = True
    for c1, c2, ln in pairs:
        sharp = vp[c2] - (vm[c1] + up)
        E = fw.energy(ln) if ln is not None else 0.0
        row = {"source": c1, "target": c2, "action_slack": -sharp, "energy": E,
               "energy_bound": ebound}
        if hom.mode == CONVEX and sharp > tau:
            ok = False
        if E > ebound + tau:
            ok = False
        rows.append(row)
    if not ok:
        raise BoundViolation("continuation estimate violated: %s" % [r for r in rows])
    return EnergyReport(ok, rows)


@dataclass
class LipschitzReport:
    ok: bool
    distance: float  # sampled sup |f_+ - f_-|
    rows: list


def spectral_lipschitz_check(model, f_minus, f_plus, induced, spec_minus, spec_plus, n=100_000,
                             margin=0.01, tol=1e-9):
    """|sigma_{f_-}(a) - sigma_{f_+}(Phi a)| <= |f_+ - f_-|_C0 for every class a."""
    d = c0_distance(model, f_minus, f_plus, n)
    bound = d * (1 + margin)
    rows = []
    ok = True
    for c in spec_minus.classes:
        M = induced.matrices[c.degree]
        img = tuple(int(x) for x in al.gf2_matmul(M, np.array(c.coords, np.uint8)[:, None])[:, 0])
        if not any(img):
            raise ValueError("continuation map kills a class in degree %d" % c.degree)
        s_plus = spec_plus.sigma(c.degree, img)
        gap = abs(s_plus - c.sigma)
        good = gap <= bound + tol
        ok &= good
        rows.append({"degree": c.degree, "class": list(c.coords), "image": list(img),
                     "sigma_minus": c.sigma, "sigma_plus": s_plus, "difference": gap,
                     "slack": d - gap, "ok": bool(good)})
    return LipschitzReport(bool(ok), d, rows)


@dataclass
class ExtensionResult:
    value: float  # extrapolated limit
    raw_last: float  # spectral number of the last member
    values: list
    distances: list  # sampled C0 distance of each member to f
    increments: list
    steps: list  # sampled C0 distance between consecutive members
    nearest_critical_value: float = math.nan
    critical_gap: float = math.nan


def neville_at_zero(x, y):
    """Value at 0 of the polynomial through the points (x, y)."""
    p = [float(v) for v in y]
    x = [float(v) for v in x]
    n = len(p)
    for k in range(1, n):
        for i in range(n - k):
            p[i] = (x[i + k] * p[i] - x[i] * p[i + 1]) / (x[i + k] - x[i])
    return p[0]


def transported_values(members, analyses, maps, degree, coords):
    """Spectral numbers of one class carried along the sequence by the induced maps."""
    a = np.array(coords, np.uint8)
    vals = []
    for j, an in enumerate(analyses):
        if j > 0:
            a = al.gf2_matmul(maps[j - 1].matrices[degree], a[:, None])[:, 0]
        vals.append(an.spectral.sigma(degree, tuple(int(x) for x in a)))
    return vals


def sequence_maps(model, members, analyses, n_grid=512):
    """Induced maps on homology between consecutive members."""
    maps = []
    for j in range(len(members) - 1):
        A, B = analyses[j], analyses[j + 1]
        phi = chain_map(Homotopy(model, members[j], members[j + 1]), A.complex, B.complex,
                        A.crits, B.crits, n_grid)
        maps.append(induced_map(phi, A.complex, B.complex, A.homology, B.homology))
    return maps


def spectral_extend(model, f, members, degree, coords, analyses=None, maps=None, tol=1e-6,
                    n=100_000, order=2, critical_values=None):
    """Spectral number of a class for a (possibly degenerate) f from Morse
    approximations converging to f in C0.

    The class is given by ``coords`` in the homology basis of the first member and
    carried along by continuation maps.  Successive values must move by no more
    than the C0 distance of the members (NotCauchy otherwise).  The limit is the
    polynomial extrapolation to C0 distance zero through the last ``order + 1``
    members.
    """
    from .pipeline import analyze

    if analyses is None:
        analyses = [analyze(model, g) for g in members]
    if maps is None:
        maps = sequence_maps(model, members, analyses)
    P = sample_points(model, n)
    vals = transported_values(members, analyses, maps, degree, coords)
    dist = [c0_distance(model, f, g, points=P) for g in members]
    steps = [c0_distance(model, members[j], members[j + 1], points=P) for j in range(len(members) - 1)]
    inc = [abs(vals[j + 1] - vals[j]) for j in range(len(vals) - 1)]
    for j, (dv, st) in enumerate(zip(inc, steps)):
        if dv > st + tol:
            raise NotCauchy("spectral values move by %.3g between members %d and %d, "
                            "more than their distance %.3g" % (dv, j, j + 1, st))
    m = min(order + 1, len(vals))
    if len(set(dist[-m:])) == m:
        limit = neville_at_zero(dist[-m:], vals[-m:])
    else:
        limit = vals[-1]
    out = ExtensionResult(float(limit), float(vals[-1]), vals, dist, inc, steps)
    if critical_values is None:
        from .critical import find_critical_points
        critical_values = [c.value for c in find_critical_points(f, model)]
    if len(critical_values):
        cv = np.asarray(critical_values, float)
        k = int(np.argmin(np.abs(cv - limit)))
        out.nearest_critical_value = float(cv[k])
        out.critical_gap = float(abs(cv[k] - limit))
    return out
