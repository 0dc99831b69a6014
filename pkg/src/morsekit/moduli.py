"""Counting gradient flow lines between critical points.

Index difference one from a saddle is counted by shooting along the two
unstable directions.  From an index-2 point the unstable circle is scanned:
each trajectory gets a signature (its end point plus the side on which it
leaves every saddle it passes), and a change of signature between neighbouring
angles brackets an angle whose trajectory runs into a saddle.  Bisection
localizes those angles.  Backward shooting from the stable directions of the
saddles gives an independent count and the witness flow lines.
"""

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from . import geometry as geo
from . import flow as fw
from .errors import DegenerateCritical, NonGenericWarning, OddOrbitError

DELTA = 1e-4
N_SCAN = 2048
BISECT_TOL = 1e-10
NEAR_PASS = 1e-3
UNRESOLVED_MAX = 0.01
SCAN_RTOL = 1e-8
SCAN_ATOL = 1e-10
SUBDIVIDE = 15
BISECT_DEPTH = 50
EXIT_RADIUS = 0.1
# loop radius for index-2 scans; the unstable set of a maximum is open, so any small
# loop around it crossed once by every trajectory parametrizes it exactly
SCAN_RADIUS = 1e-2


@dataclass(eq=False)
class ModuliCount:
    source: str
    target: str
    count: int
    witnesses: list = dc_field(default_factory=list)
    method: str = "shooting-bisection"
    meta: dict = dc_field(default_factory=dict)

    @property
    def count_mod2(self):
        return self.count % 2


@dataclass
class Transition:
    angle: float
    saddle: Optional[str]
    sides: tuple  # end labels just left and right of the angle
    closest: float  # closest approach to the saddle on the bracketing trajectories
    width: float
    direct: bool = False
    winding: bool = False  # found through a change of the lifted end point (torus)


@dataclass(eq=False)
class CircleScan:
    source: str
    angles: np.ndarray
    endpoints: list
    transitions: list
    unresolved: float

    def connections(self, label):
        return [t for t in self.transitions if t.saddle == label]


@dataclass(eq=False)
class ModuliScan:
    source: str
    target: str
    angle_grid: np.ndarray
    endpoint_labels: list
    transitions: list
    boundary_events: int
    double_count: int
    verified: bool

    @property
    def even(self):
        return self.boundary_events % 2 == 0


# -- seeds ------------------------------------------------------------------------

def _settle(model, X):
    X = np.atleast_2d(X)
    return geo.project_points(model, X) if model.embedded else geo.wrap(model, X)


def unstable_seed(crit, direction, delta=DELTA, model=None):
    """Point at distance ``delta`` from ``crit`` along an unstable direction."""
    if crit.degenerate:
        raise DegenerateCritical("%s is degenerate" % crit.label)
    e = np.asarray(direction, float)
    U = crit.unstable_directions
    if U.shape[1] == 0:
        raise ValueError("%s has no unstable directions" % crit.label)
    resid = e - U @ np.linalg.lstsq(U, e, rcond=None)[0]
    if np.linalg.norm(resid) > 1e-8 * max(1.0, np.linalg.norm(e)):
        raise ValueError("direction is not in the unstable eigenspace")
    p = crit.location + delta * e / np.linalg.norm(e)
    return p if model is None else _settle(model, p)[0]


def unstable_seeds(crit, model, delta=DELTA, angles=None):
    """All seeds: +-e for index 1, a circle of directions for index 2."""
    mu = crit.morse_index
    if mu == 0:
        return np.zeros((0, crit.location.size))
    U = crit.unstable_directions
    if mu == 1:
        D = np.stack([U[:, 0], -U[:, 0]])
    elif mu == 2:
        if angles is None:
            raise ValueError("index-2 seeds need angles")
        rates = -np.asarray(crit.hessian_eigenvalues[:2], float)
        A = exit_angle_coords(np.asarray(angles, float), rates, delta)
        return _settle(model, crit.location + A @ U[:, :2].T)
    else:
        raise ValueError("unstable spheres of dimension > 1 are not scanned")
    return _settle(model, crit.location + delta * D)


def exit_angle_coords(phi, rates, delta=DELTA, exit_radius=EXIT_RADIUS):
    """Seeds on the delta-circle in unstable eigen-coordinates, labelled by the
    angle at which the linearized flow carries them across ``exit_radius``.

    With unequal expansion rates a uniform angle grid on the small circle
    concentrates almost every trajectory near the fast axis.  Labelling seeds by
    their exit angle spreads them evenly where the nonlinear flow takes over.
    """
    a = np.stack([np.cos(phi), np.sin(phi)], axis=1) * exit_radius
    lo = np.zeros(len(phi))
    hi = np.full(len(phi), np.log(exit_radius / delta) / rates.min())
    for _ in range(200):
        t = 0.5 * (lo + hi)
        r = np.linalg.norm(a * np.exp(-np.outer(t, rates)), axis=1)
        big = r > delta
        lo = np.where(big, t, lo)
        hi = np.where(big, hi, t)
        if np.all(hi - lo < 1e-15 * (1 + hi)):
            break
    x = a * np.exp(-np.outer(0.5 * (lo + hi), rates))
    return delta * x / np.linalg.norm(x, axis=1, keepdims=True)


def stable_seeds(crit, model, delta=DELTA):
    S = crit.stable_directions
    if S.shape[1] != 1:
        raise ValueError("backward shooting needs a one-dimensional stable space")
    D = np.stack([S[:, 0], -S[:, 0]])
    return _settle(model, crit.location + delta * D)


# -- signatures ----------------------------------------------------------------

class PassageTracker:
    """Records, per trajectory and saddle, the closest approach and the side on
    which the trajectory leaves the saddle (sign along its unstable vector)."""

    def __init__(self, model, saddles, n, r_pass, system=None, X0=None):
        self.model = model
        d = model.ambient_dim
        # on the torus the unwrapped displacement is accumulated as well
        self.lifted = model.kind == geo.TORUS and X0 is not None
        if self.lifted:
            self.last = np.array(X0, float)
            self.shift = np.zeros_like(self.last)
        self.S = np.array([c.location for c in saddles]).reshape(len(saddles), d)
        self.U = np.array([c.unstable_directions[:, 0] for c in saddles]).reshape(len(saddles), d)
        self.dmin = np.full((n, len(saddles)), np.inf)
        self.sign = np.zeros((n, len(saddles)), int)
        self.r_pass = r_pass
        self.system = system

    def __call__(self, idx, s, X):
        if self.lifted:
            self.shift[idx] += geo.displacement(self.model, self.last[idx], X)
            self.last[idx] = X
        if not len(self.S):
            return
        if self.system is not None:
            ok = np.array([self.system.capture_allowed(v) for v in s])
            idx, X = idx[ok], X[ok]
            if not idx.size:
                return
        for k in range(len(self.S)):
            disp = geo.displacement(self.model, self.S[k], X)
            d = np.linalg.norm(disp, axis=1)
            dm = self.dmin[idx, k]
            closer = d < dm
            dm = np.where(closer, d, dm)
            self.dmin[idx, k] = dm
            sg = np.where(closer, 0, self.sign[idx, k])
            rec = (sg == 0) & (d >= 2 * dm) & (dm < self.r_pass)
            proj = disp @ self.U[k]
            sg = np.where(rec, np.where(proj >= 0, 1, -1), sg)
            self.sign[idx, k] = sg


@dataclass
class Signature:
    end: int  # index into the capture list, -1 when unresolved
    hit: bool  # captured at one of the tracked saddles
    signs: np.ndarray
    dmin: np.ndarray
    wind: tuple = ()  # torus: lattice vector from the anchor's lift to the lifted end point

    def key(self):
        return (self.end, self.hit, tuple(self.signs), self.wind)


def differs(a, b):
    if a.end < 0 or b.end < 0:
        return False
    if a.hit or b.hit:
        return a.hit != b.hit or a.end != b.end
    if a.end != b.end or a.wind != b.wind:
        return True
    return bool(np.any(a.signs * b.signs < 0))


class Shooter:
    """Maps parameters to trajectory signatures for one family of trajectories."""

    def __init__(self, model, system, crits, saddles, start, direction=1.0, capture=None,
                 s_max=fw.S_MAX, rtol=SCAN_RTOL, atol=SCAN_ATOL, max_step=0.25,
                 window_system=None, anchor=None, loops=None):
        self.model = model
        self.anchor = anchor
        self.loops = loops or {}  # torus: index in saddles -> lattice loop of its two branches
        self.system = system
        self.crits = list(crits)
        self.saddles = list(saddles)
        self.saddle_pos = [self.crits.index(s) for s in self.saddles]
        self.start = start
        self.direction = direction
        self.capture = capture
        self.s_max = s_max
        self.kw = dict(rtol=rtol, atol=atol, max_step=max_step)
        self.window_system = window_system
        locs = np.array([c.location for c in self.crits])
        d = [geo.distance(model, locs[i], locs[j]) for i in range(len(locs))
             for j in range(i + 1, len(locs))]
        self.r_pass = 0.25 * min(d) if d else 1.0
        self.evaluations = 0

    def __call__(self, params):
        params = np.atleast_1d(np.asarray(params, float))
        X0, s0 = self.start(params)
        n = len(X0)
        lift = self.anchor is not None and self.model.kind == geo.TORUS
        tr = PassageTracker(self.model, self.saddles, n, self.r_pass, self.window_system,
                            X0 if lift else None)
        out = fw.run_batch(self.system, self.model, X0, s0, self.direction, self.crits,
                           self.capture, s_max=self.s_max, record=False, callback=tr, **self.kw)
        self.evaluations += n
        if lift:
            ends = self.anchor + geo.displacement(self.model, self.anchor, X0) + tr.shift
        sigs = []
        for k in range(n):
            end = int(out["target"][k]) if out["status"][k] == fw.CAPTURED else -1
            wind = ()
            if lift and end >= 0:
                wind = tuple(int(v) for v in np.round(ends[k] - self.crits[end].location))
            sigs.append(Signature(end, end in self.saddle_pos, tr.sign[k].copy(), tr.dmin[k].copy(),
                                  wind))
        return sigs


def _saddle_of(shooter, a, b):
    """Which saddle separates two bracketing signatures, and how close they pass."""
    for sig in (a, b):
        if sig.hit:
            k = shooter.saddle_pos.index(sig.end)
            return k, 0.0, False
    flip = np.nonzero(a.signs * b.signs < 0)[0]
    both = np.minimum(a.dmin, b.dmin)
    if not flip.size and a.end == b.end and a.wind != b.wind and a.wind and b.wind:
        # winding changed: the saddle whose branch loop equals the difference
        dw = np.subtract(a.wind, b.wind)
        match = [k for k, L in shooter.loops.items()
                 if np.array_equal(dw, L) or np.array_equal(dw, -np.asarray(L))]
        if match:
            k = min(match, key=lambda q: both[q])
            return int(k), float(max(a.dmin[k], b.dmin[k])), True
    if flip.size:
        k = flip[np.argmin(both[flip])]
    elif len(both):
        k = int(np.argmin(both))
    else:
        return None, np.inf, False
    return int(k), float(max(a.dmin[k], b.dmin[k])), False


def scan_family(shooter, grid, periodic, period=None, tol=BISECT_TOL, subdivide=SUBDIVIDE):
    """Shoot along ``grid``, find signature changes and refine each one.

    Returns (signatures on the grid, transitions, unresolved fraction).  Runs of
    consecutive direct hits on a saddle are merged into one transition.
    """
    grid = np.asarray(grid, float)
    sigs = shooter(grid)
    n = len(grid)
    unresolved = sum(s.end < 0 for s in sigs) / max(n, 1)
    pairs = [(i, i + 1) for i in range(n - 1)]
    if periodic:
        pairs.append((n - 1, 0))

    # merge hit runs
    transitions = []
    brackets = []
    hit = [s.hit for s in sigs]
    if any(hit) and all(hit):
        k = shooter.saddle_pos.index(sigs[0].end)
        return sigs, [Transition(float(grid[0]), shooter.saddles[k].label, (None, None), 0.0,
                                 0.0, True)], unresolved
    visited = set()
    for i in range(n):
        if not hit[i] or i in visited:
            continue
        # walk the run of hits containing i
        run = [i]
        j = i
        while True:
            j2 = j + 1 if j + 1 < n else (0 if periodic else None)
            if j2 is None or not hit[j2] or sigs[j2].end != sigs[i].end or j2 == i:
                break
            run.append(j2)
            j = j2
        j = i
        while True:
            j2 = j - 1 if j > 0 else (n - 1 if periodic else None)
            if j2 is None or not hit[j2] or sigs[j2].end != sigs[i].end or j2 in run:
                break
            run.insert(0, j2)
            j = j2
        visited.update(run)
        left = run[0] - 1 if run[0] > 0 else (n - 1 if periodic else None)
        right = run[-1] + 1 if run[-1] + 1 < n else (0 if periodic else None)
        k = shooter.saddle_pos.index(sigs[i].end)
        lab = lambda q: None if q is None else _end_label(shooter, sigs[q])
        transitions.append(Transition(float(grid[run[len(run) // 2]]), shooter.saddles[k].label,
                                      (lab(left), lab(right)), 0.0, 0.0, True))
    for i, j in pairs:
        if hit[i] or hit[j]:
            continue
        if differs(sigs[i], sigs[j]):
            lo, hi = grid[i], grid[j]
            if periodic and hi < lo:
                hi = hi + period
            brackets.append([lo, hi, sigs[i], sigs[j], None])

    brackets.extend(_dip_brackets(shooter, grid, sigs, periodic, period, tol, subdivide, brackets))

    # batched multi-section: each level shoots ``subdivide`` interior points per bracket
    while brackets and max(b[1] - b[0] for b in brackets) > tol:
        live = [b for b in brackets if b[1] - b[0] > tol]
        pts = []
        for b in live:
            pts.append(b[0] + (b[1] - b[0]) * np.arange(1, subdivide + 1) / (subdivide + 1))
        P = np.concatenate(pts)
        Q = np.mod(P, period) if periodic else P
        res = shooter(Q)
        for m, b in enumerate(live):
            chunk = res[m * subdivide:(m + 1) * subdivide]
            xs = pts[m]
            seq = [(b[0], b[2])] + list(zip(xs, chunk)) + [(b[1], b[3])]
            hits = [q for q in range(1, len(seq) - 1) if seq[q][1].hit]
            if hits:
                # a sampled trajectory runs straight into a saddle: keep the
                # bracketing ends for the side labels and stop refining
                q = hits[0]
                b[0], b[1] = seq[q][0], seq[q][0]
                b[4] = seq[q][1]
                continue
            for q in range(len(seq) - 1):
                if differs(seq[q][1], seq[q + 1][1]):
                    b[0], b[2] = seq[q]
                    b[1], b[3] = seq[q + 1]
                    break
            else:
                # signature changes were not transitive; keep the outer pair, stop refining
                b[1] = b[0]
    for lo, hi, a, b, h in brackets:
        if h is not None:
            k, close, wound = _saddle_of(shooter, h, h)
        else:
            k, close, wound = _saddle_of(shooter, a, b)
        ang = 0.5 * (lo + hi)
        ang = float(np.mod(ang, period)) if periodic else float(ang)
        transitions.append(Transition(ang, None if k is None else shooter.saddles[k].label,
                                      (_end_label(shooter, a), _end_label(shooter, b)), close,
                                      float(hi - lo), h is not None, wound))
    transitions.sort(key=lambda t: t.angle)
    return sigs, transitions, unresolved


def _overlaps(b, brackets, period):
    for o in brackets:
        for shift in ((0.0, period, -period) if period else (0.0,)):
            if b[0] + shift <= o[1] and o[0] <= b[1] + shift:
                return True
    return False


def _dip_brackets(shooter, grid, sigs, periodic, period, tol, subdivide, existing, stall_max=3):
    """Transitions that no grid trajectory passes closely enough to see.

    Near a transition the closest approach to the saddle tends to zero, so every
    local minimum of the closest-approach distance along the grid is zoomed in on
    by multisection until a signature change shows up (a new bracket) or the
    distance stops shrinking (no transition there).
    """
    n = len(grid)
    D = np.array([s.dmin for s in sigs]).reshape(n, len(shooter.saddles))
    # zoom down to the bisection depth limit or the rounding floor of the parameter
    span = float(np.max(np.abs(grid))) if n else 1.0
    floor = max(np.min(np.diff(grid)) * 2.0 ** -BISECT_DEPTH if n > 1 else 0.0,
                16 * np.finfo(float).eps * max(span, period or 0.0))
    cands = []
    for k in range(D.shape[1]):
        d = D[:, k]
        if periodic:
            left, right = np.roll(d, 1), np.roll(d, -1)
        else:
            left, right = np.r_[np.inf, d[:-1]], np.r_[d[1:], np.inf]
        for i in np.nonzero((d <= left) & (d <= right) & np.isfinite(d) & (d >= shooter.r_pass))[0]:
            if sigs[i].end < 0:
                continue
            lo = grid[i - 1] if i > 0 else (grid[-1] - period if periodic else grid[i])
            hi = grid[i + 1] if i + 1 < n else (grid[0] + period if periodic else grid[i])
            cands.append([k, lo, hi, d[i], 0])
    found = []
    while cands:
        pts = [c[1] + (c[2] - c[1]) * np.arange(1, subdivide + 1) / (subdivide + 1) for c in cands]
        P = np.concatenate(pts)
        res = shooter(np.mod(P, period) if periodic else P)
        keep = []
        for m, c in enumerate(cands):
            k = c[0]
            xs, chunk = pts[m], res[m * subdivide:(m + 1) * subdivide]
            new = None
            for q in range(subdivide):
                if chunk[q].hit:
                    new = [xs[q], xs[q], chunk[q], chunk[q], chunk[q]]
                    break
                if q and differs(chunk[q - 1], chunk[q]):
                    new = [xs[q - 1], xs[q], chunk[q - 1], chunk[q], None]
                    break
            if new is not None:
                if not _overlaps(new, existing + found, period if periodic else None):
                    found.append(new)
                continue
            ds = np.array([sg.dmin[k] for sg in chunk])
            j = int(np.argmin(ds))
            c[4] = c[4] + 1 if ds[j] >= 0.95 * c[3] else 0
            c[3] = min(c[3], ds[j])
            c[1], c[2] = (xs[j - 1] if j > 0 else c[1]), (xs[j + 1] if j + 1 < subdivide else c[2])
            if c[4] < stall_max and c[2] - c[1] > floor:
                keep.append(c)
        cands = keep
    return found


def _end_label(shooter, sig):
    return shooter.crits[sig.end].label if sig.end >= 0 else None


# -- counting ------------------------------------------------------------------

def _check_generic_lines(lines, crits, source, model):
    for ln in lines:
        if ln.status != fw.CAPTURED:
            raise NonGenericWarning("trajectory from %s did not resolve" % source.label)
        tgt = next(c for c in crits if c.label == ln.target)
        if tgt.morse_index >= source.morse_index:
            raise NonGenericWarning("flow line %s -> %s between points of index %d and %d"
                                    % (source.label, tgt.label, source.morse_index, tgt.morse_index))
        for c in crits:
            if c is source or c is tgt or c.morse_index < source.morse_index:
                continue
            if np.min(geo.distance(model, ln.points, c.location)) < NEAR_PASS:
                raise NonGenericWarning("flow line from %s passes within %.0e of %s"
                                        % (source.label, NEAR_PASS, c.label))


def shoot_saddle(model, field, crit, crits, delta=DELTA):
    """The two unstable branches of an index-1 point, checked for genericity."""
    lines = fw.integrate_many(model, field, unstable_seeds(crit, model, delta), crits,
                              source=crit.label)
    _check_generic_lines(lines, crits, crit, model)
    return lines


def backward_witnesses(model, field, saddle, crits, delta=DELTA):
    """Flow lines arriving at an index-(n-1) point, found by backward shooting along
    its one-dimensional stable space."""
    lines = fw.integrate_many(model, field, stable_seeds(saddle, model, delta), crits,
                              backward=True, source=saddle.label)
    for ln in lines:
        if ln.status != fw.CAPTURED:
            raise NonGenericWarning("backward trajectory into %s did not resolve" % saddle.label)
    return lines


def branch_loops(model, field, saddles, crits, delta=DELTA):
    """Torus only: for each saddle whose two unstable branches end at the same point,
    the lattice vector of the closed loop they form (key: position in ``saddles``)."""
    if model.kind != geo.TORUS:
        return {}
    out = {}
    for i, c in enumerate(saddles):
        lines = shoot_saddle(model, field, c, crits, delta)
        if lines[0].target != lines[1].target:
            continue
        ends = []
        for ln in lines:
            D = geo.displacement(model, ln.points[:-1], ln.points[1:]).sum(axis=0)
            tgt = next(q for q in crits if q.label == ln.target)
            ends.append(np.round(ln.points[0] + D - tgt.location).astype(int))
        out[i] = ends[0] - ends[1]
    return out


def scan_circle(model, field, crit, crits, n_scan=N_SCAN, delta=SCAN_RADIUS, tol=BISECT_TOL):
    """Scan the unstable circle of an index-2 point."""
    if crit.morse_index != 2 or crit.degenerate:
        raise DegenerateCritical("circle scans need a nondegenerate index-2 point")
    saddles = [c for c in crits if c.morse_index == 1]
    system = fw.AutonomousFlow(model, field)

    def start(a):
        return unstable_seeds(crit, model, delta, a), 0.0

    sh = Shooter(model, system, crits, saddles, start, anchor=crit.location,
                 loops=branch_loops(model, field, saddles, crits))
    grid = 2 * np.pi * (np.arange(n_scan) + 0.5) / n_scan
    sigs, trans, unres = scan_family(sh, grid, True, 2 * np.pi, tol)
    for sig in sigs:
        if sig.end >= 0 and crits[sig.end].morse_index >= 2:
            raise NonGenericWarning("trajectory from %s captured at index-2 point" % crit.label)
    if unres > UNRESOLVED_MAX:
        raise NonGenericWarning("%.1f%% of trajectories from %s unresolved" % (100 * unres, crit.label))
    for t in trans:
        # both bracketing trajectories must pass inside the passage radius, where the
        # side signs are recorded; witnesses come from backward shooting
        if t.saddle is None or (t.closest > sh.r_pass and not t.winding):
            raise NonGenericWarning("transition at angle %.6f of %s does not pass a saddle"
                                    % (t.angle, crit.label))
    ends = [_end_label(sh, s) for s in sigs]
    return CircleScan(crit.label, grid, ends, trans, unres)


def count_flow_lines(model, field, c_up, c_down, crits, n_scan=N_SCAN, delta=DELTA, scan=None,
                     cross_check=True):
    """Number of unparametrized flow lines from ``c_up`` to ``c_down`` (index gap 1)."""
    if c_up.morse_index != c_down.morse_index + 1:
        raise ValueError("count_flow_lines needs index difference 1")
    for c in (c_up, c_down):
        if c.degenerate:
            raise DegenerateCritical("%s is degenerate" % c.label)
    if c_up.morse_index == 1:
        lines = shoot_saddle(model, field, c_up, crits, delta)
        wit = [ln for ln in lines if ln.target == c_down.label]
        return ModuliCount(c_up.label, c_down.label, len(wit), wit, "shooting")
    if c_up.morse_index != 2 or model.dim != 2:
        raise ValueError("counts from index %d are not supported" % c_up.morse_index)
    if scan is None:
        scan = scan_circle(model, field, c_up, crits, n_scan)
    n = len(scan.connections(c_down.label))
    meta = {"angles": [t.angle for t in scan.connections(c_down.label)]}
    wit = []
    if cross_check:
        back = backward_witnesses(model, field, c_down, crits, delta)
        wit = [ln for ln in back if ln.source == c_up.label]
        meta["backward_count"] = len(wit)
        if len(wit) != n:
            raise NonGenericWarning("scan finds %d lines %s -> %s, backward shooting finds %d"
                                    % (n, c_up.label, c_down.label, len(wit)))
    return ModuliCount(c_up.label, c_down.label, n, wit, "shooting-bisection", meta)


def count_all(model, field, crits, n_scan=N_SCAN, delta=DELTA):
    """Counts for every index-difference-1 pair, sharing one scan per index-2 point."""
    counts = []
    scans = {}
    for c in crits:
        if c.morse_index == 2 and model.dim == 2:
            scans[c.label] = scan_circle(model, field, c, crits, n_scan)
    shots = {c.label: shoot_saddle(model, field, c, crits, delta) for c in crits
             if c.morse_index == 1}
    back = {}
    for up in crits:
        for down in crits:
            if up.morse_index != down.morse_index + 1:
                continue
            if up.morse_index == 1:
                wit = [ln for ln in shots[up.label] if ln.target == down.label]
                counts.append(ModuliCount(up.label, down.label, len(wit), wit, "shooting"))
            else:
                if down.label not in back:
                    back[down.label] = backward_witnesses(model, field, down, crits, delta)
                sc = scans[up.label]
                n = len(sc.connections(down.label))
                wit = [ln for ln in back[down.label] if ln.source == up.label]
                if len(wit) != n:
                    raise NonGenericWarning("scan finds %d lines %s -> %s, backward shooting finds %d"
                                            % (n, up.label, down.label, len(wit)))
                counts.append(ModuliCount(up.label, down.label, n, wit, "shooting-bisection",
                                          {"angles": [t.angle for t in sc.connections(down.label)],
                                           "backward_count": len(wit)}))
    return counts, scans


def moduli_scan(model, field, c_up, c_bottom, crits, n_scan=N_SCAN, delta=DELTA, scan=None,
                counts=None):
    """One-dimensional moduli space from an index-2 point to a minimum.

    Every transition is a once-broken line c_up -> s -> (side).  The sides that
    reach ``c_bottom`` are the boundary events; their number is compared with
    sum_s #(c_up -> s) #(s -> c_bottom) and must be even.
    """
    if c_up.morse_index - c_bottom.morse_index != 2:
        raise ValueError("moduli_scan needs index difference 2")
    if scan is None:
        scan = scan_circle(model, field, c_up, crits, n_scan)
    branches = {}
    events = 0
    verified = True
    for t in scan.transitions:
        if t.saddle not in branches:
            s = next(c for c in crits if c.label == t.saddle)
            branches[t.saddle] = sorted(ln.target for ln in shoot_saddle(model, field, s, crits, delta))
        sides = [x for x in t.sides]
        if sorted(sides) != branches[t.saddle]:
            verified = False
        events += sum(x == c_bottom.label for x in sides)
    if counts is None:
        counts = {}
    double = 0
    for s in crits:
        if s.morse_index != 1:
            continue
        up = counts.get((c_up.label, s.label))
        if up is None:
            up = len(scan.connections(s.label))
        down = counts.get((s.label, c_bottom.label))
        if down is None:
            if s.label not in branches:
                branches[s.label] = sorted(ln.target for ln in shoot_saddle(model, field, s, crits, delta))
            down = branches[s.label].count(c_bottom.label)
        double += up * down
    if events != double:
        verified = False
    return ModuliScan(c_up.label, c_bottom.label, scan.angles, scan.endpoints, scan.transitions,
                      events, double, verified)


def quotient_count(counts, classes):
    """Counts on the antipodal quotient from counts on the covering sphere.

    A line on the quotient lifts to exactly two lines upstairs, so the covering
    total between the two orbits is halved.
    """
    of = {}
    for cl in classes:
        for rep in cl.representatives:
            of[rep.label] = cl.label
    total = {}
    wit = {}
    for mc in counts:
        key = (of[mc.source], of[mc.target])
        total[key] = total.get(key, 0) + mc.count
        wit.setdefault(key, []).extend(mc.witnesses)
    out = []
    for (a, b), n in sorted(total.items()):
        if n % 2:
            raise OddOrbitError("%d lines between orbits %s and %s" % (n, a, b))
        out.append(ModuliCount(a, b, n // 2, wit[(a, b)][::2], "quotient", {"covering": n}))
    return out


def decoupled_count(field, c_up, c_down):
    """Closed-form count for a separable field sum_i c_i cos(2 pi (x_i - s_i)) on a
    flat torus with the flat metric.

    The flow is a product of circle flows.  A line between points whose index
    differs by one moves in exactly one coordinate, from the maximum of that
    circle factor to its minimum, and there are two such arcs.
    """
    c = np.asarray(field.params["coeffs"], float)
    shift = np.asarray(field.params.get("shift", np.zeros_like(c)), float)
    x = np.mod(np.asarray(c_up.location) - shift + 1e-12, 1.0)
    y = np.mod(np.asarray(c_down.location) - shift + 1e-12, 1.0)
    same = np.abs(x - y) < 1e-6
    if same.sum() != len(c) - 1:
        n = 0
    else:
        i = int(np.nonzero(~same)[0][0])
        top = 0.0 if c[i] > 0 else 0.5
        n = 2 if abs(x[i] - top) < 1e-6 and abs(y[i] - (0.5 - top)) < 1e-6 else 0
    return ModuliCount(c_up.label, c_down.label, n, [], "decoupled-analytic")


def dimension(c_up, c_down):
    """Dimension of the space of unparametrized lines."""
    return c_up.morse_index - c_down.morse_index - 1
