import time

import numpy as np
import pytest

from morsekit import fields as fl
from morsekit import geometry as geo
from morsekit.pipeline import analyze
from morsekit.poly import peanut_constraint


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


class Timed:
    """An analysis together with the wall time it took to build."""

    def __init__(self, fn):
        t0 = time.perf_counter()
        self.value = fn()
        self.elapsed = time.perf_counter() - t0


def peanut_model():
    return geo.implicit_surface(peanut_constraint(1.2), name="peanut")


def tilted_height():
    return fl.combination([(1.0, fl.height(2)), (0.2, fl.height(0))])


def monkey_members(eps=(0.2, 0.1, 0.05, 0.025)):
    return [fl.combination([(1.0, fl.monkey_saddle()), (e, fl.torus_cosine())]) for e in eps]


def random_complex(rng, total, cuts=None):
    """Random GF(2) complex with ``total`` generators in degrees 0..3 and d^2 = 0,
    built column by column from the kernel of the previous boundary."""
    from morsekit import algebra as al

    if cuts is None:
        cuts = sorted(rng.integers(0, total + 1, 3))
    sizes = [cuts[0], cuts[1] - cuts[0], cuts[2] - cuts[1], total - cuts[2]]
    values = rng.permutation(total) + rng.random(total) * 0.5
    gens, bnd = {}, {}
    pos = 0
    for k, n in enumerate(sizes):
        gens[k] = [("g%d_%d" % (k, i), float(values[pos + i])) for i in range(n)]
        pos += n
    for k in range(1, 4):
        rows, cols = sizes[k - 1], sizes[k]
        if k == 1 or rows == 0:
            K = np.eye(rows, dtype=np.uint8)
        else:
            K = al.kernel_basis(bnd[k - 1], rows)
        coef = rng.integers(0, 2, size=(len(K), cols)).astype(np.uint8)
        bnd[k] = (K.T.astype(int) @ coef % 2).astype(np.uint8) if len(K) else np.zeros((rows, cols), np.uint8)
    return al.from_abstract(gens, bnd)


@pytest.fixture(scope="session")
def sphere():
    return Timed(lambda: analyze(geo.round_sphere(), fl.height()))


@pytest.fixture(scope="session")
def ellipsoid():
    return Timed(lambda: analyze(geo.round_sphere(), fl.ellipsoid_quadratic((1, 2, 3))))


@pytest.fixture(scope="session")
def rp2():
    return Timed(lambda: analyze(geo.antipodal_quotient(geo.round_sphere()),
                                 fl.ellipsoid_quadratic((1, 2, 3))))


@pytest.fixture(scope="session")
def torus():
    return Timed(lambda: analyze(geo.flat_torus(), fl.torus_cosine()))


@pytest.fixture(scope="session")
def torus_translate():
    return Timed(lambda: analyze(geo.flat_torus(), fl.torus_cosine(shift=(0.1, 0.15))))


@pytest.fixture(scope="session")
def peanut_scans():
    return Timed(lambda: analyze(peanut_model(), tilted_height(), with_scans=True))


@pytest.fixture(scope="session")
def ellipsoid_scans(ellipsoid):
    """Index-2 scans of the ellipsoid, reusing the circle scans of the cached analysis."""
    from morsekit import moduli as md

    def run():
        an = ellipsoid.value
        table = {(m.source, m.target): m.count for m in an.counts}
        out = []
        for lab, sc in an.scans.items():
            up = next(c for c in an.crits if c.label == lab)
            for low in an.crits:
                if low.morse_index == 0:
                    out.append(md.moduli_scan(an.model, an.field, up, low, an.crits, scan=sc,
                                              counts=table))
        return out
    return Timed(run)


@pytest.fixture(scope="session")
def monkey_sequence():
    """Analyses and induced maps of the perturbed monkey-saddle sequence."""
    from morsekit import continuation as ct

    def run():
        model = geo.flat_torus()
        members = monkey_members()
        an = [analyze(model, g) for g in members]
        maps = ct.sequence_maps(model, members, an)
        return model, members, an, maps
    return Timed(run)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def torus_chain_maps():
    """Analyses of the three translated torus scenes and the continuation maps
    between them, keyed by (from, to) with 0, 1, 2 for alpha, beta, gamma."""
    from morsekit import continuation as ct
    from morsekit.scenes import TORUS_CHAIN_SHIFTS

    def run():
        model = geo.flat_torus()
        fields = [fl.torus_cosine(shift=s) for s in TORUS_CHAIN_SHIFTS]
        an = [analyze(model, f) for f in fields]
        chain, induced = {}, {}
        for i, j in [(0, 0), (0, 1), (1, 2), (0, 2), (1, 0)]:
            hom = ct.Homotopy(model, fields[i], fields[j])
            phi = ct.chain_map(hom, an[i].complex, an[j].complex, an[i].crits, an[j].crits)
            chain[i, j] = phi
            induced[i, j] = ct.induced_map(phi, an[i].complex, an[j].complex,
                                           an[i].homology, an[j].homology)
        return model, fields, an, chain, induced
    return Timed(run)
