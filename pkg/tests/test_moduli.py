import numpy as np
import pytest

from morsekit import critical as cr
from morsekit import fields as fl
from morsekit import flow as fw
from morsekit import geometry as geo
from morsekit import moduli as md
from morsekit.errors import NonGenericWarning, OddOrbitError
from morsekit.pipeline import analyze

from conftest import peanut_model

TORUS = geo.flat_torus()


@pytest.fixture(scope="module")
def torus_crits():
    return cr.find_critical_points(fl.torus_cosine(), TORUS)


def by_label(crits, label):
    return next(c for c in crits if c.label == label)


def test_unstable_seeds(torus_crits):
    top, saddle, bottom = (next(c for c in torus_crits if c.morse_index == k) for k in (2, 1, 0))
    S = md.unstable_seeds(saddle, TORUS)
    assert S.shape == (2, 2)
    assert np.allclose(geo.distance(TORUS, S, saddle.location), md.DELTA)
    D = geo.displacement(TORUS, saddle.location, S)
    assert np.allclose(D[0], -D[1])
    assert md.unstable_seeds(bottom, TORUS).shape[0] == 0
    ang = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    C = md.unstable_seeds(top, TORUS, md.SCAN_RADIUS, ang)
    assert C.shape == (16, 2)
    # a circle of directions: distinct points around the maximum
    th = np.unwrap(np.arctan2(*geo.displacement(TORUS, top.location, C).T[::-1]))
    assert np.all(np.diff(th) > 0) or np.all(np.diff(th) < 0)
    with pytest.raises(ValueError):
        md.unstable_seeds(top, TORUS)


def test_unstable_seed_direction_checked(torus_crits):
    saddle = next(c for c in torus_crits if c.morse_index == 1)
    e = saddle.unstable_directions[:, 0]
    p = md.unstable_seed(saddle, e, model=TORUS)
    assert geo.distance(TORUS, p, saddle.location) == pytest.approx(md.DELTA)
    with pytest.raises(ValueError):
        md.unstable_seed(saddle, saddle.stable_directions[:, 0])


def test_dimension(torus_crits):
    top = next(c for c in torus_crits if c.morse_index == 2)
    low = next(c for c in torus_crits if c.morse_index == 0)
    assert md.dimension(top, low) == 1


def test_torus_counts_match_decoupled_oracle(torus):
    an = torus.value
    for m in an.counts:
        oracle = md.decoupled_count(an.field, by_label(an.crits, m.source), by_label(an.crits, m.target))
        assert m.count == oracle.count == 2
        assert m.count_mod2 == 0


def test_scan_resolution_stability(torus_crits):
    f = fl.torus_cosine()
    a, _ = md.count_all(TORUS, f, torus_crits, n_scan=1024)
    b, _ = md.count_all(TORUS, f, torus_crits, n_scan=2048)
    assert [(m.source, m.target, m.count) for m in a] == [(m.source, m.target, m.count) for m in b]


def test_ellipsoid_counts(ellipsoid):
    an = ellipsoid.value
    top = [c for c in an.crits if c.morse_index == 2]
    mid = [c for c in an.crits if c.morse_index == 1]
    table = {(m.source, m.target): m.count for m in an.counts}
    for u in top:
        for v in mid:
            assert table[(u.label, v.label)] == 1
    for v in mid:
        for w in (c for c in an.crits if c.morse_index == 0):
            assert table[(v.label, w.label)] == 1


def test_witness_energies(ellipsoid, torus):
    for an in (ellipsoid.value, torus.value):
        vals = {c.label: c.value for c in an.crits}
        for m in an.counts:
            assert len(m.witnesses) == m.count
            for ln in m.witnesses:
                assert (ln.source, ln.target) == (m.source, m.target)
                E = fw.energy(ln)
                assert abs(E - (vals[m.source] - vals[m.target])) <= 1e-6 * (1 + abs(E))


def test_count_flow_lines_direct(torus_crits):
    f = fl.torus_cosine()
    top = next(c for c in torus_crits if c.morse_index == 2)
    saddle = next(c for c in torus_crits if c.morse_index == 1)
    low = next(c for c in torus_crits if c.morse_index == 0)
    m = md.count_flow_lines(TORUS, f, top, saddle, torus_crits)
    assert m.count == 2 and m.meta["backward_count"] == 2
    m = md.count_flow_lines(TORUS, f, saddle, low, torus_crits)
    assert m.count == 2 and m.method == "shooting"
    with pytest.raises(ValueError):
        md.count_flow_lines(TORUS, f, top, low, torus_crits)


def test_round_sphere_scan():
    s = geo.round_sphere()
    C = cr.find_critical_points(fl.height(), s)
    sc = md.scan_circle(s, fl.height(), C[0], C)
    assert sc.transitions == []
    assert set(sc.endpoints) == {C[1].label}
    ms = md.moduli_scan(s, fl.height(), C[0], C[1], C, scan=sc)
    assert ms.boundary_events == 0 and ms.even and ms.verified


def test_ellipsoid_scan_hits_saddles(ellipsoid, ellipsoid_scans):
    an = ellipsoid.value
    top = next(c for c in an.crits if np.allclose(c.location, [0, 0, 1]))
    low = next(c for c in an.crits if np.allclose(c.location, [1, 0, 0]))
    saddles = {c.label for c in an.crits if c.morse_index == 1}
    assert {tuple(np.round(by_label(an.crits, s).location, 8) + 0.0) for s in saddles} == {
        (0.0, 1.0, 0.0), (0.0, -1.0, 0.0)}
    ms = next(m for m in ellipsoid_scans.value if m.source == top.label and m.target == low.label)
    assert {t.saddle for t in ms.transitions} == saddles
    assert ms.even and ms.verified
    assert ms.double_count % 2 == 0


def test_peanut_scans(peanut_scans):
    an = peanut_scans.value
    assert an.moduli_scans
    for ms in an.moduli_scans:
        assert ms.verified and ms.even
        assert ms.double_count % 2 == 0
        for t in ms.transitions:
            assert by_label(an.crits, t.saddle).morse_index == 1
    assert an.betti == [1, 0, 1]


def test_peanut_upright_non_generic():
    with pytest.raises(NonGenericWarning):
        analyze(peanut_model(), fl.height())


def test_quotient_count(rp2):
    an = rp2.value
    cov = {(m.source, m.target): m.count for m in an.covering_counts}
    of = {r.label: k.label for k in an.classes for r in k.representatives}
    for m in an.counts:
        total = sum(n for (a, b), n in cov.items() if of[a] == m.source and of[b] == m.target)
        assert total == 2 * m.count
    idx = {k.label: k.morse_index for k in an.classes}
    counts = {(idx[m.source], idx[m.target]): m.count for m in an.counts}
    # four lines upstairs in each degree become two downstairs
    assert counts == {(2, 1): 2, (1, 0): 2}
    assert md.quotient_count([], an.classes) == []


def test_quotient_count_odd_orbit(rp2):
    an = rp2.value
    m = an.covering_counts[0]
    with pytest.raises(OddOrbitError):
        md.quotient_count([md.ModuliCount(m.source, m.target, 1)], an.classes)
