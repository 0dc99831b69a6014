import math
from itertools import product
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from morsekit import algebra as al
from morsekit import critical as cr
from morsekit import continuation as ct
from morsekit import fields as fl
from morsekit import geometry as geo
from morsekit.errors import MissingPairError, MorseViolation, NotAComplexError, ZeroClassError
from morsekit.moduli import ModuliCount
from morsekit.scenes import many_minima

from conftest import random_complex


def point(label, value, index, degenerate=False):
    return SimpleNamespace(label=label, value=value, morse_index=index, degenerate=degenerate)


HEART_POINTS = [point("x1", 5.0, 2), point("x2", 4.0, 2), point("y", 2.0, 1), point("z", 0.0, 0)]
HEART_COUNTS = [ModuliCount("x1", "y", 1), ModuliCount("x2", "y", 1), ModuliCount("y", "z", 2)]


def test_build_complex_heart():
    cx = al.build_complex(HEART_POINTS, HEART_COUNTS)
    assert cx.d(2).tolist() == [[1, 1]]
    # two lines from y to z cancel mod 2
    assert cx.d(1).tolist() == [[0]]
    assert cx.to_dict() == al.heart_complex().to_dict()


def test_build_complex_sphere(sphere):
    cx = sphere.value.complex
    assert all(not np.any(cx.d(k)) for k in cx.degrees)


def test_build_complex_errors():
    with pytest.raises(MissingPairError):
        al.build_complex(HEART_POINTS, HEART_COUNTS[:2])
    with pytest.raises(MorseViolation):
        al.build_complex([point("m", 0.0, 1, True)], [])


def test_boundary_squared_examples():
    assert al.verify_boundary_squared(al.heart_complex()).ok
    rep = al.verify_boundary_squared(al.punctured_heart_complex())
    assert not rep.ok and rep.degree == 2
    assert al.verify_boundary_squared(al.from_abstract({}, {})).ok
    with pytest.raises(NotAComplexError):
        al.homology(al.punctured_heart_complex())


def test_heart_homology():
    cx = al.heart_complex()
    H = al.homology(cx)
    assert H.betti_list() == [1, 0, 1]
    assert H.representatives[2].tolist() == [[1, 1]]
    assert al.homology_to_dict(H, cx)["representatives"][2] == ["x1 + x2"]


def test_geometric_homology(torus, rp2, sphere):
    assert torus.value.betti == [1, 2, 1]
    assert rp2.value.betti == [1, 1, 1]
    assert sphere.value.betti == [1, 0, 1]


def test_morse_inequalities(sphere):
    cx = al.heart_complex()
    rep = al.morse_inequality_check(cx, al.homology(cx))
    assert rep.ok and rep.slack == 2
    rep = al.morse_inequality_check(sphere.value.crits, sphere.value.homology)
    assert rep.ok and rep.slack == 0
    for g in range(5):
        cx = al.genus_complex(g)
        H = al.homology(cx)
        assert H.betti_list() == [1, 2 * g, 1]
        assert al.morse_inequality_check(cx, H).slack == 0


def test_heart_spectral_numbers():
    cx = al.heart_complex()
    assert al.spectral_number(cx, 2, [1, 1]) == 5.0
    assert al.spectral_number(cx, 0, [1]) == 0.0
    with pytest.raises(ZeroClassError):
        al.spectral_number(cx, 1, [1])
    with pytest.raises(ValueError):
        al.spectral_number(cx, 2, [1, 0])
    rep = al.spectral_report(cx)
    assert rep.homological_spectrum == [0.0, 5.0]
    assert al.action_gap(rep) == 5.0


def test_single_class_gap():
    cx = al.from_abstract({0: [("p", 1.0)]}, {})
    rep = al.spectral_report(cx)
    assert rep.action_gap == math.inf
    assert rep.to_dict()["action_gap"] == "inf"


def brute_min(cx, k, xi):
    """Minimum of the top value over every element of xi + im d, by enumeration."""
    B = cx.d(k + 1)
    vals = cx.values(k)
    best = math.inf
    for bits in product((0, 1), repeat=B.shape[1]):
        v = (np.asarray(xi, np.uint8) + (B @ np.array(bits, np.uint8) if B.shape[1] else 0)) % 2
        best = min(best, vals[np.nonzero(v)[0]].max())
    return best


def test_many_minima_spectral_number():
    for n in range(2, 7):
        f = many_minima(n)
        crits = cr.find_critical_points(f, geo.real_line(-3, 2 * n + 3))
        gens = {0: [(c.label, c.value) for c in crits if c.morse_index == 0],
                1: [(c.label, c.value) for c in crits if c.morse_index == 1]}
        xs = {c.label: c.location[0] for c in crits}
        # a maximum bounds the two minima next to it
        B = np.zeros((n + 1, n), np.uint8)
        for j, (lab, _) in enumerate(gens[1]):
            for i, (low, _) in enumerate(gens[0]):
                B[i, j] = abs(xs[lab] - xs[low]) < 1.5
        cx = al.from_abstract(gens, {1: B})
        H = al.homology(cx)
        assert H.betti_list() == [1, 0]
        assert al.rank(cx.d(1)) == n
        xi = np.eye(n + 1, dtype=np.uint8)[0]
        s = al.spectral_number(cx, 0, xi)
        assert s == min(v for _, v in gens[0])
        assert s == brute_min(cx, 0, xi)


def test_ellipsoid_action_gap(ellipsoid):
    sp = ellipsoid.value.spectral
    assert sp.homological_spectrum == pytest.approx([1, 3])
    assert al.action_gap(sp) == pytest.approx(2.0)


@st.composite
def complexes(draw, max_gens=12):
    total = draw(st.integers(1, max_gens))
    cuts = sorted(draw(st.lists(st.integers(0, total), min_size=3, max_size=3)))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    return random_complex(np.random.default_rng(seed), total, cuts)


@settings(max_examples=150, deadline=None)
@given(complexes())
def test_betti_matches_brute_force(cx):
    assert al.verify_boundary_squared(cx).ok
    H = al.homology(cx)
    assert H.betti == al.betti_brute_force(cx)


@settings(max_examples=150, deadline=None)
@given(complexes())
def test_greedy_equals_exhaustive(cx):
    H = al.homology(cx)
    for k, R in H.representatives.items():
        for co in product((0, 1), repeat=len(R)):
            if not any(co):
                continue
            xi = np.zeros(len(cx.gens(k)), np.uint8)
            for a, v in zip(co, R):
                if a:
                    xi ^= v
            g = al.spectral_number_greedy(cx, k, xi)[0]
            e = al.spectral_number_exhaustive(cx, k, xi)[0]
            assert g == e == brute_min(cx, k, xi)
            # spectrality: the value is a critical value
            assert min(abs(e - v) for v in cx.values(k)) <= 1e-9


def test_spectral_gap_lower_bound(ellipsoid, torus):
    """A perturbation closer than half the action gap keeps at least as many
    critical points as there are homological spectral values."""
    pairs = [(ellipsoid.value, fl.ellipsoid_quadratic((1.1, 2, 3.05))),
             (torus.value, fl.combination([(1, fl.torus_cosine()), (0.05, fl.monkey_saddle())]))]
    for an, g in pairs:
        sp = an.spectral
        d = ct.c0_distance(an.model, an.field, g, n=20_000)
        assert d < sp.action_gap / 2
        assert len(cr.find_critical_points(g, an.model)) >= len(sp.homological_spectrum)
