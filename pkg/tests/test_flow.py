import numpy as np
import pytest
from scipy.interpolate import CubicHermiteSpline

from morsekit import critical as cr
from morsekit import fields as fl
from morsekit import flow as fw
from morsekit import geometry as geo
from morsekit import moduli as md
from morsekit.errors import EscapedDomain, InsufficientTail
from morsekit.poly import Polynomial

SPHERE = geo.round_sphere()
TORUS = geo.flat_torus()


@pytest.fixture(scope="module")
def sphere_crits():
    return cr.find_critical_points(fl.height(), SPHERE)


@pytest.fixture(scope="module")
def torus_crits():
    return cr.find_critical_points(fl.torus_cosine(), TORUS)


@pytest.fixture(scope="module")
def ellipsoid_pair():
    f = fl.ellipsoid_quadratic((1, 2, 3))
    C = cr.find_critical_points(f, SPHERE)
    saddle = next(c for c in C if c.morse_index == 1)
    top = next(c for c in C if c.morse_index == 2)
    up = next(ln for ln in md.backward_witnesses(SPHERE, f, saddle, C) if ln.source == top.label)
    down = md.shoot_saddle(SPHERE, f, saddle, C)[0]
    return f, C, saddle, up, down


def test_equator_to_south_pole(sphere_crits):
    ln = fw.integrate(SPHERE, fl.height(), [1, 0, 0], sphere_crits)
    south = next(c for c in sphere_crits if c.morse_index == 0)
    assert ln.target == south.label and ln.resolved
    assert np.allclose(ln.points[-1], [0, 0, -1], atol=1e-6)
    # f drops from 0 to -1
    assert fw.energy(ln) == pytest.approx(1.0, abs=1e-6)
    assert ln.monotone_violation <= fw.TAU_MONO


def test_start_at_critical_point(sphere_crits):
    c = sphere_crits[1]
    ln = fw.integrate(SPHERE, fl.height(), c.location, sphere_crits)
    assert ln.target == c.label
    assert fw.energy(ln) == 0.0


def test_torus_line_to_minimum(torus_crits):
    ln = fw.integrate(TORUS, fl.torus_cosine(), [0.25, 0.5 + 1e-3], torus_crits)
    tgt = next(c for c in torus_crits if c.label == ln.target)
    assert np.allclose(tgt.location, [0.5, 0.5], atol=1e-9)
    assert tgt.morse_index == 0


def test_energy_examples(ellipsoid_pair):
    f, C, saddle, up, down = ellipsoid_pair
    const = fw.FlowLine(np.array([0.0, 1.0]), np.array([saddle.location] * 2), np.array([2.0, 2.0]), None)
    assert fw.energy(const) == 0.0
    assert down.target is not None
    assert fw.energy(down) == pytest.approx(1.0, abs=1e-6)
    top = next(c for c in C if c.morse_index == 2)
    start = geo.project_points(SPHERE, (top.location + 1e-4 * top.unstable_directions[:, 0])[None])[0]
    ln = fw.integrate(SPHERE, f, start, C)
    assert next(c for c in C if c.label == ln.target).morse_index == 0
    assert fw.energy(ln) == pytest.approx(2.0, abs=1e-6)


def test_energy_trapezoid_fallback():
    # hand-made line x(s) = (cos s, sin s, 0) on the unit sphere: |x'| = 1
    s = np.linspace(0, 1, 2001)
    P = np.stack([np.cos(s), np.sin(s), 0 * s], axis=1)
    ln = fw.FlowLine(s, P, np.zeros_like(s), None)
    assert fw.energy(ln) == pytest.approx(1.0, rel=1e-6)


def test_decay_rates(sphere_crits, torus_crits):
    ln = fw.integrate(SPHERE, fl.height(), [1, 0, 0], sphere_crits)
    fit = fw.decay_rate(ln, sphere_crits[1], SPHERE)
    assert fit["rate"] == pytest.approx(1.0, rel=0.05)
    ln = fw.integrate(TORUS, fl.torus_cosine(), [0.25, 0.5 + 1e-3], torus_crits)
    tgt = next(c for c in torus_crits if c.label == ln.target)
    fit = fw.decay_rate(ln, tgt, TORUS)
    assert fit["rate"] == pytest.approx(4 * np.pi ** 2, rel=0.05)
    short = fw.FlowLine(ln.s[:3], ln.points[:3], ln.values[:3], ln.work[:3])
    with pytest.raises(InsufficientTail):
        fw.decay_rate(short, tgt, TORUS)


def saddle_patch():
    """-(x - 1/2)^2 + (y - 1/2)^2 around the torus centre."""
    f = fl.polynomial(Polynomial([(-1, (2, 0)), (1, (1, 0)), (1, (0, 2)), (-1, (0, 1))]))
    return f, cr.classify(f, TORUS, [0.5, 0.5])


def test_kappa_quadratic_saddle():
    f, c = saddle_patch()
    # |f - f(c)| / |grad f|^2 = |y^2 - x^2| / (4 (x^2 + y^2)), sharp constant 1/4
    for r in (0.2, 0.1, 0.05):
        assert fw.action_energy_kappa(f, TORUS, c, r) == pytest.approx(0.25, abs=1e-9)


def test_kappa_sphere_pole(sphere_crits):
    k = fw.action_energy_kappa(fl.height(), SPHERE, sphere_crits[0], 0.05)
    assert k == pytest.approx(0.5, rel=0.1)


@pytest.mark.parametrize("r", [0.2, 0.1, 0.05, 0.02])
def test_kappa_monotone_in_radius(sphere_crits, r):
    f, c = saddle_patch()
    assert fw.action_energy_kappa(f, TORUS, c, r / 2) <= fw.action_energy_kappa(f, TORUS, c, r) + 1e-9
    p = sphere_crits[0]
    assert (fw.action_energy_kappa(fl.height(), SPHERE, p, r / 2)
            <= fw.action_energy_kappa(fl.height(), SPHERE, p, r) + 1e-9)


def test_action_exponential_decay(sphere_crits):
    ln = fw.integrate(SPHERE, fl.height(), [0.6, 0, -0.8], sphere_crits)
    tgt = sphere_crits[1]
    r = 0.3
    kappa = fw.action_energy_kappa(fl.height(), SPHERE, tgt, r)
    d = geo.distance(SPHERE, ln.points, tgt.location)
    k0 = int(np.nonzero(d <= r)[0][0])
    a = ln.values[k0:] - tgt.value
    bound = a[0] * np.exp((ln.s[k0] - ln.s[k0:]) / kappa) * (1 + 1e-6) + 1e-14
    assert np.all(a <= bound)


def test_preglue_constant(ellipsoid_pair):
    f, C, saddle, up, down = ellipsoid_pair
    const = fw.FlowLine(np.array([0.0, 1.0]), np.array([saddle.location] * 2), np.array([2.0, 2.0]),
                        np.zeros(2))
    p = fw.preglue(SPHERE, f, const, const, saddle, 4.0)
    assert p.residual == 0.0
    assert np.allclose(p.points, saddle.location)


def test_preglue_residual_decays(ellipsoid_pair):
    f, C, saddle, up, down = ellipsoid_pair
    r4 = fw.preglue(SPHERE, f, up, down, saddle, 4.0).residual
    r8 = fw.preglue(SPHERE, f, up, down, saddle, 8.0).residual
    assert r8 < 1e-3
    assert r8 < r4


def test_time_shift_invariance(torus_crits):
    f = fl.torus_cosine()
    ln = fw.integrate(TORUS, f, [0.2, 0.13], torus_crits, max_step=0.005)
    k = len(ln) // 3
    tail = fw.integrate(TORUS, f, ln.points[k], torus_crits, max_step=0.005)
    assert tail.target == ln.target
    # unwrap the original line and interpolate it with its exact velocity
    P = ln.points[0] + np.concatenate([[np.zeros(2)], np.cumsum(
        geo.displacement(TORUS, ln.points[:-1], ln.points[1:]), axis=0)])
    spline = CubicHermiteSpline(ln.s, P, -f.grads(ln.points))
    s = ln.s[k] + tail.s
    keep = s <= ln.s[-1]
    D = geo.displacement(TORUS, geo.wrap(TORUS, spline(s[keep])), tail.points[keep])
    assert np.max(np.abs(D)) <= 1e-6


def test_real_line_escape():
    slope = fl.polynomial(Polynomial([(1.0, (1,))]))
    with pytest.raises(EscapedDomain):
        fw.integrate(geo.real_line(), slope, [0.0])


def test_flow_csv(tmp_path, sphere_crits):
    ln = fw.integrate(SPHERE, fl.height(), [1, 0, 0], sphere_crits)
    name = fw.flow_csv_name("round-sphere", ln, 0)
    assert name == "round-sphere__none__c1__0.csv"
    fw.write_flow_csv(tmp_path / name, ln)
    rows = (tmp_path / name).read_text().splitlines()
    assert rows[0] == "s,x0,x1,x2,f"
    assert len(rows) == len(ln) + 1
