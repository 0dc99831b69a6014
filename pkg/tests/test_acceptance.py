"""Acceptance criteria 1-15.  Each test prints one PASS/FAIL line; the lines are
also collected into a section of the pytest terminal summary."""

import math
import warnings
from itertools import product

import numpy as np

from morsekit import algebra as al
from morsekit import continuation as ct
from morsekit import critical as cr
from morsekit import fields as fl
from morsekit import flow as fw
from morsekit import fredholm as fd
from morsekit import geometry as geo
from morsekit import scenes as sc
from morsekit.errors import MorseViolation
from morsekit.pipeline import analyze

from conftest import ACCEPTANCE, Timed, random_complex


def verdict(n, checks, detail=""):
    failed = [name for name, ok in checks if not ok]
    line = "%s criterion %d: %s" % ("FAIL" if failed else "PASS", n, detail)
    if failed:
        line += " [failed: %s]" % ", ".join(failed)
    print(line)
    ACCEPTANCE.append(line)
    assert not failed, line


def by_index(crits, k):
    return [c for c in crits if c.morse_index == k]


def test_criterion_01_round_sphere(sphere):
    an = sphere.value
    checks = [("two points", len(an.crits) == 2),
              ("indices", sorted(c.morse_index for c in an.crits) == [0, 2]),
              ("betti", an.betti == [1, 0, 1]),
              ("runtime", sphere.elapsed < 10)]
    verdict(1, checks, "betti %s in %.2f s" % (an.betti, sphere.elapsed))


def test_criterion_02_ellipsoid(ellipsoid):
    an = ellipsoid.value
    want = np.array(sorted(tuple(s * e) for e in np.eye(3) for s in (1.0, -1.0)))
    got = np.array(sorted(tuple(c.location) for c in an.crits))
    err = float(np.max(np.abs(got - want))) if got.shape == want.shape else math.inf
    table = {(m.source, m.target): m.count for m in an.counts}
    tops, mids, lows = (by_index(an.crits, k) for k in (2, 1, 0))
    counts_ok = all(table.get((u.label, v.label)) == 1 for u in tops for v in mids) and \
        all(table.get((v.label, w.label)) == 1 for v in mids for w in lows)
    d2 = an.complex.d(2)
    checks = [("six points", len(an.crits) == 6), ("locations", err <= 1e-8),
              ("counts", counts_ok),
              ("boundary of maxima", d2.shape == (2, 2) and bool(np.all(d2 == 1))),
              ("betti", an.betti == [1, 0, 1]), ("runtime", ellipsoid.elapsed < 60)]
    verdict(2, checks, "location error %.2e, betti %s in %.1f s" % (err, an.betti, ellipsoid.elapsed))


def test_criterion_03_rp2(rp2):
    an = rp2.value
    of = {r.label: k.label for k in an.classes for r in k.representatives}
    split = True
    for m in an.counts:
        total = sum(x.count for x in an.covering_counts if of[x.source] == m.source and of[x.target] == m.target)
        split &= total == 2 * m.count
    zero = all(not np.any(an.complex.d(k)) for k in an.complex.degrees)
    checks = [("even split", split), ("zero boundary", zero), ("betti", an.betti == [1, 1, 1])]
    verdict(3, checks, "betti %s" % an.betti)


def test_criterion_04_torus(torus):
    an = torus.value
    idx = sorted((c.morse_index for c in an.crits), reverse=True)
    counts = [m.count for m in an.counts]
    checks = [("four points", len(an.crits) == 4), ("indices", idx == [2, 1, 1, 0]),
              ("counts", len(counts) == 4 and all(n == 2 for n in counts)),
              ("mod 2", all(m.count_mod2 == 0 for m in an.counts)),
              ("betti", an.betti == [1, 2, 1]), ("runtime", torus.elapsed < 60)]
    verdict(4, checks, "counts %s, betti %s in %.1f s" % (counts, an.betti, torus.elapsed))


def test_criterion_05_monkey_saddle():
    model, f = geo.flat_torus(), fl.monkey_saddle()
    C = cr.find_critical_points(f, model)
    deg = [c for c in C if c.sylvester.n_zero >= 1]
    try:
        analyze(model, f)
        raised = False
    except MorseViolation:
        raised = True
    rep = sc.run_pipeline(sc.fixture("monkey-saddle"))
    checks = [("three points", len(C) == 3), ("one degenerate", len(deg) == 1),
              ("MorseViolation", raised), ("exit code", rep.exit_code == 2)]
    verdict(5, checks, "%d points, %d degenerate, status %s" % (len(C), len(deg), rep.status))


def test_criterion_06_heart():
    cx = al.heart_complex()
    H = al.homology(cx)
    rep = al.homology_to_dict(H, cx)
    bad = al.verify_boundary_squared(al.punctured_heart_complex())
    checks = [("d^2 = 0", al.verify_boundary_squared(cx).ok),
              ("generator", rep["representatives"][2] == ["x1 + x2"]),
              ("betti", H.betti_list() == [1, 0, 1]),
              ("punctured", not bad.ok and bad.degree == 2)]
    verdict(6, checks, "HM_2 generated by %s; punctured heart fails in degree %s"
            % (rep["representatives"][2], bad.degree))


def test_criterion_07_real_line():
    checks = []
    rep = sc.run_pipeline(sc.fixture("real-line-parabola"))
    checks.append(("parabola", rep.data["betti"] == [1]))
    for n in range(2, 7):
        rep = sc.run_pipeline(sc.fixture("real-line-many-minima(%d)" % n))
        checks.append(("many-minima(%d)" % n,
                       rep.data["betti"] == [1, 0] and al.rank(rep.complex.d(1)) == n))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = sc.run_pipeline(sc.fixture("real-line-slope"))
    checks.append(("slope", rep.complex.to_dict()["generators"] == {} and rep.data["betti"] == []))
    verdict(7, checks, "parabola, many-minima(2..6) and slope")


def test_criterion_08_energy_identity(sphere, ellipsoid, rp2, torus, torus_translate, peanut_scans):
    lines = []
    ans = [x.value for x in (sphere, ellipsoid, rp2, torus, torus_translate, peanut_scans)]
    ans += [analyze(geo.real_line(-3, 2 * n + 3), sc.many_minima(n)) for n in (2, 4, 6)]
    for an in ans:
        vals = {c.label: c.value for c in an.crits}
        for m in an.covering_counts or an.counts:
            for ln in m.witnesses:
                if ln.source and ln.target:
                    lines.append((fw.energy(ln), vals[ln.source] - vals[ln.target]))
    worst = max(abs(E - d) / (1 + abs(E)) for E, d in lines)
    verdict(8, [("energy", worst <= 1e-6), ("lines", len(lines) > 50)],
            "%d resolved lines, worst relative error %.2e" % (len(lines), worst))


def test_criterion_09_decay_rates():
    cases = [(geo.round_sphere(), fl.height(), [[1, 0, 0], [0.6, 0, -0.8], [0.3, 0.4, 0.2]]),
             (geo.flat_torus(), fl.torus_cosine(), [[0.25, 0.501], [0.2, 0.13], [0.3, 0.7]])]
    errs = []
    for model, f, starts in cases:
        C = cr.find_critical_points(f, model)
        for p in starts:
            p = np.array(p, float)
            if model.embedded:
                p /= np.linalg.norm(p)
            ln = fw.integrate(model, f, p, C)
            tgt = next(c for c in C if c.label == ln.target)
            lam = min(e for e in tgt.hessian_eigenvalues if e > 0)
            errs.append(abs(fw.decay_rate(ln, tgt, model)["rate"] / lam - 1))
    verdict(9, [("rate", max(errs) <= 0.05)], "worst relative error %.2e over %d lines"
            % (max(errs), len(errs)))


def scan_checks(an, scans):
    ok = bool(scans)
    for ms in scans:
        ok &= all(t.saddle is not None and next(c for c in an.crits if c.label == t.saddle).morse_index == 1
                  for t in ms.transitions)
        ok &= ms.even and ms.double_count % 2 == 0 and ms.verified
    return ok


def test_criterion_10_moduli_scans(ellipsoid, ellipsoid_scans, peanut_scans):
    pe = peanut_scans.value
    el_time = ellipsoid.elapsed + ellipsoid_scans.elapsed
    n_trans = sum(len(ms.transitions) for ms in pe.moduli_scans + ellipsoid_scans.value)
    checks = [("peanut", scan_checks(pe, pe.moduli_scans)),
              ("ellipsoid", scan_checks(ellipsoid.value, ellipsoid_scans.value)),
              ("peanut runtime", peanut_scans.elapsed < 300), ("ellipsoid runtime", el_time < 300)]
    verdict(10, checks, "%d scans, %d transitions; peanut %.0f s, ellipsoid %.0f s (all scans)"
            % (len(pe.moduli_scans) + len(ellipsoid_scans.value), n_trans, peanut_scans.elapsed, el_time))


def test_criterion_11_fredholm_sweep():
    run = Timed(lambda: fd.sweep(count=20, seed=0))
    reps = run.value
    per = {d: sum(r.match for r in reps if r.domain == d) for d in fd.DOMAINS}
    kernel = all(r.kernel_match for r in reps)
    checks = [("index", all(v == 20 for v in per.values())), ("kernel", kernel),
              ("runtime", run.elapsed < 120)]
    verdict(11, checks, "matches %s in %.0f s" % (per, run.elapsed))


def test_criterion_12_gluing():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 5))
        mu = int(rng.integers(0, n + 1))
        a = np.concatenate([-rng.uniform(0.3, 3, mu), rng.uniform(0.3, 3, n - mu)])
        T = float(rng.uniform(0.05, 20 / np.max(np.abs(a))))
        xp, xm = rng.normal(size=n - mu), rng.normal(size=mu)
        got = fd.infinitesimal_glue(a, T, xp, xm)
        want = fd.glue_closed_form(a, T, xp, xm)
        worst = max([worst] + [float(np.max(np.abs(g - w), initial=0.0)) for g, w in zip(got, want)])
    verdict(12, [("closed form", worst <= 1e-8)], "worst deviation %.2e over 50 cases" % worst)


def test_criterion_13_continuation(torus_chain_maps):
    model, fields, an, chain, induced = torus_chain_maps.value
    trivial = all(np.array_equal(M, np.eye(len(M), dtype=np.uint8)) for M in chain[0, 0].matrices.values())
    via = ct.compose_induced(induced[1, 2], induced[0, 1])
    functorial = all(np.array_equal(via.matrices[k], M) for k, M in induced[0, 2].matrices.items())
    roundtrip = ct.is_identity(ct.compose_induced(induced[1, 0], induced[0, 1]))
    checks = [("trivial", trivial), ("iso", induced[0, 1].iso), ("functorial", functorial),
              ("roundtrip", roundtrip), ("runtime", torus_chain_maps.elapsed < 300)]
    verdict(13, checks, "three-scene chain in %.0f s" % torus_chain_maps.elapsed)


def test_criterion_14_spectral(torus, torus_chain_maps):
    rng = np.random.default_rng(99)
    agree = spectral = True
    for _ in range(300):
        cx = random_complex(rng, int(rng.integers(1, 13)))
        H = al.homology(cx)
        for k, R in H.representatives.items():
            vals = cx.values(k)
            for co in product((0, 1), repeat=len(R)):
                if not any(co):
                    continue
                xi = np.bitwise_xor.reduce(np.array([v for a, v in zip(co, R) if a]), axis=0)
                e = al.spectral_number_exhaustive(cx, k, xi)[0]
                agree &= al.spectral_number_greedy(cx, k, xi)[0] == e
                spectral &= float(np.min(np.abs(vals - e))) <= 1e-9
    minima = True
    for n in range(2, 7):
        an = analyze(geo.real_line(-3, 2 * n + 3), sc.many_minima(n))
        c0 = an.spectral.classes[0]
        minima &= c0.degree == 0 and c0.sigma == min(c.value for c in an.crits)
    model, fields, ans, chain, induced = torus_chain_maps.value
    lip = ct.spectral_lipschitz_check(model, fields[0], fields[1], induced[0, 1], ans[0].spectral,
                                      ans[1].spectral)
    t = torus.value
    g = fl.combination([(1.0, t.field), (1.0, fl.constant(0.5, 2))])
    bn = analyze(t.model, g)
    phi = ct.chain_map(ct.Homotopy(t.model, t.field, g), t.complex, bn.complex, t.crits, bn.crits)
    ind = ct.induced_map(phi, t.complex, bn.complex, t.homology, bn.homology)
    shift = ct.spectral_lipschitz_check(t.model, t.field, g, ind, t.spectral, bn.spectral)
    tight = max(abs(r["slack"]) for r in shift.rows)
    checks = [("greedy = exhaustive", agree), ("spectrality", spectral), ("many-minima", minima),
              ("translate Lipschitz", lip.ok), ("shift Lipschitz", shift.ok), ("shift tight", tight <= 1e-6)]
    verdict(14, checks, "300 random complexes; constant-shift slack %.1e" % tight)


def test_criterion_15_spectral_extension(monkey_sequence):
    model, members, ans, maps = monkey_sequence.value
    f = fl.monkey_saddle()
    cv = [c.value for c in cr.find_critical_points(f, model)]
    cauchy = near = True
    parts = []
    for c in ans[0].spectral.classes:
        res = ct.spectral_extend(model, f, members, c.degree, c.coords, ans, maps, critical_values=cv)
        cauchy &= all(dv <= st + 1e-6 for dv, st in zip(res.increments, res.steps))
        near &= res.critical_gap <= 1e-2
        raw = min(abs(res.raw_last - v) for v in cv)
        parts.append("deg %d %s: limit gap %.1e (raw last gap %.1e)"
                     % (c.degree, tuple(c.coords), res.critical_gap, raw))
    verdict(15, [("increments", cauchy), ("critical value", near)], "; ".join(parts))
