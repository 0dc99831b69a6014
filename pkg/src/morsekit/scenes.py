"""Scene files, the fixture library, and pipeline reports."""

import math
import os
import re
import time
from dataclasses import dataclass, field as dc_field

import numpy as np
import yaml

from . import algebra as al
from . import critical as cr
from . import fields as fl
from . import flow as fw
from . import geometry as geo
from . import moduli as md
from .errors import MorseError, MorseViolation, NonGenericWarning, ParseError, UnknownFixture
from .poly import Polynomial, peanut_constraint, sphere_constraint

DEFAULT_FLAGS = {"moduli": True, "homology": True, "spectral": True, "scans": False}
DEFAULT_TOLERANCES = {"seed_count": 512, "n_scan": md.N_SCAN}
TOP_KEYS = {"name", "fixture", "description", "model", "field", "metric", "complex", "flags",
            "tolerances"}
MODEL_KEYS = {"kind", "constraint", "radius", "c", "dim", "interval", "metric", "bbox"}
FIELD_KEYS = {"kind", "axis", "dim", "a", "coeffs", "shift", "terms", "parts", "n", "tilt", "value"}
COMPLEX_KEYS = {"generators", "boundary"}

PRECISION = 12


@dataclass
class Scene:
    name: str
    model: dict = None
    field: dict = None
    complex: dict = None  # abstract scenes: {"generators": ..., "boundary": ...}
    flags: dict = dc_field(default_factory=lambda: dict(DEFAULT_FLAGS))
    tolerances: dict = dc_field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    description: str = ""

    @property
    def abstract(self):
        return self.complex is not None

    def build_model(self):
        return build_model(self.model)

    def build_field(self):
        return build_field(self.field)

    def build_complex(self):
        return al.from_abstract(self.complex["generators"], self.complex.get("boundary", {}),
                                self.name)

    def to_dict(self):
        out = {"name": self.name}
        if self.description:
            out["description"] = self.description
        if self.abstract:
            out["complex"] = self.complex
        else:
            out["model"] = self.model
            out["field"] = self.field
        out["flags"] = dict(self.flags)
        out["tolerances"] = dict(self.tolerances)
        return _clean(out)


# -- model and field registries -----------------------------------------------------

def _constraint(spec):
    if spec is None or spec == "sphere":
        return sphere_constraint(1.0)
    if spec == "peanut":
        return peanut_constraint(1.2)
    if isinstance(spec, dict):
        kind = spec.get("kind")
        if kind == "sphere":
            return sphere_constraint(float(spec.get("radius", 1.0)))
        if kind == "peanut":
            return peanut_constraint(float(spec.get("c", 1.2)))
        if "terms" in spec:
            return Polynomial([(float(c), tuple(int(e) for e in ex)) for c, ex in spec["terms"]])
    if isinstance(spec, list):
        return Polynomial([(float(c), tuple(int(e) for e in ex)) for c, ex in spec])
    raise ParseError("model.constraint: cannot read %r" % (spec,))


def build_model(spec):
    kind = spec.get("kind", "sphere")
    metric = spec.get("metric")
    if kind == "sphere":
        return geo.round_sphere(float(spec.get("radius", 1.0)))
    if kind in ("implicit-surface", "antipodal-quotient"):
        con = spec.get("constraint", "sphere")
        if isinstance(con, str) and con == "sphere" and "radius" in spec:
            con = {"kind": "sphere", "radius": spec["radius"]}
        if isinstance(con, str) and con == "peanut" and "c" in spec:
            con = {"kind": "peanut", "c": spec["c"]}
        poly = _constraint(con)
        bbox = spec.get("bbox")
        if bbox is not None:
            bbox = (np.asarray(bbox[0], float), np.asarray(bbox[1], float))
        surf = geo.implicit_surface(poly, bbox, name=str(con if isinstance(con, str) else "implicit"))
        return geo.antipodal_quotient(surf) if kind == "antipodal-quotient" else surf
    if kind == "flat-torus":
        n = int(spec.get("dim", 2))
        if metric in (None, "flat", "coordinate-periodic-flat"):
            g = None
        else:
            g = np.asarray(metric, float)
            if g.ndim == 1:
                g = np.diag(g)
        return geo.flat_torus(n, g)
    if kind == "real-line":
        a, b = spec.get("interval", (-5.0, 5.0))
        return geo.real_line(float(a), float(b))
    raise ParseError("model.kind: unknown kind %r" % kind)


def many_minima(n, tilt=0.05):
    """-cos(pi x) + tilt x with quartic walls outside [0, 2n]: n maxima near the odd
    integers and n + 1 minima near the even ones, going to +infinity at both ends."""
    n = int(n)
    top = 2.0 * n
    pi = np.pi

    def value(X):
        x = X[:, 0]
        lo, hi = np.minimum(x, 0.0), np.maximum(x - top, 0.0)
        return -np.cos(pi * x) + tilt * x + lo ** 4 + hi ** 4

    def grad(X):
        x = X[:, 0]
        lo, hi = np.minimum(x, 0.0), np.maximum(x - top, 0.0)
        return (pi * np.sin(pi * x) + tilt + 4 * lo ** 3 + 4 * hi ** 3)[:, None]

    def hess(X):
        x = X[:, 0]
        lo, hi = np.minimum(x, 0.0), np.maximum(x - top, 0.0)
        return (pi * pi * np.cos(pi * x) + 12 * lo ** 2 + 12 * hi ** 2)[:, None, None]

    return fl.ScalarField("line-many-minima", value, grad, hess, {"n": n, "tilt": tilt})


def build_field(spec):
    kind = spec.get("kind")
    if kind == "height":
        return fl.height(int(spec.get("axis", 2)), int(spec.get("dim", 3)) if "dim" in spec else 3)
    if kind == "ellipsoid-quadratic":
        return fl.ellipsoid_quadratic(tuple(float(x) for x in spec.get("a", (1, 2, 3))))
    if kind == "torus-cosine":
        return fl.torus_cosine(tuple(float(x) for x in spec.get("coeffs", (1, 2))),
                               spec.get("shift"))
    if kind == "monkey-saddle":
        return fl.monkey_saddle()
    if kind == "polynomial":
        terms = spec.get("terms")
        if not terms:
            raise ParseError("field.terms: polynomial needs terms")
        return fl.polynomial(Polynomial([(float(c), tuple(int(e) for e in ex)) for c, ex in terms]))
    if kind == "constant":
        return fl.constant(float(spec.get("value", 0.0)), int(spec.get("dim", 2)))
    if kind == "line-many-minima":
        return many_minima(int(spec.get("n", 3)), float(spec.get("tilt", 0.05)))
    if kind == "combination":
        parts = spec.get("parts")
        if not parts:
            raise ParseError("field.parts: combination needs parts")
        return fl.combination([(float(p.get("weight", 1.0)), build_field(p["field"])) for p in parts])
    raise ParseError("field.kind: unknown kind %r" % kind)


# -- fixtures ------------------------------------------------------------------------

def _geo(name, model, field, description="", **flags):
    f = dict(DEFAULT_FLAGS)
    f.update(flags)
    return Scene(name, model, field, flags=f, description=description)


def _abstract(name, cx, description=""):
    gens = {int(k): [[g.label, float(g.value)] for g in cx.gens(k)] for k in sorted(cx.generators)}
    bnd = {int(k): [[int(x) for x in row] for row in B] for k, B in cx.boundary.items() if B.size}
    return Scene(name, complex={"generators": gens, "boundary": bnd}, description=description)


def _tilted_peanut():
    return {"kind": "combination", "parts": [{"weight": 1.0, "field": {"kind": "height", "axis": 2}},
                                             {"weight": 0.2, "field": {"kind": "height", "axis": 0}}]}


def _monkey_perturbed(eps):
    return {"kind": "combination", "parts": [
        {"weight": 1.0, "field": {"kind": "monkey-saddle"}},
        {"weight": float(eps), "field": {"kind": "torus-cosine", "coeffs": [1.0, 2.0]}}]}


TORUS_CHAIN_SHIFTS = ((0.0, 0.0), (0.1, 0.15), (0.25, 0.3))


def torus_chain():
    """Three translates of the torus cosine field, used for functoriality checks."""
    return [_geo("torus-chain-%s" % tag, {"kind": "flat-torus", "dim": 2},
                 {"kind": "torus-cosine", "coeffs": [1.0, 2.0], "shift": list(sh)},
                 "torus cosine translated by %s" % (sh,))
            for tag, sh in zip(("alpha", "beta", "gamma"), TORUS_CHAIN_SHIFTS)]


def _fixture_table():
    sphere = {"kind": "sphere"}
    torus = {"kind": "flat-torus", "dim": 2}
    return {
        "round-sphere": lambda: _geo("round-sphere", sphere, {"kind": "height", "axis": 2},
                                     "height function on the unit sphere"),
        "peanut-sphere": lambda: _geo("peanut-sphere", {"kind": "implicit-surface", "constraint": "peanut"},
                                      _tilted_peanut(), "slightly tilted height on a peanut surface"),
        "peanut-upright": lambda: _geo("peanut-upright", {"kind": "implicit-surface", "constraint": "peanut"},
                                       {"kind": "height", "axis": 2},
                                       "upright height on the peanut; not Morse-Smale"),
        "ellipsoid": lambda a=(1.0, 2.0, 3.0): _geo(
            "ellipsoid" if tuple(a) == (1.0, 2.0, 3.0) else "ellipsoid(%s)" % ",".join("%g" % x for x in a),
            sphere, {"kind": "ellipsoid-quadratic", "a": [float(x) for x in a]},
            "a1 x^2 + a2 y^2 + a3 z^2 on the unit sphere"),
        "torus-cosine": lambda: _geo("torus-cosine", torus,
                                     {"kind": "torus-cosine", "coeffs": [1.0, 2.0]},
                                     "cos 2 pi x + 2 cos 2 pi y on the flat torus"),
        "torus-translate": lambda: _geo("torus-translate", torus,
                                        {"kind": "torus-cosine", "coeffs": [1.0, 2.0],
                                         "shift": [0.1, 0.15]}, "the torus cosine field translated"),
        "torus-metric": lambda: _geo("torus-metric", {"kind": "flat-torus", "dim": 2,
                                                      "metric": [[1.0, 0.0], [0.0, 2.0]]},
                                     {"kind": "torus-cosine", "coeffs": [1.0, 2.0]},
                                     "torus cosine field with the metric diag(1, 2)"),
        "rp2-ellipsoid": lambda: _geo("rp2-ellipsoid", {"kind": "antipodal-quotient"},
                                      {"kind": "ellipsoid-quadratic", "a": [1.0, 2.0, 3.0]},
                                      "ellipsoid function on the antipodal quotient of the sphere"),
        "real-line-parabola": lambda: _geo("real-line-parabola",
                                           {"kind": "real-line", "interval": [-5.0, 5.0]},
                                           {"kind": "polynomial", "terms": [[1.0, [2]]]},
                                           "x^2 on the real line"),
        "real-line-slope": lambda: _geo("real-line-slope", {"kind": "real-line", "interval": [-5.0, 5.0]},
                                        {"kind": "polynomial", "terms": [[1.0, [1]]]},
                                        "a line with slope one; no critical points"),
        "real-line-many-minima": lambda n=3: _geo(
            "real-line-many-minima(%d)" % int(n),
            {"kind": "real-line", "interval": [-3.0, 2.0 * int(n) + 3.0]},
            {"kind": "line-many-minima", "n": int(n)},
            "n maxima and n + 1 minima, growing at both ends"),
        "monkey-saddle": lambda: _geo("monkey-saddle", torus, {"kind": "monkey-saddle"},
                                      "sin(pi x) sin(pi y) sin(pi (x + y)); degenerate"),
        "monkey-perturbed": lambda eps=0.1: _geo("monkey-perturbed(%g)" % float(eps), torus,
                                                 _monkey_perturbed(eps),
                                                 "monkey saddle plus eps (cos 2 pi x + 2 cos 2 pi y)"),
        "heart-complex": lambda: _abstract("heart-complex", al.heart_complex(),
                                           "two maxima, one saddle, one minimum"),
        "punctured-heart": lambda: _abstract("punctured-heart", al.punctured_heart_complex(),
                                             "heart with a flow line removed; not a complex"),
        "genus-g-complex": lambda g=2: _abstract("genus-g-complex(%d)" % int(g),
                                                 al.genus_complex(int(g)),
                                                 "perfect complex of a genus g surface"),
    }


CHAINS = {"torus-translate-chain": torus_chain}


def _parse_args(text):
    out = []
    for tok in re.split(r"[,\s]+", text.strip()):
        if tok:
            out.append(float(tok) if re.search(r"[.eE]", tok) else int(tok))
    return out


def fixture(spec):
    """Scene for a built-in name such as 'round-sphere', 'real-line-many-minima(4)'
    or 'ellipsoid a=1,2,3'."""
    spec = spec.strip()
    table = _fixture_table()
    m = re.fullmatch(r"([a-z0-9\-]+)\s*(?:\((.*)\))?\s*(?:a\s*=\s*(.*))?", spec)
    if not m or m.group(1) not in table:
        raise UnknownFixture("unknown fixture %r; known: %s" % (spec, ", ".join(sorted(table))))
    name, args, a = m.groups()
    if a is not None:
        return table[name](tuple(float(x) for x in _parse_args(a)))
    if name == "ellipsoid" and args:
        return table[name](tuple(float(x) for x in _parse_args(args)))
    return table[name](*_parse_args(args)) if args else table[name]()


def builtin_fixtures(many=range(2, 7), genus=(0, 1, 2, 3)):
    out = [f() for key, f in _fixture_table().items()
           if key not in ("real-line-many-minima", "genus-g-complex", "monkey-perturbed")]
    out += [fixture("real-line-many-minima(%d)" % n) for n in many]
    out += [fixture("genus-g-complex(%d)" % g) for g in genus]
    out += [fixture("monkey-perturbed(%g)" % e) for e in (0.2, 0.1, 0.05, 0.025)]
    out += torus_chain()
    return out


def fixture_names():
    return sorted(_fixture_table()) + sorted(CHAINS)


# -- loading ---------------------------------------------------------------------

def _lines(node, path=(), out=None):
    """Map key paths to source lines in a composed YAML tree."""
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            _lines(v, path + (str(k.value),), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _lines(v, path + (str(i),), out)
    return out


def _fail(msg, path, lines):
    line = lines.get(tuple(path))
    where = ".".join(path) or "<top>"
    raise ParseError("%s (field %s%s)" % (msg, where, ", line %d" % line if line else ""))


def _check_keys(d, allowed, path, lines):
    if not isinstance(d, dict):
        _fail("expected a mapping", path, lines)
    for k in d:
        if k not in allowed:
            _fail("unknown key %r" % k, list(path) + [str(k)], lines)


def _check_field(d, path, lines):
    _check_keys(d, FIELD_KEYS, path, lines)
    if "kind" not in d:
        _fail("missing kind", path, lines)
    for i, p in enumerate(d.get("parts") or []):
        _check_keys(p, {"weight", "field"}, list(path) + ["parts", str(i)], lines)
        _check_field(p.get("field", {}), list(path) + ["parts", str(i), "field"], lines)


def scene_from_dict(data, lines=None, default_name="scene"):
    lines = lines or {}
    _check_keys(data, TOP_KEYS, [], lines)
    base = fixture(data["fixture"]) if "fixture" in data else None
    name = str(data.get("name", base.name if base else default_name))
    scene = base or Scene(name)
    scene.name = name
    if "description" in data:
        scene.description = str(data["description"])
    if "complex" in data:
        _check_keys(data["complex"], COMPLEX_KEYS, ["complex"], lines)
        if "generators" not in data["complex"]:
            _fail("missing generators", ["complex"], lines)
        scene.complex = data["complex"]
        scene.model = scene.field = None
    if "model" in data:
        _check_keys(data["model"], MODEL_KEYS, ["model"], lines)
        scene.model = dict(data["model"])
    if "metric" in data:
        scene.model = dict(scene.model or {})
        scene.model["metric"] = data["metric"]
    if "field" in data:
        _check_field(data["field"], ["field"], lines)
        scene.field = dict(data["field"])
    for key, defaults in (("flags", DEFAULT_FLAGS), ("tolerances", DEFAULT_TOLERANCES)):
        if key in data:
            _check_keys(data[key], set(defaults), [key], lines)
            getattr(scene, key).update(data[key])
    if not scene.abstract and (scene.model is None or scene.field is None):
        _fail("a geometric scene needs model and field", [], lines)
    try:
        if scene.abstract:
            cx = scene.build_complex()
            if not cx.generators:
                _fail("empty complex", ["complex"], lines)
        else:
            scene.build_model()
            scene.build_field()
    except ParseError as e:
        msg = str(e)
        head = msg.split(":")[0]
        line = lines.get(tuple(head.split(".")))
        raise ParseError(msg + (" (line %d)" % line if line else "")) from None
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError("invalid scene: %s" % e) from None
    return scene


def load_scene(path):
    """Scene from a YAML file, or a built-in fixture name."""
    if not os.path.exists(path):
        if re.fullmatch(r"[A-Za-z0-9\-]+\s*(\(.*\))?\s*(a\s*=.*)?", path.strip()):
            return fixture(path)
        raise ParseError("no such scene file: %s" % path)
    with open(path) as fh:
        text = fh.read()
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = " at line %d, column %d" % (mark.line + 1, mark.column + 1) if mark else ""
        raise ParseError("malformed scene file%s: %s" % (where, getattr(e, "problem", e))) from None
    if not isinstance(data, dict):
        raise ParseError("scene file must hold a mapping at the top level (line 1)")
    base = os.path.splitext(os.path.basename(path))[0]
    return scene_from_dict(data, _lines(node) if node is not None else {}, base)


# -- reports -------------------------------------------------------------------------

def _num(x):
    x = float(x)
    if not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    if x == 0:
        return 0.0
    return float("%.*g" % (PRECISION, x))


def _clean(obj):
    """Plain YAML-friendly data with rounded floats."""
    if isinstance(obj, dict):
        return {(int(k) if isinstance(k, (np.integer,)) else k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    return obj


def critical_table(crits):
    return [{"label": c.label, "location": [_num(x) for x in c.location], "value": _num(c.value),
             "index": int(c.morse_index), "eigenvalues": [_num(x) for x in c.hessian_eigenvalues],
             "sylvester": [int(x) for x in c.sylvester], "degenerate": bool(c.degenerate)}
            for c in crits]


def count_table(counts):
    rows = []
    for m in counts:
        row = {"source": m.source, "target": m.target, "count": int(m.count),
               "mod2": int(m.count_mod2), "method": m.method}
        E = [ln.meta.get("energy", fw.energy(ln)) for ln in m.witnesses if len(ln.s)]
        if E:
            row["witness_energies"] = [_num(e) for e in E]
        if "angles" in m.meta:
            row["angles"] = [_num(a) for a in m.meta["angles"]]
        rows.append(row)
    return rows


def scan_table(sc):
    return {"source": sc.source, "target": sc.target, "boundary_events": int(sc.boundary_events),
            "double_count": int(sc.double_count), "even": bool(sc.even), "verified": bool(sc.verified),
            "transitions": [{"angle": _num(t.angle), "saddle": t.saddle, "sides": list(t.sides),
                             "closest": _num(t.closest)} for t in sc.transitions]}


@dataclass
class Report:
    scene: Scene
    status: str = "ok"  # ok | morse-violation | non-generic | not-a-complex | error
    data: dict = dc_field(default_factory=dict)
    warnings: list = dc_field(default_factory=list)
    timing: dict = dc_field(default_factory=dict)
    analysis: object = None
    complex: object = None
    homology: object = None

    @property
    def exit_code(self):
        return {"ok": 0, "morse-violation": 2, "non-generic": 2}.get(self.status, 1)

    def to_dict(self, timing=False):
        out = {"scene": self.scene.name, "status": self.status}
        out.update(self.data)
        out["warnings"] = list(self.warnings)
        if timing:
            out["timing"] = {k: _num(v) for k, v in sorted(self.timing.items())}
        return _clean(out)

    def to_yaml(self, timing=False):
        return yaml.safe_dump(self.to_dict(timing), sort_keys=False, default_flow_style=None,
                              width=100)


def _algebra(report, cx, flags):
    report.complex = cx
    report.data["complex"] = cx.to_dict()
    chk = al.verify_boundary_squared(cx)
    report.data["boundary_squared"] = {"ok": chk.ok} if chk.ok else {"ok": False, "degree": chk.degree}
    if not chk.ok:
        report.status = "not-a-complex"
        report.warnings.append("boundary squared is nonzero in degree %d" % chk.degree)
        return
    if not flags.get("homology", True):
        return
    H = al.homology(cx)
    report.homology = H
    report.data["homology"] = al.homology_to_dict(H, cx)
    report.data["betti"] = [int(H.betti.get(k, 0)) for k in range(max(H.betti, default=-1) + 1)]
    if flags.get("spectral", True):
        report.data["spectral"] = al.spectral_report(cx, H).to_dict()


def run_pipeline(scene):
    """critical points -> counts -> complex -> homology -> spectral numbers.

    Morse and genericity violations are recorded in the report (status and
    warnings) instead of being raised."""
    from .pipeline import analyze

    report = Report(scene)
    t0 = time.perf_counter()
    if scene.abstract:
        _algebra(report, scene.build_complex(), scene.flags)
        report.timing["total"] = time.perf_counter() - t0
        return report
    model, field = scene.build_model(), scene.build_field()
    report.data["model"] = {"kind": model.kind, "dim": model.dim, "metric": model.metric_tag}
    report.data["field"] = field.name
    tol = scene.tolerances
    try:
        if not scene.flags.get("moduli", True):
            crits = cr.find_critical_points(field, model, seed_count=int(tol["seed_count"]))
            report.data["critical_points"] = critical_table(crits)
            bad = [c for c in crits if c.degenerate]
            if bad:
                raise MorseViolation("degenerate critical points: %s" % ", ".join(c.label for c in bad), bad)
            return report
        an = analyze(model, field, seed_count=int(tol["seed_count"]), n_scan=int(tol["n_scan"]),
                     with_scans=scene.flags.get("scans", False),
                     spectral=scene.flags.get("spectral", True))
    except MorseViolation as e:
        report.status = "morse-violation"
        report.warnings.append("MorseViolation: %s" % e)
        report.data.setdefault("critical_points", critical_table(
            cr.find_critical_points(field, model, seed_count=int(tol["seed_count"]))))
        report.data["degenerate_points"] = [{"label": c.label, "location": [_num(x) for x in c.location],
                                             "sylvester": [int(x) for x in c.sylvester]}
                                            for c in e.points]
        return report
    except NonGenericWarning as e:
        report.status = "non-generic"
        report.warnings.append("NonGenericWarning: %s" % e)
        return report
    finally:
        report.timing["total"] = time.perf_counter() - t0
    report.analysis = an
    report.timing.update(an.timing)
    report.data["critical_points"] = critical_table(an.crits)
    if an.classes is not None:
        report.data["critical_classes"] = [{"label": c.label, "index": int(c.morse_index),
                                            "value": _num(c.value),
                                            "members": [r.label for r in c.representatives]}
                                           for c in an.classes]
        report.data["covering_counts"] = count_table(an.covering_counts)
    report.data["counts"] = count_table(an.counts)
    if an.moduli_scans:
        report.data["moduli_scans"] = [scan_table(s) for s in an.moduli_scans]
    report.complex = an.complex
    _algebra(report, an.complex, scene.flags)
    return report


def export_flows(scene, directory, report=None):
    """Write critical table, witness flow lines and scan tables as CSV files."""
    import csv

    os.makedirs(directory, exist_ok=True)
    report = run_pipeline(scene) if report is None else report
    written = []
    an = report.analysis
    if an is None:
        return report, written
    safe = re.sub(r"[^A-Za-z0-9_.\-]+", "_", scene.name)
    p = os.path.join(directory, "%s__critical.csv" % safe)
    cr.write_critical_csv(p, an.crits)
    written.append(p)
    for m in an.covering_counts or an.counts:
        for k, ln in enumerate(m.witnesses):
            if not len(ln.s):
                continue
            p = os.path.join(directory, fw.flow_csv_name(safe, ln, k))
            fw.write_flow_csv(p, ln)
            written.append(p)
    for lab, sc in sorted(an.scans.items()):
        p = os.path.join(directory, "%s__scan__%s.csv" % (safe, lab))
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["angle", "endpoint"])
            for a, e in zip(sc.angles, sc.endpoints):
                w.writerow(["%.12g" % a, e])
        written.append(p)
        p = os.path.join(directory, "%s__transitions__%s.csv" % (safe, lab))
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["angle", "saddle"])
            for t in sc.transitions:
                w.writerow(["%.12g" % t.angle, t.saddle or ""])
        written.append(p)
    return report, written


# -- continuation between two scenes --------------------------------------------------

def run_continuation(scene_a, scene_b, T=None, mode=None, n_grid=512, lipschitz_samples=100_000):
    """Chain map, induced map and the action and Lipschitz checks between two scenes
    on the same manifold.  Returns (report dict, exit code)."""
    from . import continuation as ct
    from .pipeline import analyze

    if scene_a.abstract or scene_b.abstract:
        raise MorseError("continuation needs two geometric scenes")
    if scene_a.model != scene_b.model:
        raise MorseError("the two scenes live on different manifolds")
    t0 = time.perf_counter()
    model = scene_a.build_model()
    fa, fb = scene_a.build_field(), scene_b.build_field()
    out = {"from": scene_a.name, "to": scene_b.name}
    try:
        A = analyze(model, fa, int(scene_a.tolerances["seed_count"]), int(scene_a.tolerances["n_scan"]))
        B = analyze(model, fb, int(scene_b.tolerances["seed_count"]), int(scene_b.tolerances["n_scan"]))
    except MorseViolation as e:
        return _clean({**out, "status": "morse-violation", "warnings": ["MorseViolation: %s" % e]}), 2
    except NonGenericWarning as e:
        return _clean({**out, "status": "non-generic", "warnings": ["NonGenericWarning: %s" % e]}), 2
    hom = ct.Homotopy(model, fa, fb, ct.T_DEFAULT if T is None else float(T), mode or ct.CONVEX)
    try:
        phi = ct.chain_map(hom, A.complex, B.complex, A.crits, B.crits, n_grid)
    except NonGenericWarning as e:
        return _clean({**out, "status": "non-generic", "warnings": ["NonGenericWarning: %s" % e]}), 2
    ind = ct.induced_map(phi, A.complex, B.complex, A.homology, B.homology)
    used = ct.effective_homotopy(hom, A.crits, B.crits)
    pairs = [(ln.source, ln.target, ln) for ln in phi.witnesses if ln.source and ln.target]
    out["status"] = "ok"
    out["homotopy"] = {"mode": hom.mode, "T": hom.T, "window_used": phi.window}
    out["betti"] = {"from": A.betti, "to": B.betti}
    out["chain_map"] = phi.to_dict()
    out["chain_identity"] = True
    out["counts"] = [{"source": s, "target": t, "count": int(n)} for s, t, n in phi.counts]
    out["induced_map"] = {int(k): [[int(x) for x in row] for row in M]
                          for k, M in sorted(ind.matrices.items())}
    out["isomorphism"] = bool(ind.iso)
    warnings = []
    try:
        rep = ct.energy_bound_check(used, pairs, A.crits, B.crits)
        out["energy_check"] = {"ok": rep.ok, "rows": rep.rows}
    except MorseError as e:
        warnings.append("BoundViolation: %s" % e)
        out["energy_check"] = {"ok": False}
    if ind.iso:
        lip = ct.spectral_lipschitz_check(model, fa, fb, ind, A.spectral, B.spectral, lipschitz_samples)
        out["lipschitz_check"] = {"ok": lip.ok, "c0_distance": lip.distance, "rows": lip.rows}
    out["warnings"] = warnings
    out["elapsed"] = time.perf_counter() - t0
    return _clean(out), 0 if not warnings else 1
