"""Command line entry point: morsekit run | fixtures | fredholm sweep | continue | export-flows."""

import argparse
import logging
import os
import sys

import yaml

from . import fredholm as fr
from . import scenes as sc
from .errors import MorseError, MorseViolation, NonGenericWarning

log = logging.getLogger("morsekit")


def _emit(text, path):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump(data):
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=None, width=100)


def cmd_run(args):
    scene = sc.load_scene(args.scene)
    if args.scans:
        scene.flags["scans"] = True
    report = sc.run_pipeline(scene)
    _emit(report.to_yaml(timing=args.timing), args.output)
    for w in report.warnings:
        log.warning(w)
    return report.exit_code


def cmd_fixtures(args):
    rows = []
    for s in sc.builtin_fixtures():
        rows.append({"name": s.name, "kind": "abstract" if s.abstract else s.model.get("kind"),
                     "description": s.description})
    rows.append({"name": "torus-translate-chain", "kind": "continuation-chain",
                 "description": "three translates of the torus cosine field"})
    if args.show:
        _emit(_dump(sc.fixture(args.show).to_dict()), args.output)
    else:
        _emit(_dump({"fixtures": rows}), args.output)
    return 0


def _sweep_spec(path):
    spec = {"count": 20, "seed": 0, "domains": list(fr.DOMAINS), "m": fr.M_DEFAULT}
    if path not in (None, "default"):
        if not os.path.exists(path):
            raise sc.ParseError("no such sweep spec: %s" % path)
        with open(path) as fh:
            try:
                data = yaml.safe_load(fh) or {}
            except yaml.YAMLError as e:
                raise sc.ParseError("malformed sweep spec: %s" % e) from None
        unknown = set(data) - set(spec)
        if unknown:
            raise sc.ParseError("unknown sweep keys: %s" % ", ".join(sorted(unknown)))
        spec.update(data)
    bad = [d for d in spec["domains"] if d not in fr.DOMAINS]
    if bad:
        raise sc.ParseError("unknown domains: %s" % ", ".join(bad))
    return spec


def cmd_fredholm(args):
    spec = _sweep_spec(args.spec)
    reps = fr.sweep(int(spec["count"]), int(spec["seed"]), tuple(spec["domains"]), int(spec["m"]))
    rows = [sc._clean(r.to_dict()) for r in reps]
    summary = {}
    for r in reps:
        s = summary.setdefault(r.domain, {"families": 0, "index_matches": 0, "kernel_matches": 0})
        s["families"] += 1
        s["index_matches"] += int(r.match)
        s["kernel_matches"] += int(r.kernel_match)
    ok = all(r.match and r.kernel_match for r in reps)
    _emit(_dump({"spec": spec, "summary": summary, "all_match": ok, "families": rows}), args.output)
    return 0 if ok else 1


def cmd_continue(args):
    a, b = sc.load_scene(args.scene_a), sc.load_scene(args.scene_b)
    data, code = sc.run_continuation(a, b, args.T, args.mode, args.n_grid)
    if not args.timing:
        data.pop("elapsed", None)
    _emit(_dump(data), args.output)
    return code


def cmd_export(args):
    scene = sc.load_scene(args.scene)
    report, written = sc.export_flows(scene, args.directory)
    for p in written:
        log.info("wrote %s", p)
    with open(os.path.join(args.directory, "%s__report.yaml" % scene.name.replace("/", "_")), "w") as fh:
        fh.write(report.to_yaml())
    print("%d files written to %s" % (len(written) + 1, args.directory))
    return report.exit_code


def build_parser():
    p = argparse.ArgumentParser(prog="morsekit", description="Morse homology by numerical gradient flows")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the pipeline on a scene file or fixture name")
    r.add_argument("scene")
    r.add_argument("-o", "--output")
    r.add_argument("--scans", action="store_true", help="also run index-2 moduli scans")
    r.add_argument("--timing", action="store_true", help="include timings (reports then differ run to run)")
    r.set_defaults(func=cmd_run)

    f = sub.add_parser("fixtures", help="list built-in fixtures")
    f.add_argument("--show", help="print the scene of one fixture")
    f.add_argument("-o", "--output")
    f.set_defaults(func=cmd_fixtures)

    fh = sub.add_parser("fredholm", help="Fredholm index laboratory")
    fsub = fh.add_subparsers(dest="fredholm_command", required=True)
    sw = fsub.add_parser("sweep", help="random tanh families against the index formulas")
    sw.add_argument("spec", nargs="?", default="default",
                    help="YAML with count, seed, domains, m (or 'default')")
    sw.add_argument("-o", "--output")
    sw.set_defaults(func=cmd_fredholm)

    c = sub.add_parser("continue", help="continuation map between two scenes")
    c.add_argument("scene_a")
    c.add_argument("scene_b")
    c.add_argument("--T", type=float, default=None)
    c.add_argument("--mode", choices=["convex-combination", "general-interpolation"], default=None)
    c.add_argument("--n-grid", type=int, default=512)
    c.add_argument("-o", "--output")
    c.add_argument("--timing", action="store_true")
    c.set_defaults(func=cmd_continue)

    e = sub.add_parser("export-flows", help="write flow lines and tables as CSV")
    e.add_argument("scene")
    e.add_argument("directory")
    e.set_defaults(func=cmd_export)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (MorseViolation, NonGenericWarning) as e:
        log.error("%s: %s", type(e).__name__, e)
        return 2
    except MorseError as e:
        log.error("%s: %s", type(e).__name__, e)
        return 1
    except OSError as e:
        log.error("%s", e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
