"""critical points -> flow line counts -> complex -> homology -> spectral numbers."""

import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import algebra as al
from . import critical as cr
from . import geometry as geo
from . import moduli as md
from .errors import MorseViolation


@dataclass(eq=False)
class Analysis:
    model: object
    field: object
    crits: list
    counts: list = dc_field(default_factory=list)
    scans: dict = dc_field(default_factory=dict)
    moduli_scans: list = dc_field(default_factory=list)
    complex: object = None
    homology: object = None
    spectral: object = None
    classes: list = None  # critical classes on a quotient
    covering_counts: list = None
    stats: object = None
    timing: dict = dc_field(default_factory=dict)

    @property
    def betti(self):
        return self.homology.betti_list(self.model.dim)

    def generators(self):
        return self.classes if self.classes is not None else self.crits


def analyze(model, field, seed_count=512, n_scan=md.N_SCAN, with_scans=False, spectral=True):
    """Run the full chain on one Morse function.  Raises MorseViolation on
    degenerate critical points and NonGenericWarning on suspicious flow data."""
    timing = {}
    t0 = time.perf_counter()
    crits, stats = cr.find_critical_points(field, model, seed_count=seed_count, return_stats=True)
    timing["critical"] = time.perf_counter() - t0
    bad = [c for c in crits if c.degenerate]
    if bad:
        raise MorseViolation("degenerate critical points: %s" % ", ".join(
            "%s at %s" % (c.label, np.array2string(c.location, precision=6)) for c in bad), bad)
    out = Analysis(model, field, crits, stats=stats, timing=timing)
    cover = geo.covering(model)
    t0 = time.perf_counter()
    counts, scans = md.count_all(cover, field, crits, n_scan)
    out.scans = scans
    if model.kind == geo.QUOTIENT:
        out.classes = cr.quotient_identify(crits, model, field)
        out.covering_counts = counts
        counts = md.quotient_count(counts, out.classes)
    out.counts = counts
    timing["moduli"] = time.perf_counter() - t0
    if with_scans:
        t0 = time.perf_counter()
        table = {(m.source, m.target): m.count for m in (out.covering_counts or counts)}
        for lab, sc in scans.items():
            up = next(c for c in crits if c.label == lab)
            for low in crits:
                if low.morse_index == up.morse_index - 2:
                    out.moduli_scans.append(md.moduli_scan(cover, field, up, low, crits, scan=sc,
                                                           counts=table))
        timing["scans"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    out.complex = al.build_complex(out.generators(), counts, getattr(model, "name", ""))
    out.homology = al.homology(out.complex)
    if spectral:
        out.spectral = al.spectral_report(out.complex, out.homology)
    timing["algebra"] = time.perf_counter() - t0
    return out
