"""Junction yield, resistance statistics and oxide-barrier spread."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import AreaExceedsTotal, EmptyInput, InvalidParams, TooFewSamples
from .model import (DieSite, Filter, JunctionRecord, JunctionStatus, SpecLimits, StatSummary,
                    summarize)

MIN_STATS_SAMPLES = 10


@dataclass(frozen=True)
class YieldReport:
    n_total: int
    n_pass: int
    yield_fraction: float
    spec: SpecLimits
    # (site, junction_id, passed), sorted by site then junction id
    entries: tuple[tuple[DieSite, str, bool], ...]

    def site_yield(self) -> dict[DieSite, float]:
        acc: dict[DieSite, list[bool]] = defaultdict(list)
        for site, _, ok in self.entries:
            acc[site].append(ok)
        return {s: sum(v) / len(v) for s, v in sorted(acc.items())}

    def to_dict(self) -> dict:
        return {
            "n_total": self.n_total,
            "n_pass": self.n_pass,
            "yield_fraction": self.yield_fraction,
            "spec": {"r_min_ohm": self.spec.r_min_ohm, "r_max_ohm": self.spec.r_max_ohm},
            "sites": [[s.row, s.col, jid, ok] for s, jid, ok in self.entries],
        }


def passes(junction: JunctionRecord, spec: SpecLimits) -> bool:
    return junction.status is JunctionStatus.OK and spec.contains(junction.resistance_ohm)


def apply_spec(junctions: Iterable[JunctionRecord], spec: SpecLimits = SpecLimits()) -> YieldReport:
    junctions = list(junctions)
    if not junctions:
        raise EmptyInput("no junctions to evaluate")
    entries = sorted(((j.site, j.junction_id, passes(j, spec)) for j in junctions),
                     key=lambda e: (e[0].row, e[0].col, e[1]))
    n_pass = sum(ok for _, _, ok in entries)
    return YieldReport(len(entries), n_pass, n_pass / len(entries), spec, tuple(entries))


@dataclass(frozen=True)
class Histogram:
    edges: tuple[float, ...]
    counts: tuple[int, ...]


@dataclass(frozen=True)
class ResistanceStats:
    summary: StatSummary
    mu: float
    sigma: float
    histogram: Histogram
    values: tuple[float, ...]    # filtered population, sorted

    def target_deviation(self, target_ohm: float) -> float:
        return abs(self.mu - target_ohm) / target_ohm

    def to_dict(self, target_ohm: float | None = None) -> dict:
        d = {
            "summary": self.summary.to_dict(),
            "gaussian": {"mu": self.mu, "sigma": self.sigma},
            "histogram": {"edges": list(self.histogram.edges),
                          "counts": list(self.histogram.counts)},
        }
        if target_ohm is not None:
            d["target_ohm"] = target_ohm
            d["target_deviation"] = self.target_deviation(target_ohm)
        return d


def resistance_stats(resistances: Iterable[float], filter: Filter = Filter.IQR_1_5,
                     bins: int = 30) -> ResistanceStats:
    """Tukey-filtered statistics and maximum-likelihood Gaussian of a population.

    The Gaussian sigma is reported with the sample (n-1) denominator so that
    ``sigma / mu`` equals the summary RSD.
    """
    r = sorted(resistances)
    if len(r) < MIN_STATS_SAMPLES:
        raise TooFewSamples(f"need >= {MIN_STATS_SAMPLES} junctions, got {len(r)}")
    summary = summarize(r, filter)
    kept = [v for v in r if summary.fences is None
            or summary.fences[0] <= v <= summary.fences[1]]
    counts, edges = np.histogram(kept, bins=bins)
    hist = Histogram(tuple(float(e) for e in edges), tuple(int(c) for c in counts))
    return ResistanceStats(summary, summary.mean, summary.std, hist, tuple(kept))


def junction_resistances(junctions: Iterable[JunctionRecord], spec: SpecLimits) -> list[float]:
    return [j.resistance_ohm for j in junctions if passes(j, spec)]


@dataclass(frozen=True)
class OxideVariability:
    rsd_jj: float
    rsd_a: float
    rsd_ra: float

    def to_dict(self) -> dict:
        return {"rsd_jj": self.rsd_jj, "rsd_a": self.rsd_a, "rsd_ra": self.rsd_ra}


def oxide_rsd(rsd_jj: float, rsd_a: float) -> OxideVariability:
    for name, v in (("rsd_jj", rsd_jj), ("rsd_a", rsd_a)):
        if not 0 <= v < 1:
            raise InvalidParams(f"{name}={v} outside [0, 1)")
    if rsd_a > rsd_jj:
        raise AreaExceedsTotal(f"area RSD {rsd_a:.4g} exceeds junction RSD {rsd_jj:.4g}")
    return OxideVariability(rsd_jj, rsd_a, math.sqrt(rsd_jj * rsd_jj - rsd_a * rsd_a))


def group_by_area(junctions: Sequence[JunctionRecord]) -> dict[float, list[JunctionRecord]]:
    out: dict[float, list[JunctionRecord]] = defaultdict(list)
    for j in junctions:
        out[j.design_area_um2].append(j)
    return dict(sorted(out.items()))
