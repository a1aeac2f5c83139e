"""Intervention-based discovery of causal features and their working ranges.

One feature is perturbed at a time over a uniform grid spanning its range
while every other feature stays at its default. A feature is causal when
its largest success-rate change beats the seed noise floor by a margin.
Working ranges are read off each response curve and then checked jointly
on a combination grid, shrinking the box greedily where combos fail.
"""
from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field

import numpy as np

from . import tasks
from .editor import apply_edit, apply_edits, combination_size, uniform_grid
from .errors import (DiscoveryError, GridTooLarge, MissingDefaultPoint, NoWorkingRange,
                     UnknownFeature)
from .seeding import ordered_map, rollout_seeds


@dataclass(frozen=True)
class DiscoveryConfig:
    grid_points_per_feature: int = 9
    seeds: int = 10
    causal_margin: float = 0.15
    success_threshold: float = 0.8
    combo_max_size: int = 20000
    combo_grid_points: int = 4
    master_seed: int = 0

    def __post_init__(self):
        if self.grid_points_per_feature < 3:
            raise DiscoveryError("grid_points_per_feature must be >= 3")
        if self.seeds < 1:
            raise DiscoveryError("seeds must be >= 1")
        if not 0 < self.success_threshold <= 1:
            raise DiscoveryError("success_threshold must lie in (0, 1]")
        if self.combo_grid_points < 2:
            raise DiscoveryError("combo_grid_points must be >= 2")

    def seed_list(self):
        """Rollout seeds, shared by every grid point (common random numbers)."""
        return rollout_seeds(self.master_seed, self.seeds)

    def to_dict(self):
        return dict(self.__dict__)


@dataclass(frozen=True)
class ResponseCurve:
    feature: str
    scales: tuple
    rates: tuple
    outcomes: tuple           # per scale, per seed success booleans
    default_scale: float
    default_rate: float

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.scales, self.scales[1:])):
            raise DiscoveryError(f"{self.feature}: scales must be strictly increasing")

    @property
    def points(self):
        return list(zip(self.scales, self.rates, self.outcomes))

    def to_dict(self):
        return {"feature": self.feature, "scales": list(self.scales), "rates": list(self.rates),
                "outcomes": [[int(o) for o in row] for row in self.outcomes],
                "default_scale": self.default_scale, "default_rate": self.default_rate}

    @classmethod
    def from_dict(cls, d):
        return cls(d["feature"], tuple(d["scales"]), tuple(d["rates"]),
                   tuple(tuple(bool(o) for o in row) for row in d["outcomes"]),
                   d["default_scale"], d["default_rate"])


def pairwise_disagreement(successes: int, n: int) -> float:
    """Fraction of ordered seed pairs (i != j) whose outcomes differ."""
    if n < 2:
        return 0.0
    return 2.0 * successes * (n - successes) / (n * (n - 1))


def noise_floor(task, source_tool, seeds, repeats=None) -> float:
    """Mean pairwise outcome disagreement across seeds at the unedited configuration.

    ``repeats`` limits how many of ``seeds`` are rolled out (all by default).
    """
    seeds = list(seeds)
    if repeats is not None:
        if repeats < 2 and task.noise_halfwidth_m > 0:
            raise DiscoveryError("noise floor needs at least 2 repeats when noise is on")
        seeds = seeds[:repeats]
    results = tasks.outcomes(task, source_tool, seeds)
    return pairwise_disagreement(sum(o.success for o in results), len(results))


def pooled_noise_floor(task, tools, seeds) -> float:
    """Seed disagreement averaged over several shapes instead of one."""
    tools = list(tools)
    if not tools:
        raise DiscoveryError("pooled noise floor needs at least one tool")
    return sum(noise_floor(task, t, seeds) for t in tools) / len(tools)


def _curve(task, tool, feature, scales, seeds):
    spec = tool.features[feature]
    outs, rates = [], []
    for s in scales:
        row = tuple(o.success for o in tasks.outcomes(task, apply_edit(tool, feature, s), seeds))
        outs.append(row)
        rates.append(sum(row) / len(row))
    default_rate = tasks.success_rate(task, apply_edit(tool, feature, spec.default), seeds)
    return ResponseCurve(feature, tuple(scales), tuple(rates), tuple(outs),
                         spec.default, default_rate)


def sensitivity_scan(task, source_tool, features, config, jobs=1):
    """One response curve per feature over its full range, others held at default."""
    tasks.check_family(task, source_tool)
    for f in features:
        if f not in source_tool.features:
            raise UnknownFeature(f"{f!r} is not a {source_tool.family} feature")
    seeds = config.seed_list()
    k = config.grid_points_per_feature
    return ordered_map(
        lambda f: _curve(task, source_tool, f, source_tool.features[f].grid(k), seeds),
        features, jobs)


def flag_causal(curves, floor, config):
    """``(flags, effects)``: effect = largest |rate - default rate| over the grid."""
    flags, effects = {}, {}
    for c in curves:
        if c.default_rate is None:
            raise MissingDefaultPoint(f"{c.feature}: no success rate at the default value")
        effect = max(abs(r - c.default_rate) for r in c.rates)
        effects[c.feature] = effect
        flags[c.feature] = effect > floor + config.causal_margin
    return flags, effects


def single_range(curve, threshold):
    """Longest contiguous run of grid points with rate >= threshold, as ``(lo, hi)``.

    Equal-length runs prefer the one containing the default value, then
    the lowest.
    """
    runs, start = [], None
    for i, r in enumerate(curve.rates):
        if r >= threshold and start is None:
            start = i
        if r < threshold and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(curve.rates) - 1))
    if not runs:
        raise NoWorkingRange(curve.feature)
    d = curve.default_scale

    def key(run):
        a, b = run
        holds_default = curve.scales[a] <= d <= curve.scales[b]
        return (-(b - a), not holds_default, a)

    a, b = min(runs, key=key)
    return curve.scales[a], curve.scales[b]


@dataclass
class ComboCheck:
    """Outcome of verifying a box of working ranges on a combination grid.

    Box membership of a combo is decided on its measured feature values,
    which equal the edit values except for coupled features. A box end
    that still sits on the feature's own scale bound is open.
    """

    levels: dict                  # feature -> grid values inside its single range
    values: np.ndarray = None     # (combos, features) measured values, names order
    success: np.ndarray = None    # (combos,) bool
    box: dict = field(default_factory=dict)       # feature -> (lo index, hi index)
    shrink_steps: list = field(default_factory=list)
    specs: dict = field(default_factory=dict)     # feature -> SemanticFeature

    @property
    def names(self):
        return sorted(self.levels)

    def inside(self, box=None):
        box = box or self.box
        mask = np.ones(len(self.success), dtype=bool)
        for j, f in enumerate(self.names):
            a, b = box[f]
            lo, hi = self.levels[f][a], self.levels[f][b]
            tol = 1e-9 * max(1.0, abs(lo), abs(hi))
            open_lo, open_hi = (self.specs[f].open_ends((lo, hi)) if f in self.specs
                                else (False, False))
            col = self.values[:, j]
            if not open_lo:
                mask &= col >= lo - tol
            if not open_hi:
                mask &= col <= hi + tol
        return mask

    def fraction(self, box=None):
        mask = self.inside(box)
        total = int(mask.sum())
        return float(self.success[mask].sum()) / total if total else 0.0

    def ranges(self):
        return {f: (self.levels[f][a], self.levels[f][b]) for f, (a, b) in self.box.items()}

    @property
    def size(self):
        return len(self.success)


def combo_levels(ranges, k):
    return {f: (uniform_grid(lo, hi, k) if hi > lo else [lo]) for f, (lo, hi) in ranges.items()}


def verify_combinations(task, source_tool, ranges, config, jobs=1) -> ComboCheck:
    """Simulate every combo of ``k`` levels per range and shrink the box until
    at least ``success_threshold`` of the combos inside it succeed.

    Each step moves one range end inward by one level, choosing the move
    that drops the most failing combos; ties prefer the move dropping the
    fewest successes, then the feature name, then the low end.
    """
    levels = combo_levels(ranges, config.combo_grid_points)
    names = sorted(levels)
    size = combination_size(names, levels)
    if size > config.combo_max_size:
        raise GridTooLarge(size, config.combo_max_size)
    seeds = config.seed_list()
    tau = config.success_threshold
    combos = list(itertools.product(*(levels[n] for n in names)))

    def run(values):
        tool = apply_edits(source_tool, list(zip(names, values)))
        measured = tool.measured_values()
        ok = tasks.success_rate(task, tool, seeds) >= tau
        return [measured[n] for n in names], ok

    results = ordered_map(run, combos, jobs)
    check = ComboCheck(levels, np.array([r[0] for r in results], dtype=float).reshape(-1, len(names)),
                       np.array([r[1] for r in results], dtype=bool),
                       specs={n: source_tool.features[n] for n in names})
    check.box = {n: (0, len(levels[n]) - 1) for n in names}
    while check.fraction() < tau:
        now = check.inside()
        best = None
        for n in names:
            a, b = check.box[n]
            if a == b:
                continue
            for side, new in (("low", (a + 1, b)), ("high", (a, b - 1))):
                dropped = now & ~check.inside({**check.box, n: new})
                fails = int((dropped & ~check.success).sum())
                succ = int((dropped & check.success).sum())
                key = (-fails, succ, n, side != "low")
                if best is None or key < best[0]:
                    best = (key, n, side, new)
        if best is None:
            break
        _, n, side, new = best
        check.box[n] = new
        check.shrink_steps.append({"feature": n, "side": side,
                                   "range": list(check.ranges()[n])})
    return check


def working_ranges(task, source_tool, causal_features, config, curves=None, jobs=1):
    """Per-feature working ranges, verified and if needed shrunk jointly.

    Returns ``(single, final, check)``: the per-curve ranges, the ranges
    after combination shrinking and the :class:`ComboCheck` record.
    """
    causal_features = list(causal_features)
    if curves is None:
        curves = sensitivity_scan(task, source_tool, causal_features, config, jobs)
    by_name = {c.feature: c for c in curves}
    single = {f: single_range(by_name[f], config.success_threshold) for f in causal_features}
    if not single:
        return {}, {}, None
    check = verify_combinations(task, source_tool, single, config, jobs)
    return single, check.ranges(), check


def boundary_tools(source_tool, feature, value_range):
    """The source tool edited to the low and the high end of a working range."""
    lo, hi = value_range
    return apply_edit(source_tool, feature, lo), apply_edit(source_tool, feature, hi)


@dataclass
class CausalReport:
    variant: str
    family: str
    features: list
    curves: dict
    noise_floor: float
    causal_flags: dict
    effect_sizes: dict
    single_ranges: dict
    working_ranges: dict
    combination_verified: bool
    combination_shrunk: bool
    combination_fraction: float
    combination_size: int
    shrink_steps: list
    config: dict

    @property
    def causal_features(self):
        return [f for f in self.features if self.causal_flags[f]]

    @property
    def boundary_scales(self):
        return dict(self.working_ranges)

    @property
    def causal_threshold(self):
        return self.noise_floor + self.config["causal_margin"]

    def to_dict(self):
        return {
            "variant": self.variant,
            "family": self.family,
            "features": list(self.features),
            "noise_floor": self.noise_floor,
            "causal_threshold": self.causal_threshold,
            "causal_flags": dict(self.causal_flags),
            "effect_sizes": dict(self.effect_sizes),
            "causal_features": self.causal_features,
            "single_ranges": {k: list(v) for k, v in self.single_ranges.items()},
            "working_ranges": {k: list(v) for k, v in self.working_ranges.items()},
            "combination_verified": self.combination_verified,
            "combination_shrunk": self.combination_shrunk,
            "combination_fraction": self.combination_fraction,
            "combination_size": self.combination_size,
            "shrink_steps": list(self.shrink_steps),
            "config": dict(self.config),
            "curves": {k: c.to_dict() for k, c in self.curves.items()},
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["variant"], d["family"], list(d["features"]),
                   {k: ResponseCurve.from_dict(c) for k, c in d["curves"].items()},
                   d["noise_floor"], dict(d["causal_flags"]), dict(d["effect_sizes"]),
                   {k: tuple(v) for k, v in d["single_ranges"].items()},
                   {k: tuple(v) for k, v in d["working_ranges"].items()},
                   d["combination_verified"], d["combination_shrunk"],
                   d["combination_fraction"], d["combination_size"],
                   list(d["shrink_steps"]), dict(d["config"]))

    def sensitivity_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "scale", "success_rate"])
        for f in self.features:
            c = self.curves[f]
            for s, r in zip(c.scales, c.rates):
                w.writerow([f, repr(s), repr(r)])
        return buf.getvalue()


def discover(task, source_tool, features, config, jobs=1) -> CausalReport:
    """Scan, flag and range the candidate ``features`` of ``source_tool``."""
    features = list(features)
    curves = sensitivity_scan(task, source_tool, features, config, jobs)
    floor = noise_floor(task, source_tool, config.seed_list())
    flags, effects = flag_causal(curves, floor, config)
    causal = [f for f in features if flags[f]]
    single, final, check = working_ranges(task, source_tool, causal, config, curves, jobs)
    if check is None:
        verified, shrunk, frac, size, steps = True, False, 1.0, 0, []
    else:
        frac = check.fraction()
        verified = frac >= config.success_threshold
        shrunk = bool(check.shrink_steps)
        size = check.size
        steps = check.shrink_steps
    return CausalReport(task.variant, source_tool.family, features,
                        {c.feature: c for c in curves}, floor, flags, effects,
                        single, final, verified, shrunk, frac, size, steps,
                        config.to_dict())
