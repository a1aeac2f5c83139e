"""Configuration, staged execution and the end-to-end run.

Stages exchange JSON files in an output directory:

    suggest   -> features.json
    dataset   -> dataset.json
    discover  -> causal_report.json, sensitivity.csv
    classify  -> targets/<id>/match.json, verdict.json, boundary/...
    transfer  -> targets/<id>/keypoints.json
    report    -> run_report.json, report.txt, sensitivity.csv

``run_end_to_end`` chains them and adds the recovery loop: when discovery
finds no working range, when no target is judged suitable, or when the
best-ranked suitable target fails on execution, more features are
requested from the suggester and the run repeats (at most
``expansion.max_iterations`` times).
"""
from __future__ import annotations

import copy
import json
import os
import time
from dataclasses import dataclass, field

from . import discovery, geometry, matcher, suggester, targets, tasks
from .editor import default_dimensions, family_features, intervention_dataset, make_source_tool
from .errors import (ConfigError, Exhausted, MissingStageInput, NoWorkingRange, StageError,
                     ToolforgeError)
from .seeding import derive_seed, ordered_map

MATCHER_DEFAULTS = {"samples_per_feature": 15, "passes": 2, "cloud_n": 2048,
                    "refine_passes": 0, "view": None, "symmetry_plane": None}
SUGGESTER_DEFAULTS = {"backend": "catalog", "n_runs": 10, "n_candidates": 12, "top_k": 6}
EXPANSION_DEFAULTS = {"max_iterations": 2, "k_more": 1}
_TOP_KEYS = {"task", "source_tool", "discovery", "suggester", "matcher", "targets",
             "output_dir", "master_seed", "expansion", "boundary", "execute", "jobs"}


@dataclass
class PipelineConfig:
    task: tasks.TaskSpec
    source_tool: object
    discovery: discovery.DiscoveryConfig
    suggester: dict
    matcher: dict
    targets: list
    output_dir: str
    master_seed: int = 0
    expansion: dict = field(default_factory=lambda: dict(EXPANSION_DEFAULTS))
    boundary: dict = field(default_factory=lambda: {"enabled": True, "images": False})
    execute: bool = True
    base_dir: str = "."

    @classmethod
    def from_dict(cls, doc, base_dir=".", output_dir=None, seed=None):
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(doc) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("task", "source_tool"):
            if key not in doc:
                raise ConfigError(f"config is missing {key!r}")
        master = int(doc.get("master_seed", 0) if seed is None else seed)
        task = tasks.TaskSpec.from_dict(doc["task"])
        src = doc["source_tool"]
        family = src.get("family", task.family)
        if family != task.family:
            raise ConfigError(f"source family {family!r} does not suit task {task.variant!r}")
        try:
            tool = make_source_tool(family, src.get("dimensions") or default_dimensions(family))
        except ToolforgeError as exc:
            raise ConfigError(f"source_tool: {exc}") from None
        disc = dict(doc.get("discovery", {}))
        disc.setdefault("master_seed", derive_seed(master, "discovery"))
        try:
            dcfg = discovery.DiscoveryConfig(**disc)
        except (TypeError, ToolforgeError) as exc:
            raise ConfigError(f"discovery: {exc}") from None
        sug = {**SUGGESTER_DEFAULTS, **doc.get("suggester", {})}
        mat = {**MATCHER_DEFAULTS, **doc.get("matcher", {})}
        if set(mat) - set(MATCHER_DEFAULTS) - {"refine_samples", "max_refine_sweeps",
                                               "pattern_moves"}:
            raise ConfigError(f"unknown matcher keys: {sorted(set(mat) - set(MATCHER_DEFAULTS))}")
        exp = {**EXPANSION_DEFAULTS, **doc.get("expansion", {})}
        tlist = []
        seen = set()
        for entry in doc.get("targets", []):
            entry = dict(entry)
            tid = str(entry.get("id", ""))
            if not tid or tid in seen:
                raise ConfigError(f"target ids must be unique and non-empty (got {tid!r})")
            seen.add(tid)
            if "cloud" in entry:
                path = os.path.join(base_dir, entry["cloud"])
                if not os.path.exists(path):
                    raise ConfigError(f"target {tid!r}: cloud file {path} does not exist")
                entry["cloud"] = path
            elif "generator" not in entry:
                raise ConfigError(f"target {tid!r} needs a 'cloud' file or a 'generator'")
            tlist.append(entry)
        out = output_dir or doc.get("output_dir")
        if not out:
            raise ConfigError("no output directory given (config 'output_dir' or --out)")
        boundary = {"enabled": True, "images": False, **doc.get("boundary", {})}
        return cls(task, tool, dcfg, sug, mat, tlist, os.path.join(base_dir, out)
                   if output_dir is None else out, master, exp, boundary,
                   bool(doc.get("execute", True)), base_dir)


def load_config(path, output_dir=None, seed=None):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return PipelineConfig.from_dict(doc, os.path.dirname(os.path.abspath(path)), output_dir, seed)


# --- file helpers --------------------------------------------------------------


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write(path, text):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


def _read(path):
    if not os.path.exists(path):
        raise MissingStageInput(path)
    with open(path) as fh:
        return json.load(fh)


def _stage(name, fn, target=None):
    try:
        return fn()
    except (MissingStageInput, ConfigError):
        raise
    except ToolforgeError as exc:
        raise StageError(name, target, exc) from exc


# --- stages --------------------------------------------------------------------


def stage_suggest(cfg, previous=None, iteration=0, reason=None):
    """Propose features (or extend ``previous``) and write ``features.json``."""
    sug = cfg.suggester
    backend = suggester.make_backend(sug)
    text = sug.get("task_text") or suggester.TASK_TEXT.get(cfg.task.variant, cfg.task.variant)
    seed = derive_seed(cfg.master_seed, "suggest")
    family = cfg.task.family

    def run():
        if previous is not None:
            added = suggester.expand(previous["features"], family, backend,
                                     cfg.expansion["k_more"], seed, text, sug["n_runs"])
            return {**previous, "features": previous["features"] + added,
                    "expansion_iterations": iteration,
                    "expansions": previous["expansions"] + [{"added": added,
                                                             "reason": reason}]}
        if "features" in sug:
            names = list(sug["features"])
            editable = family_features(family)
            return {"features": [n for n in names if n in editable], "tally": None,
                    "uneditable": [n for n in names if n not in editable],
                    "expansion_iterations": 0, "expansions": []}
        feats, tally, unedit = suggester.propose(text, family, backend, sug["n_runs"],
                                                 sug["n_candidates"], sug["top_k"], seed)
        return {"features": feats, "tally": tally.to_dict(), "uneditable": unedit,
                "expansion_iterations": 0, "expansions": []}

    doc = _stage("suggest", run)
    _write(os.path.join(cfg.output_dir, "features.json"), _dump(doc))
    return doc


def stage_dataset(cfg, jobs=1):
    """Write the one-at-a-time counterfactual tools for the proposed features."""
    feats = _read(os.path.join(cfg.output_dir, "features.json"))["features"]
    k = cfg.discovery.grid_points_per_feature

    def run():
        specs = cfg.source_tool.features
        grid = {f: specs[f].grid(k) for f in feats}
        rows = intervention_dataset(cfg.source_tool, feats, grid)
        return {"source_tool": cfg.source_tool.to_dict(), "features": feats,
                "grid": grid,
                "tools": [{"feature": f, "scale": s, "measured": t.measured_values(),
                           "mass_kg": t.mass_kg} for f, s, t in rows]}

    doc = _stage("dataset", run)
    _write(os.path.join(cfg.output_dir, "dataset.json"), _dump(doc))
    return doc


def stage_discover(cfg, jobs=1):
    doc = _read(os.path.join(cfg.output_dir, "dataset.json"))
    feats = doc["features"]
    report = _stage("discover", lambda: discovery.discover(cfg.task, cfg.source_tool, feats,
                                                             cfg.discovery, jobs))
    _write(os.path.join(cfg.output_dir, "causal_report.json"), _dump(report.to_dict()))
    _write(os.path.join(cfg.output_dir, "sensitivity.csv"), report.sensitivity_csv())
    return report


def _load_report(cfg):
    return discovery.CausalReport.from_dict(_read(os.path.join(cfg.output_dir,
                                                               "causal_report.json")))


def _target_cloud(cfg, entry):
    """``(cloud, generator_tool_or_None)`` for a target entry."""
    n = cfg.matcher["cloud_n"]
    seed = derive_seed(cfg.master_seed, "target", entry["id"])
    if "cloud" in entry:
        return geometry.read_xyz(entry["cloud"]), None
    return targets.from_spec(entry["generator"], n, seed)


def _measurements(entry, truth):
    """Physical measurements for a target: config values first, then the generator's."""
    mass = entry.get("measured_mass_kg")
    meas = dict(entry.get("measurements", {}))
    if truth is not None:
        if mass is None:
            mass = truth.mass_kg
        for f, spec in truth.features.items():
            if spec.kind == "physical" and f != "mass":
                meas.setdefault(f, truth.feature_assignment[f])
    return mass, meas


def _view(cfg):
    v = cfg.matcher.get("view")
    return None if v is None else geometry.ViewSpec(tuple(v["camera_direction"]),
                                                    v.get("cull_backfaces", True))


def classify_one(cfg, report, entry):
    tid = entry["id"]
    tdir = os.path.join(cfg.output_dir, "targets", tid)
    m = cfg.matcher

    def run():
        cloud, truth = _target_cloud(cfg, entry)
        causal = report.causal_features
        geo = [f for f in causal if cfg.source_tool.features[f].kind == "geometric"]
        plane = m.get("symmetry_plane")
        match = matcher.morph_match(
            cfg.source_tool, causal, cloud, m["samples_per_feature"], m["passes"],
            m["cloud_n"], derive_seed(cfg.master_seed, "match", tid), _view(cfg),
            m["refine_passes"], 1, tuple(plane) if plane else None,
            m.get("refine_samples", 5), m.get("max_refine_sweeps"),
            m.get("pattern_moves", True))
        mass, meas = _measurements(entry, truth)
        verdict = matcher.classify_target(match, report, mass, meas)
        boundaries = []
        if cfg.boundary.get("enabled", True):
            for f in geo:
                comp = matcher.boundary_comparison(cloud, report, cfg.source_tool, f, match,
                                                   m["cloud_n"],
                                                   derive_seed(cfg.master_seed, "boundary", tid),
                                                   view=_view(cfg))
                matcher.write_boundary_comparison(comp, os.path.join(tdir, "boundary"),
                                                  cfg.boundary.get("images", False))
                boundaries.append(comp.to_dict())
        executed = None
        if truth is not None and cfg.execute:
            seeds = cfg.discovery.seed_list()
            executed = tasks.success_rate(cfg.task, truth, seeds)
        return cloud, match, verdict, boundaries, executed

    cloud, match, verdict, boundaries, executed = _stage("classify", run, tid)
    _write(os.path.join(tdir, "match.json"), _dump(match.to_dict()))
    vdoc = verdict.to_dict()
    vdoc["target"] = tid
    vdoc["boundary_comparisons"] = boundaries
    vdoc["execution_success_rate"] = executed
    _write(os.path.join(tdir, "verdict.json"), _dump(vdoc))
    return match, verdict


def stage_classify(cfg, jobs=1):
    report = _load_report(cfg)
    return ordered_map(lambda e: classify_one(cfg, report, e), cfg.targets, jobs)


def stage_transfer(cfg, jobs=1):
    out = []

    def one(entry):
        tid = entry["id"]
        tdir = os.path.join(cfg.output_dir, "targets", tid)
        match = matcher.MatchResult.from_dict(_read(os.path.join(tdir, "match.json")))

        def run():
            if not match.matched_tool.keypoints:
                return []
            cloud, _ = _target_cloud(cfg, entry)
            return matcher.transfer_keypoints(match.matched_tool, cloud, match.offset)

        pts = _stage("transfer", run, tid)
        doc = {"target": tid, "keypoints": [{"name": n, "point": [float(c) for c in p],
                                             "nn_distance": float(d)} for n, p, d in pts]}
        _write(os.path.join(tdir, "keypoints.json"), _dump(doc))
        return doc

    out = ordered_map(one, cfg.targets, jobs)
    return out


def _ranking(per_target):
    return sorted(per_target, key=lambda t: (not t["verdict"]["suitable"],
                                            t["match"]["residual"], t["id"]))


def stage_report(cfg):
    """Gather every stage's files into ``run_report.json`` and ``report.txt``."""
    feats = _read(os.path.join(cfg.output_dir, "features.json"))
    report = _read(os.path.join(cfg.output_dir, "causal_report.json"))
    per = []
    for entry in cfg.targets:
        tdir = os.path.join(cfg.output_dir, "targets", entry["id"])
        match = _read(os.path.join(tdir, "match.json"))
        verdict = _read(os.path.join(tdir, "verdict.json"))
        kps = _read(os.path.join(tdir, "keypoints.json"))
        per.append({"id": entry["id"],
                    "match": {k: match[k] for k in ("assignment", "measured", "residual",
                                                    "offset", "pass_residuals", "evaluations")},
                    "verdict": {k: verdict[k] for k in ("suitable", "per_feature",
                                                        "explanation")},
                    "boundary_comparisons": verdict["boundary_comparisons"],
                    "execution_success_rate": verdict["execution_success_rate"],
                    "keypoints": kps["keypoints"]})
    doc = {"task": cfg.task.to_dict(), "source_family": cfg.source_tool.family,
           "master_seed": cfg.master_seed, "features": feats,
           "expansion_iterations": feats["expansion_iterations"],
           "expansions": feats["expansions"],
           "causal_report": {k: v for k, v in report.items() if k != "curves"},
           "targets": per, "ranking": [t["id"] for t in _ranking(per)]}
    _write(os.path.join(cfg.output_dir, "run_report.json"), _dump(doc))
    _write(os.path.join(cfg.output_dir, "report.txt"), explanation_text(doc))
    csv_text = discovery.CausalReport.from_dict(report).sensitivity_csv()
    _write(os.path.join(cfg.output_dir, "sensitivity.csv"), csv_text)
    return doc


def explanation_text(doc):
    cr = doc["causal_report"]
    lines = [f"task {doc['task']['variant']} with a {doc['source_family']} source tool",
             f"features examined: {', '.join(cr['features'])}",
             f"causal: {', '.join(cr['causal_features']) or 'none'} "
             f"(noise floor {cr['noise_floor']:.3f}, threshold {cr['causal_threshold']:.3f})"]
    for f, (lo, hi) in sorted(cr["working_ranges"].items()):
        lines.append(f"  {f}: working range [{lo:.4g}, {hi:.4g}]")
    lines.append(f"expansion iterations: {doc['expansion_iterations']}")
    for t in doc["targets"]:
        lines.append(f"target {t['id']}: {t['verdict']['explanation']}")
    if doc["ranking"]:
        lines.append("ranking: " + ", ".join(doc["ranking"]))
    return "\n".join(lines) + "\n"


# --- end to end ----------------------------------------------------------------


def _needs_recovery(per_target, threshold):
    """Reason to ask for more features, or None."""
    if not per_target:
        return None
    if not any(t["verdict"]["suitable"] for t in per_target):
        return "no target judged suitable"
    best = _ranking(per_target)[0]
    rate = best["execution_success_rate"]
    if rate is not None and rate < threshold:
        return f"selected target {best['id']} failed on execution (success rate {rate:.2f})"
    return None


def run_end_to_end(cfg, jobs=1):
    """Run every stage; returns ``(run_report, timings)``."""
    timings = {}

    def timed(name, fn):
        t0 = time.perf_counter()
        out = fn()
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - t0
        return out

    os.makedirs(cfg.output_dir, exist_ok=True)
    feats = timed("suggest", lambda: stage_suggest(cfg))
    iteration = 0
    while True:
        timed("dataset", lambda: stage_dataset(cfg, jobs))
        failure, reason = None, None
        try:
            timed("discover", lambda: stage_discover(cfg, jobs))
        except StageError as exc:
            if not isinstance(exc.cause, NoWorkingRange):
                raise
            failure, reason = exc, f"discovery found no working range ({exc.cause})"
        if failure is None:
            timed("classify", lambda: stage_classify(cfg, jobs))
            timed("transfer", lambda: stage_transfer(cfg, jobs))
            doc = timed("report", lambda: stage_report(cfg))
            reason = _needs_recovery(doc["targets"], cfg.discovery.success_threshold)
        if reason is None or iteration >= cfg.expansion["max_iterations"]:
            break
        try:
            feats = timed("suggest", lambda: stage_suggest(cfg, feats, iteration + 1, reason))
        except StageError as exc:
            if not isinstance(exc.cause, Exhausted):
                raise
            break
        iteration += 1
    if failure is not None:
        raise failure
    _write(os.path.join(cfg.output_dir, "timings.json"), _dump(timings))
    return doc, timings


def config_template(variant):
    """A small working config for ``variant`` (used by the shipped examples)."""
    task = tasks.default_task(variant)
    return {"task": {"variant": variant}, "source_tool": {"family": task.family},
            "discovery": {}, "suggester": copy.deepcopy(SUGGESTER_DEFAULTS),
            "matcher": {"cloud_n": 2048, "passes": 2, "refine_passes": 3},
            "targets": [], "output_dir": f"out_{variant}", "master_seed": 0}
