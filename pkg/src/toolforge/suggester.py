"""Candidate feature proposal with vote aggregation and expansion.

A backend returns one ranked list of candidate names per run. ``propose``
asks it ``n_runs`` times and keeps the ``top_k`` most voted names that the
target family can actually edit; ``expand`` asks for names not yet used
when a run fails. Two backends ship: a deterministic weighted catalog and
a remote judge spoken to over JSON/HTTP.
"""
from __future__ import annotations

import json
import logging
import urllib.error
import urllib.request
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .editor import family_features
from .errors import BackendUnavailable, EmptyProposal, Exhausted, SuggesterError
from .seeding import derive_seed, ordered_map

log = logging.getLogger(__name__)

TASK_TEXT = {
    "pull": "pull a puck that is out of reach back towards the robot with a hooked stick",
    "scoop": "scoop a candy out of a bowl and carry it without spilling",
    "step_reach": "climb onto a box to reach a shelf the robot cannot reach from the floor",
}


@dataclass(frozen=True)
class FeatureProposal:
    name: str
    kind: str = "geometric"
    rationale: str = ""

    def to_dict(self):
        return {"name": self.name, "kind": self.kind, "rationale": self.rationale}


@dataclass
class VoteTally:
    runs: list                      # per run, the deduplicated proposal names in order
    counts: dict = field(default_factory=dict)
    positions: dict = field(default_factory=dict)   # name -> summed rank over runs

    @classmethod
    def from_runs(cls, runs):
        counts, positions = Counter(), Counter()
        for run in runs:
            for rank, name in enumerate(run):
                counts[name] += 1
                positions[name] += rank
        return cls([list(r) for r in runs], dict(counts), dict(positions))

    def ranking(self):
        """Names by votes (desc), then summed rank (asc), then name.

        The key only uses multiset sums, so reordering runs cannot change it.
        """
        return sorted(self.counts, key=lambda n: (-self.counts[n], self.positions[n], n))

    def to_dict(self):
        return {"runs": self.runs, "counts": dict(sorted(self.counts.items())),
                "positions": dict(sorted(self.positions.items()))}


def _dedupe(proposals):
    seen, out = set(), []
    for p in proposals:
        if p.name not in seen:
            seen.add(p.name)
            out.append(p)
    return out


# --- catalog backend ---------------------------------------------------------

# (name, kind, weight, rationale); names absent from the family act as
# distractors, the kind of thing a vision-language model also suggests
_DISTRACTORS = [
    ("tool_color", "physical", 0.6, "colour may signal the material"),
    ("surface_texture", "physical", 0.5, "grip depends on texture"),
    ("material_stiffness", "physical", 0.5, "a soft tool could bend"),
    ("handle_grip_shape", "geometric", 0.4, "grip affects control"),
    ("edge_sharpness", "geometric", 0.3, "sharp edges catch objects"),
    ("brand_label", "physical", 0.2, "labels hint at intended use"),
]

CATALOG = {
    ("pull", "stick"): [
        ("shaft_length", "geometric", 9.0, "the shaft must reach the puck"),
        ("blade_shaft_angle", "geometric", 8.0, "the hook angle holds the puck"),
        ("blade_length", "geometric", 7.0, "the blade has to wrap around the puck"),
        ("shaft_diameter", "geometric", 6.0, "the gripper must close on the shaft"),
        ("blade_width", "geometric", 5.0, "a wide blade covers more of the puck"),
        ("blade_thickness", "geometric", 4.0, "a thin blade may slip over the puck"),
        ("mass", "physical", 1.0, "a heavy tool exceeds the payload"),
    ],
    ("scoop", "scoop"): [
        ("head_width", "geometric", 9.0, "the head must fit in the bowl"),
        ("head_bowl_curvature", "geometric", 8.0, "a deeper bowl retains the candy"),
        ("handle_length", "geometric", 7.0, "the handle must reach the bowl bottom"),
        ("head_length", "geometric", 6.0, "the head has to hold the candy"),
        ("handle_to_head_angle", "geometric", 5.0, "the head must sit level to keep the candy"),
        ("handle_cross_section_thickness", "geometric", 4.0, "the gripper must close on the handle"),
        ("mass", "physical", 1.0, "a heavy tool exceeds the payload"),
    ],
    ("step_reach", "platform"): [
        ("overall_height", "geometric", 9.0, "the step must raise the robot enough"),
        ("footprint_width", "geometric", 8.0, "the box must fit the gap"),
        ("top_surface_area", "geometric", 7.0, "the feet need room on top"),
        ("footprint_depth", "geometric", 6.0, "the feet need depth on top"),
        ("com_height_fraction", "physical", 2.0, "a high centre of mass can tip"),
        ("mass", "physical", 1.5, "a light box may slide"),
    ],
}


def resolve_variant(task_text):
    """Variant name for a task text: either the name itself or its stock description."""
    if task_text in TASK_TEXT:
        return task_text
    for variant, text in TASK_TEXT.items():
        if task_text == text:
            return variant
    return None


class CatalogBackend:
    """Weighted sampling without replacement from a per-(task, family) list.

    Each run draws Efraimidis-Spirakis keys ``u ** (1 / w)`` and proposes
    names by descending key, which is weighted sampling without
    replacement. Unknown (task, family) pairs use equal weights over the
    family's features.
    """

    name = "catalog"

    def __init__(self, catalog=None, distractors=None):
        self.catalog = CATALOG if catalog is None else catalog
        self.distractors = _DISTRACTORS if distractors is None else distractors

    def entries(self, task_text, family):
        variant = resolve_variant(task_text)
        base = self.catalog.get((variant, family))
        if base is None:
            base = [(f.name, f.kind, 1.0, "") for f in family_features(family).values()]
        return list(base) + list(self.distractors)

    def propose_run(self, task_text, family, n_candidates, seed):
        entries = self.entries(task_text, family)
        rng = np.random.default_rng(seed)
        u = rng.random(len(entries))
        keys = u ** (1.0 / np.array([e[2] for e in entries], dtype=float))
        order = np.argsort(-keys, kind="stable")[:n_candidates]
        return [FeatureProposal(entries[i][0], entries[i][1], entries[i][3]) for i in order]


# --- remote backend ----------------------------------------------------------


class RemoteBackend:
    """JSON over HTTP POST.

    Request ``{task_text, family, candidate_schema, n_candidates}``, response
    ``{proposals: [{name, kind, rationale}, ...]}``. The remote side is
    expected to sample at temperature 1.0 and keep within a budget of about
    30 calls; neither is enforced here.
    """

    name = "remote"

    def __init__(self, url, timeout=30.0, retries=2, temperature=1.0):
        self.url, self.timeout, self.retries = url, timeout, retries
        self.temperature = temperature

    def _post(self, payload):
        data = json.dumps(payload).encode()
        last = None
        for _ in range(self.retries + 1):
            req = urllib.request.Request(self.url, data=data,
                                         headers={"Content-Type": "application/json"})
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    body = resp.read().decode("utf-8", "replace")
                    if resp.status != 200:
                        last = f"HTTP {resp.status}: {body}"
                        continue
                    return body
            except urllib.error.HTTPError as exc:
                body = exc.read().decode("utf-8", "replace")
                last = f"HTTP {exc.code}: {body}"
            except (urllib.error.URLError, OSError) as exc:
                last = str(exc)
        log.warning("remote backend failed: %s", last)
        raise BackendUnavailable(f"{self.url}: {last}")

    def propose_run(self, task_text, family, n_candidates, seed):
        schema = [{"name": f.name, "kind": f.kind} for f in family_features(family).values()]
        body = self._post({"task_text": task_text, "family": family,
                           "candidate_schema": schema, "n_candidates": n_candidates,
                           "seed": seed, "temperature": self.temperature})
        try:
            items = json.loads(body)["proposals"]
            out = [FeatureProposal(str(p["name"]), str(p.get("kind", "geometric")),
                                   str(p.get("rationale", ""))) for p in items]
        except (ValueError, KeyError, TypeError) as exc:
            log.warning("remote backend returned an invalid body: %r", body)
            raise BackendUnavailable(f"invalid proposal response ({exc}): {body!r}") from exc
        return out[:n_candidates]


def make_backend(spec):
    """Backend from a config entry such as ``{"backend": "catalog"}``."""
    spec = spec or {}
    kind = spec.get("backend", "catalog")
    if kind == "catalog":
        return CatalogBackend()
    if kind == "remote":
        if "url" not in spec:
            raise SuggesterError("remote backend needs a url")
        return RemoteBackend(spec["url"], spec.get("timeout", 30.0), spec.get("retries", 2),
                             spec.get("temperature", 1.0))
    raise SuggesterError(f"unknown suggester backend {kind!r}")


# --- operations --------------------------------------------------------------


def _collect(task_text, family, backend, n_runs, n_candidates, seed, jobs=1):
    seeds = [derive_seed(seed, "suggest", r) for r in range(n_runs)]
    runs = ordered_map(lambda s: _dedupe(backend.propose_run(task_text, family, n_candidates, s)),
                       seeds, jobs)
    return runs


def propose(task_text, family, backend, n_runs=10, n_candidates=12, top_k=6, seed=0, jobs=1):
    """Return ``(features, tally, uneditable)``.

    ``features`` are the ``top_k`` best-ranked names the family can edit;
    names it cannot edit go to ``uneditable`` in ranking order.
    """
    if n_runs < 1:
        raise SuggesterError("n_runs must be >= 1")
    if top_k > n_candidates:
        raise SuggesterError("top_k must not exceed n_candidates")
    runs = _collect(task_text, family, backend, n_runs, n_candidates, seed, jobs)
    if not any(runs):
        raise EmptyProposal(f"backend proposed nothing for {family!r}")
    tally = VoteTally.from_runs([[p.name for p in r] for r in runs])
    editable = list(family_features(family))
    ranked = tally.ranking()
    features = [n for n in ranked if n in editable][:top_k]
    uneditable = [n for n in ranked if n not in editable]
    return features, tally, uneditable


def expand(previous, family, backend, k_more=1, seed=0, task_text="", n_runs=10):
    """Up to ``k_more`` new editable features, best ranked first, none in ``previous``."""
    if k_more < 1:
        raise SuggesterError("k_more must be >= 1")
    editable = list(family_features(family))
    remaining = [n for n in editable if n not in set(previous)]
    if not remaining:
        raise Exhausted(f"every {family} feature has already been proposed")
    runs = _collect(task_text, family, backend, n_runs, len(editable) + 64,
                    derive_seed(seed, "expand", len(previous)))
    tally = VoteTally.from_runs([[p.name for p in r] for r in runs])
    new = [n for n in tally.ranking() if n in remaining][:k_more]
    if not new:
        raise Exhausted(f"backend proposed no new {family} features")
    return new
