"""Analytic success oracles for the pull, scoop and step-reach tasks.

Each rollout jitters the goal object uniformly in the horizontal plane and
evaluates a fixed, ordered conjunction of geometric and physical rules.
The first violated rule is reported as the failure reason.
"""
from __future__ import annotations

import dataclasses
import functools
import math
import random
from dataclasses import dataclass

from .errors import ConfigError, FamilyMismatch

FAILURE_REASONS = ("TooHeavy", "GripperTooWide", "OutOfReach", "NoHook", "NoRetention",
                   "HeadTooWide", "TooShallow", "HandleTooShort", "GapTooNarrow",
                   "WrongHeight", "TopTooSmall", "Unstable")

VARIANT_FAMILY = {"pull": "stick", "scoop": "scoop", "step_reach": "platform"}


@dataclass(frozen=True)
class Outcome:
    success: bool
    failure_reason: str | None = None

    def __post_init__(self):
        if self.success != (self.failure_reason is None):
            raise ValueError("failure_reason must be None exactly when success is True")


SUCCESS = Outcome(True, None)


@dataclass(frozen=True)
class RobotConstraints:
    payload_kg: float = 3.0
    gripper_max_opening_m: float = 0.08
    arm_reach_m: float = 0.85
    base_position: tuple = (0.0, 0.0, 0.0)
    # quadruped only
    foot_area_m2: float | None = None
    max_step_height_m: float | None = None
    stance_depth_m: float | None = None


@dataclass(frozen=True)
class PullParams:
    puck_position: tuple = (1.3, 0.0, 0.0)
    puck_radius: float = 0.04
    retrieve_radius_m: float = 0.85
    pull_stroke_m: float = 0.7
    retention_angle_window_deg: tuple = (60.0, 150.0)


@dataclass(frozen=True)
class ScoopParams:
    bowl_center: tuple = (0.5, 0.0, 0.0)
    bowl_opening_radius_m: float = 0.08
    bowl_depth_m: float = 0.08
    candy_radius_m: float = 0.008
    min_scoop_volume_m3: float = 1e-5
    clearance_m: float = 0.02
    angle_window_deg: tuple = (130.0, 180.0)


@dataclass(frozen=True)
class StepParams:
    shelf_height_m: float = 0.9
    shelf_front_offset_m: float = 0.3
    obstacle_gap_width_m: float = 0.75
    required_stand_height_range_m: tuple = (0.2, 0.5)
    stability_margin: float = 0.8
    max_tilt_deg: float = 15.0


PARAMS = {"pull": PullParams, "scoop": ScoopParams, "step_reach": StepParams}
DEFAULT_NOISE = {"pull": 0.10, "scoop": 0.05, "step_reach": 0.05}
DEFAULT_ROBOT = {
    "pull": RobotConstraints(),
    "scoop": RobotConstraints(payload_kg=1.0),
    "step_reach": RobotConstraints(payload_kg=14.0, gripper_max_opening_m=0.1,
                                   arm_reach_m=0.9, foot_area_m2=0.075,
                                   max_step_height_m=0.45, stance_depth_m=0.25),
}


@dataclass(frozen=True)
class TaskSpec:
    variant: str
    robot: RobotConstraints
    params: PullParams | ScoopParams | StepParams
    noise_halfwidth_m: float
    trials_per_config: int = 10
    # additive tip-tracking noise (std, metres); off unless set
    keypoint_noise_m: float = 0.0

    def __post_init__(self):
        if self.variant not in PARAMS:
            raise ConfigError(f"unknown task variant {self.variant!r}")
        if not isinstance(self.params, PARAMS[self.variant]):
            raise ConfigError(f"{self.variant} task needs {PARAMS[self.variant].__name__}")
        if self.noise_halfwidth_m < 0 or self.keypoint_noise_m < 0:
            raise ConfigError("noise magnitudes must be non-negative")
        if self.trials_per_config < 1:
            raise ConfigError("trials_per_config must be >= 1")
        _check_positive(self.robot, ("payload_kg", "gripper_max_opening_m", "arm_reach_m",
                                     "foot_area_m2", "max_step_height_m", "stance_depth_m"))
        if self.variant == "step_reach":
            for key in ("foot_area_m2", "max_step_height_m", "stance_depth_m"):
                if getattr(self.robot, key) is None:
                    raise ConfigError(f"step_reach robot needs {key}")

    @property
    def family(self):
        return VARIANT_FAMILY[self.variant]

    def with_noise(self, halfwidth):
        return dataclasses.replace(self, noise_halfwidth_m=float(halfwidth))

    def to_dict(self):
        return {"variant": self.variant,
                "robot": _plain(dataclasses.asdict(self.robot)),
                "params": _plain(dataclasses.asdict(self.params)),
                "noise_halfwidth_m": self.noise_halfwidth_m,
                "trials_per_config": self.trials_per_config,
                "keypoint_noise_m": self.keypoint_noise_m}

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        variant = doc.get("variant")
        if variant not in PARAMS:
            raise ConfigError(f"unknown task variant {variant!r}")
        base = default_task(variant)
        try:
            robot = dataclasses.replace(base.robot, **_tuples(doc.get("robot", {})))
            params = dataclasses.replace(base.params, **_tuples(doc.get("params", {})))
        except TypeError as exc:
            raise ConfigError(f"task: {exc}") from None
        unknown = set(doc) - {"variant", "robot", "params", "noise_halfwidth_m",
                              "trials_per_config", "keypoint_noise_m"}
        if unknown:
            raise ConfigError(f"task: unknown keys {sorted(unknown)}")
        return cls(variant, robot, params,
                   float(doc.get("noise_halfwidth_m", base.noise_halfwidth_m)),
                   int(doc.get("trials_per_config", base.trials_per_config)),
                   float(doc.get("keypoint_noise_m", 0.0)))


def _check_positive(obj, keys):
    for key in keys:
        v = getattr(obj, key)
        if v is not None and not v > 0:
            raise ConfigError(f"{key} must be positive, got {v}")


def _plain(d):
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _tuples(d):
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def default_task(variant) -> TaskSpec:
    if variant not in PARAMS:
        raise ConfigError(f"unknown task variant {variant!r}")
    return TaskSpec(variant, DEFAULT_ROBOT[variant], PARAMS[variant](), DEFAULT_NOISE[variant])


# --- rules -------------------------------------------------------------------


def _dim(tool, key):
    """Current physical value of a family dimension."""
    f = tool.features.get(key)
    value = tool.feature_assignment[key]
    return value if f.absolute else tool.nominal[key] * value


def handle_tip_distance(tool, tip_error=(0.0, 0.0, 0.0)):
    kp = tool.keypoint_positions()
    h, t = kp["handle"], kp["tip"]
    return math.dist(h, tuple(a + b for a, b in zip(t, tip_error)))


def scoop_volume(tool):
    """Concavity volume of the head, (2/3) * length * width * bowl depth."""
    head = tool.part("head").shape
    return 2.0 / 3.0 * head.length * head.width * head.curvature_depth


def _pull(task, tool, offset, tip_error):
    r, p = task.robot, task.params
    if tool.mass_kg > r.payload_kg:
        return Outcome(False, "TooHeavy")
    if _dim(tool, "shaft_diameter") > r.gripper_max_opening_m:
        return Outcome(False, "GripperTooWide")
    puck = (p.puck_position[0] + offset[0], p.puck_position[1] + offset[1])
    dist = math.hypot(puck[0] - r.base_position[0], puck[1] - r.base_position[1])
    if dist > r.arm_reach_m + handle_tip_distance(tool, tip_error):
        return Outcome(False, "OutOfReach")
    if _dim(tool, "blade_length") < 2.0 * p.puck_radius:
        return Outcome(False, "NoHook")
    lo, hi = p.retention_angle_window_deg
    if not lo <= tool.feature_assignment["blade_shaft_angle"] <= hi:
        return Outcome(False, "NoRetention")
    if dist - p.pull_stroke_m > p.retrieve_radius_m:
        return Outcome(False, "OutOfReach")
    return SUCCESS


def _scoop(task, tool, offset, tip_error):
    r, p = task.robot, task.params
    if tool.mass_kg > r.payload_kg:
        return Outcome(False, "TooHeavy")
    if _dim(tool, "handle_cross_section_thickness") > r.gripper_max_opening_m:
        return Outcome(False, "GripperTooWide")
    if tool.part("head").shape.width > 2.0 * p.bowl_opening_radius_m - p.clearance_m:
        return Outcome(False, "HeadTooWide")
    # the candy rests on a paraboloid bowl floor; off-centre it sits shallower
    R = p.bowl_opening_radius_m
    rho = min(math.hypot(offset[0], offset[1]), R - p.candy_radius_m)
    depth = p.bowl_depth_m * (1.0 - (rho / R) ** 2) - tip_error[2]
    if tool.part("handle").shape.length < depth + p.clearance_m:
        return Outcome(False, "HandleTooShort")
    need = max(p.min_scoop_volume_m3, 4.0 / 3.0 * math.pi * p.candy_radius_m ** 3)
    if scoop_volume(tool) < need:
        return Outcome(False, "TooShallow")
    lo, hi = p.angle_window_deg
    if not lo <= tool.feature_assignment["handle_to_head_angle"] <= hi:
        return Outcome(False, "NoRetention")
    return SUCCESS


def _step(task, tool, offset, tip_error):
    r, p = task.robot, task.params
    box = tool.part("body").shape
    w, d, h = box.w, box.d, box.h
    # the platform lands off the gap centre by the lateral placement error
    if w / 2.0 + abs(offset[0]) > p.obstacle_gap_width_m / 2.0:
        return Outcome(False, "GapTooNarrow")
    lo, hi = p.required_stand_height_range_m
    if not lo <= h <= hi:
        return Outcome(False, "WrongHeight")
    if h > r.max_step_height_m:
        return Outcome(False, "WrongHeight")
    if w * d < r.foot_area_m2:
        return Outcome(False, "TopTooSmall")
    if d < r.stance_depth_m:
        return Outcome(False, "TopTooSmall")
    # CoM projection under the worst expected tilt must stay inside the footprint
    sway = tool.com[2] * math.tan(math.radians(p.max_tilt_deg))
    if sway > p.stability_margin * min(w, d) / 2.0:
        return Outcome(False, "Unstable")
    return SUCCESS


_RULES = {"pull": _pull, "scoop": _scoop, "step_reach": _step}


def check_family(task, tool):
    if tool.family != task.family:
        raise FamilyMismatch(f"{task.variant} task needs a {task.family} tool, got {tool.family}")


def evaluate(task: TaskSpec, tool, goal_offset=(0.0, 0.0), tip_error=(0.0, 0.0, 0.0)) -> Outcome:
    """Evaluate the rule conjunction with the goal object displaced by ``goal_offset``."""
    check_family(task, tool)
    return _RULES[task.variant](task, tool, goal_offset, tip_error)


def draw_noise(task, seed):
    """``(goal_offset, tip_error)`` drawn for one rollout seed."""
    return _draw(task.noise_halfwidth_m, task.keypoint_noise_m, seed)


@functools.lru_cache(maxsize=1 << 16)
def _draw(halfwidth, tip_sigma, seed):
    rng = random.Random(seed)
    offset = (rng.uniform(-halfwidth, halfwidth), rng.uniform(-halfwidth, halfwidth))
    tip = (0.0, 0.0, 0.0)
    if tip_sigma > 0:
        tip = (rng.gauss(0.0, tip_sigma), rng.gauss(0.0, tip_sigma), rng.gauss(0.0, tip_sigma))
    return offset, tip


def simulate(task: TaskSpec, tool, seed: int) -> Outcome:
    """One seeded rollout: jitter the goal, then apply the rules."""
    offset, tip = draw_noise(task, seed)
    return evaluate(task, tool, offset, tip)


def outcomes(task, tool, seeds):
    return [simulate(task, tool, s) for s in seeds]


def success_rate(task, tool, seeds) -> float:
    seeds = list(seeds)
    if not seeds:
        raise ValueError("success_rate needs at least one seed")
    return sum(o.success for o in outcomes(task, tool, seeds)) / len(seeds)
