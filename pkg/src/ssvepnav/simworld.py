"""2D world, surrogate detector, robot kinematics and the navigation FSM.

World frame: x/y in meters, headings in counter-clockwise radians wrapped to
(-pi, pi]. Detections carry rightward-positive image coordinates, so facing a
detection means rotating the heading by minus its angle of view.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (NavigationFault, NoTargetError, ParameterError,
                     TransitionError)
from .geometry import BoundingBox, CameraModel, _normalize_angle, project_object
from .signal import ALL_CLASSES, StimulusClass

# Arrow stimulus mapping, fixed per session.
ARROW_TURNS = {
    StimulusClass.F10: "left",
    StimulusClass.F12: "right",
    StimulusClass.F15: "back",
}
TURN_CLASSES = {v: k for k, v in ARROW_TURNS.items()}
TURN_ANGLES = {"left": math.pi / 2, "right": -math.pi / 2, "back": math.pi}


@dataclass(frozen=True)
class WorldObject:
    id: str
    class_name: str
    x: float
    y: float
    height_m: float

    def __post_init__(self):
        if self.height_m <= 0:
            raise ParameterError(f"object {self.id}: height must be positive")


@dataclass(frozen=True)
class RobotPose:
    x: float
    y: float
    heading: float

    def __post_init__(self):
        object.__setattr__(self, "heading", _normalize_angle(self.heading))


@dataclass(frozen=True)
class PlanStep:
    kind: str  # "object" | "arrow"
    target_id: str | None = None
    turn: str | None = None

    def __post_init__(self):
        if self.kind == "object" and not self.target_id:
            raise ParameterError("object plan step needs a target_id")
        if self.kind == "arrow" and self.turn not in TURN_ANGLES:
            raise ParameterError(f"arrow plan step needs a turn, got {self.turn!r}")
        if self.kind not in ("object", "arrow"):
            raise ParameterError(f"unknown plan step kind {self.kind!r}")


@dataclass
class World:
    camera: CameraModel
    objects: list
    start_pose: RobotPose
    plan: list = field(default_factory=list)
    name: str = "world"

    def __post_init__(self):
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ParameterError("world object ids must be unique")
        for step in self.plan:
            if step.kind == "object" and self.find(step.target_id) is None:
                raise ParameterError(f"plan targets unknown object {step.target_id!r}")

    def find(self, object_id: str) -> WorldObject | None:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        return None


def load_world(path) -> World:
    with open(path) as fh:
        doc = json.load(fh)
    cam = CameraModel(**doc.get("camera", {}))
    objects = [WorldObject(**o) for o in doc["objects"]]
    sp = doc["start_pose"]
    pose = RobotPose(x=sp["x"], y=sp["y"], heading=sp["heading"])
    plan = [PlanStep(**p) for p in doc.get("plan", [])]
    return World(camera=cam, objects=objects, start_pose=pose, plan=plan,
                 name=doc.get("name", "world"))


def save_world(world: World, path) -> None:
    doc = {
        "name": world.name,
        "camera": {
            "focal_length_m": world.camera.focal_length_m,
            "sensor_height_m": world.camera.sensor_height_m,
            "image_height_px": world.camera.image_height_px,
            "image_width_px": world.camera.image_width_px,
        },
        "objects": [
            {"id": o.id, "class_name": o.class_name, "x": o.x, "y": o.y,
             "height_m": o.height_m}
            for o in world.objects
        ],
        "start_pose": {"x": world.start_pose.x, "y": world.start_pose.y,
                       "heading": world.start_pose.heading},
        "plan": [
            {"kind": s.kind, "target_id": s.target_id, "turn": s.turn}
            for s in world.plan
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)


@dataclass
class DetectorNoise:
    """Seeded Gaussian jitter on surrogate box center/height (pixels)."""

    sigma_px: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        self._rng = np.random.default_rng(self.rng_seed)

    def jitter(self) -> float:
        return float(self._rng.normal(0.0, self.sigma_px))


@dataclass(frozen=True)
class Detection:
    object_id: str
    class_name: str
    bbox: BoundingBox
    stimulus: StimulusClass | None = None


def detect_objects(world: World, pose: RobotPose, camera: CameraModel | None = None,
                   noise: DetectorNoise | None = None) -> list:
    """Surrogate detector: exact projections, optional jitter, left-to-right."""
    camera = camera or world.camera
    detections = []
    for obj in world.objects:
        box = project_object(camera, pose, obj)
        if box is None:
            continue
        if noise is not None and noise.sigma_px > 0:
            box = BoundingBox(
                center_x_px=box.center_x_px + noise.jitter(),
                center_y_px=box.center_y_px + noise.jitter(),
                width_px=box.width_px,
                height_px=max(1.0, box.height_px + noise.jitter()),
            )
        detections.append(Detection(object_id=obj.id, class_name=obj.class_name,
                                    bbox=box))
    detections.sort(key=lambda d: d.bbox.center_x_px)
    return detections


def assign_frequencies(detections: list) -> list:
    """Leftmost detection gets F10, then F12, then F15; extras stay unassigned."""
    out = []
    for i, det in enumerate(detections):
        stim = ALL_CLASSES[i] if i < len(ALL_CLASSES) else None
        out.append(replace(det, stimulus=stim))
    return out


@dataclass(frozen=True)
class StepParams:
    step_len: float = 0.2
    stop_distance: float = 0.5
    max_steps: int = 100


def step_walk(pose: RobotPose, z: float, aov: float,
              params: StepParams = StepParams()) -> list:
    """Rotate by aov, then advance in step_len increments toward a point z
    meters ahead until within stop_distance. Returns the pose sequence
    (including the start pose); no-op when already within stop_distance.
    """
    if z <= params.stop_distance:
        return [pose]
    heading = _normalize_angle(pose.heading + aov)
    target_x = pose.x + z * math.cos(heading)
    target_y = pose.y + z * math.sin(heading)
    current = RobotPose(x=pose.x, y=pose.y, heading=heading)
    poses = [pose, current]
    for _ in range(params.max_steps):
        dist = math.hypot(target_x - current.x, target_y - current.y)
        if dist <= params.stop_distance:
            return poses
        current = RobotPose(x=current.x + params.step_len * math.cos(heading),
                            y=current.y + params.step_len * math.sin(heading),
                            heading=heading)
        poses.append(current)
    raise NavigationFault(
        f"target not reached within {params.max_steps} steps (z={z:.2f} m)"
    )


def apply_arrow(pose: RobotPose, command: StimulusClass) -> RobotPose:
    """Turn in place: F10 left (+pi/2), F12 right (-pi/2), F15 back (+pi)."""
    turn = ARROW_TURNS[command]
    return RobotPose(x=pose.x, y=pose.y,
                     heading=_normalize_angle(pose.heading + TURN_ANGLES[turn]))


# --- navigation state machine ------------------------------------------------

@dataclass(frozen=True)
class ObjectStimuli:
    pass


@dataclass(frozen=True)
class ArrowStimuli:
    pass


@dataclass(frozen=True)
class WalkingToObject:
    target_id: str
    z: float
    aov: float


@dataclass(frozen=True)
class Turning:
    turn: str


@dataclass(frozen=True)
class Done:
    pass


@dataclass(frozen=True)
class Decoded:
    """A decoded stimulus. target carries (target_id, z, aov) for the matching
    object detection, or None when no displayed stimulus matches."""

    stimulus: StimulusClass
    target: tuple | None = None


@dataclass(frozen=True)
class Arrived:
    objects_visible: bool


@dataclass(frozen=True)
class TurnComplete:
    objects_visible: bool


@dataclass(frozen=True)
class PlanComplete:
    pass


def nav_transition(state, event):
    """Advance the navigation FSM; raises on illegal (state, event) pairs.

    NoTargetError (decode with no matching stimulus) leaves the state
    unchanged at the caller; the trial is logged as failed.
    """
    if isinstance(event, PlanComplete):
        return Done()
    if isinstance(state, ObjectStimuli):
        if isinstance(event, Decoded):
            if event.target is None:
                raise NoTargetError(
                    f"no displayed object carries {event.stimulus.name}"
                )
            return WalkingToObject(*event.target)
    elif isinstance(state, ArrowStimuli):
        if isinstance(event, Decoded):
            return Turning(turn=ARROW_TURNS[event.stimulus])
    elif isinstance(state, WalkingToObject):
        if isinstance(event, Arrived):
            return ObjectStimuli() if event.objects_visible else ArrowStimuli()
    elif isinstance(state, Turning):
        if isinstance(event, TurnComplete):
            return ObjectStimuli() if event.objects_visible else ArrowStimuli()
    raise TransitionError(
        f"event {type(event).__name__} not legal in state {type(state).__name__}"
    )
