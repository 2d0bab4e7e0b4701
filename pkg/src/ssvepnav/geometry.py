"""Pinhole photogrammetry: monocular distance, angle of view and the forward
projection the simulator uses as its surrogate detector.

Conventions: image x is measured from the image center, rightward positive.
World headings are standard counter-clockwise radians; an object right of the
optical axis projects to x > 0 and the robot must rotate by -AoV to face it.
The projector uses tan() for x while the estimator uses the linear x/f' small
angle model; the discrepancy is <= 2% for |bearing| <= 0.2 rad.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DetectionError, ParameterError

NEAR_PLANE_M = 0.2
BOX_ASPECT = 0.6  # surrogate box width as a fraction of its height


@dataclass(frozen=True)
class CameraModel:
    focal_length_m: float = 0.003
    sensor_height_m: float = 0.0025
    image_height_px: int = 960
    image_width_px: int = 1280

    def __post_init__(self):
        if self.focal_length_m <= 0 or self.sensor_height_m <= 0:
            raise ParameterError("focal length and sensor height must be positive")
        if self.image_height_px < 1 or self.image_width_px < 1:
            raise ParameterError("image dimensions must be >= 1 px")

    @property
    def focal_length_px(self) -> float:
        return derived_focal_px(self)


@dataclass(frozen=True)
class BoundingBox:
    center_x_px: float  # from image center, rightward positive
    center_y_px: float
    width_px: float
    height_px: float

    def __post_init__(self):
        if self.width_px <= 0 or self.height_px <= 0:
            raise ParameterError("bounding box dimensions must be positive")


def derived_focal_px(camera: CameraModel) -> float:
    """Focal length in pixels: image height times f over sensor height."""
    return camera.image_height_px * camera.focal_length_m / camera.sensor_height_m


def estimate_distance(camera: CameraModel, object_height_m: float,
                      image_height_px: float) -> float:
    """Distance to an object of known physical height from its box height."""
    if object_height_m <= 0:
        raise ParameterError(f"object height must be positive, got {object_height_m}")
    if image_height_px <= 0:
        raise DetectionError(
            f"degenerate detection: image height {image_height_px} px; re-detect"
        )
    return derived_focal_px(camera) * object_height_m / image_height_px


def angle_of_view(camera: CameraModel, center_x_px: float) -> float:
    """Signed bearing (rad) of a detection from the optical axis, linear model."""
    return center_x_px / derived_focal_px(camera)


def project_object(camera: CameraModel, robot_pose, obj,
                   near_plane_m: float = NEAR_PLANE_M) -> BoundingBox | None:
    """Pinhole projection of a world object into the image plane.

    Returns None when the object is behind the near plane or its box does not
    fit inside the frame (too close / outside the field of view).
    """
    dx = obj.x - robot_pose.x
    dy = obj.y - robot_pose.y
    dist = math.hypot(dx, dy)
    if dist <= 0:
        return None
    bearing_ccw = _normalize_angle(math.atan2(dy, dx) - robot_pose.heading)
    z_cam = dist * math.cos(bearing_ccw)
    if z_cam <= near_plane_m:
        return None
    # rightward-positive image x: objects clockwise of the heading have x > 0
    x_px = -derived_focal_px(camera) * math.tan(bearing_ccw)
    height_px = derived_focal_px(camera) * obj.height_m / z_cam
    width_px = BOX_ASPECT * height_px
    if height_px > camera.image_height_px:
        return None
    if abs(x_px) + width_px / 2 > camera.image_width_px / 2:
        return None
    return BoundingBox(center_x_px=x_px, center_y_px=0.0,
                       width_px=width_px, height_px=height_px)


def _normalize_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    r = math.fmod(a, 2.0 * math.pi)
    if r <= -math.pi:
        r += 2.0 * math.pi
    elif r > math.pi:
        r -= 2.0 * math.pi
    return r
