"""4-DoF camera poses and their conversions: Euler angles, quaternions,
normalized 6-number training labels.

Conventions (fixed so labels are reproducible bit-for-bit):
  * world axes: x/y on the ground plane, z up; 1 unit = 1 meter
  * yaw rotates about world-up (z), counter-clockwise from +x, in [0, 360)
  * pitch rotates about the camera-right axis, positive looks up
  * composition is yaw-then-pitch (intrinsic); roll is always 0
  * quaternions are unit, Hamilton convention (w, x, y, z), stored with a
    canonical sign: w > 0, or w == 0 and the first nonzero component > 0
"""

import math
from dataclasses import dataclass

from .errors import ConfigurationError

DEFAULT_CAMERA_HEIGHT = 1.7  # meters above ground


@dataclass(frozen=True)
class AOI:
    """Rectangular ground-plane area of interest, in meters."""

    x0: float
    y0: float
    width: float
    height: float

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ConfigurationError(
                f"AOI extent must be positive, got {self.width} x {self.height}"
            )

    def contains(self, x: float, y: float) -> bool:
        return (
            self.x0 <= x <= self.x0 + self.width
            and self.y0 <= y <= self.y0 + self.height
        )


@dataclass(frozen=True)
class Pose:
    """Camera pose: ground position (m), yaw/pitch (deg), fixed height (m).

    Roll is always 0. Yaw is normalized to [0, 360) on construction.
    """

    x: float
    y: float
    yaw: float
    pitch: float
    z: float = DEFAULT_CAMERA_HEIGHT

    def __post_init__(self):
        object.__setattr__(self, "yaw", float(self.yaw) % 360.0)


@dataclass(frozen=True)
class Quaternion:
    """Unit quaternion (w, x, y, z) with canonical sign."""

    w: float
    x: float
    y: float
    z: float

    def dot(self, other: "Quaternion") -> float:
        return self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def canonical(self) -> "Quaternion":
        """Flip sign so that w > 0, or w == 0 and the first nonzero > 0."""
        for c in (self.w, self.x, self.y, self.z):
            if c > 0.0:
                return self
            if c < 0.0:
                return Quaternion(-self.w, -self.x, -self.y, -self.z)
        return self

    def normalized(self) -> "Quaternion":
        n = self.norm()
        if n < 1e-12:
            raise ValueError("cannot normalize a zero-norm quaternion")
        return Quaternion(self.w / n, self.x / n, self.y / n, self.z / n).canonical()

    def rotate(self, v):
        """Rotate a 3-vector (tuple) by this quaternion."""
        w, qx, qy, qz = self.w, self.x, self.y, self.z
        vx, vy, vz = v
        # t = 2 * (q_vec x v)
        tx = 2.0 * (qy * vz - qz * vy)
        ty = 2.0 * (qz * vx - qx * vz)
        tz = 2.0 * (qx * vy - qy * vx)
        # v' = v + w*t + q_vec x t
        return (
            vx + w * tx + (qy * tz - qz * ty),
            vy + w * ty + (qz * tx - qx * tz),
            vz + w * tz + (qx * ty - qy * tx),
        )


@dataclass(frozen=True)
class PoseLabel:
    """6-number training label: position normalized to the AOI plus a quaternion.

    xn, yn are in [0, 1] for poses inside the AOI; predicted labels may fall
    outside and are kept as-is.
    """

    xn: float
    yn: float
    quat: Quaternion

    def as_tuple(self):
        q = self.quat
        return (self.xn, self.yn, q.w, q.x, q.y, q.z)

    @staticmethod
    def from_tuple(values) -> "PoseLabel":
        if len(values) != 6:
            raise ValueError(f"pose label needs 6 numbers, got {len(values)}")
        xn, yn, w, x, y, z = (float(v) for v in values)
        return PoseLabel(xn, yn, Quaternion(w, x, y, z))


def yaw_pitch_to_quat(yaw_deg: float, pitch_deg: float) -> Quaternion:
    """Quaternion for yaw about world-up composed with pitch about camera-right.

    Closed form of q_z(yaw) * q_axis(0,-1,0)(pitch), canonical sign applied.
    """
    t2 = math.radians(yaw_deg) * 0.5
    p2 = math.radians(pitch_deg) * 0.5
    ct, st = math.cos(t2), math.sin(t2)
    cp, sp = math.cos(p2), math.sin(p2)
    return Quaternion(ct * cp, st * sp, -ct * sp, st * cp).canonical()


def quat_to_yaw_pitch(q: Quaternion) -> tuple:
    """Inverse of yaw_pitch_to_quat for roll-free rotations.

    Recovers the angles from the rotated forward axis, so it is invariant to
    the q/-q sign ambiguity. At the pitch singularity (|pitch| = 90) yaw is
    reported as 0 by convention.

    Returns (yaw_deg in [0, 360), pitch_deg).
    """
    fx, fy, fz = q.rotate((1.0, 0.0, 0.0))
    pitch = math.degrees(math.asin(max(-1.0, min(1.0, fz))))
    if abs(fx) < 1e-12 and abs(fy) < 1e-12:
        return 0.0, pitch
    yaw = math.degrees(math.atan2(fy, fx)) % 360.0
    return yaw, pitch


def quat_angular_distance(a: Quaternion, b: Quaternion) -> float:
    """Angle in degrees between two rotations, in [0, 180]; sign-invariant."""
    d = min(1.0, abs(a.dot(b)))
    return math.degrees(2.0 * math.acos(d))


def pose_to_label(pose: Pose, aoi: AOI) -> PoseLabel:
    """Normalize position by the AOI extent and encode orientation as a quaternion."""
    if not aoi.contains(pose.x, pose.y):
        raise ValueError(
            f"pose ({pose.x}, {pose.y}) lies outside the AOI "
            f"[{aoi.x0}, {aoi.x0 + aoi.width}] x [{aoi.y0}, {aoi.y0 + aoi.height}]"
        )
    xn = (pose.x - aoi.x0) / aoi.width
    yn = (pose.y - aoi.y0) / aoi.height
    return PoseLabel(xn, yn, yaw_pitch_to_quat(pose.yaw, pose.pitch))


def label_to_pose(label: PoseLabel, aoi: AOI, z: float = DEFAULT_CAMERA_HEIGHT) -> Pose:
    """Invert pose_to_label, accepting raw network output.

    The quaternion is normalized first (raises ValueError on zero norm);
    normalized positions outside [0, 1] are mapped linearly without clamping.
    """
    q = label.quat.normalized()
    yaw, pitch = quat_to_yaw_pitch(q)
    return Pose(
        x=aoi.x0 + label.xn * aoi.width,
        y=aoi.y0 + label.yn * aoi.height,
        yaw=yaw,
        pitch=pitch,
        z=z,
    )
