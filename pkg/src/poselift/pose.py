"""Pose containers and geometry: hip centering, normalization, projection.

Poses are plain numpy arrays: 3D poses are ``(N, 3)`` in millimetres in the
camera frame (x right, y down, z away from the camera), 2D poses are ``(N, 2)``
in pixels. Batched variants add leading axes.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCoordinate, DimensionMismatch, NonPositiveDepth, ParseError
from .skeleton import H36M_SKELETON

POSE2D = "pose2d"
POSE3D = "pose3d"
POSE3D_ROOTCENTERED = "pose3d-rootcentered"


@dataclass(frozen=True)
class CameraIntrinsics:
    focal: tuple = (1145.0, 1145.0)
    principal: tuple = (512.0, 512.0)

    def __post_init__(self):
        if not (self.focal[0] > 0 and self.focal[1] > 0):
            raise ValueError(f"focal lengths must be positive, got {self.focal}")


DEFAULT_CAMERA = CameraIntrinsics()


@dataclass(frozen=True)
class NormStats:
    """Per-coordinate mean/std over flattened pose vectors.

    ``std`` is the population estimator (divides by the sample count).
    """

    mean: np.ndarray
    std: np.ndarray
    space: str

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.shape != std.shape or mean.ndim != 1:
            raise DimensionMismatch("mean and std must be 1-D vectors of equal length")
        if not np.all(std > 0):
            raise DegenerateCoordinate("std must be strictly positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def dim(self):
        return self.mean.shape[0]

    def to_dict(self):
        return {"space": self.space, "mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["mean"]), np.array(d["std"]), d["space"])


def center_at_hip(pose, skeleton=H36M_SKELETON):
    pose = np.asarray(pose, dtype=np.float64)
    root = pose[..., skeleton.root_index : skeleton.root_index + 1, :]
    return pose - root


def fit_norm_stats(vectors, space=POSE3D_ROOTCENTERED):
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need at least two flattened pose vectors")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    bad = np.flatnonzero(std == 0)
    if bad.size:
        raise DegenerateCoordinate(f"zero variance in coordinate(s) {bad.tolist()}")
    return NormStats(mean, std, space)


def _check_dim(x, stats):
    if x.shape[-1] != stats.dim:
        raise DimensionMismatch(f"vector width {x.shape[-1]} != stats width {stats.dim}")


def normalize(x, stats):
    x = np.asarray(x, dtype=np.float64)
    _check_dim(x, stats)
    return (x - stats.mean) / stats.std


def denormalize(x, stats):
    x = np.asarray(x, dtype=np.float64)
    _check_dim(x, stats)
    return x * stats.std + stats.mean


def project_perspective(pose, cam=DEFAULT_CAMERA):
    """Pinhole projection of ``(..., N, 3)`` joints to ``(..., N, 2)`` pixels."""
    pose = np.asarray(pose, dtype=np.float64)
    z = pose[..., 2]
    if not np.all(z > 0):
        raise NonPositiveDepth(f"minimum joint depth {z.min():.3f} mm is not positive")
    u = cam.principal[0] + cam.focal[0] * pose[..., 0] / z
    v = cam.principal[1] + cam.focal[1] * pose[..., 1] / z
    return np.stack([u, v], axis=-1)


def _cos_sin(degrees):
    # exact values on the quarter turns so augmentations stay bit-stable
    d = float(degrees) % 360.0
    quarter = {0.0: (1.0, 0.0), 90.0: (0.0, 1.0), 180.0: (-1.0, 0.0), 270.0: (0.0, -1.0)}
    if d in quarter:
        return quarter[d]
    t = np.deg2rad(d)
    return np.cos(t), np.sin(t)


def vertical_rotation(degrees):
    """3x3 rotation about the camera's vertical (y) axis."""
    c, s = _cos_sin(degrees)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotate_about_vertical(pose, degrees, skeleton=H36M_SKELETON):
    """Rotate about the vertical axis through the root joint."""
    if not np.isfinite(degrees):
        raise ValueError("rotation angle must be finite")
    pose = np.asarray(pose, dtype=np.float64)
    if float(degrees) % 360.0 == 0.0:
        return pose.copy()
    root = pose[..., skeleton.root_index : skeleton.root_index + 1, :]
    return (pose - root) @ vertical_rotation(degrees).T + root


def bone_lengths(pose, skeleton=H36M_SKELETON):
    pose = np.asarray(pose, dtype=np.float64)
    child = [c for c, _ in skeleton.bone_pairs]
    parent = [p for _, p in skeleton.bone_pairs]
    return np.linalg.norm(pose[..., child, :] - pose[..., parent, :], axis=-1)


def flatten_nonroot(pose3d, skeleton=H36M_SKELETON):
    """Drop the root joint (always zero after centering) and flatten."""
    pose3d = np.asarray(pose3d)
    keep = [j for j in range(skeleton.num_joints) if j != skeleton.root_index]
    return pose3d[..., keep, :].reshape(*pose3d.shape[:-2], -1)


def unflatten_nonroot(vec, skeleton=H36M_SKELETON):
    vec = np.asarray(vec, dtype=np.float64)
    lead = vec.shape[:-1]
    joints = vec.reshape(*lead, skeleton.num_joints - 1, 3)
    out = np.zeros((*lead, skeleton.num_joints, 3))
    keep = [j for j in range(skeleton.num_joints) if j != skeleton.root_index]
    out[..., keep, :] = joints
    return out


# --- POSESET text format -------------------------------------------------


def _dims_for(space):
    return 2 if space.startswith(POSE2D) else 3


def format_floats(values):
    return " ".join(repr(float(v)) for v in values)


def parse_floats(line, expected, lineno, path=None):
    fields = line.split(" ")
    if len(fields) != expected:
        raise ParseError(f"expected {expected} values, found {len(fields)}", lineno, path)
    try:
        vals = [float(f) for f in fields]
    except ValueError as exc:
        raise ParseError(f"bad number: {exc}", lineno, path) from None
    if not all(np.isfinite(vals)):
        raise ParseError("non-finite coordinate", lineno, path)
    return vals


def write_poseset(path, poses, space):
    poses = np.asarray(poses, dtype=np.float64)
    d = _dims_for(space)
    if poses.ndim != 3 or poses.shape[2] != d:
        raise DimensionMismatch(f"{space} poses must have shape (M, N, {d})")
    lines = [f"POSESET {space} {poses.shape[1]} {poses.shape[0]}"]
    lines += [format_floats(p.ravel()) for p in poses]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_poseset(path):
    """Return ``(space, poses)`` with poses shaped ``(M, N, d)``."""
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty file", 1, path)
    head = lines[0].split(" ")
    if len(head) != 4 or head[0] != "POSESET":
        raise ParseError("header must be 'POSESET <space> <joints> <records>'", 1, path)
    space = head[1]
    try:
        n_joints, n_rec = int(head[2]), int(head[3])
    except ValueError:
        raise ParseError("joint and record counts must be integers", 1, path) from None
    d = _dims_for(space)
    if len(lines) - 1 < n_rec:
        raise ParseError(f"file truncated: expected {n_rec} records", len(lines) + 1, path)
    if len(lines) - 1 > n_rec:
        raise ParseError(f"trailing data after {n_rec} records", n_rec + 2, path)
    out = np.empty((n_rec, n_joints, d))
    for i in range(n_rec):
        out[i] = np.reshape(parse_floats(lines[i + 1], n_joints * d, i + 2, path), (n_joints, d))
    return space, out
