"""Synthetic motion-capture style poses, virtual-camera projection, splits and
dataset files.

Poses come from forward kinematics over a fixed bone table with per-joint
Euler angles sampled inside scenario-specific limits. The ``mirror``
scenario emits pairs of poses that project to identical 2D joints: selected
limb joints are moved to the second intersection of their camera ray with
the sphere of admissible positions around the (possibly moved) parent.

Bone lengths below are plausible adult values, not measured data.
"""

from dataclasses import dataclass, field
import logging

import numpy as np

from .errors import ParseError
from .ordinal import DEFAULT_EPSILON_MM, format_ordinal, ordinal_from_pose, parse_ordinal
from .pose import (
    DEFAULT_CAMERA,
    center_at_hip,
    format_floats,
    parse_floats,
    project_perspective,
    rotate_about_vertical,
)
from .skeleton import H36M_SKELETON

log = logging.getLogger(__name__)

# unit direction in the body frame and length (mm) of the bone ending at each joint;
# body frame: x = subject's left, y = down, z = behind the subject (facing -z)
REST_BONES = {
    1: ((-1.0, 0.0, 0.0), 130.0),   # r_hip
    2: ((0.0, 1.0, 0.0), 450.0),    # r_knee
    3: ((0.0, 1.0, 0.0), 440.0),    # r_ankle
    4: ((1.0, 0.0, 0.0), 130.0),    # l_hip
    5: ((0.0, 1.0, 0.0), 450.0),    # l_knee
    6: ((0.0, 1.0, 0.0), 440.0),    # l_ankle
    7: ((0.0, -1.0, 0.0), 240.0),   # spine
    8: ((0.0, -1.0, 0.0), 250.0),   # thorax
    9: ((0.0, -1.0, 0.0), 115.0),   # neck_nose
    10: ((0.0, -1.0, 0.0), 115.0),  # head
    11: ((1.0, 0.0, 0.0), 150.0),   # l_shoulder
    12: ((0.0, 1.0, 0.0), 280.0),   # l_elbow
    13: ((0.0, 1.0, 0.0), 250.0),   # l_wrist
    14: ((-1.0, 0.0, 0.0), 150.0),  # r_shoulder
    15: ((0.0, 1.0, 0.0), 280.0),   # r_elbow
    16: ((0.0, 1.0, 0.0), 250.0),   # r_wrist
}

# Anatomical limits in degrees, (low, high) about the x, y, z axes of the
# rotation applied to the bone ending at that joint. Joint 0 is the global
# body orientation apart from yaw, which is sampled uniformly.
ANATOMICAL_LIMITS = {
    0: ((-15, 15), (0, 0), (-10, 10)),
    2: ((-110, 30), (-30, 30), (-40, 10)),    # right thigh
    3: ((0, 130), (0, 0), (0, 0)),            # right shank
    5: ((-110, 30), (-30, 30), (-10, 40)),    # left thigh
    6: ((0, 130), (0, 0), (0, 0)),
    7: ((-20, 45), (-30, 30), (-20, 20)),
    8: ((-15, 30), (-20, 20), (-15, 15)),
    9: ((-30, 30), (-40, 40), (-20, 20)),
    10: ((-30, 30), (-20, 20), (-20, 20)),
    12: ((-180, 60), (-90, 90), (-150, 10)),  # left upper arm
    13: ((-150, 0), (-60, 60), (0, 0)),       # left forearm
    15: ((-180, 60), (-90, 90), (-10, 150)),  # right upper arm
    16: ((-150, 0), (-60, 60), (0, 0)),
}

# Per-scenario shrink factor applied to each group's limits (every range
# contains the rest angle 0, so shrinking keeps samples inside the limits).
SCENARIOS = {
    "stand": {"legs": 0.1, "arms": 0.25, "torso": 0.2},
    "walk": {"legs": 0.45, "arms": 0.4, "torso": 0.25},
    "reach": {"legs": 0.2, "arms": 1.0, "torso": 0.5},
    "crouch": {"legs": 1.0, "arms": 0.5, "torso": 0.8},
}
_GROUPS = {"legs": (2, 3, 5, 6), "arms": (12, 13, 15, 16), "torso": (7, 8, 9, 10)}

MIRROR_CHAINS = ((12, 13), (15, 16), (2, 3), (5, 6))


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    pose_count: int = 1000
    mirror_fraction: float = 0.5
    camera_distance: float = 5500.0
    rotations: tuple = (90.0, 180.0, 270.0)
    scenarios: tuple = ("stand", "walk", "reach", "crouch")
    bone_lengths: dict = field(default_factory=lambda: {j: L for j, (_, L) in REST_BONES.items()})
    limits: dict = field(default_factory=lambda: dict(ANATOMICAL_LIMITS))
    min_mirror_mpjpe: float = 50.0
    epsilon_mm: float = DEFAULT_EPSILON_MM

    def __post_init__(self):
        if self.pose_count < 1:
            raise ValueError("pose_count must be >= 1")
        if any(L <= 0 for L in self.bone_lengths.values()):
            raise ValueError("bone lengths must be positive")
        if not 0.0 <= self.mirror_fraction <= 1.0:
            raise ValueError("mirror_fraction must lie in [0, 1]")
        for j, lims in self.limits.items():
            ref = ANATOMICAL_LIMITS.get(j)
            for (lo, hi), (rlo, rhi) in zip(lims, ref or lims):
                if lo > hi or lo < rlo or hi > rhi:
                    raise ValueError(f"angle range for joint {j} exceeds anatomical limits")


@dataclass
class SyntheticSet:
    """Root-centred poses with scenario labels and pair groups."""

    poses: np.ndarray  # (M, 17, 3)
    actions: list
    groups: list  # poses sharing a group id are mirror partners
    members: list

    def __len__(self):
        return self.poses.shape[0]


@dataclass
class DatasetRecord:
    item_id: str
    action: str
    pose3d: np.ndarray  # (17, 3) camera frame, mm
    pose2d: np.ndarray  # (16, 2) pixels
    ordinal: object = None

    @property
    def group(self):
        return self.item_id.split(".", 1)[0]


def _rot(axis, deg):
    t = np.deg2rad(deg)
    c, s = np.cos(t), np.sin(t)
    if axis == 0:
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    if axis == 1:
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def euler(angles):
    """``Rz @ Ry @ Rx`` for degrees ``(x, y, z)``."""
    return _rot(2, angles[2]) @ _rot(1, angles[1]) @ _rot(0, angles[0])


def forward_kinematics(angles, bone_lengths=None, yaw=0.0, skeleton=H36M_SKELETON):
    """Root-centred joint positions from per-joint Euler angles (degrees).

    ``angles`` maps a joint index to its ``(x, y, z)`` rotation; joint 0 is
    the body orientation. Missing joints are unrotated.
    """
    bone_lengths = bone_lengths or {j: L for j, (_, L) in REST_BONES.items()}
    glob = {0: _rot(1, yaw) @ euler(angles.get(0, (0, 0, 0)))}
    pos = np.zeros((skeleton.num_joints, 3))
    for j in skeleton.topological_order()[1:]:
        p = skeleton.parent_index[j]
        glob[j] = glob[p] @ euler(angles.get(j, (0, 0, 0)))
        direction, _ = REST_BONES[j]
        pos[j] = pos[p] + glob[j] @ (np.asarray(direction) * bone_lengths[j])
    return pos


def _sample_angles(config, scenario, rng):
    shrink = SCENARIOS.get(scenario, {})
    angles = {}
    for j, lims in config.limits.items():
        group = next((g for g, js in _GROUPS.items() if j in js), None)
        f = shrink.get(group, 1.0)
        angles[j] = tuple(rng.uniform(lo * f, hi * f) for lo, hi in lims)
    return angles


def _ray_solutions(ray, parent, length):
    """Depths ``t`` with ``|t * ray - parent| = length`` (``ray`` unit), or None."""
    b = ray @ parent
    disc = b * b - (parent @ parent - length * length)
    if disc < 0:
        return None
    r = np.sqrt(disc)
    return b - r, b + r


def mirror_partner(pose, camera_distance, bone_lengths=None, chains=MIRROR_CHAINS,
                   skeleton=H36M_SKELETON):
    """Depth-flip the joints in ``chains`` so every joint keeps its camera ray.

    ``pose`` is root-centred; the root is placed at ``(0, 0, camera_distance)``.
    Returns the root-centred partner, or None when a chain has no second
    solution.
    """
    bone_lengths = bone_lengths or {j: L for j, (_, L) in REST_BONES.items()}
    placed = center_at_hip(pose, skeleton) + np.array([0.0, 0.0, camera_distance])
    out = placed.copy()
    for chain in chains:
        for n, j in enumerate(chain):
            p = skeleton.parent_index[j]
            orig_t = np.linalg.norm(placed[j])
            ray = placed[j] / orig_t
            roots = _ray_solutions(ray, out[p], bone_lengths[j])
            if roots is None:
                return None
            # the root farther from the original depth is the mirrored one
            t = max(roots, key=lambda r: abs(r - orig_t))
            out[j] = t * ray
    return out - out[skeleton.root_index]


def generate_synthetic(config, rng, skeleton=H36M_SKELETON):
    """Sample ``config.pose_count`` root-centred poses.

    With probability ``mirror_fraction`` a slot (when two remain) is filled by
    a mirror pair that projects identically at ``camera_distance`` under the
    default camera orientation.
    """
    poses, actions, groups, members = [], [], [], []
    group = 0
    attempts = 0
    while len(poses) < config.pose_count:
        scenario = config.scenarios[int(rng.integers(len(config.scenarios)))]
        angles = _sample_angles(config, scenario, rng)
        yaw = rng.uniform(-180.0, 180.0)
        pose = forward_kinematics(angles, config.bone_lengths, yaw, skeleton)
        want_pair = (config.pose_count - len(poses) >= 2
                     and rng.random() < config.mirror_fraction)
        if want_pair:
            attempts += 1
            partner = mirror_partner(pose, config.camera_distance, config.bone_lengths,
                                     skeleton=skeleton)
            if partner is None or _mpjpe(pose, partner) <= config.min_mirror_mpjpe:
                if attempts > 1000 * config.pose_count:
                    raise RuntimeError("could not construct mirror pairs; check the bone table")
                continue
            poses += [pose, partner]
            actions += [f"{scenario}-mirror"] * 2
            groups += [group, group]
            members += [0, 1]
        else:
            poses.append(pose)
            actions.append(scenario)
            groups.append(group)
            members.append(0)
        group += 1
    return SyntheticSet(np.stack(poses), actions, groups, members)


def _mpjpe(a, b):
    return float(np.linalg.norm(a - b, axis=-1).mean())


def build_dataset(synth, cameras=DEFAULT_CAMERA, config=SynthConfig(), skeleton=H36M_SKELETON):
    """Place, rotate, project and annotate each pose.

    Every pose yields one record for the unrotated view plus one per entry of
    ``config.rotations``, for each camera.
    """
    cams = [cameras] if not isinstance(cameras, (list, tuple)) else list(cameras)
    offset = np.array([0.0, 0.0, config.camera_distance])
    angles = [0.0] + [float(r) for r in config.rotations]
    records = []
    for i in range(len(synth)):
        placed = center_at_hip(synth.poses[i], skeleton) + offset
        for ci, cam in enumerate(cams):
            for deg in angles:
                p3 = rotate_about_vertical(placed, deg, skeleton)
                p2 = project_perspective(skeleton.to_2d(p3), cam)
                cam_tag = f".c{ci}" if len(cams) > 1 else ""
                rid = f"{synth.groups[i]:06d}.{synth.members[i]}{cam_tag}.r{int(round(deg)):03d}"
                ordm = ordinal_from_pose(p3, config.epsilon_mm, skeleton.scoring_joints)
                records.append(DatasetRecord(rid, synth.actions[i], p3, p2, ordm))
    return records


def split(records, train_fraction, rng):
    """Group-aware split: records sharing a group prefix stay together."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    groups = sorted({r.group for r in records})
    order = rng.permutation(len(groups))
    target = train_fraction * len(records)
    sizes = {}
    for r in records:
        sizes[r.group] = sizes.get(r.group, 0) + 1
    train_groups, count = set(), 0
    for gi in order:
        g = groups[gi]
        if count >= target:
            break
        train_groups.add(g)
        count += sizes[g]
    train = [r for r in records if r.group in train_groups]
    test = [r for r in records if r.group not in train_groups]
    return train, test


# --- dataset file ---------------------------------------------------------

DATASET_TAG = "records"


def write_dataset(records, path, skeleton=H36M_SKELETON):
    lines = [f"POSESET {DATASET_TAG} {skeleton.num_joints} {len(records)}"]
    for r in records:
        if " " in r.item_id or " " in r.action or not r.item_id or not r.action:
            raise ValueError(f"ids and actions must be non-empty without spaces: {r.item_id!r}")
        lines.append(f"REC {r.item_id} {r.action}")
        lines.append(format_floats(np.asarray(r.pose3d).ravel()))
        lines.append(format_floats(np.asarray(r.pose2d).ravel()))
        if r.ordinal is not None:
            lines += format_ordinal(r.ordinal)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_dataset(path, skeleton=H36M_SKELETON, epsilon=DEFAULT_EPSILON_MM):
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            text = fh.read()
    except UnicodeDecodeError as exc:
        raise ParseError(f"not UTF-8 text: {exc}", None, path) from None
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty file", 1, path)
    head = lines[0].split(" ")
    if len(head) != 4 or head[0] != "POSESET" or head[1] != DATASET_TAG:
        raise ParseError(f"header must be 'POSESET {DATASET_TAG} <joints> <records>'", 1, path)
    try:
        n_joints, n_rec = int(head[2]), int(head[3])
    except ValueError:
        raise ParseError("joint and record counts must be integers", 1, path) from None
    if n_joints != skeleton.num_joints:
        raise ParseError(f"expected {skeleton.num_joints} joints, header says {n_joints}", 1, path)
    n2 = skeleton.num_joints_2d
    records = []
    i = 1
    for _ in range(n_rec):
        if i >= len(lines):
            raise ParseError(f"file truncated: expected {n_rec} records", i + 1, path)
        rec = lines[i].split(" ")
        if len(rec) != 3 or rec[0] != "REC":
            raise ParseError("expected 'REC <id> <action>'", i + 1, path)
        if i + 2 >= len(lines):
            raise ParseError("record truncated", len(lines) + 1, path)
        p3 = np.reshape(parse_floats(lines[i + 1], n_joints * 3, i + 2, path), (n_joints, 3))
        p2 = np.reshape(parse_floats(lines[i + 2], n2 * 2, i + 3, path), (n2, 2))
        i += 3
        ordm = None
        if i < len(lines) and lines[i].startswith("ORDINAL"):
            ordm, used = parse_ordinal(lines[i:], i + 1, path, epsilon)
            i += used
        records.append(DatasetRecord(rec[1], rec[2], p3, p2, ordm))
    if i != len(lines):
        raise ParseError(f"trailing data after {n_rec} records", i + 1, path)
    return records


def stack_records(records):
    """``(pose2d (M,16,2), pose3d (M,17,3))`` arrays from records."""
    return (np.stack([r.pose2d for r in records]), np.stack([r.pose3d for r in records]))
