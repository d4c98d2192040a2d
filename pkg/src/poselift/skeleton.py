"""Joint tables for the 17-joint 3D skeleton and its 16-joint 2D counterpart.

3D joint order (index: name, parent)::

     0 hip          (root)
     1 r_hip         0
     2 r_knee        1
     3 r_ankle       2
     4 l_hip         0
     5 l_knee        4
     6 l_ankle       5
     7 spine         0
     8 thorax        7
     9 neck_nose     8    <- only 3D joint without a 2D counterpart
    10 head          9
    11 l_shoulder    8
    12 l_elbow      11
    13 l_wrist      12
    14 r_shoulder    8
    15 r_elbow      14
    16 r_wrist      15

The 2D skeleton lists the same joints in the same order with ``neck_nose``
removed, so 2D index ``k`` maps to 3D index ``k`` for ``k < 9`` and to
``k + 1`` otherwise.
"""

from dataclasses import dataclass, field

import numpy as np

JOINT_NAMES_3D = (
    "hip", "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle",
    "spine", "thorax", "neck_nose", "head",
    "l_shoulder", "l_elbow", "l_wrist", "r_shoulder", "r_elbow", "r_wrist",
)
PARENTS_3D = (0, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15)
ROOT_INDEX = 0
EXTRA_JOINT = 9
NUM_JOINTS_3D = 17
NUM_JOINTS_2D = 16


@dataclass(frozen=True)
class Skeleton:
    joint_names: tuple
    parent_index: tuple
    root_index: int
    joint_map_2d3d: tuple  # 3D index for each 2D joint
    bone_pairs: tuple = field(default=())

    def __post_init__(self):
        n = len(self.joint_names)
        if len(self.parent_index) != n:
            raise ValueError("parent_index length must match joint_names")
        if self.parent_index[self.root_index] != self.root_index:
            raise ValueError("root joint must be its own parent")
        # every joint must reach the root without cycles
        for j in range(n):
            seen = set()
            k = j
            while k != self.root_index:
                if k in seen:
                    raise ValueError(f"cycle in parent table at joint {j}")
                seen.add(k)
                k = self.parent_index[k]
        if len(set(self.joint_map_2d3d)) != len(self.joint_map_2d3d):
            raise ValueError("joint_map_2d3d must be injective")
        if len(set(range(n)) - set(self.joint_map_2d3d)) != 1:
            raise ValueError("exactly one 3D joint must be unmapped")
        if not self.bone_pairs:
            pairs = tuple((j, self.parent_index[j]) for j in range(n) if j != self.root_index)
            object.__setattr__(self, "bone_pairs", pairs)

    @property
    def num_joints(self):
        return len(self.joint_names)

    @property
    def num_joints_2d(self):
        return len(self.joint_map_2d3d)

    @property
    def unmapped_joint(self):
        return (set(range(self.num_joints)) - set(self.joint_map_2d3d)).pop()

    @property
    def scoring_joints(self):
        """3D joints that have a 2D counterpart (ordinal matrices use these)."""
        return np.asarray(self.joint_map_2d3d, dtype=int)

    def children(self, j):
        return [k for k, p in enumerate(self.parent_index) if p == j and k != j]

    def topological_order(self):
        order = [self.root_index]
        i = 0
        while i < len(order):
            order.extend(self.children(order[i]))
            i += 1
        return order

    def to_2d(self, pose3d_like):
        """Select the 2D-mapped joints from an (..., 17, d) array."""
        return np.asarray(pose3d_like)[..., self.joint_map_2d3d, :]


H36M_SKELETON = Skeleton(
    joint_names=JOINT_NAMES_3D,
    parent_index=PARENTS_3D,
    root_index=ROOT_INDEX,
    joint_map_2d3d=tuple(j for j in range(NUM_JOINTS_3D) if j != EXTRA_JOINT),
)
