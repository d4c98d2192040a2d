"""Glue between the dataset records and the lifting/scoring/evaluation steps."""

import numpy as np

from .errors import ParseError
from .evaluation import mpjpe, oracle_poses
from .lifter import sample_candidates_batch
from .ordinal import (
    DEFAULT_EPSILON_MM,
    corrupt_ordinals,
    format_ordinal,
    ordinal_from_pose,
    ordinal_score,
    parse_ordinal,
    sanitize,
)
from .pose import center_at_hip
from .skeleton import H36M_SKELETON

DEFAULT_T_GRID = (0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 0.9, 1.5, 3.0)


def ground_truth_poses(records, skeleton=H36M_SKELETON):
    return center_at_hip(np.stack([r.pose3d for r in records]), skeleton)


def gt_references(records, epsilon=DEFAULT_EPSILON_MM, skeleton=H36M_SKELETON):
    return [
        r.ordinal if r.ordinal is not None
        else ordinal_from_pose(r.pose3d, epsilon, skeleton.scoring_joints)
        for r in records
    ]


def noisy_references(references, item_ids, accuracy, rng):
    """Corrupt each reference independently; item streams keep results order-free."""
    return [corrupt_ordinals(ref, accuracy, rng.child(i)) for ref, i in zip(references, item_ids)]


def draw_candidates(model, records, k, rng):
    """``(M, k, 17, 3)`` candidates; item ``i`` draws from ``rng.child(item_id)``."""
    pose2d = np.stack([r.pose2d for r in records])
    streams = [rng.child(r.item_id) for r in records]
    return sample_candidates_batch(model, pose2d, k, streams)


def ordinal_predictions(candidates, references, temperature, skeleton=H36M_SKELETON):
    return np.stack([
        ordinal_score(c, ref, temperature, skeleton.scoring_joints)[0]
        for c, ref in zip(candidates, references)
    ])


def predict_methods(candidates, gts, refs_gt, refs_pred, t_gt, t_pred, skeleton=H36M_SKELETON):
    """Final poses under oracle, both ordinal sources and the uniform MEAN."""
    return {
        "oracle": oracle_poses(candidates, gts),
        "ordinal-gt": ordinal_predictions(candidates, refs_gt, t_gt, skeleton),
        "ordinal-pred": ordinal_predictions(candidates, refs_pred, t_pred, skeleton),
        "mean": candidates.mean(axis=1),
    }


def tune_temperature(candidates, gts, references, grid=DEFAULT_T_GRID, skeleton=H36M_SKELETON):
    """Exhaustive sweep; returns ``(best_t, errors)`` with the first minimum winning."""
    errors = [float(mpjpe(ordinal_predictions(candidates, references, t, skeleton), gts).mean())
              for t in grid]
    return float(grid[int(np.argmin(errors))]), errors


# --- per-item ordinal file ------------------------------------------------


def write_ordinal_file(path, items):
    """``items`` maps item id to matrix; blocks are ``ITEM <id>`` + ``ORDINAL``."""
    lines = []
    for item_id, m in items.items():
        lines.append(f"ITEM {item_id}")
        lines += format_ordinal(m)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))


def read_ordinal_file(path, epsilon=DEFAULT_EPSILON_MM):
    """Read predicted ordinals; raw codes are sanitized, ``0`` stays masked."""
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    out = {}
    i = 0
    while i < len(lines):
        head = lines[i].split(" ")
        if len(head) != 2 or head[0] != "ITEM":
            raise ParseError("expected 'ITEM <id>'", i + 1, path)
        m, used = parse_ordinal(lines[i + 1 :], i + 2, path, epsilon)
        clean = sanitize(m.codes, epsilon)
        clean.mask &= m.mask & m.mask.T
        np.fill_diagonal(clean.mask, True)
        out[head[1]] = clean
        i += 1 + used
    return out
