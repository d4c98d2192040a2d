"""Pose error metrics, report assembly, sample-count ablations and diversity."""

from dataclasses import dataclass, field
import csv
import io

import numpy as np

from .errors import DegenerateConfiguration, DimensionMismatch, TooFewSamples
from .lifter import SampleSet
from .ordinal import mean_pose, oracle_select, ordinal_score
from .skeleton import H36M_SKELETON

METHODS = ("oracle", "ordinal-gt", "ordinal-pred", "mean", "baseline")


def _pair(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"prediction {pred.shape} vs ground truth {gt.shape}")
    return pred, gt


def mpjpe(pred, gt):
    """Mean per-joint Euclidean distance (mm). Works on ``(..., N, 3)``."""
    pred, gt = _pair(pred, gt)
    return np.linalg.norm(pred - gt, axis=-1).mean(axis=-1)


def similarity_transform(pred, gt, with_scale=True):
    """Least-squares ``(s, R, t)`` with ``s R pred + t ~ gt`` and det(R) = +1."""
    pred, gt = _pair(pred, gt)
    mp, mg = pred.mean(axis=0), gt.mean(axis=0)
    x, y = pred - mp, gt - mg
    for name, pts in (("prediction", x), ("ground truth", y)):
        sv = np.linalg.svd(pts, compute_uv=False)
        if sv.size < 2 or sv[1] <= 1e-9 * max(sv[0], 1e-300):
            raise DegenerateConfiguration(f"{name} joints are collinear or coincident")
    u, s, vt = np.linalg.svd(y.T @ x)
    d = np.ones(3)
    d[2] = np.sign(np.linalg.det(u @ vt)) or 1.0
    rot = u @ np.diag(d) @ vt
    scale = float((s * d).sum() / (x**2).sum()) if with_scale else 1.0
    t = mg - scale * rot @ mp
    return scale, rot, t


def procrustes_align(pred, gt, with_scale=True):
    scale, rot, t = similarity_transform(pred, gt, with_scale)
    return scale * np.asarray(pred, dtype=np.float64) @ rot.T + t


def pa_mpjpe(pred, gt, with_scale=True):
    return float(mpjpe(procrustes_align(pred, gt, with_scale), gt))


@dataclass
class EvalReport:
    item_ids: list
    actions: list
    errors: np.ndarray
    metric: str
    method: str

    def __post_init__(self):
        self.errors = np.asarray(self.errors, dtype=np.float64)
        if np.any(self.errors < 0):
            raise ValueError("errors must be non-negative")

    @property
    def mean(self):
        return float(self.errors.mean()) if self.errors.size else float("nan")

    def per_action(self):
        out = {}
        for a in sorted(set(self.actions)):
            sel = [i for i, b in enumerate(self.actions) if b == a]
            out[a] = float(self.errors[sel].mean())
        return out


def evaluate(item_ids, actions, preds, gts, method, metric="mpjpe", with_scale=True):
    if metric == "mpjpe":
        errs = mpjpe(preds, gts)
    elif metric == "pa-mpjpe":
        errs = np.array([pa_mpjpe(p, g, with_scale) for p, g in zip(preds, gts)])
    else:
        raise ValueError(f"unknown metric {metric!r}")
    order = np.argsort(np.asarray(item_ids, dtype=object), kind="stable")
    return EvalReport([item_ids[i] for i in order], [actions[i] for i in order],
                      np.asarray(errs)[order], metric, method)


def reports_to_csv(reports):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["item_id", "action", "method", "metric", "error_mm"])
    for r in reports:
        for item, action, e in zip(r.item_ids, r.actions, r.errors):
            w.writerow([item, action, r.method, r.metric, f"{e:.6f}"])
    return buf.getvalue()


def format_table(reports):
    """Rows are methods, columns are actions plus the average."""
    actions = sorted({a for r in reports for a in r.actions})
    head = ["method", "metric"] + [a[:10] for a in actions] + ["Avg"]
    rows = []
    for r in reports:
        pa = r.per_action()
        rows.append([r.method, r.metric] + [f"{pa[a]:.1f}" if a in pa else "-" for a in actions]
                    + [f"{r.mean:.1f}"])
    widths = [max(len(str(c)) for c in col) for col in zip(head, *rows)]
    fmt = lambda row: "  ".join(str(c).rjust(w) for c, w in zip(row, widths))  # noqa: E731
    lines = [fmt(head), "  ".join("-" * w for w in widths)] + [fmt(r) for r in rows]
    return "\n".join(lines)


@dataclass
class AblationCurve:
    ks: list
    errors: dict = field(default_factory=dict)  # method -> list of errors aligned with ks

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.ks, self.ks[1:])):
            raise ValueError("sample counts must be strictly increasing")

    def to_csv(self):
        methods = list(self.errors)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k"] + methods)
        for i, k in enumerate(self.ks):
            w.writerow([k] + [f"{self.errors[m][i]:.6f}" for m in methods])
        return buf.getvalue()


def ablation_curve(candidates, gts, ks, references=None, temperatures=None, extra_sets=None,
                   skeleton=H36M_SKELETON):
    """Mean test error per method on nested candidate prefixes.

    ``candidates`` is ``(M, K_max, N, 3)``; prefixes ``[:k]`` give the nested
    sets. ``references`` maps an ordinal method name (e.g. ``"ordinal-gt"``)
    to per-item reference matrices, with its temperature in ``temperatures``.
    ``extra_sets`` maps further method names to their own ``(M, K_max, N, 3)``
    candidate arrays, evaluated with the oracle.
    """
    ks = sorted(ks)
    candidates = np.asarray(candidates)
    gts = np.asarray(gts, dtype=np.float64)
    if ks[-1] > candidates.shape[1]:
        raise ValueError(f"largest k={ks[-1]} exceeds {candidates.shape[1]} candidates")
    references = references or {}
    temperatures = temperatures or {}
    curve = AblationCurve(list(ks))
    curve.errors["oracle"] = [oracle_error(candidates[:, :k], gts) for k in ks]
    curve.errors["mean"] = [float(mpjpe(candidates[:, :k].mean(axis=1), gts).mean()) for k in ks]
    for name, refs in references.items():
        t = temperatures[name]
        row = []
        for k in ks:
            preds = np.stack([ordinal_score(c[:k], ref, t, skeleton.scoring_joints)[0]
                              for c, ref in zip(candidates, refs)])
            row.append(float(mpjpe(preds, gts).mean()))
        curve.errors[name] = row
    for name, sets in (extra_sets or {}).items():
        curve.errors[name] = [oracle_error(np.asarray(sets)[:, :k], gts) for k in ks]
    return curve


def oracle_poses(candidates, gts):
    return np.stack([oracle_select(c, g)[1] for c, g in zip(candidates, gts)])


def oracle_error(candidates, gts):
    return float(mpjpe(oracle_poses(candidates, gts), gts).mean())


def diversity_stats(samples):
    """Per-joint spread (norm of the three population axis stds) and MEAN pose."""
    cand = samples.candidates if isinstance(samples, SampleSet) else np.asarray(samples)
    if cand.shape[0] < 2:
        raise TooFewSamples("diversity needs at least two candidates")
    std = cand.std(axis=0)
    return np.linalg.norm(std, axis=-1), mean_pose(cand)
