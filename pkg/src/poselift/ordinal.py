"""Pairwise joint-depth relations and the scoring/aggregation built on them.

Codes: ``1`` when joint i is farther than joint j (``D_i - D_j > eps``),
``2`` when nearer, ``3`` when the depths agree within ``eps``.
"""

from dataclasses import dataclass
import warnings

import numpy as np

from .errors import DimensionMismatch, EmptyList, InvalidCode, ParseError
from .lifter import SampleSet

FARTHER, NEARER, SAME = 1, 2, 3
DEFAULT_EPSILON_MM = 100.0
DEFAULT_T_GT = 0.9
DEFAULT_T_PRED = 0.3

_COMPLEMENT = np.array([0, NEARER, FARTHER, SAME], dtype=np.int8)


@dataclass
class OrdinalMatrix:
    codes: np.ndarray  # (N, N) int8 in {1, 2, 3}
    mask: np.ndarray  # (N, N) bool, True = usable
    epsilon: float = DEFAULT_EPSILON_MM

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.int8)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.codes.ndim != 2 or self.codes.shape[0] != self.codes.shape[1]:
            raise DimensionMismatch("ordinal codes must be a square matrix")
        if self.mask.shape != self.codes.shape:
            raise DimensionMismatch("mask shape must match codes")

    @property
    def n(self):
        return self.codes.shape[0]

    def usable_pairs(self):
        """Number of unmasked ordered off-diagonal pairs."""
        off = ~np.eye(self.n, dtype=bool)
        return int((self.mask & off).sum())

    def __eq__(self, other):
        if not isinstance(other, OrdinalMatrix):
            return NotImplemented
        return (
            self.codes.shape == other.codes.shape
            and np.array_equal(self.mask, other.mask)
            and np.array_equal(self.codes[self.mask], other.codes[other.mask])
        )


def ordinal_codes(depths, epsilon=DEFAULT_EPSILON_MM):
    """Codes for ``(..., N)`` depths, returned as ``(..., N, N)`` int8."""
    depths = np.asarray(depths, dtype=np.float64)
    diff = depths[..., :, None] - depths[..., None, :]
    codes = np.where(diff > 0, FARTHER, NEARER).astype(np.int8)
    codes[np.abs(diff) <= epsilon] = SAME
    return codes


def ordinal_from_pose(pose, epsilon=DEFAULT_EPSILON_MM, scoring_joints=None):
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    pose = np.asarray(pose, dtype=np.float64)
    if scoring_joints is not None:
        pose = pose[np.asarray(scoring_joints)]
    codes = ordinal_codes(pose[:, 2], epsilon)
    return OrdinalMatrix(codes, np.ones(codes.shape, dtype=bool), epsilon)


def _consistent(codes):
    valid = np.isin(codes, (FARTHER, NEARER, SAME))
    return valid & valid.T & (codes.T == _COMPLEMENT[np.where(valid, codes, 0)])


def sanitize(raw, epsilon=DEFAULT_EPSILON_MM):
    """Force the diagonal to ``3`` and mask pairs that contradict each other."""
    codes = np.array(raw, dtype=np.int64)
    if codes.ndim != 2 or codes.shape[0] != codes.shape[1]:
        raise DimensionMismatch("ordinal matrix must be square")
    bad = ~np.isin(codes, (FARTHER, NEARER, SAME))
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise InvalidCode(f"code {codes[i, j]} at ({i}, {j}) is not in {{1, 2, 3}}")
    np.fill_diagonal(codes, SAME)
    codes = codes.astype(np.int8)
    return OrdinalMatrix(codes, _consistent(codes), epsilon)


def score(candidate, reference):
    """Agreements over unmasked ordered off-diagonal pairs of ``reference``."""
    if candidate.codes.shape != reference.codes.shape:
        raise DimensionMismatch(f"{candidate.codes.shape} vs {reference.codes.shape}")
    use = reference.mask & ~np.eye(reference.n, dtype=bool)
    return int(((candidate.codes == reference.codes) & use).sum())


def score_candidates(candidates, reference, scoring_joints=None, epsilon=None):
    """Vectorised :func:`score` for ``(K, N, 3)`` candidate poses."""
    cand = candidates.candidates if isinstance(candidates, SampleSet) else np.asarray(candidates)
    if scoring_joints is not None:
        cand = cand[:, np.asarray(scoring_joints)]
    if cand.shape[1] != reference.n:
        raise DimensionMismatch(f"candidates have {cand.shape[1]} joints, reference {reference.n}")
    eps = reference.epsilon if epsilon is None else epsilon
    codes = ordinal_codes(cand[..., 2], eps)
    use = reference.mask & ~np.eye(reference.n, dtype=bool)
    return ((codes == reference.codes) & use).sum(axis=(1, 2))


def softmax_weights(scores, temperature):
    """``exp(T * s) / sum exp(T * s)`` with max-subtraction."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise EmptyList("no scores to weight")
    if temperature < 0:
        raise ValueError("temperature must be non-negative")
    if temperature == 0:
        return np.full(s.shape, 1.0 / s.size)
    e = np.exp(temperature * (s - s.max()))
    return e / e.sum()


def aggregate(samples, weights):
    cand = samples.candidates if isinstance(samples, SampleSet) else np.asarray(samples)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (cand.shape[0],):
        raise DimensionMismatch(f"{w.shape[0] if w.ndim else 0} weights for {cand.shape[0]} candidates")
    return np.tensordot(w, cand, axes=1)


def mean_pose(samples):
    cand = samples.candidates if isinstance(samples, SampleSet) else np.asarray(samples)
    return aggregate(cand, np.full(cand.shape[0], 1.0 / cand.shape[0]))


def oracle_select(samples, ground_truth):
    """Index and pose of the candidate nearest to ``ground_truth`` (flattened L2)."""
    cand = samples.candidates if isinstance(samples, SampleSet) else np.asarray(samples)
    gt = np.asarray(ground_truth, dtype=np.float64)
    d = np.sqrt(((cand - gt) ** 2).sum(axis=(1, 2)))
    k = int(np.argmin(d))  # first minimum wins ties
    return k, cand[k]


def ordinal_score(samples, reference, temperature, scoring_joints=None):
    """Score, weight and aggregate a sample set against reference ordinals.

    Returns ``(pose, scored)`` where ``scored`` carries scores and weights.
    """
    cand = samples.candidates if isinstance(samples, SampleSet) else np.asarray(samples)
    if reference.usable_pairs() == 0:
        warnings.warn("reference ordinal matrix is fully masked; using uniform weights",
                      RuntimeWarning, stacklevel=2)
    s = score_candidates(cand, reference, scoring_joints)
    w = softmax_weights(s, temperature)
    return aggregate(cand, w), SampleSet(cand, scores=s, weights=w)


def corrupt_ordinals(gt, target_accuracy, rng):
    """Replace each unordered pair, with probability ``1 - target_accuracy``,
    by a uniformly chosen different relation; both entries stay consistent."""
    if not 0.0 < target_accuracy <= 1.0:
        raise ValueError("target_accuracy must lie in (0, 1]")
    codes = gt.codes.copy()
    n = gt.n
    iu, ju = np.triu_indices(n, k=1)
    flip = rng.random(iu.size) < (1.0 - target_accuracy)
    shift = rng.integers(1, 3, size=iu.size)  # 1 or 2 steps around {1, 2, 3}
    old = codes[iu, ju].astype(np.int64)
    new = (old - 1 + shift) % 3 + 1
    upper = np.where(flip, new, old).astype(np.int8)
    codes[iu, ju] = upper
    codes[ju, iu] = _COMPLEMENT[upper]
    return OrdinalMatrix(codes, gt.mask.copy(), gt.epsilon)


def ordinal_accuracy(predicted, gt):
    """Fraction of unordered off-diagonal pairs whose relation matches."""
    iu, ju = np.triu_indices(gt.n, k=1)
    return float((predicted.codes[iu, ju] == gt.codes[iu, ju]).mean())


# --- text format ----------------------------------------------------------


def format_ordinal(m):
    lines = [f"ORDINAL {m.n}"]
    shown = np.where(m.mask, m.codes, 0)
    lines += [" ".join(str(int(c)) for c in row) for row in shown]
    return lines


def parse_ordinal(lines, start_lineno=1, path=None, epsilon=DEFAULT_EPSILON_MM):
    """Parse an ``ORDINAL N`` block from ``lines`` (header first).

    Returns ``(matrix, lines_consumed)``. Masked entries (``0``) keep a
    placeholder code of 3.
    """
    if not lines:
        raise ParseError("missing ORDINAL header", start_lineno, path)
    head = lines[0].split(" ")
    if len(head) != 2 or head[0] != "ORDINAL" or not head[1].isdigit():
        raise ParseError("expected 'ORDINAL <N>'", start_lineno, path)
    n = int(head[1])
    if len(lines) < n + 1:
        raise ParseError(f"ordinal block truncated: need {n} rows", start_lineno + len(lines), path)
    raw = np.zeros((n, n), dtype=np.int8)
    for r in range(n):
        fields = lines[r + 1].split(" ")
        lineno = start_lineno + r + 1
        if len(fields) != n:
            raise ParseError(f"expected {n} codes, found {len(fields)}", lineno, path)
        if any(f not in ("0", "1", "2", "3") for f in fields):
            raise ParseError("ordinal codes must be 0, 1, 2 or 3", lineno, path)
        raw[r] = [int(f) for f in fields]
    mask = raw != 0
    codes = np.where(mask, raw, SAME).astype(np.int8)
    return OrdinalMatrix(codes, mask, epsilon), n + 1


def write_ordinal(path, m):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(format_ordinal(m)) + "\n")


def read_ordinal(path, epsilon=DEFAULT_EPSILON_MM):
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    m, used = parse_ordinal(lines, 1, path, epsilon)
    if used != len(lines):
        raise ParseError("trailing data after ordinal block", used + 1, path)
    return m
