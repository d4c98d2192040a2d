import warnings

import numpy as np
import pytest

from poselift import (
    OrdinalMatrix,
    RngStream,
    aggregate,
    corrupt_ordinals,
    mean_pose,
    oracle_select,
    ordinal_from_pose,
    sanitize,
    score,
    softmax_weights,
)
from poselift.errors import DimensionMismatch, EmptyList, InvalidCode, ParseError
from poselift.ordinal import (
    FARTHER,
    NEARER,
    SAME,
    ordinal_accuracy,
    ordinal_codes,
    ordinal_score,
    read_ordinal,
    score_candidates,
    write_ordinal,
)
from poselift.pipeline import read_ordinal_file, write_ordinal_file
from poselift.skeleton import H36M_SKELETON


def full(codes):
    codes = np.asarray(codes)
    return OrdinalMatrix(codes, np.ones(codes.shape, dtype=bool))


class TestCodes:
    def test_three_joint_example(self):
        codes = ordinal_codes([0.0, 150.0, 60.0], 100.0)
        assert codes.tolist() == [[3, 2, 3], [1, 3, 3], [3, 3, 3]]

    def test_threshold_is_inclusive(self):
        assert ordinal_codes([0.0, 100.0], 100.0)[0, 1] == SAME
        assert ordinal_codes([0.0, 100.5], 100.0)[0, 1] == NEARER

    def test_negative_epsilon(self):
        with pytest.raises(ValueError):
            ordinal_from_pose(np.zeros((3, 3)), -1.0)

    def test_scoring_joints_drop_extra(self):
        m = ordinal_from_pose(np.zeros((17, 3)), 100.0, H36M_SKELETON.scoring_joints)
        assert m.n == 16


class TestSanitize:
    def test_consistent_matrix_unchanged(self):
        raw = ordinal_codes([0.0, 300.0, -250.0, 40.0])
        m = sanitize(raw)
        assert np.array_equal(m.codes, raw) and m.mask.all()

    def test_contradicting_pair_masked_both_ways(self):
        raw = np.full((3, 3), SAME)
        raw[0, 1] = raw[1, 0] = FARTHER
        m = sanitize(raw)
        assert not m.mask[0, 1] and not m.mask[1, 0]
        assert m.mask.sum() == 7

    def test_diagonal_forced(self):
        raw = np.array([[1, 3], [3, 2]])
        m = sanitize(raw)
        assert np.all(np.diag(m.codes) == SAME) and m.mask.all()

    def test_invalid_code(self):
        with pytest.raises(InvalidCode):
            sanitize([[3, 4], [1, 3]])

    def test_non_square(self):
        with pytest.raises(DimensionMismatch):
            sanitize(np.full((2, 3), 3))


class TestScore:
    def test_bounds(self, rng):
        n = 16
        ref = ordinal_from_pose(rng.normal(0, 300, (n, 3)))
        for _ in range(20):
            s = score(ordinal_from_pose(rng.normal(0, 300, (n, 3))), ref)
            assert 0 <= s <= n * (n - 1)
        assert score(ref, ref) == n * (n - 1)

    def test_masked_pairs_do_not_count(self, rng):
        ref = ordinal_from_pose(rng.normal(0, 300, (5, 3)))
        ref.mask[:] = False
        assert score(ref, ref) == 0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            score(full(np.full((3, 3), 3)), full(np.full((4, 4), 3)))

    def test_vectorised_matches_scalar(self, rng):
        cand = rng.normal(0, 300, (6, 16, 3))
        ref = ordinal_from_pose(rng.normal(0, 300, (16, 3)))
        vec = score_candidates(cand, ref)
        assert vec.tolist() == [score(ordinal_from_pose(c), ref) for c in cand]

    def test_candidate_joint_count_checked(self, rng):
        ref = ordinal_from_pose(rng.normal(0, 300, (16, 3)))
        with pytest.raises(DimensionMismatch):
            score_candidates(rng.normal(size=(2, 17, 3)), ref)


class TestSoftmax:
    def test_empty(self):
        with pytest.raises(EmptyList):
            softmax_weights([], 1.0)

    def test_negative_temperature(self):
        with pytest.raises(ValueError):
            softmax_weights([1.0], -0.1)

    def test_equal_scores_uniform(self):
        assert np.allclose(softmax_weights([7.0] * 4, 2.5), 0.25)

    def test_higher_score_heavier(self):
        w = softmax_weights([10.0, 12.0, 11.0], 0.5)
        assert w[1] > w[2] > w[0]


class TestAggregate:
    def test_two_candidates(self):
        cand = np.stack([np.zeros((17, 3)), np.ones((17, 3))])
        assert np.allclose(aggregate(cand, [0.25, 0.75]), 0.75)

    def test_weight_count_checked(self):
        with pytest.raises(DimensionMismatch):
            aggregate(np.zeros((3, 17, 3)), [0.5, 0.5])

    def test_mean_pose_is_uniform_aggregate(self, rng):
        cand = rng.normal(0, 300, (9, 17, 3))
        assert np.array_equal(mean_pose(cand), aggregate(cand, np.full(9, 1.0 / 9)))


class TestOracle:
    def test_tie_goes_to_lowest_index(self):
        gt = np.zeros((17, 3))
        cand = np.stack([np.full((17, 3), 5.0), np.full((17, 3), -5.0), np.full((17, 3), 9.0)])
        assert oracle_select(cand, gt)[0] == 0

    def test_farther_candidate_changes_nothing(self, rng):
        gt = rng.normal(0, 300, (17, 3))
        cand = rng.normal(0, 300, (5, 17, 3))
        k, pose = oracle_select(cand, gt)
        more = np.concatenate([cand, (gt + 1e4)[None]])
        k2, pose2 = oracle_select(more, gt)
        assert k2 == k and np.array_equal(pose2, pose)

    def test_one_hot_weights_reproduce_oracle(self, rng):
        gt = rng.normal(0, 300, (17, 3))
        cand = rng.normal(0, 300, (6, 17, 3))
        k, pose = oracle_select(cand, gt)
        w = np.zeros(6)
        w[k] = 1.0
        assert np.array_equal(aggregate(cand, w), pose)


class TestOrdinalScore:
    def test_fully_masked_reference_warns_and_is_uniform(self, rng):
        cand = rng.normal(0, 300, (4, 17, 3))
        ref = ordinal_from_pose(rng.normal(0, 300, (16, 3)))
        ref.mask[:] = False
        with pytest.warns(RuntimeWarning, match="masked"):
            pose, scored = ordinal_score(cand, ref, 5.0, H36M_SKELETON.scoring_joints)
        assert np.allclose(scored.weights, 0.25)
        assert np.allclose(pose, cand.mean(axis=0))

    def test_exact_candidate_dominates_at_high_temperature(self, rng):
        gt = rng.normal(0, 400, (17, 3))
        cand = np.concatenate([rng.normal(0, 400, (5, 17, 3)), gt[None]])
        ref = ordinal_from_pose(gt, 100.0, H36M_SKELETON.scoring_joints)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            pose, scored = ordinal_score(cand, ref, 50.0, H36M_SKELETON.scoring_joints)
        assert scored.scores[-1] == 240
        assert np.allclose(pose, gt, atol=1e-6)


class TestCorrupt:
    def test_full_accuracy_is_identity(self, rng):
        gt = ordinal_from_pose(rng.normal(0, 300, (16, 3)))
        out = corrupt_ordinals(gt, 1.0, RngStream(0))
        assert np.array_equal(out.codes, gt.codes)

    def test_empirical_accuracy(self, rng):
        stream = RngStream(3)
        hits = total = 0
        while total < 10_000:
            gt = ordinal_from_pose(rng.normal(0, 300, (16, 3)))
            acc = ordinal_accuracy(corrupt_ordinals(gt, 0.868, stream), gt)
            hits += acc * 120
            total += 120
        assert abs(hits / total - 0.868) <= 0.01

    def test_output_is_consistent(self, rng):
        gt = ordinal_from_pose(rng.normal(0, 300, (16, 3)))
        out = corrupt_ordinals(gt, 0.5, RngStream(1))
        assert sanitize(out.codes).mask.all()

    @pytest.mark.parametrize("acc", [0.0, 1.5])
    def test_accuracy_range(self, acc):
        with pytest.raises(ValueError):
            corrupt_ordinals(full(np.full((3, 3), 3)), acc, RngStream(0))


class TestTextFormat:
    def test_round_trip_with_masked_entries(self, tmp_path, rng):
        m = ordinal_from_pose(rng.normal(0, 300, (6, 3)))
        m.mask[1, 4] = m.mask[4, 1] = False
        write_ordinal(tmp_path / "o.txt", m)
        text = (tmp_path / "o.txt").read_text()
        assert text.startswith("ORDINAL 6\n")
        assert text.split("\n")[2].split(" ")[4] == "0"
        assert read_ordinal(tmp_path / "o.txt") == m

    def test_bad_code_names_line(self, tmp_path):
        (tmp_path / "b").write_text("ORDINAL 2\n3 1\n2 7\n")
        with pytest.raises(ParseError, match="line 3"):
            read_ordinal(tmp_path / "b")

    def test_truncated(self, tmp_path):
        (tmp_path / "t").write_text("ORDINAL 3\n3 1 1\n")
        with pytest.raises(ParseError):
            read_ordinal(tmp_path / "t")

    def test_per_item_file(self, tmp_path, rng):
        items = {f"{i:06d}.0.r000": ordinal_from_pose(rng.normal(0, 300, (16, 3))) for i in range(3)}
        items["000001.0.r000"].mask[0, 5] = items["000001.0.r000"].mask[5, 0] = False
        write_ordinal_file(tmp_path / "o", items)
        back = read_ordinal_file(tmp_path / "o")
        assert list(back) == list(items)
        for k in items:
            assert back[k] == items[k]

    def test_per_item_file_sanitizes(self, tmp_path):
        (tmp_path / "o").write_text("ITEM a\nORDINAL 2\n3 1\n1 3\n")
        m = read_ordinal_file(tmp_path / "o")["a"]
        assert not m.mask[0, 1] and not m.mask[1, 0]

    def test_per_item_file_missing_header(self, tmp_path):
        (tmp_path / "o").write_text("ORDINAL 2\n3 1\n2 3\n")
        with pytest.raises(ParseError, match="line 1"):
            read_ordinal_file(tmp_path / "o")
