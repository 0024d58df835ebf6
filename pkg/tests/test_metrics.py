import numpy as np
import pytest

from coarrange.arrangement import Designation, coo_draw_batch, ind_draw_batch
from coarrange.data import AssociationMatrix, split_train_test
from coarrange.errors import EvaluationError, ParseError, ThresholdError
from coarrange.metrics import (BlockMembership, BlocksEvaluator, MetricSample, PairMembership,
                               SplitEvaluator, SubEpochCounts, Trajectory, cosine_gap,
                               cosine_move_experiment, empirical_jaccard, first_reach,
                               precision_at_k, training_gain)
from coarrange.trainer import EmbeddingModel

F = Designation.FOCUS


def model_from(focus, context):
    return EmbeddingModel(np.asarray(focus, dtype=np.float32),
                          np.asarray(context, dtype=np.float32))


# -- cosine gap -----------------------------------------------------------------

def test_cosine_gap_hand_computed():
    m = model_from([[1, 0], [0, 2]], [[3, 0], [1, 1], [0, -1]])
    # positives: cos(f0,c0)=1, cos(f1,c1)=1/sqrt2 ; negatives: cos(f0,c2)=0, cos(f1,c2)=-1
    gap = cosine_gap(m, [[0, 0], [1, 1]], [[0, 2], [1, 2]])
    assert gap == pytest.approx((1 + 2 ** -0.5) / 2 - (-0.5))


def test_cosine_gap_identical_vectors_is_zero():
    m = model_from([[1, 1], [1, 1]], [[2, 2], [2, 2]])
    assert cosine_gap(m, [[0, 0]], [[1, 1]]) == pytest.approx(0.0)


def test_cosine_gap_zero_vector_names_entity():
    m = model_from([[1, 0], [0, 0]], [[1, 0]])
    with pytest.raises(EvaluationError, match="focus entity 1"):
        cosine_gap(m, [[1, 0]], [[0, 0]])
    with pytest.raises(EvaluationError):
        cosine_gap(m, np.empty((0, 2)), [[0, 0]])


# -- precision at k -------------------------------------------------------------

def test_precision_hand_computed():
    # two tight clusters in 2-d
    focus = [[1, 0.1], [1, 0.2], [1, 0.0], [0.1, 1], [0.2, 1], [-1, 0.05]]
    m = model_from(focus, np.eye(2))
    labels = np.array([0, 0, 0, 1, 1, 1])
    p = precision_at_k(m, BlockMembership(labels), k=2)
    # entity 5 points away from both clusters; its two neighbours are
    # computed here by brute force instead of by hand
    f = np.array(focus, dtype=float)
    f /= np.linalg.norm(f, axis=1, keepdims=True)
    expect = []
    for i in range(6):
        sims = f @ f[i]
        sims[i] = -np.inf
        top = np.argsort(-sims, kind="stable")[:2]
        expect.append(np.mean(labels[top] == labels[i]))
    assert p == pytest.approx(np.mean(expect))
    assert p == pytest.approx((1 + 1 + 1 + 0.5 + 0.5 + expect[5]) / 6)


def test_precision_perfect_clusters():
    rng = np.random.default_rng(0)
    centers = np.eye(3) * 10
    labels = np.repeat(np.arange(3), 5)
    focus = centers[labels] + rng.normal(0, 0.1, (15, 3))
    assert precision_at_k(model_from(focus, np.eye(3)), BlockMembership(labels), k=4) == 1.0


def test_precision_pair_membership_excludes_seen():
    m = model_from([[1, 0], [0, 1]], [[1, 0], [0.9, 0.1], [0, 1], [0.1, 0.9]])
    seen = AssociationMatrix.from_dense([[1, 0, 0, 0], [0, 0, 0, 0]])
    rel = {0: np.array([1]), 1: np.array([2])}
    # entity 0 ranks c1 first once c0 is hidden; entity 1 ranks c2 first
    assert precision_at_k(m, PairMembership(rel, seen), k=1) == 1.0
    assert precision_at_k(m, PairMembership(rel, None), k=1) == 0.5


def test_precision_errors():
    m = model_from([[1, 0], [0, 1]], [[1, 0]])
    with pytest.raises(EvaluationError):
        precision_at_k(m, BlockMembership(np.array([0, 1])), k=2)
    with pytest.raises(EvaluationError):
        precision_at_k(m, BlockMembership(np.array([0, 1])), k=1, min_degree=5,
                       degrees=np.array([1, 1]))


# -- trajectories and gains ----------------------------------------------------

def traj(xs, ys, name="t"):
    t = Trajectory(meta={"name": name})
    for x, y in zip(xs, ys):
        t.append(MetricSample(x, y))
    return t


def test_first_reach_interpolates():
    t = traj([0, 100, 200], [0.0, 0.4, 0.8])
    assert first_reach(t, 0.6) == pytest.approx(150.0)
    assert first_reach(t, 0.4) == pytest.approx(100.0)
    assert first_reach(t, -1.0) == 0.0
    with pytest.raises(ThresholdError):
        first_reach(t, 0.9)


def test_training_gain_shifted_curves():
    base = traj([0, 100, 200, 300, 400], [0.0, 0.25, 0.5, 0.75, 1.0])
    fast = traj([0, 100, 200, 300, 400], [0.0, 0.5, 1.0, 1.0, 1.0])
    # method peak 1.0: baseline reaches 0.75 at 300, method at 150
    assert training_gain(base, fast, 0.75) == pytest.approx(50.0)
    assert training_gain(base, base, 0.75) == 0.0
    assert training_gain(fast, base, 0.75) == pytest.approx(-100.0)
    with pytest.raises(ThresholdError):
        training_gain(traj([0, 1], [0.0, 0.1]), fast, 0.75)


def test_training_gain_explicit_peak():
    base = traj([0, 100], [0.0, 1.0])
    method = traj([0, 100], [0.0, 2.0])
    assert training_gain(base, method, 0.5, peak=1.0) == pytest.approx(50.0)


def test_trajectory_csv_round_trip(tmp_path):
    t = Trajectory(meta={"method": "coo", "seed": "3"})
    t.append(MetricSample(0, 0.0, None))
    t.append(MetricSample(640, 0.1 + 0.2, 1 / 3, 0.5))
    p = tmp_path / "t.csv"
    t.write_csv(p)
    text = p.read_text()
    assert text.splitlines()[:3] == ["# method=coo", "# seed=3",
                                     "updates,cosine_gap,precision_at_k,seconds"]
    back = Trajectory.read_csv(p)
    assert back.meta == t.meta
    assert back.samples == t.samples
    assert back.to_csv() == text


def test_trajectory_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("updates,cosine_gap,precision_at_k,seconds\n10,abc,,\n")
    with pytest.raises(ParseError) as info:
        Trajectory.read_csv(p)
    assert info.value.line == 2
    p.write_text("wrong header\n")
    with pytest.raises(ParseError):
        Trajectory.read_csv(p)


def test_trajectory_rejects_decreasing_updates():
    t = traj([0, 10], [0, 0])
    with pytest.raises(ValueError):
        t.append(MetricSample(5, 0.0))


# -- sub-epoch similarity ---------------------------------------------------------

def test_sub_epoch_counts_and_empirical_jaccard(half_overlap):
    mbs = list(coo_draw_batch(half_overlap, F, 30, np.random.default_rng(0)))
    X = SubEpochCounts.from_microbatches(mbs, 2, 10)
    dense = np.zeros((2, 10))
    for mb in mbs:
        np.add.at(dense, (mb.focus, mb.context), 1)
    np.testing.assert_array_equal(X.row(0), dense[0])
    np.testing.assert_array_equal(X.col(3), dense[:, 3])
    empty = SubEpochCounts.from_microbatches([], 2, 10)
    assert empirical_jaccard(empty, 0, 1) is None


def test_small_ind_sample_often_sees_no_overlap(half_overlap):
    """Eight IND draws (about four per row) give empirical Jaccard 0 with exact probability

    sum_k C(5,k) 2^k (-1)^(5-k) (k+5)^8 / 15^8, counting draw sequences in
    which no shared column is hit by both rows (exponential generating
    function (2e^x - 1)^5 e^(5x) over the 15 positive cells).
    """
    from math import comb
    exact = sum(comb(5, k) * 2 ** k * (-1) ** (5 - k) * (k + 5) ** 8 for k in range(6)) / 15 ** 8
    rng = np.random.default_rng(1)
    n = 3000
    zeros = 0
    for _ in range(n):
        X = SubEpochCounts.from_microbatches(ind_draw_batch(half_overlap, 8, rng), 2, 10)
        zeros += empirical_jaccard(X, 0, 1) == 0
    assert abs(zeros / n - exact) < 3 * np.sqrt(exact * (1 - exact) / n)


def collection_jaccards(kappa, draw, n_collections, size, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_collections):
        X = SubEpochCounts.from_microbatches(draw(kappa, size, rng), 2, 10)
        j = empirical_jaccard(X, 0, 1)
        if j is not None:
            out.append(j)
    return np.array(out)


def test_coo_collections_preserve_half_overlap_jaccard(half_overlap):
    js = collection_jaccards(half_overlap, lambda k, n, r: coo_draw_batch(k, F, n, r), 4000, 10, 2)
    assert abs(js.mean() - 0.5) <= 0.02


def test_ind_collections_underestimate_half_overlap_jaccard(half_overlap):
    js = collection_jaccards(half_overlap, lambda k, n, r: ind_draw_batch(k, n, r), 4000, 4, 3)
    # one-sided t-test of mean < 0.5 at alpha = 0.01
    t = (js.mean() - 0.5) / (js.std(ddof=1) / np.sqrt(js.size))
    assert t < -2.33


def test_cosine_move_positive():
    assert cosine_move_experiment(20, 0.05, 20_000, np.random.default_rng(0)) > 0
    with pytest.raises(ValueError):
        cosine_move_experiment(1, 0.05, 10, np.random.default_rng(0))


# -- evaluators -----------------------------------------------------------------

def test_blocks_evaluator_pairs_respect_labels():
    labels = np.repeat(np.arange(4), 5)
    ev = BlocksEvaluator(labels, n_pairs=300, seed=1)
    assert np.all(labels[ev.positives[:, 0]] == labels[ev.positives[:, 1]])
    assert np.all(labels[ev.negatives[:, 0]] != labels[ev.negatives[:, 1]])
    rng = np.random.default_rng(0)
    m = model_from(rng.normal(size=(20, 3)), rng.normal(size=(20, 3)))
    gap, prec = ev(m)
    assert np.isfinite(gap) and 0 <= prec <= 1


def test_split_evaluator(small):
    split = split_train_test(small, 0.3, seed=0)
    rng = np.random.default_rng(0)
    m = model_from(rng.normal(size=(6, 3)), rng.normal(size=(5, 3)))
    gap, prec = SplitEvaluator(split, k=1, min_degree=0)(m)
    assert np.isfinite(gap)
    assert prec is None or 0 <= prec <= 1
