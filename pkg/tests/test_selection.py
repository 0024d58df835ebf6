import numpy as np
import pytest
from scipy.stats import chi2

from coarrange.arrangement import Designation
from coarrange.data import AssociationMatrix, BlocksConfig, generate_blocks
from coarrange.errors import ConfigError, DataError
from coarrange.metrics import BlocksEvaluator
from coarrange.selection import (SelectionConfig, load_selection, run_selection_experiment,
                                 save_selection, select_examples)
from coarrange.trainer import TrainConfig

from conftest import chi2_pvalue


def pick_counts(sel, n_groups, n_other, by="focus"):
    counts = np.zeros((n_groups, n_other))
    g = sel.focus if by == "focus" else sel.context
    o = sel.context if by == "focus" else sel.focus
    np.add.at(counts, (g, o), 1)
    return counts


@pytest.mark.parametrize("mode", ["independent", "coordinated"])
def test_single_row_marginal(mode):
    kappa = AssociationMatrix.from_dense([[1.0, 2.0, 3.0, 4.0]])
    rows, _ = select_examples(kappa, SelectionConfig(20_000, mode, seed=1))
    counts = np.bincount(rows.context, minlength=4)
    assert chi2_pvalue(counts, np.array([1, 2, 3, 4]) / 10) > 0.001


@pytest.mark.parametrize("mode", ["independent", "coordinated"])
def test_marginals_match_row_and_column_shares(mode):
    rng = np.random.default_rng(3)
    dense = np.where(rng.random((5, 5)) < 0.6, rng.choice([1.0, 2.0, 4.0], (5, 5)), 0.0)
    dense[np.arange(5), np.arange(5)] = 1.0  # no empty rows or columns
    kappa = AssociationMatrix.from_dense(dense)
    rows, cols = select_examples(kappa, SelectionConfig(50_000, mode, seed=2))
    # pooled goodness of fit over all rows (then all columns)
    for counts, shares in ((pick_counts(rows, 5, 5, "focus"), dense / dense.sum(1, keepdims=True)),
                           (pick_counts(cols, 5, 5, "context"),
                            (dense / dense.sum(0, keepdims=True)).T)):
        mask = shares > 0
        assert counts[~mask].sum() == 0
        exp = shares * counts.sum(1, keepdims=True)
        stat = ((counts - exp)[mask] ** 2 / exp[mask]).sum()
        df = int(mask.sum() - 5)
        assert chi2.sf(stat, df) > 0.01


def test_coordinated_identical_rows_pick_identically():
    dense = np.array([[1.0, 2.0, 0.0, 3.0], [1.0, 2.0, 0.0, 3.0], [0.0, 1.0, 1.0, 0.0]])
    rows, _ = select_examples(AssociationMatrix.from_dense(dense),
                              SelectionConfig(200, "coordinated", seed=0))
    a = rows.context[rows.focus == 0]
    b = rows.context[rows.focus == 1]
    np.testing.assert_array_equal(a, b)


def test_independent_identical_rows_differ():
    dense = np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])
    rows, _ = select_examples(AssociationMatrix.from_dense(dense),
                              SelectionConfig(200, "independent", seed=0))
    assert not np.array_equal(rows.context[rows.focus == 0], rows.context[rows.focus == 1])


def test_coordinated_overlap_of_binary_rows_is_jaccard(half_overlap):
    # for 0/1 rows the shared race picks the same column w.p. J
    rows, _ = select_examples(half_overlap, SelectionConfig(20_000, "coordinated", seed=4))
    same = (rows.context[rows.focus == 0] == rows.context[rows.focus == 1]).mean()
    assert abs(same - 0.5) < 0.015


def test_selection_shape_and_reps(small):
    rows, cols = select_examples(small, SelectionConfig(3, "coordinated"))
    assert len(rows) == 3 * small.n_focus and len(cols) == 3 * small.n_context
    assert rows.designation is Designation.FOCUS and cols.designation is Designation.CONTEXT
    np.testing.assert_array_equal(np.bincount(rows.focus), np.full(small.n_focus, 3))
    np.testing.assert_array_equal(np.bincount(cols.context), np.full(small.n_context, 3))
    assert np.all(small.contains(rows.focus, rows.context))
    assert np.all(small.contains(cols.focus, cols.context))
    assert set(rows.rep.tolist()) == {0, 1, 2}


def test_selection_errors():
    kappa = AssociationMatrix(2, 2, [0], [0], [1.0])
    with pytest.raises(DataError):
        select_examples(kappa, SelectionConfig(1))
    with pytest.raises(ConfigError):
        SelectionConfig(0)
    with pytest.raises(ConfigError):
        SelectionConfig(1, "random")


def test_selection_deterministic(small):
    a = select_examples(small, SelectionConfig(4, "coordinated", seed=9))
    b = select_examples(small, SelectionConfig(4, "coordinated", seed=9))
    np.testing.assert_array_equal(a[0].context, b[0].context)
    np.testing.assert_array_equal(a[1].focus, b[1].focus)


def test_selection_file_round_trip(tmp_path, small):
    rows, cols = select_examples(small, SelectionConfig(2, "independent", seed=1))
    for sel in (rows, cols):
        p = tmp_path / f"{sel.designation.value}.txt"
        save_selection(sel, small, p)
        back = load_selection(p)
        assert back.designation is sel.designation
        np.testing.assert_array_equal(back.focus, sel.focus)
        np.testing.assert_array_equal(back.context, sel.context)
        np.testing.assert_array_equal(back.rep, sel.rep)


def test_run_selection_experiment_trains_without_bias():
    cfg = BlocksConfig(40, 4, 4000, 0.8, seed=0)
    kappa = generate_blocks(cfg)
    ev = BlocksEvaluator(cfg.labels(), n_pairs=300, precision=False)
    tc = TrainConfig(dim=8, batch=8, neg=3, lr=0.05, budget=30_000, bias=True)
    traj = run_selection_experiment(kappa, SelectionConfig(5, "coordinated"), tc, ev)
    assert traj.model.bias is None
    assert traj.meta["selection_mode"] == "coordinated"
    assert traj.counters.updates >= 30_000
