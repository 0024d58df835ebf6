import numpy as np
import pytest

from coarrange.data import AssociationMatrix


@pytest.fixture
def half_overlap():
    """Two rows with 5 shared positives out of 10 positive columns, equal values."""
    dense = np.zeros((2, 10))
    dense[0, :5] = 1.0
    dense[0, 5:7] = 1.0
    dense[1, :5] = 1.0
    dense[1, 7:10] = 1.0
    return AssociationMatrix.from_dense(dense)


@pytest.fixture
def small():
    """Seeded 6 x 5 matrix with weights in {1, 2, 4}, no empty rows or columns."""
    rng = np.random.default_rng(7)
    while True:
        mask = rng.random((6, 5)) < 0.55
        if mask.any(0).all() and mask.any(1).all():
            break
    dense = np.where(mask, rng.choice([1.0, 2.0, 4.0], size=mask.shape), 0.0)
    return AssociationMatrix.from_dense(dense)


def chi2_pvalue(observed, expected_prob):
    """Goodness-of-fit p-value, pooling cells whose expected count is below 5."""
    from scipy.stats import chisquare

    observed = np.asarray(observed, dtype=np.float64)
    exp = np.asarray(expected_prob, dtype=np.float64) * observed.sum()
    small = exp < 5
    if small.any():
        observed = np.append(observed[~small], observed[small].sum())
        exp = np.append(exp[~small], exp[small].sum())
    return chisquare(observed, exp).pvalue
