"""Check the statistics against independent implementations.

Two arbiters: numpy's corrcoef (plus a closed-form expression) for Pearson
correlation, and a from-scratch Newton-fitted logistic regression for the
odds ratio.  Both run over large seeded random batches.
"""

import numpy as np
import pytest
from helpers_oracles import (
    logistic_odds_ratio,
    pearson_oracle,
    random_2x2_tables,
    random_series,
)

from indukt.analysis import PATTERNS, ContingencyTable, odds_ratio, pearson_r

N_INSTANCES = 1000
TOLERANCE = 1e-6


def table_for_train(a, b, c, d):
    """Encode a collapsed 2x2 (generator vs train success) as a full table."""
    counts = {pattern: 0 for pattern in PATTERNS}
    counts["SFSF"] = a
    counts["SFFF"] = b
    counts["FFSF"] = c
    counts["FFFF"] = d
    return ContingencyTable(counts=counts, total=a + b + c + d)


def table_for_test(a, b, c, d):
    counts = {pattern: 0 for pattern in PATTERNS}
    counts["SFFS"] = a
    counts["SFFF"] = b
    counts["FFFS"] = c
    counts["FFFF"] = d
    return ContingencyTable(counts=counts, total=a + b + c + d)


def test_pearson_against_numpy():
    for xs, ys in random_series(N_INSTANCES, seed=42):
        ours = pearson_r(xs, ys)
        reference = np.corrcoef(xs, ys)[0, 1]
        assert ours == pytest.approx(reference, abs=TOLERANCE)


def test_pearson_against_closed_form():
    for xs, ys in random_series(N_INSTANCES, seed=7):
        ours = pearson_r(xs, ys)
        reference = pearson_oracle(xs, ys)
        assert ours == pytest.approx(reference, abs=TOLERANCE)


def test_odds_ratio_against_logistic_fit_train():
    for a, b, c, d in random_2x2_tables(N_INSTANCES, seed=1):
        ours = odds_ratio(table_for_train(a, b, c, d), "implementor_train")
        reference = logistic_odds_ratio(a, b, c, d)
        assert not ours.degenerate
        assert ours.value == pytest.approx(reference, rel=TOLERANCE)


def test_odds_ratio_against_logistic_fit_test():
    for a, b, c, d in random_2x2_tables(N_INSTANCES, seed=2):
        ours = odds_ratio(table_for_test(a, b, c, d), "implementor_test")
        reference = logistic_odds_ratio(a, b, c, d)
        assert ours.value == pytest.approx(reference, rel=TOLERANCE)


def test_fixture_odds_ratio_against_logistic_fit():
    from indukt.analysis import load_table2_fixture

    table = load_table2_fixture()
    train = odds_ratio(table, "implementor_train")
    assert train.value == pytest.approx(logistic_odds_ratio(*train.cells), rel=TOLERANCE)
    test = odds_ratio(table, "implementor_test")
    assert test.value == pytest.approx(logistic_odds_ratio(*test.cells), rel=TOLERANCE)


def test_binary_series_correlation_matches_numpy():
    # the analysis module correlates 0/1 module-success series; make sure
    # the binary case agrees with numpy too
    from random import Random

    rng = Random(3)
    for _ in range(200):
        n = rng.randint(4, 60)
        xs = [float(rng.random() < 0.5) for _ in range(n)]
        ys = [float(rng.random() < 0.5) for _ in range(n)]
        ours = pearson_r(xs, ys)
        if len(set(xs)) == 1 or len(set(ys)) == 1:
            assert ours is None
            continue
        assert ours == pytest.approx(np.corrcoef(xs, ys)[0, 1], abs=TOLERANCE)
