from __future__ import annotations

import math
import random
from importlib import resources

import numpy as np
import pytest

from draftforge import stats
from draftforge.stats import (
    EmptyInput,
    MissingCategory,
    PairedResult,
    RubricScore,
    TooFewPairs,
    UnbalancedDesign,
    paired_t_test,
    read_scores,
    render_table,
    summarize,
    t_p_two_sided,
    usability,
)


def t_p_oracle(t: float, df: int, points: int = 50_001) -> float:
    """Numeric-integration oracle for the two-sided t tail probability.

    Integrates the density from |t| to infinity under x = a + u/(1-u),
    independent of the incomplete-beta route used by the implementation.
    """
    a = abs(t)
    log_const = math.lgamma((df + 1) / 2) - math.lgamma(df / 2) - 0.5 * math.log(df * math.pi)
    const = math.exp(log_const)
    u = np.linspace(0.0, 1.0 - 1e-9, points)
    x = a + u / (1.0 - u)
    integrand = const * (1.0 + x * x / df) ** (-(df + 1) / 2) / (1.0 - u) ** 2
    h = u[1] - u[0]
    integral = (h / 3.0) * (
        integrand[0]
        + integrand[-1]
        + 4.0 * integrand[1:-1:2].sum()
        + 2.0 * integrand[2:-2:2].sum()
    )
    return 2.0 * integral


# --- paired t test ---------------------------------------------------------------------


def test_all_zero_differences_degenerate():
    r = paired_t_test([0.0] * 5)
    assert r.degenerate and r.p_two_sided == 1.0 and r.df == 4


def test_constant_nonzero_differences_degenerate():
    r = paired_t_test([0.3] * 5)
    assert r.degenerate and r.p_two_sided == 0.0


def test_two_point_case_closed_form():
    r = paired_t_test([1.0, 2.0])
    assert r.t == pytest.approx(3.0, abs=1e-12)
    assert r.df == 1
    # with one degree of freedom the CDF is 0.5 + arctan(t)/pi
    closed = 2 * (0.5 - math.atan(3.0) / math.pi)
    assert r.p_two_sided == pytest.approx(closed, abs=1e-12)
    assert r.p_two_sided == pytest.approx(0.2048, abs=1e-3)


def test_single_difference_rejected():
    with pytest.raises(TooFewPairs):
        paired_t_test([1.0])


def test_matches_integration_oracle_sample():
    rng = random.Random(7)
    for _ in range(100):
        n = rng.randint(2, 200)
        diffs = [rng.gauss(0.1, 1.0) for _ in range(n)]
        r = paired_t_test(diffs)
        if r.degenerate:
            continue
        assert r.p_two_sided == pytest.approx(t_p_oracle(r.t, r.df), abs=1e-6)


def test_oracle_agrees_with_df1_closed_form():
    for t in (0.5, 1.0, 3.0, 10.0):
        closed = 2 * (0.5 - math.atan(t) / math.pi)
        assert t_p_oracle(t, 1) == pytest.approx(closed, abs=1e-8)


def test_scale_invariance():
    diffs = [0.3, -0.2, 0.8, 0.1, -0.5]
    a = paired_t_test(diffs)
    b = paired_t_test([7.5 * d for d in diffs])
    assert a.t == pytest.approx(b.t, rel=1e-12)
    assert a.p_two_sided == pytest.approx(b.p_two_sided, rel=1e-12)


def test_p_symmetric_in_sign():
    diffs = [0.3, -0.2, 0.8, 0.1, -0.5]
    a = paired_t_test(diffs)
    b = paired_t_test([-d for d in diffs])
    assert b.t == pytest.approx(-a.t, rel=1e-12)
    assert b.p_two_sided == pytest.approx(a.p_two_sided, rel=1e-12)


# --- summarize ------------------------------------------------------------------------


def make_scores(per_pair: dict[str, tuple[float, float]], category="overall", rater="r1"):
    rows = []
    for pid, (u, a) in per_pair.items():
        rows.append(RubricScore(pid, "unassisted", rater, category, u))
        rows.append(RubricScore(pid, "assisted", rater, category, a))
    return rows


def test_constant_shift_gives_degenerate_zero_p():
    scores = make_scores({f"p{i}": (3.0, 3.3) for i in range(10)})
    (result,) = summarize(scores)
    assert result.mean_assisted - result.mean_unassisted == pytest.approx(0.3)
    assert result.degenerate and result.p_value_two_sided == 0.0


def test_missing_arm_rejected():
    scores = make_scores({"p1": (3.0, 3.5), "p2": (3.0, 3.5)})
    scores.append(RubricScore("p3", "assisted", "r1", "overall", 4.0))
    with pytest.raises(UnbalancedDesign):
        summarize(scores)


def test_rater_scores_averaged_first():
    rows = [
        RubricScore("p1", "unassisted", "r1", "overall", 3.0),
        RubricScore("p1", "unassisted", "r2", "overall", 5.0),
        RubricScore("p1", "assisted", "r1", "overall", 4.0),
        RubricScore("p2", "unassisted", "r1", "overall", 4.0),
        RubricScore("p2", "assisted", "r1", "overall", 4.0),
    ]
    (result,) = summarize(rows)
    assert result.mean_unassisted == pytest.approx(4.0)  # (avg(3,5) + 4) / 2
    assert result.n_pairs == 2


def test_summarize_permutation_invariant():
    rng = random.Random(3)
    scores = make_scores({f"p{i}": (3.0 + (i % 3) * 0.5, 3.4 + (i % 2) * 0.4) for i in range(12)})
    shuffled = scores[:]
    rng.shuffle(shuffled)
    assert summarize(scores) == summarize(shuffled)


def test_shift_equivariance():
    base = {f"p{i}": (3.0 + 0.1 * i, 3.2 + 0.15 * i) for i in range(8)}
    (before,) = summarize(make_scores(base))
    shifted = {k: (u, a + 0.5) for k, (u, a) in base.items()}
    (after,) = summarize(make_scores(shifted))
    gap_before = before.mean_assisted - before.mean_unassisted
    gap_after = after.mean_assisted - after.mean_unassisted
    assert gap_after - gap_before == pytest.approx(0.5, abs=1e-9)
    assert after.degrees_of_freedom == before.degrees_of_freedom


def test_duplicate_row_rejected():
    rows = [
        RubricScore("p1", "assisted", "r1", "overall", 4.0),
        RubricScore("p1", "assisted", "r1", "overall", 4.0),
    ]
    with pytest.raises(ValueError):
        summarize(rows)


def test_score_validation():
    with pytest.raises(ValueError):
        RubricScore("p", "assisted", "r", "overall", 5.5)
    with pytest.raises(ValueError):
        RubricScore("p", "sideways", "r", "overall", 4.0)
    with pytest.raises(ValueError):
        RubricScore("p", "assisted", "r", "style", 4.0)


# --- usability -------------------------------------------------------------------------


def test_usability_reference_numbers():
    summary = usability([4.46], [21.93], baseline_minutes=52.4540)
    assert summary.percent_of_baseline_time == pytest.approx(41.81, abs=0.01)
    assert summary.mean_minutes_saved == pytest.approx(21.93)


def test_usability_zero_saved():
    assert usability([4.0], [0.0], baseline_minutes=30).percent_of_baseline_time == 0.0


def test_usability_quarter():
    assert usability([4.0], [10.0], baseline_minutes=40).percent_of_baseline_time == pytest.approx(25.0)


def test_usability_without_baseline():
    assert usability([4.0, 5.0], [10.0]).percent_of_baseline_time is None


def test_usability_empty_rejected():
    with pytest.raises(EmptyInput):
        usability([], [1.0])
    with pytest.raises(EmptyInput):
        usability([1.0], [])


# --- table rendering ----------------------------------------------------------------------


def table1_results():
    raw = resources.files("draftforge").joinpath("fixtures", "table1_scores.csv").read_text()
    return summarize(read_scores(raw))


def test_table1_fixture_reproduces_published_means():
    table = render_table(table1_results())
    rows = table.splitlines()
    unassisted = rows[1]
    assisted = rows[2]
    for value in ("3.93", "3.73", "4.12", "4.11", "3.97", "3.75"):
        assert value in unassisted
    for value in ("4.06", "3.83", "4.13", "4.12", "4.20", "4.05"):
        assert value in assisted


def test_parentheses_only_below_threshold():
    results = [
        PairedResult(c, 3.5, 3.6, 1.0, 9, 0.5, 10) for c in stats.CATEGORIES
    ]
    table = render_table(results)
    assert "(p=" not in table
    significant = [
        PairedResult(c, 3.5, 3.6, 2.5, 9, 0.033, 10) for c in stats.CATEGORIES
    ]
    assert "(p=0.033)" in render_table(significant)


def test_missing_category_rejected():
    results = [PairedResult(c, 3.5, 3.6, 1.0, 9, 0.5, 10) for c in stats.CATEGORIES[:5]]
    with pytest.raises(MissingCategory):
        render_table(results)


def test_read_scores_header_enforced():
    with pytest.raises(ValueError):
        read_scores("a,b,c\n1,2,3\n")
