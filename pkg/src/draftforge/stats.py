"""Paired-comparison statistics for expert rubric scores.

Pure computation throughout: ingest per-rater scores for report pairs scored
under both arms, average raters within (pair, arm, category), run a paired
two-sided Student t test per category, and lay the result out as a text
table. The t CDF uses a continued-fraction regularized incomplete beta
(absolute tolerance well below 1e-9), so no statistics dependency is needed.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .transcripts import DraftforgeError

ARMS = ("unassisted", "assisted")
CATEGORIES = ("overall", "completeness", "neutrality", "objectivity", "terminology", "coherence")


class TooFewPairs(DraftforgeError):
    pass


class UnbalancedDesign(DraftforgeError):
    pass


class EmptyInput(DraftforgeError):
    pass


class MissingCategory(DraftforgeError):
    pass


@dataclass(frozen=True)
class RubricScore:
    report_pair_id: str
    arm: str
    rater_id: str
    category: str
    score: float

    def __post_init__(self):
        if self.arm not in ARMS:
            raise ValueError(f"arm must be one of {ARMS}")
        if self.category not in CATEGORIES:
            raise ValueError(f"category must be one of {CATEGORIES}")
        if not 1.0 <= self.score <= 5.0:
            raise ValueError("score must be on the 1-5 scale")


@dataclass(frozen=True)
class TTestResult:
    t: Optional[float]
    df: int
    p_two_sided: float
    degenerate: bool = False


@dataclass(frozen=True)
class PairedResult:
    category: str
    mean_unassisted: float
    mean_assisted: float
    t_statistic: Optional[float]
    degrees_of_freedom: int
    p_value_two_sided: float
    n_pairs: int
    degenerate: bool = False


@dataclass(frozen=True)
class UsabilitySummary:
    mean_rating: float
    mean_minutes_saved: float
    percent_of_baseline_time: Optional[float]


# --- t distribution ------------------------------------------------------------


def _betacf(a: float, b: float, x: float) -> float:
    # Lentz's continued fraction for the incomplete beta function.
    max_iter, eps, tiny = 300, 3e-16, 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        num = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + num * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + num / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        num = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + num * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + num / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(x: float, a: float, b: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_p_two_sided(t: float, df: int) -> float:
    """Two-sided tail probability of Student's t with df degrees of freedom."""
    if df < 1:
        raise ValueError("df must be >= 1")
    return regularized_incomplete_beta(df / (df + t * t), df / 2.0, 0.5)


def paired_t_test(differences: Sequence[float]) -> TTestResult:
    """Two-sided paired Student t test on per-pair differences.

    Zero-variance input is degenerate by contract: p = 1.0 when the common
    difference is zero, p = 0.0 otherwise. Raises TooFewPairs for n < 2.
    """
    diffs = list(differences)
    n = len(diffs)
    if n < 2:
        raise TooFewPairs("paired test needs at least 2 differences")
    if max(diffs) == min(diffs):
        return TTestResult(t=None, df=n - 1, p_two_sided=1.0 if diffs[0] == 0 else 0.0, degenerate=True)
    mean = sum(diffs) / n
    var = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    sd = math.sqrt(var)
    t = mean / (sd / math.sqrt(n))
    return TTestResult(t=t, df=n - 1, p_two_sided=t_p_two_sided(t, n - 1))


# --- rubric summarization --------------------------------------------------------


def read_scores(raw: str) -> list[RubricScore]:
    """Parse the CSV score format: header pair_id,arm,rater_id,category,score."""
    reader = csv.DictReader(io.StringIO(raw))
    expected = {"pair_id", "arm", "rater_id", "category", "score"}
    if reader.fieldnames is None or set(reader.fieldnames) != expected:
        raise ValueError(f"score file header must be {sorted(expected)}")
    return [
        RubricScore(
            report_pair_id=row["pair_id"],
            arm=row["arm"],
            rater_id=row["rater_id"],
            category=row["category"],
            score=float(row["score"]),
        )
        for row in reader
    ]


def summarize(scores: Iterable[RubricScore]) -> list[PairedResult]:
    """Per-category arm means and the paired test on per-pair differences.
    Rater scores are averaged within (pair, arm, category) first. Raises
    UnbalancedDesign when a pair is missing one arm for a category."""
    cells: dict[tuple[str, str, str], list[float]] = {}
    seen: set[tuple[str, str, str, str]] = set()
    for s in scores:
        key = (s.report_pair_id, s.arm, s.rater_id, s.category)
        if key in seen:
            raise ValueError(f"duplicate score row {key}")
        seen.add(key)
        cells.setdefault((s.category, s.report_pair_id, s.arm), []).append(s.score)

    results = []
    categories = sorted(
        {cat for cat, _, _ in cells}, key=lambda c: CATEGORIES.index(c)
    )
    for category in categories:
        pair_ids = sorted({pid for cat, pid, _ in cells if cat == category})
        unassisted, assisted = [], []
        for pid in pair_ids:
            u = cells.get((category, pid, "unassisted"))
            a = cells.get((category, pid, "assisted"))
            if u is None or a is None:
                raise UnbalancedDesign(f"pair {pid} lacks both arms for {category}")
            unassisted.append(sum(u) / len(u))
            assisted.append(sum(a) / len(a))
        diffs = [a - u for a, u in zip(assisted, unassisted)]
        test = paired_t_test(diffs)
        results.append(
            PairedResult(
                category=category,
                mean_unassisted=sum(unassisted) / len(unassisted),
                mean_assisted=sum(assisted) / len(assisted),
                t_statistic=test.t,
                degrees_of_freedom=test.df,
                p_value_two_sided=test.p_two_sided,
                n_pairs=len(diffs),
                degenerate=test.degenerate,
            )
        )
    return results


def usability(
    ratings: Sequence[float],
    minutes_saved: Sequence[float],
    baseline_minutes: Optional[float] = None,
) -> UsabilitySummary:
    """Arithmetic means of the survey metrics; percent of baseline writing
    time is computed only when a baseline is supplied."""
    if not ratings or not minutes_saved:
        raise EmptyInput("ratings and minutes_saved must be non-empty")
    mean_saved = sum(minutes_saved) / len(minutes_saved)
    percent = None
    if baseline_minutes is not None:
        if baseline_minutes <= 0:
            raise ValueError("baseline_minutes must be positive")
        percent = mean_saved / baseline_minutes * 100.0
    return UsabilitySummary(
        mean_rating=sum(ratings) / len(ratings),
        mean_minutes_saved=mean_saved,
        percent_of_baseline_time=percent,
    )


# --- table rendering ---------------------------------------------------------------

SIGNIFICANCE_LEVEL = 0.05


def render_table(results: Sequence[PairedResult]) -> str:
    """Fixed-order category columns, two-decimal means, p in parentheses on
    the assisted row when p < 0.05. Raises MissingCategory unless all six
    categories are present."""
    by_category = {r.category: r for r in results}
    missing = [c for c in CATEGORIES if c not in by_category]
    if missing:
        raise MissingCategory(f"missing categories: {', '.join(missing)}")

    headers = ["Average scores"] + [c.capitalize() for c in CATEGORIES]
    unassisted_cells = ["unassisted"]
    assisted_cells = ["assisted"]
    for c in CATEGORIES:
        r = by_category[c]
        unassisted_cells.append(f"{r.mean_unassisted:.2f}")
        cell = f"{r.mean_assisted:.2f}"
        if r.p_value_two_sided < SIGNIFICANCE_LEVEL:
            cell += f" (p={r.p_value_two_sided:.3f})"
        assisted_cells.append(cell)

    widths = [
        max(len(headers[i]), len(unassisted_cells[i]), len(assisted_cells[i]))
        for i in range(len(headers))
    ]
    lines = [
        " | ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
        for row in (headers, unassisted_cells, assisted_cells)
    ]
    lines.append("")
    lines.append("Note: per-category p-values; no multiple-comparison correction applied.")
    return "\n".join(lines) + "\n"
