"""Nonparametric survival evaluation: Kaplan-Meier curves, the two-sample
log-rank test, hazard ratios, and median risk-group assignment."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .coxph import SurvivalRecord, fit_cox
from .errors import EmptyData, NoEvents
from .special import chi2_sf


@dataclass(frozen=True)
class KmCurve:
    """Product-limit curve: one step per distinct event time.

    ``steps`` rows are (time, survival, at_risk, events). Survival before
    the first step is 1; an all-censored sample has no steps.
    """

    steps: list[tuple[float, float, int, int]]

    def __post_init__(self):
        last_t = -np.inf
        last_s = 1.0
        for t, s, n, d in self.steps:
            if not (t > last_t):
                raise ValueError("step times must be strictly increasing")
            if s > last_s + 1e-12 or not 0.0 <= s <= 1.0:
                raise ValueError("survival must be non-increasing within [0, 1]")
            if d < 1 or n < d:
                raise ValueError("each step needs 1 <= events <= at_risk")
            last_t, last_s = t, s

    def survival_at(self, t: float) -> float:
        s = 1.0
        for time, surv, _n, _d in self.steps:
            if time <= t:
                s = surv
            else:
                break
        return s


def kaplan_meier(records: list[SurvivalRecord]) -> KmCurve:
    """Product-limit estimator; censored subjects leave the risk set after
    their observed time (so they still count at a tied event time)."""
    if not records:
        raise EmptyData("no records for Kaplan-Meier")
    times = np.array([r.time for r in records])
    events = np.array([r.event for r in records], dtype=bool)
    steps = []
    s = 1.0
    for tau in np.unique(times[events]):
        n = int((times >= tau).sum())
        d = int(((times == tau) & events).sum())
        s *= 1.0 - d / n
        steps.append((float(tau), s, n, d))
    return KmCurve(steps)


def log_rank(
    group_a: list[SurvivalRecord], group_b: list[SurvivalRecord]
) -> tuple[float, int, float]:
    """Two-sample log-rank test; returns (chi-square statistic, df=1, p).

    Statistic is (sum of O - E)^2 over the summed hypergeometric variances
    at pooled event times. A degenerate zero variance yields statistic 0.
    """
    if not group_a or not group_b:
        raise EmptyData("both groups must be nonempty")
    ta = np.array([r.time for r in group_a])
    ea = np.array([r.event for r in group_a], dtype=bool)
    tb = np.array([r.time for r in group_b])
    eb = np.array([r.event for r in group_b], dtype=bool)
    if not (ea.any() or eb.any()):
        raise NoEvents("no events in either group")
    o_minus_e = 0.0
    var = 0.0
    all_event_times = np.unique(np.concatenate([ta[ea], tb[eb]]))
    for tau in all_event_times:
        n1 = int((ta >= tau).sum())
        n2 = int((tb >= tau).sum())
        n = n1 + n2
        d1 = int(((ta == tau) & ea).sum())
        d = d1 + int(((tb == tau) & eb).sum())
        o_minus_e += d1 - d * n1 / n
        if n > 1:
            var += d * (n1 / n) * (n2 / n) * (n - d) / (n - 1)
    stat = 0.0 if var == 0.0 else o_minus_e**2 / var
    return stat, 1, chi2_sf(stat, 1)


def hazard_ratio(records: list[SurvivalRecord], labels) -> float:
    """exp(beta) of a univariate Cox fit on the group indicator (high = 1).

    ``labels`` aligns with ``records``; existing covariates are ignored.
    """
    labels = np.asarray(labels, dtype=float).reshape(-1)
    if labels.size != len(records):
        raise EmptyData(f"{labels.size} labels for {len(records)} records")
    if not set(np.unique(labels)) <= {0.0, 1.0}:
        raise ValueError("labels must be binary 0/1")
    if (labels == 1).sum() == 0 or (labels == 0).sum() == 0:
        raise EmptyData("both groups must be nonempty")
    indicator = [
        SurvivalRecord(r.patient_id, r.time, r.event, np.array([labels[i]]))
        for i, r in enumerate(records)
    ]
    fit = fit_cox(indicator)
    return float(np.exp(fit.coefficients[0]))


def assign_risk_groups(scores: list[tuple[str, float]]) -> np.ndarray:
    """Median split into high (1) and low (0) risk groups.

    Patients are ranked by score descending, ties broken by patient id
    descending, and the top floor(n/2) are labeled high-risk, so the group
    sizes are always (floor(n/2), ceil(n/2)). Scores strictly above the
    median always land in the high group; ties at the median go to low risk
    unless the quota forces the highest-id tied patients up.
    """
    if not scores:
        raise EmptyData("no scores to split")
    n = len(scores)
    ranked = sorted(range(n), key=lambda i: (scores[i][1], scores[i][0]), reverse=True)
    labels = np.zeros(n, dtype=int)
    labels[ranked[: n // 2]] = 1
    return labels


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------

def save_km_csv(curve: KmCurve, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        wtr = csv.writer(fh)
        wtr.writerow(["time", "survival", "at_risk", "events"])
        for t, s, n, d in curve.steps:
            wtr.writerow([repr(float(t)), repr(float(s)), n, d])


def log_rank_report(
    group_a: list[SurvivalRecord], group_b: list[SurvivalRecord]
) -> dict:
    stat, df, p = log_rank(group_a, group_b)
    return {
        "statistic": float(stat),
        "df": df,
        "p": float(p),
        "n_group_a": len(group_a),
        "n_group_b": len(group_b),
        "events_group_a": int(sum(r.event for r in group_a)),
        "events_group_b": int(sum(r.event for r in group_b)),
    }


def write_log_rank_json(report: dict, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
