"""Cox proportional hazards regression with Efron tie handling.

The partial likelihood is maximized by Newton-Raphson with step halving.
Covariate vectors are ordered as clinical variables, then dimension-0 FPC
scores, then dimension-1 FPC scores; ``CoxFit.blocks`` records the three
block sizes so the functional-block chi-square test, the AIC penalty, and
coefficient-surface export can address the right slices.

AIC penalizes only the functional block: AIC = 2(q + r) - 2 logL. Clinical
covariates appear in every candidate model, so leaving them out of the
penalty does not change any comparison.

Normal and chi-square tail probabilities come from the in-package erf and
regularized incomplete gamma routines; no statistical runtime is assumed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    AllFitsFailed,
    ConfigError,
    DimensionMismatch,
    MaxIterations,
    NoEvents,
    NonIdentifiable,
    SingularCovariance,
)
from .special import chi2_sf, normal_sf

_GRAD_TOL = 1e-6
_STEP_TOL = 1e-8
_TINY_STEP = 1e-6
_BETA_BOUND = 50.0


@dataclass(frozen=True)
class SurvivalRecord:
    """One subject: observed time, event indicator, covariate vector."""

    patient_id: str
    time: float
    event: bool
    covariates: np.ndarray

    def __post_init__(self):
        if not (self.time > 0 and math.isfinite(self.time)):
            raise ValueError(f"{self.patient_id}: time must be positive and finite")
        cov = np.asarray(self.covariates, dtype=float).reshape(-1)
        if not np.isfinite(cov).all():
            raise ValueError(f"{self.patient_id}: covariates must be finite")
        object.__setattr__(self, "covariates", cov)


@dataclass(frozen=True)
class CoxFit:
    """Converged partial-likelihood maximum.

    ``blocks`` holds (clinical count, dim-0 score count, dim-1 score count);
    the functional block is everything from index blocks[0] on.
    """

    coefficients: np.ndarray
    covariance: np.ndarray
    log_likelihood: float
    n_iterations: int
    converged: bool
    blocks: tuple[int, int, int]

    @property
    def block_index(self) -> int:
        return self.blocks[0]

    @property
    def n_functional(self) -> int:
        return self.blocks[1] + self.blocks[2]


@dataclass(frozen=True)
class WaldSummary:
    z: np.ndarray
    p: np.ndarray
    overall_statistic: float
    overall_df: int
    overall_p: float


def _design(records: list[SurvivalRecord]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if not records:
        raise NoEvents("no survival records")
    dims = {r.covariates.size for r in records}
    if len(dims) != 1:
        raise DimensionMismatch(f"covariate vectors differ in length: {sorted(dims)}")
    t = np.array([r.time for r in records])
    e = np.array([r.event for r in records], dtype=bool)
    X = np.array([r.covariates for r in records], dtype=float).reshape(len(records), -1)
    if not e.any():
        raise NoEvents("all records are censored")
    return t, e, X


def _efron(t, e, X, beta, want_derivs):
    """Efron log partial likelihood, gradient, observed information.

    Tied event times use the Efron average denominators; censored subjects
    sharing an event time stay in that risk set.
    """
    n, d = X.shape
    eta = X @ beta
    shift = eta.max() if n else 0.0  # exp() guard; cancels term by term
    w = np.exp(eta - shift)
    order = np.argsort(-t, kind="stable")
    t_desc = t[order]
    cw = np.cumsum(w[order])
    if want_derivs:
        wX = w[:, None] * X
        cA = np.cumsum(wX[order], axis=0)
        wXX = wX[:, :, None] * X[:, None, :]
        cB = np.cumsum(wXX[order], axis=0)

    loglik = 0.0
    grad = np.zeros(d)
    info = np.zeros((d, d))
    for tau in np.unique(t[e]):
        members = np.flatnonzero((t == tau) & e)
        dk = members.size
        k = int(np.searchsorted(-t_desc, -tau, side="right"))
        S = cw[k - 1]
        S_D = w[members].sum()
        loglik += float(eta[members].sum() - dk * shift)
        if want_derivs:
            A = cA[k - 1]
            B = cB[k - 1]
            A_D = wX[members].sum(axis=0)
            B_D = wXX[members].sum(axis=0)
            grad += X[members].sum(axis=0)
        for l in range(dk):
            frac = l / dk
            denom = S - frac * S_D
            if denom <= 0.0:
                # exp() guard underflowed this risk set; the true value is
                # finite but below double range after shifting. Report -inf:
                # an underestimate can only make the line search reject.
                return float("-inf"), grad, info
            loglik -= math.log(denom)
            if want_derivs:
                num = A - frac * A_D
                grad -= num / denom
                info += (B - frac * B_D) / denom - np.outer(num, num) / denom**2
    return loglik, grad, info


def log_partial_likelihood(records: list[SurvivalRecord], beta: np.ndarray) -> float:
    """Efron-adjusted log partial likelihood at the given coefficients.

    Equals the textbook Cox log partial likelihood whenever event times are
    all distinct.
    """
    t, e, X = _design(records)
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.size != X.shape[1]:
        raise DimensionMismatch(f"beta has {beta.size} entries for {X.shape[1]} covariates")
    return _efron(t, e, X, beta, want_derivs=False)[0]


def fit_cox(
    records: list[SurvivalRecord],
    blocks: tuple[int, int, int] | None = None,
    tol: float = 1e-9,
    max_iterations: int = 100,
) -> CoxFit:
    """Maximize the Efron partial likelihood by damped Newton-Raphson.

    Convergence requires a relative log-likelihood change below ``tol``, a
    gradient max-norm below 1e-6, and an accepted update small relative to
    the coefficients. NonIdentifiable flags a covariate column constant
    across the event subjects, coefficients wandering past 50 in absolute
    value (monotone likelihood), and a singular information matrix (a flat
    likelihood direction, e.g. collinear covariates).
    """
    t, e, X = _design(records)
    n, d = X.shape
    if blocks is None:
        blocks = (d, 0, 0)
    if sum(blocks) != d or min(blocks) < 0:
        raise DimensionMismatch(f"blocks {blocks} do not partition {d} covariates")
    for j in range(d):
        col = X[e, j]
        if col.size and col.max() == col.min():
            raise NonIdentifiable(f"covariate column {j} is constant across events")
    beta = np.zeros(d)
    loglik, grad, info = _efron(t, e, X, beta, want_derivs=True)
    if d == 0:
        return CoxFit(beta, np.zeros((0, 0)), loglik, 0, True, blocks)

    for iteration in range(1, max_iterations + 1):
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError as exc:
            raise NonIdentifiable(
                "information matrix is singular; a likelihood direction is flat"
            ) from exc
        alpha = 1.0
        cand_loglik = _efron(t, e, X, beta + alpha * step, want_derivs=False)[0]
        if math.isfinite(loglik) and not cand_loglik >= loglik:
            # Keep tiny full steps: near the optimum the true improvement can
            # sit below the evaluation noise of the log-likelihood, and
            # halving would stall the fit with the gradient still nonzero.
            if np.abs(step).max() > _TINY_STEP * (1.0 + np.abs(beta).max()):
                for _ in range(40):
                    alpha /= 2.0
                    cand_loglik = _efron(t, e, X, beta + alpha * step, want_derivs=False)[0]
                    if cand_loglik >= loglik:
                        break
        else:
            # A concave likelihood with an interior optimum rejects doubled
            # steps at once, while a monotone likelihood keeps strictly
            # improving, so the doubling chain carries beta into the bound
            # check before float cancellation flattens the derivatives.
            # Strict improvement: plateau ties must not restart the chain.
            for _ in range(10):
                trial = _efron(t, e, X, beta + 2.0 * alpha * step, want_derivs=False)[0]
                if not (math.isfinite(trial) and trial > cand_loglik):
                    break
                alpha *= 2.0
                cand_loglik = trial
        beta = beta + alpha * step
        if np.abs(beta).max() > _BETA_BOUND:
            raise NonIdentifiable(
                f"|coefficient| exceeded {_BETA_BOUND}; likelihood appears monotone"
            )
        new_loglik, grad, info = _efron(t, e, X, beta, want_derivs=True)
        rel = abs(new_loglik - loglik) / max(abs(loglik), 1e-300)
        loglik = new_loglik
        moved = np.abs(alpha * step).max()
        # A monotone likelihood flattens grad and info together, so the Newton
        # step stays O(1) while beta drifts; demand a small step as well so the
        # drift continues toward the coefficient bound instead of stalling here.
        # The step criterion also pins beta to near-quadratic accuracy, which
        # exact symmetries of the likelihood (label swaps) rely on.
        if rel < tol and np.abs(grad).max() < _GRAD_TOL and moved < _STEP_TOL * (
            1.0 + np.abs(beta).max()
        ):
            try:
                cov = np.linalg.inv(info)
            except np.linalg.LinAlgError as exc:
                raise NonIdentifiable(
                    "information matrix is singular at the optimum"
                ) from exc
            return CoxFit(beta, cov, loglik, iteration, True, blocks)
    raise MaxIterations(f"no convergence in {max_iterations} Newton iterations")


def wald_tests(fit: CoxFit) -> WaldSummary:
    """Per-coefficient z statistics plus the overall Wald chi-square."""
    d = fit.coefficients.size
    if d == 0:
        return WaldSummary(np.zeros(0), np.zeros(0), 0.0, 0, 1.0)
    se = np.sqrt(np.diag(fit.covariance))
    z = fit.coefficients / se
    p = np.array([2.0 * normal_sf(abs(v)) for v in z])
    try:
        stat = float(fit.coefficients @ np.linalg.solve(fit.covariance, fit.coefficients))
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance("covariance matrix is singular") from exc
    return WaldSummary(z, p, stat, d, chi2_sf(stat, d))


def block_chisq_test(fit: CoxFit, block: str = "functional") -> tuple[float, int, float]:
    """Wald chi-square that every functional coefficient is zero.

    Returns (statistic, q + r, p). An empty block gives statistic 0, p 1.
    """
    if block != "functional":
        raise ValueError(f"unknown block {block!r}")
    b = fit.block_index
    beta = fit.coefficients[b:]
    df = beta.size
    if df == 0:
        return 0.0, 0, 1.0
    sub = fit.covariance[b:, b:]
    try:
        stat = float(beta @ np.linalg.solve(sub, beta))
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance("functional block covariance is singular") from exc
    return stat, df, chi2_sf(stat, df)


def aic(fit: CoxFit, q: int | None = None, r: int | None = None) -> float:
    """AIC = 2(q + r) - 2 logL; the penalty skips clinical coefficients."""
    if q is None and r is None:
        q, r = fit.blocks[1], fit.blocks[2]
    elif q is None or r is None or q + r != fit.n_functional:
        raise DimensionMismatch(
            f"(q, r) = ({q}, {r}) does not match the fit's functional block {fit.blocks}"
        )
    return 2.0 * (q + r) - 2.0 * fit.log_likelihood


def predict_risk(fit: CoxFit, covariates: np.ndarray) -> float:
    """Linear predictor (log relative hazard, baseline hazard fixed at 1)."""
    cov = np.asarray(covariates, dtype=float).reshape(-1)
    if cov.size != fit.coefficients.size:
        raise DimensionMismatch(
            f"covariate vector has {cov.size} entries for {fit.coefficients.size} coefficients"
        )
    return float(cov @ fit.coefficients)


def fit_with_scores(
    records: list[SurvivalRecord],
    scores0: np.ndarray,
    scores1: np.ndarray,
    q: int,
    r: int,
) -> CoxFit:
    """Fit with the first q dim-0 and r dim-1 score columns appended to the
    clinical covariates already on the records."""
    combined = []
    for i, rec in enumerate(records):
        cov = np.concatenate([rec.covariates, scores0[i, :q], scores1[i, :r]])
        combined.append(SurvivalRecord(rec.patient_id, rec.time, rec.event, cov))
    return fit_cox(combined, blocks=(records[0].covariates.size, q, r))


def select_fpcs_aic(
    records: list[SurvivalRecord],
    scores0: np.ndarray,
    scores1: np.ndarray,
    q_max: int,
    r_max: int,
) -> tuple[int, int]:
    """Exhaustive AIC search over how many FPC scores to keep per dimension.

    Ties prefer fewer total components, then fewer dimension-0 components.
    Raises AllFitsFailed if no (q, r) candidate converges.
    """
    scores0 = np.asarray(scores0, dtype=float)
    scores1 = np.asarray(scores1, dtype=float)
    if scores0.shape[0] != len(records) or scores1.shape[0] != len(records):
        raise DimensionMismatch("score rows must match number of records")
    if q_max > scores0.shape[1] or r_max > scores1.shape[1]:
        raise DimensionMismatch("q_max/r_max exceed available score columns")

    best = None
    failures: list[Exception] = []
    for q in range(q_max + 1):
        for r in range(r_max + 1):
            try:
                fit = fit_with_scores(records, scores0, scores1, q, r)
            except (NonIdentifiable, MaxIterations, SingularCovariance) as exc:
                failures.append(exc)
                continue
            key = (aic(fit), q + r, q)
            if best is None or key < best[0]:
                best = (key, q, r)
    if best is None:
        raise AllFitsFailed(f"every (q, r) candidate failed; first error: {failures[0]}")
    return best[1], best[2]


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------

def read_survival_csv(path: str | Path) -> tuple[list[SurvivalRecord], list[str]]:
    """Read `patient_id,time,event,<covariate...>` rows.

    Returns the records and the covariate column names. Event cells must be
    0 or 1.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: empty survival file") from None
        if header[:3] != ["patient_id", "time", "event"]:
            raise ConfigError(
                f"{path}: header must start with patient_id,time,event; got {header[:3]}"
            )
        names = header[3:]
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ConfigError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            if row[2] not in ("0", "1"):
                raise ConfigError(f"{path}:{lineno}: event must be 0 or 1")
            try:
                rec = SurvivalRecord(
                    patient_id=row[0],
                    time=float(row[1]),
                    event=row[2] == "1",
                    covariates=np.array([float(c) for c in row[3:]]),
                )
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
            records.append(rec)
    if not records:
        raise ConfigError(f"{path}: no data rows")
    return records, names


def fit_report(fit: CoxFit, names: list[str]) -> dict:
    """JSON-ready summary: per-coefficient table, tests, AIC, block sizes."""
    if len(names) != fit.coefficients.size:
        raise DimensionMismatch(f"{len(names)} names for {fit.coefficients.size} coefficients")
    wald = wald_tests(fit)
    se = np.sqrt(np.diag(fit.covariance)) if fit.coefficients.size else np.zeros(0)
    block_stat, block_df, block_p = block_chisq_test(fit)
    coeffs = {}
    for i, name in enumerate(names):
        coeffs[name] = {
            "coef": float(fit.coefficients[i]),
            "exp_coef": float(math.exp(fit.coefficients[i])),
            "se": float(se[i]),
            "z": float(wald.z[i]),
            "p": float(wald.p[i]),
        }
    return {
        "coefficients": coeffs,
        "log_likelihood": float(fit.log_likelihood),
        "aic": float(aic(fit)),
        "n_iterations": fit.n_iterations,
        "n_fpcs_dim0": fit.blocks[1],
        "n_fpcs_dim1": fit.blocks[2],
        "overall_wald": {
            "statistic": float(wald.overall_statistic),
            "df": wald.overall_df,
            "p": float(wald.overall_p),
        },
        "functional_block": {
            "start": fit.block_index,
            "size": fit.n_functional,
            "statistic": float(block_stat),
            "df": block_df,
            "p": float(block_p),
        },
    }


def write_fit_report(report: dict, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
