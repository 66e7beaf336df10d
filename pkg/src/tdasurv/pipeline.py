"""End-to-end orchestration: study configuration, feature extraction,
model fitting, LOOCV risk prediction, smoothing-parameter grid search,
permutation null studies, and report emission.

The observation unit ("row") depends on the aggregation mode. With
``mean-risk`` every image is a row (the patient's survival record repeats)
and leave-one-out folds hold out single images, averaging predicted risks
per patient afterwards. With ``mean-surface`` each patient's surfaces are
averaged first, one row per patient, and folds are patient-level.

Everything is deterministic given config + seed: rows are built in sorted
patient order, fits are seed-free Newton iterations, and all JSON artifacts
are written with sorted keys and no timestamps, so identical runs produce
byte-identical files.

Fold isolation: FPCA, component selection, and Cox fitting for a fold never
see the held-out row. The one documented exception is the evaluation grid,
which is built once from the full corpus; it fixes geometry only and leaks
no outcome information.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import coxph, fpca, imgio, psurf, survstats
from .cubical import (
    PersistenceDiagram,
    build_filtration,
    compute_persistence,
    filter_finite,
    rescale_diagram,
    restrict_dimension,
)
from .errors import (
    ConfigError,
    DimensionMismatch,
    FewerThanTwoSamples,
    NoFinitePairs,
    TdasurvError,
)
from .imgio import LabelImage, load_label_image
from .psurf import PersistenceSurface, SurfaceGrid, persistence_surface, shared_grid
from .sedt import sedt2, sedt3

_CLASS_MODES = ("two-class", "three-class")
_AGGREGATIONS = ("mean-risk", "mean-surface")
_DEFAULT_GRID = {"start": 0.1, "stop": 3.0, "step": 0.1}


@dataclass
class StudyConfig:
    """Parsed study configuration; see :meth:`from_json` for the file format."""

    manifest: Path
    survival: Path
    class_mode: str = "three-class"
    sigma0: float | None = None
    sigma1: float | None = None
    sigma_grid: dict | None = None
    kernel: str = "standard-gaussian"
    selection: dict = field(default_factory=lambda: {"mode": "aic", "q_max": 3, "r_max": 3})
    aggregation: str = "mean-risk"
    seed: int = 0
    out_dir: Path | None = None
    rescale_factor: float = 1.0
    validity_threshold: float = 0.9

    def validate(self) -> None:
        if self.class_mode not in _CLASS_MODES:
            raise ConfigError(f"class_mode must be one of {_CLASS_MODES}")
        if self.aggregation not in _AGGREGATIONS:
            raise ConfigError(f"aggregation must be one of {_AGGREGATIONS}")
        if self.kernel not in psurf.KERNELS:
            raise ConfigError(f"kernel must be one of {psurf.KERNELS}")
        has_fixed = self.sigma0 is not None or self.sigma1 is not None
        if has_fixed and (self.sigma0 is None or self.sigma1 is None):
            raise ConfigError("sigma0 and sigma1 must be given together")
        if not has_fixed and self.sigma_grid is None:
            raise ConfigError("config needs sigma0/sigma1 or a sigma_grid")
        if has_fixed and (self.sigma0 <= 0 or self.sigma1 <= 0):
            raise ConfigError("sigma values must be positive")
        if self.sigma_grid is not None:
            for key in ("start", "stop", "step"):
                if key not in self.sigma_grid:
                    raise ConfigError(f"sigma_grid needs '{key}'")
            g = self.sigma_grid
            if not (0 < g["start"] <= g["stop"]) or g["step"] <= 0:
                raise ConfigError("sigma_grid must lie within (0, inf) with positive step")
        mode = self.selection.get("mode")
        if mode == "aic":
            if self.selection.get("q_max", -1) < 0 or self.selection.get("r_max", -1) < 0:
                raise ConfigError("aic selection needs q_max >= 0 and r_max >= 0")
        elif mode == "pv":
            c = self.selection.get("threshold")
            if c is None or not 0 < c < 1:
                raise ConfigError("pv selection needs a threshold in (0, 1)")
        else:
            raise ConfigError("selection.mode must be 'aic' or 'pv'")
        if self.rescale_factor <= 0:
            raise ConfigError("rescale_factor must be positive")
        if not 0 < self.validity_threshold < 1:
            raise ConfigError("validity_threshold must lie in (0, 1)")

    @classmethod
    def from_json(cls, path: str | Path) -> "StudyConfig":
        path = Path(path)
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        known = {
            "manifest",
            "survival",
            "class_mode",
            "sigma0",
            "sigma1",
            "sigma_grid",
            "kernel",
            "selection",
            "aggregation",
            "seed",
            "out_dir",
            "rescale_factor",
            "validity_threshold",
        }
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
        base = path.parent
        cfg = cls(
            manifest=base / raw["manifest"] if "manifest" in raw else None,
            survival=base / raw["survival"] if "survival" in raw else None,
            **{k: v for k, v in raw.items() if k not in ("manifest", "survival", "out_dir")},
        )
        if raw.get("out_dir") is not None:
            cfg.out_dir = base / raw["out_dir"]
        if cfg.manifest is None or cfg.survival is None:
            raise ConfigError(f"{path}: manifest and survival paths are required")
        cfg.validate()
        return cfg

    def canonical(self) -> dict:
        """Plain dict used for hashing and provenance echo."""
        return {
            "manifest": str(self.manifest),
            "survival": str(self.survival),
            "class_mode": self.class_mode,
            "sigma0": self.sigma0,
            "sigma1": self.sigma1,
            "sigma_grid": self.sigma_grid,
            "kernel": self.kernel,
            "selection": self.selection,
            "aggregation": self.aggregation,
            "seed": self.seed,
            "rescale_factor": self.rescale_factor,
            "validity_threshold": self.validity_threshold,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# Feature extraction
# ---------------------------------------------------------------------------

@dataclass
class DiagramSet:
    """Per-image finite diagrams plus the survival data they attach to."""

    patients: list[str]
    diagrams: dict[str, list[PersistenceDiagram]]
    patient_records: dict[str, coxph.SurvivalRecord]
    covariate_names: list[str]

    @property
    def n_images(self) -> int:
        return sum(len(v) for v in self.diagrams.values())


@dataclass
class Row:
    """One observation: an image (mean-risk) or a patient (mean-surface)."""

    row_id: str
    patient_id: str
    record: coxph.SurvivalRecord
    surface0: PersistenceSurface | None
    surface1: PersistenceSurface | None


@dataclass
class StudyData:
    config: StudyConfig
    patients: list[str]
    patient_records: dict[str, coxph.SurvivalRecord]
    covariate_names: list[str]
    rows: list[Row]
    grid0: SurfaceGrid | None
    grid1: SurfaceGrid | None
    sigma0: float
    sigma1: float


def load_cohort_images(config: StudyConfig) -> dict[str, list[LabelImage]]:
    """Read the manifest and all label images, keyed by patient id."""
    try:
        with open(config.manifest) as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{config.manifest}: invalid JSON") from exc
    if not isinstance(manifest, dict) or not manifest:
        raise ConfigError(f"{config.manifest}: expected a nonempty patient->paths object")
    base = Path(config.manifest).parent
    images: dict[str, list[LabelImage]] = {}
    for pid in sorted(manifest):
        paths = manifest[pid]
        if not paths:
            raise ConfigError(f"patient {pid} has no images")
        images[pid] = []
        for rel in paths:
            path = base / rel
            try:
                images[pid].append(load_label_image(path))
            except TdasurvError as exc:
                raise type(exc)(f"patient {pid}, image {rel}: {exc}") from exc
    return images


def image_diagram(img: LabelImage, class_mode: str, rescale_factor: float = 1.0) -> PersistenceDiagram:
    """Feature chain for one image: (denoise) -> SEDT -> persistence -> finite."""
    if class_mode == "three-class":
        field_ = sedt3(imgio.denoise(img))
    else:
        field_ = sedt2(img)
    diagram = filter_finite(compute_persistence(build_filtration(field_)))
    if rescale_factor != 1.0:
        diagram = rescale_diagram(diagram, rescale_factor)
    return diagram


def extract_diagrams(
    config: StudyConfig, images: dict[str, list[LabelImage]] | None = None
) -> DiagramSet:
    """Diagrams for every image plus matched survival records.

    ``images`` overrides the manifest (used by the permutation study);
    patient ids must still match the survival file exactly.
    """
    if images is None:
        images = load_cohort_images(config)
    records, names = coxph.read_survival_csv(config.survival)
    by_id = {}
    for rec in records:
        if rec.patient_id in by_id:
            raise ConfigError(f"duplicate survival row for patient {rec.patient_id}")
        by_id[rec.patient_id] = rec
    if set(by_id) != set(images):
        missing = sorted(set(images) ^ set(by_id))
        raise ConfigError(f"manifest and survival patients disagree: {missing[:5]}")
    diagrams = {}
    for pid in sorted(images):
        diagrams[pid] = []
        for idx, img in enumerate(images[pid]):
            try:
                diagrams[pid].append(image_diagram(img, config.class_mode, config.rescale_factor))
            except TdasurvError as exc:
                raise type(exc)(f"patient {pid}, image {idx}: {exc}") from exc
    return DiagramSet(sorted(images), diagrams, by_id, names)


def build_study_data(
    config: StudyConfig,
    diagset: DiagramSet,
    sigma0: float | None = None,
    sigma1: float | None = None,
) -> StudyData:
    """Shared grids, per-image surfaces, and observation rows for a sigma pair."""
    sigma0 = config.sigma0 if sigma0 is None else sigma0
    sigma1 = config.sigma1 if sigma1 is None else sigma1
    if sigma0 is None or sigma1 is None:
        raise ConfigError("no sigma values: fix sigma0/sigma1 or run the grid search")
    flat = [d for pid in diagset.patients for d in diagset.diagrams[pid]]

    def grid_for(dim: int, sigma: float) -> SurfaceGrid | None:
        try:
            return shared_grid(
                [restrict_dimension(d, dim) for d in flat], psurf.default_padding(sigma)
            )
        except NoFinitePairs:
            return None  # no features of this dimension anywhere in the corpus

    grid0 = grid_for(0, sigma0)
    grid1 = grid_for(1, sigma1)

    def surfaces_for(d: PersistenceDiagram) -> tuple[PersistenceSurface | None, PersistenceSurface | None]:
        s0 = s1 = None
        if grid0 is not None:
            s0 = persistence_surface(restrict_dimension(d, 0), grid0, sigma0, config.kernel)
        if grid1 is not None:
            s1 = persistence_surface(restrict_dimension(d, 1), grid1, sigma1, config.kernel)
        return s0, s1

    rows: list[Row] = []
    for pid in diagset.patients:
        record = diagset.patient_records[pid]
        per_image = [surfaces_for(d) for d in diagset.diagrams[pid]]
        if config.aggregation == "mean-risk":
            for idx, (s0, s1) in enumerate(per_image):
                rows.append(Row(f"{pid}#{idx}", pid, record, s0, s1))
        else:
            s0 = psurf.mean_surface([s for s, _ in per_image]) if grid0 is not None else None
            s1 = psurf.mean_surface([s for _, s in per_image]) if grid1 is not None else None
            rows.append(Row(pid, pid, record, s0, s1))
    return StudyData(
        config,
        diagset.patients,
        diagset.patient_records,
        diagset.covariate_names,
        rows,
        grid0,
        grid1,
        sigma0,
        sigma1,
    )


# ---------------------------------------------------------------------------
# Model head: FPCA + selection + Cox
# ---------------------------------------------------------------------------

@dataclass
class HeadFit:
    """FPCA models, the selected (q, r), and the Cox fit they feed."""

    model0: fpca.FpcaModel | None
    model1: fpca.FpcaModel | None
    q: int
    r: int
    fit: coxph.CoxFit

    def scores_for(self, row: Row) -> tuple[np.ndarray, np.ndarray]:
        xi = (
            fpca.project(self.model0, row.surface0, self.q)
            if self.model0 is not None and self.q > 0
            else np.zeros(self.q)
        )
        zeta = (
            fpca.project(self.model1, row.surface1, self.r)
            if self.model1 is not None and self.r > 0
            else np.zeros(self.r)
        )
        return xi, zeta

    def predict_row(self, row: Row) -> float:
        xi, zeta = self.scores_for(row)
        return coxph.predict_risk(self.fit, np.concatenate([row.record.covariates, xi, zeta]))


def _fit_models(rows: list[Row]) -> tuple[fpca.FpcaModel | None, fpca.FpcaModel | None]:
    model0 = model1 = None
    if len(rows) >= 2:
        if rows[0].surface0 is not None:
            model0 = fpca.fit_fpca([row.surface0 for row in rows])
        if rows[0].surface1 is not None:
            model1 = fpca.fit_fpca([row.surface1 for row in rows])
    return model0, model1


def fit_head(rows: list[Row], selection: dict) -> HeadFit:
    """Fit FPCA on the rows, pick (q, r) per the selection spec, fit Cox.

    Fewer than two rows (degenerate folds) skip FPCA and fall back to the
    clinical-only model.
    """
    records = [row.record for row in rows]
    model0, model1 = _fit_models(rows)
    scores0 = model0.scores if model0 is not None else np.zeros((len(rows), 0))
    scores1 = model1.scores if model1 is not None else np.zeros((len(rows), 0))
    if selection["mode"] == "aic":
        q_max = min(selection["q_max"], scores0.shape[1])
        r_max = min(selection["r_max"], scores1.shape[1])
        q, r = coxph.select_fpcs_aic(records, scores0, scores1, q_max, r_max)
    else:
        c = selection["threshold"]
        q = fpca.select_by_pv(model0, c) if model0 is not None else 0
        r = fpca.select_by_pv(model1, c) if model1 is not None else 0
    fit = coxph.fit_with_scores(records, scores0, scores1, q, r)
    return HeadFit(model0, model1, q, r, fit)


# ---------------------------------------------------------------------------
# LOOCV
# ---------------------------------------------------------------------------

@dataclass
class LoocvResult:
    risk_scores: dict[str, float]
    row_risks: dict[str, float]
    failures: list[dict]
    cvpl: float | None
    fold_details: list[dict] | None = None


def loocv_predict(
    config: StudyConfig,
    data: StudyData | None = None,
    clinical_only: bool = False,
    collect_fold_details: bool = False,
) -> LoocvResult:
    """Leave-one-row-out risk prediction.

    Every fold refits the full head (FPCA, selection, Cox) without the
    held-out row, then scores that row. Per-patient risks average the
    patient's row risks. Failed folds are recorded and skipped. The CVPL
    (sum over folds of the full-data log PL at the fold's coefficients
    minus the fold's own log PL) is None if any fold failed.
    """
    if data is None:
        data = build_study_data(config, extract_diagrams(config))
    rows = data.rows
    if len(rows) < 2:
        raise FewerThanTwoSamples("leave-one-out needs at least two rows")
    row_risks: dict[str, float] = {}
    failures: list[dict] = []
    details: list[dict] = []
    cvpl = 0.0
    cvpl_ok = True
    for i, held in enumerate(rows):
        train = rows[:i] + rows[i + 1 :]
        try:
            if clinical_only:
                head = HeadFit(
                    None, None, 0, 0, coxph.fit_cox([r.record for r in train])
                )
            else:
                head = fit_head(train, config.selection)
            row_risks[held.row_id] = head.predict_row(held)
        except TdasurvError as exc:
            failures.append({"row": held.row_id, "error": type(exc).__name__, "message": str(exc)})
            cvpl_ok = False
            continue
        if collect_fold_details:
            details.append(
                {
                    "row": held.row_id,
                    "q": head.q,
                    "r": head.r,
                    "coefficients": [float(b) for b in head.fit.coefficients],
                }
            )
        full_records = []
        for row in rows:
            xi, zeta = head.scores_for(row)
            full_records.append(
                coxph.SurvivalRecord(
                    row.patient_id,
                    row.record.time,
                    row.record.event,
                    np.concatenate([row.record.covariates, xi, zeta]),
                )
            )
        cvpl += (
            coxph.log_partial_likelihood(full_records, head.fit.coefficients)
            - head.fit.log_likelihood
        )

    risk_scores: dict[str, float] = {}
    for pid in data.patients:
        vals = [
            risk
            for row_id, risk in row_risks.items()
            if row_id == pid or row_id.startswith(pid + "#")
        ]
        if vals:
            risk_scores[pid] = float(np.mean(vals))
    return LoocvResult(
        risk_scores,
        row_risks,
        failures,
        cvpl if cvpl_ok else None,
        details if collect_fold_details else None,
    )


# ---------------------------------------------------------------------------
# Study driver
# ---------------------------------------------------------------------------

@dataclass
class StudyReport:
    config: StudyConfig
    report: dict
    functional_head: HeadFit
    km_high: survstats.KmCurve
    km_low: survstats.KmCurve

    def write(self, out_dir: str | Path) -> Path:
        """Write report.json plus plot-ready CSV artifacts; returns out_dir."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "report.json", "w") as fh:
            json.dump(self.report, fh, indent=1, sort_keys=True)
            fh.write("\n")
        survstats.save_km_csv(self.km_high, out / "km_high.csv")
        survstats.save_km_csv(self.km_low, out / "km_low.csv")
        with open(out / "risk_scores.csv", "w", newline="") as fh:
            fh.write("patient_id,risk,group\n")
            loocv = self.report["loocv"]
            for pid in sorted(loocv["risk_scores"]):
                fh.write(f"{pid},{loocv['risk_scores'][pid]!r},{loocv['groups'][pid]}\n")
        head = self.functional_head
        if head.model0 is not None and head.q > 0:
            psurf.save_surface_csv(
                export_coefficient_surface(head.fit, head.model0, 0),
                out / "coefficient_surface_dim0.csv",
            )
        if head.model1 is not None and head.r > 0:
            psurf.save_surface_csv(
                export_coefficient_surface(head.fit, head.model1, 1),
                out / "coefficient_surface_dim1.csv",
            )
        return out


def _grid_meta(grid: SurfaceGrid | None) -> dict | None:
    if grid is None:
        return None
    return {
        "x_start": grid.x_start,
        "x_stop": grid.x_stop,
        "y_start": grid.y_start,
        "y_stop": grid.y_stop,
        "n_points": grid.n_points,
    }


def _split_and_compare(
    data: StudyData, risk_scores: dict[str, float]
) -> tuple[dict, np.ndarray, list, list]:
    """Median split on per-patient risks; log-rank, HR, and KM curves."""
    pids = [p for p in data.patients if p in risk_scores]
    scored = [(p, risk_scores[p]) for p in pids]
    labels = survstats.assign_risk_groups(scored)
    high = [data.patient_records[p] for p, lab in zip(pids, labels) if lab == 1]
    low = [data.patient_records[p] for p, lab in zip(pids, labels) if lab == 0]
    stat, df, p = survstats.log_rank(high, low)
    summary = {
        "groups": {p: ("high" if lab == 1 else "low") for p, lab in zip(pids, labels)},
        "log_rank": {"statistic": float(stat), "df": df, "p": float(p)},
        "n_high": len(high),
        "n_low": len(low),
    }
    try:
        summary["hazard_ratio"] = float(
            survstats.hazard_ratio([data.patient_records[p] for p in pids], labels)
        )
    except TdasurvError as exc:
        # tiny or perfectly split cohorts have no finite group HR
        summary["hazard_ratio"] = None
        summary["hazard_ratio_error"] = type(exc).__name__
    return summary, labels, high, low


def run_study(config: StudyConfig, diagset: DiagramSet | None = None) -> StudyReport:
    """Full pipeline: features, clinical and functional fits, PV validity
    test, LOOCV risk groups, KM / log-rank / hazard-ratio comparisons."""
    config.validate()
    if diagset is None:
        diagset = extract_diagrams(config)
    data = build_study_data(config, diagset)
    records_rows = [row.record for row in data.rows]

    clinical_fit = coxph.fit_cox(records_rows)
    head = fit_head(data.rows, config.selection)

    # validity test: PV-selected components, block chi-square (q + r df)
    validity = {"threshold": config.validity_threshold}
    try:
        if (
            config.selection.get("mode") == "pv"
            and config.selection.get("threshold") == config.validity_threshold
        ):
            validity_head = head
        else:
            validity_head = fit_head(
                data.rows, {"mode": "pv", "threshold": config.validity_threshold}
            )
        v_stat, v_df, v_p = coxph.block_chisq_test(validity_head.fit)
        validity.update(
            q=validity_head.q,
            r=validity_head.r,
            statistic=float(v_stat),
            df=v_df,
            p=float(v_p),
        )
    except TdasurvError as exc:
        # cohorts too small for the PV fit keep the study alive
        validity.update(error=type(exc).__name__, message=str(exc))

    loocv = loocv_predict(config, data)
    loocv_clin = loocv_predict(config, data, clinical_only=True)
    functional_summary, _, high, low = _split_and_compare(data, loocv.risk_scores)
    clinical_summary, _, _, _ = _split_and_compare(data, loocv_clin.risk_scores)

    km_high = survstats.kaplan_meier(high)
    km_low = survstats.kaplan_meier(low)

    names = data.covariate_names
    functional_names = (
        names + [f"fpc0_{j + 1}" for j in range(head.q)] + [f"fpc1_{k + 1}" for k in range(head.r)]
    )
    report = {
        "provenance": {
            "config": config.canonical(),
            "config_hash": config.config_hash(),
            "seed": config.seed,
            "kernel": config.kernel,
            "n_patients": len(data.patients),
            "n_images": diagset.n_images,
            "n_rows": len(data.rows),
        },
        "grids": {"dim0": _grid_meta(data.grid0), "dim1": _grid_meta(data.grid1)},
        "models": {
            "clinical": coxph.fit_report(clinical_fit, names),
            "functional": coxph.fit_report(head.fit, functional_names),
        },
        "selected": {"q": head.q, "r": head.r},
        "validity": validity,
        "loocv": {
            "risk_scores": {p: float(v) for p, v in sorted(loocv.risk_scores.items())},
            "failures": loocv.failures,
            **functional_summary,
            "clinical": {
                "risk_scores": {p: float(v) for p, v in sorted(loocv_clin.risk_scores.items())},
                "failures": loocv_clin.failures,
                **clinical_summary,
            },
        },
        "km": {
            "high": [[t, s, n, d] for t, s, n, d in km_high.steps],
            "low": [[t, s, n, d] for t, s, n, d in km_low.steps],
        },
    }
    return StudyReport(config, report, head, km_high, km_low)


# ---------------------------------------------------------------------------
# Smoothing-parameter grid search
# ---------------------------------------------------------------------------

def _grid_values(spec: dict) -> list[float]:
    start, stop, step = spec["start"], spec["stop"], spec["step"]
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 10) for i in range(n)]


def sigma_grid_search(config: StudyConfig, diagset: DiagramSet | None = None) -> list[dict]:
    """CVPL over every (sigma0, sigma1) pair in the configured grid.

    Returns the full table, successful pairs first ranked by CVPL
    descending (ties by smaller sigmas), failed pairs after with their
    errors recorded.
    """
    config.validate()
    if diagset is None:
        diagset = extract_diagrams(config)
    if config.sigma_grid is not None:
        values = _grid_values(config.sigma_grid)
        candidates = [(s0, s1) for s0 in values for s1 in values]
    else:
        candidates = [(config.sigma0, config.sigma1)]
    table = []
    for s0, s1 in candidates:
        entry = {"sigma0": s0, "sigma1": s1}
        try:
            data = build_study_data(config, diagset, s0, s1)
            result = loocv_predict(config, data)
        except TdasurvError as exc:
            entry.update(status="failed", error=type(exc).__name__, message=str(exc), cvpl=None)
            table.append(entry)
            continue
        if result.cvpl is None:
            first = result.failures[0]
            entry.update(
                status="failed",
                error=first["error"],
                message=f"fold {first['row']}: {first['message']}",
                cvpl=None,
            )
        else:
            entry.update(status="ok", cvpl=float(result.cvpl))
        table.append(entry)
    ok = [e for e in table if e["status"] == "ok"]
    failed = [e for e in table if e["status"] != "ok"]
    ok.sort(key=lambda e: (-e["cvpl"], e["sigma0"], e["sigma1"]))
    for rank, entry in enumerate(ok, start=1):
        entry["rank"] = rank
    return ok + failed


# ---------------------------------------------------------------------------
# Permutation null study
# ---------------------------------------------------------------------------

def _permutation_seed(seed: int, cohort: int, image_index: int) -> int:
    ss = np.random.SeedSequence([seed, cohort, image_index])
    return int(ss.generate_state(1, np.uint64)[0])


def null_simulation(
    config: StudyConfig, n_cohorts: int, images: dict[str, list[LabelImage]] | None = None
) -> list[dict]:
    """Destroy shape by permuting pixels, keep survival and class counts.

    For each cohort every image's pixels are shuffled with a seed derived
    from (config seed, cohort id, image index); the functional pipeline is
    rerun and the median-split log-rank p and the validity block-test p are
    recorded. The clinical-only log-rank p does not depend on pixels and is
    computed once on the original data and repeated per row.
    """
    config.validate()
    if n_cohorts < 1:
        raise ConfigError("n_cohorts must be >= 1")
    if images is None:
        images = load_cohort_images(config)
    base_data = build_study_data(config, extract_diagrams(config, images))
    clin = loocv_predict(config, base_data, clinical_only=True)
    clinical_summary, _, _, _ = _split_and_compare(base_data, clin.risk_scores)
    clinical_p = clinical_summary["log_rank"]["p"]

    rows = []
    for k in range(n_cohorts):
        counter = 0
        permuted: dict[str, list[LabelImage]] = {}
        for pid in sorted(images):
            permuted[pid] = []
            for img in images[pid]:
                permuted[pid].append(
                    imgio.permute_pixels(img, _permutation_seed(config.seed, k, counter))
                )
                counter += 1
        data = build_study_data(config, extract_diagrams(config, permuted))
        try:
            validity_head = fit_head(
                data.rows, {"mode": "pv", "threshold": config.validity_threshold}
            )
            _stat, _df, block_p = coxph.block_chisq_test(validity_head.fit)
            block_p = float(block_p)
        except TdasurvError:
            block_p = None
        result = loocv_predict(config, data)
        summary, _, _, _ = _split_and_compare(data, result.risk_scores)
        rows.append(
            {
                "cohort": k,
                "functional_log_rank_p": summary["log_rank"]["p"],
                "clinical_log_rank_p": clinical_p,
                "block_p": block_p,
                "n_fold_failures": len(result.failures),
            }
        )
    return rows


# ---------------------------------------------------------------------------
# Coefficient surface export
# ---------------------------------------------------------------------------

def export_coefficient_surface(
    fit: coxph.CoxFit, model: fpca.FpcaModel, dimension: int
) -> PersistenceSurface:
    """Estimated functional coefficient: the block coefficients combined
    with their eigenfunctions, on the model's grid."""
    if dimension not in (0, 1):
        raise DimensionMismatch(f"dimension must be 0 or 1, got {dimension}")
    if model.grid is None:
        raise DimensionMismatch("model has no grid metadata; fit it from surfaces")
    n_clin, q, r = fit.blocks
    if dimension == 0:
        coeffs = fit.coefficients[n_clin : n_clin + q]
    else:
        coeffs = fit.coefficients[n_clin + q : n_clin + q + r]
    if coeffs.size > model.n_components:
        raise DimensionMismatch(
            f"fit uses {coeffs.size} components but model stores {model.n_components}"
        )
    values = (
        coeffs @ model.eigenfunctions[: coeffs.size]
        if coeffs.size
        else np.zeros(model.mean.size)
    )
    sigma = model.sigma if model.sigma is not None else 1.0
    kernel = model.kernel if model.kernel is not None else "standard-gaussian"
    return PersistenceSurface(model.grid, values, sigma, kernel)
