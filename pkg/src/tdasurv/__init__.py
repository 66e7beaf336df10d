"""Topological image features for survival analysis.

Label images -> signed distance fields -> cubical persistence diagrams ->
weighted Gaussian surfaces -> functional principal components -> Cox
proportional-hazards models, with study-level drivers for LOOCV risk
groups, bandwidth grid search, and permutation null studies.
"""

from .coxph import (
    CoxFit,
    SurvivalRecord,
    aic,
    block_chisq_test,
    fit_cox,
    fit_report,
    fit_with_scores,
    log_partial_likelihood,
    predict_risk,
    read_survival_csv,
    select_fpcs_aic,
    wald_tests,
)
from .cubical import (
    CubicalFiltration,
    PersistenceDiagram,
    betti_numbers,
    build_filtration,
    compute_persistence,
    filter_finite,
    load_diagram_csv,
    rescale_diagram,
    restrict_dimension,
    save_diagram_csv,
)
from .errors import TdasurvError
from .fpca import (
    FpcaModel,
    fit_fpca,
    load_fpca,
    percent_variance,
    project,
    reconstruct,
    save_fpca,
    select_by_pv,
)
from .imgio import (
    EMPTY,
    NORMAL,
    TUMOR,
    CohortSpec,
    LabelImage,
    denoise,
    load_label_image,
    permute_pixels,
    save_label_image,
    synth_cohort,
    transform,
    write_cohort,
)
from .pipeline import (
    StudyConfig,
    StudyReport,
    export_coefficient_surface,
    extract_diagrams,
    loocv_predict,
    null_simulation,
    run_study,
    sigma_grid_search,
)
from .psurf import (
    PersistenceSurface,
    SurfaceGrid,
    default_padding,
    load_surface_csv,
    max_distance_weight,
    mean_surface,
    persistence_surface,
    save_surface_csv,
    shared_grid,
)
from .sedt import DistanceField, load_distance_csv, save_distance_csv, sedt2, sedt3
from .special import chi2_sf, gamma_sf, normal_sf
from .survstats import (
    KmCurve,
    assign_risk_groups,
    hazard_ratio,
    kaplan_meier,
    log_rank,
    save_km_csv,
)

__version__ = "0.1.0"

__all__ = [
    "CohortSpec",
    "CoxFit",
    "CubicalFiltration",
    "DistanceField",
    "EMPTY",
    "FpcaModel",
    "KmCurve",
    "LabelImage",
    "NORMAL",
    "PersistenceDiagram",
    "PersistenceSurface",
    "StudyConfig",
    "StudyReport",
    "SurfaceGrid",
    "SurvivalRecord",
    "TUMOR",
    "TdasurvError",
    "aic",
    "assign_risk_groups",
    "betti_numbers",
    "block_chisq_test",
    "build_filtration",
    "chi2_sf",
    "compute_persistence",
    "default_padding",
    "denoise",
    "export_coefficient_surface",
    "extract_diagrams",
    "filter_finite",
    "fit_cox",
    "fit_fpca",
    "fit_report",
    "fit_with_scores",
    "gamma_sf",
    "hazard_ratio",
    "kaplan_meier",
    "load_diagram_csv",
    "load_distance_csv",
    "load_fpca",
    "load_label_image",
    "load_surface_csv",
    "log_partial_likelihood",
    "log_rank",
    "loocv_predict",
    "max_distance_weight",
    "mean_surface",
    "normal_sf",
    "null_simulation",
    "percent_variance",
    "permute_pixels",
    "persistence_surface",
    "predict_risk",
    "project",
    "read_survival_csv",
    "reconstruct",
    "rescale_diagram",
    "restrict_dimension",
    "run_study",
    "save_diagram_csv",
    "save_distance_csv",
    "save_fpca",
    "save_km_csv",
    "save_label_image",
    "save_surface_csv",
    "sedt2",
    "sedt3",
    "select_by_pv",
    "select_fpcs_aic",
    "shared_grid",
    "sigma_grid_search",
    "synth_cohort",
    "transform",
    "wald_tests",
    "write_cohort",
]
