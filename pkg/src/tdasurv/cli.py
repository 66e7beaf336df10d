"""Command-line interface.

Each subcommand wraps one library entry point and writes its outputs under
--out. Failures from bad inputs print a one-line JSON error object to
stderr and exit with status 2 so shell pipelines can branch on them.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import coxph, imgio, pipeline, psurf, sedt, survstats
from .cubical import build_filtration, compute_persistence, filter_finite, load_diagram_csv, restrict_dimension, save_diagram_csv
from .errors import ConfigError, TdasurvError


def _out_dir(args) -> Path:
    out = Path(args.out) if args.out else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_config(args) -> pipeline.StudyConfig:
    if not args.config:
        raise ConfigError("this command needs --config <study.json>")
    cfg = pipeline.StudyConfig.from_json(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out:
        cfg.out_dir = Path(args.out)
    return cfg


def _write_json(payload, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(path)


def _cmd_sedt(args) -> None:
    img = imgio.load_label_image(args.image)
    if args.class_mode == "three-class":
        if args.denoise:
            img = imgio.denoise(img)
        field = sedt.sedt3(img)
    else:
        field = sedt.sedt2(img)
    out = _out_dir(args) / (Path(args.image).stem + "_sedt.csv")
    sedt.save_distance_csv(field, out)
    print(out)


def _cmd_ph(args) -> None:
    if args.from_field:
        field = sedt.load_distance_csv(args.input)
    else:
        img = imgio.load_label_image(args.input)
        if args.class_mode == "three-class":
            if args.denoise:
                img = imgio.denoise(img)
            field = sedt.sedt3(img)
        else:
            field = sedt.sedt2(img)
    diagram = compute_persistence(build_filtration(field))
    if args.finite:
        diagram = filter_finite(diagram)
    out = _out_dir(args) / (Path(args.input).stem + "_diagram.csv")
    save_diagram_csv(diagram, out)
    print(out)


def _cmd_surface(args) -> None:
    diagram = restrict_dimension(filter_finite(load_diagram_csv(args.diagram)), args.dim)
    surf = psurf.persistence_surface(diagram, None, args.sigma, args.kernel)
    out = _out_dir(args) / (Path(args.diagram).stem + f"_surface_dim{args.dim}.csv")
    psurf.save_surface_csv(surf, out)
    print(out)


def _cmd_fit(args) -> None:
    records, names = coxph.read_survival_csv(args.survival)
    fit = coxph.fit_cox(records, tol=args.tol, max_iterations=args.max_iterations)
    _write_json(coxph.fit_report(fit, names), _out_dir(args) / "fit.json")


def _cmd_km(args) -> None:
    records, _ = coxph.read_survival_csv(args.survival)
    curve = survstats.kaplan_meier(records)
    out = _out_dir(args) / "km.csv"
    survstats.save_km_csv(curve, out)
    print(out)


def _cmd_loocv(args) -> None:
    cfg = _load_config(args)
    result = pipeline.loocv_predict(cfg)
    payload = {
        "risk_scores": {k: float(v) for k, v in sorted(result.risk_scores.items())},
        "row_risks": {k: float(v) for k, v in sorted(result.row_risks.items())},
        "failures": result.failures,
        "cvpl": None if result.cvpl is None else float(result.cvpl),
    }
    _write_json(payload, _out_dir(args) / "loocv.json")


def _cmd_grid_search(args) -> None:
    cfg = _load_config(args)
    table = pipeline.sigma_grid_search(cfg)
    _write_json(table, _out_dir(args) / "grid_search.json")


def _cmd_null_sim(args) -> None:
    cfg = _load_config(args)
    rows = pipeline.null_simulation(cfg, args.cohorts)
    _write_json(rows, _out_dir(args) / "null_simulation.json")


def _cmd_report(args) -> None:
    cfg = _load_config(args)
    report = pipeline.run_study(cfg)
    out = cfg.out_dir if cfg.out_dir is not None else _out_dir(args)
    report.write(out)
    print(out)


def _cmd_synth(args) -> None:
    with open(args.spec) as fh:
        raw = json.load(fh)
    seed = args.seed if args.seed is not None else raw.pop("seed", 0)
    raw.pop("seed", None)
    spec = imgio.CohortSpec(**raw)
    cohort = imgio.synth_cohort(spec, seed)
    out = _out_dir(args)
    imgio.write_cohort(cohort, out)
    print(out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tdasurv",
        description="Topological image features for survival analysis.",
    )
    parser.add_argument("--config", help="study configuration JSON")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="output directory (default: cwd)")
    parser.add_argument(
        "--threads", type=int, default=1, help="worker cap (execution is currently serial)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sedt", help="signed distance transform of a label image")
    p.add_argument("image", help="label image (CSV or palette PNG)")
    p.add_argument("--class-mode", choices=("two-class", "three-class"), default="three-class")
    p.add_argument("--denoise", action="store_true", help="majority-filter before the transform")
    p.set_defaults(func=_cmd_sedt)

    p = sub.add_parser("ph", help="persistence diagram of an image or distance field")
    p.add_argument("input", help="label image, or distance CSV with --from-field")
    p.add_argument("--from-field", action="store_true", help="input is a distance field CSV")
    p.add_argument("--class-mode", choices=("two-class", "three-class"), default="three-class")
    p.add_argument("--denoise", action="store_true")
    p.add_argument("--finite", action="store_true", help="drop infinite pairs")
    p.set_defaults(func=_cmd_ph)

    p = sub.add_parser("surface", help="weighted Gaussian surface from a diagram")
    p.add_argument("diagram", help="diagram CSV")
    p.add_argument("--dim", type=int, choices=(0, 1), default=0)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--kernel", choices=psurf.KERNELS, default="standard-gaussian")
    p.set_defaults(func=_cmd_surface)

    p = sub.add_parser("fit", help="Cox proportional-hazards fit from a survival CSV")
    p.add_argument("survival", help="survival CSV (patient_id,time,event,covariates...)")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iterations", type=int, default=100)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("km", help="Kaplan-Meier curve from a survival CSV")
    p.add_argument("survival")
    p.set_defaults(func=_cmd_km)

    p = sub.add_parser("loocv", help="leave-one-out risk prediction for a study")
    p.set_defaults(func=_cmd_loocv)

    p = sub.add_parser("grid-search", help="CVPL search over smoothing bandwidths")
    p.set_defaults(func=_cmd_grid_search)

    p = sub.add_parser("null-sim", help="pixel-permutation null study")
    p.add_argument("--cohorts", type=int, required=True)
    p.set_defaults(func=_cmd_null_sim)

    p = sub.add_parser("report", help="run the full study and write the report bundle")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("synth", help="generate a synthetic cohort from a spec JSON")
    p.add_argument("spec", help="cohort spec JSON")
    p.set_defaults(func=_cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        print(json.dumps({"error": {"code": "ConfigError", "message": "--threads must be >= 1"}}), file=sys.stderr)
        return 2
    try:
        args.func(args)
    except TdasurvError as exc:
        print(json.dumps({"error": {"code": exc.code, "message": str(exc)}}), file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(json.dumps({"error": {"code": "FileNotFound", "message": str(exc)}}), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
