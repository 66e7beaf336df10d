"""CLI subcommands: artifact emission, config plumbing, and the JSON
error contract (stderr line + exit status 2).
"""

import json
import subprocess
import sys

import numpy as np
import pytest

from tdasurv import psurf, sedt
from tdasurv.cli import main
from tdasurv.cubical import (
    build_filtration,
    compute_persistence,
    filter_finite,
    load_diagram_csv,
    restrict_dimension,
)
from tdasurv.imgio import load_label_image
from tdasurv.pipeline import StudyConfig

from test_pipeline import MICRO_IMAGES, MICRO_SURVIVAL, write_micro_cohort

IMAGE_BODY = "1,0,0,0,1\n0,0,0,0,0\n0,0,0,0,0"

SURVIVAL_BODY = (
    "patient_id,time,event,z\n"
    "A,1.0,1,1.0\n"
    "B,2.0,1,0.0\n"
    "C,3.0,1,1.0\n"
    "D,4.0,1,0.0\n"
    "E,5.0,1,1.0\n"
    "F,6.0,1,0.0\n"
)


def write_image(root, body=IMAGE_BODY, name="img.csv"):
    path = root / name
    path.write_text(body)
    return path


def write_study_json(root, **extra):
    write_micro_cohort(root, MICRO_IMAGES, MICRO_SURVIVAL)
    payload = {
        "manifest": "manifest.json",
        "survival": "survival.csv",
        "class_mode": "two-class",
        "sigma0": 1.0,
        "sigma1": 1.0,
        "selection": {"mode": "aic", "q_max": 2, "r_max": 2},
    }
    payload.update(extra)
    path = root / "study.json"
    path.write_text(json.dumps(payload))
    return path


def run_cli(args):
    return main([str(a) for a in args])


class TestImageCommands:
    def test_sedt_writes_distance_field(self, tmp_path, capsys):
        img = write_image(tmp_path)
        rc = run_cli(["--out", tmp_path / "out", "sedt", img, "--class-mode", "two-class"])
        assert rc == 0
        out = tmp_path / "out" / "img_sedt.csv"
        assert str(out) in capsys.readouterr().out
        field = sedt.load_distance_csv(out)
        expected = sedt.sedt2(load_label_image(img))
        assert np.array_equal(field.values, expected.values)

    def test_ph_writes_diagram(self, tmp_path):
        img = write_image(tmp_path)
        rc = run_cli(
            ["--out", tmp_path / "out", "ph", img, "--class-mode", "two-class", "--finite"]
        )
        assert rc == 0
        diagram = load_diagram_csv(tmp_path / "out" / "img_diagram.csv")
        expected = filter_finite(
            compute_persistence(build_filtration(sedt.sedt2(load_label_image(img))))
        )
        assert np.array_equal(diagram.dim0, expected.dim0)
        assert np.array_equal(diagram.dim1, expected.dim1)

    def test_ph_from_field_matches_image_route(self, tmp_path):
        img = write_image(tmp_path)
        assert run_cli(["--out", tmp_path / "a", "sedt", img, "--class-mode", "two-class"]) == 0
        field_csv = tmp_path / "a" / "img_sedt.csv"
        assert run_cli(["--out", tmp_path / "a", "ph", field_csv, "--from-field"]) == 0
        assert run_cli(["--out", tmp_path / "b", "ph", img, "--class-mode", "two-class"]) == 0
        via_field = (tmp_path / "a" / "img_sedt_diagram.csv").read_bytes()
        via_image = (tmp_path / "b" / "img_diagram.csv").read_bytes()
        assert via_field == via_image

    def test_surface_matches_library(self, tmp_path):
        img = write_image(tmp_path)
        run_cli(["--out", tmp_path, "ph", img, "--class-mode", "two-class", "--finite"])
        diagram_csv = tmp_path / "img_diagram.csv"
        rc = run_cli(["--out", tmp_path, "surface", diagram_csv, "--dim", "0", "--sigma", "1.0"])
        assert rc == 0
        loaded = psurf.load_surface_csv(tmp_path / "img_diagram_surface_dim0.csv")
        expected = psurf.persistence_surface(
            restrict_dimension(filter_finite(load_diagram_csv(diagram_csv)), 0), None, 1.0
        )
        assert loaded.grid == expected.grid
        assert np.array_equal(loaded.values, expected.values)
        assert loaded.sigma == 1.0


class TestSurvivalCommands:
    def test_fit_writes_report(self, tmp_path):
        surv = tmp_path / "survival.csv"
        surv.write_text(SURVIVAL_BODY)
        rc = run_cli(["--out", tmp_path / "out", "fit", surv])
        assert rc == 0
        with open(tmp_path / "out" / "fit.json") as fh:
            report = json.load(fh)
        assert "z" in report["coefficients"]
        assert np.isfinite(report["coefficients"]["z"]["coef"])
        assert report["log_likelihood"] < 0

    def test_km_writes_curve(self, tmp_path):
        surv = tmp_path / "survival.csv"
        surv.write_text(SURVIVAL_BODY)
        rc = run_cli(["--out", tmp_path / "out", "km", surv])
        assert rc == 0
        lines = (tmp_path / "out" / "km.csv").read_text().splitlines()
        assert lines[0] == "time,survival,at_risk,events"
        assert len(lines) == 7  # six distinct event times


class TestStudyCommands:
    def test_report_bundle(self, tmp_path, capsys):
        cfg_path = write_study_json(tmp_path)
        out = tmp_path / "results"
        rc = run_cli(["--config", cfg_path, "--out", out, "report"])
        assert rc == 0
        assert str(out) in capsys.readouterr().out
        with open(out / "report.json") as fh:
            report = json.load(fh)
        assert report["provenance"]["config_hash"] == StudyConfig.from_json(cfg_path).config_hash()
        for name in ("km_high.csv", "km_low.csv", "risk_scores.csv"):
            assert (out / name).exists()

    def test_loocv_json(self, tmp_path):
        cfg_path = write_study_json(tmp_path)
        rc = run_cli(["--config", cfg_path, "--out", tmp_path / "out", "loocv"])
        assert rc == 0
        with open(tmp_path / "out" / "loocv.json") as fh:
            payload = json.load(fh)
        assert set(payload) == {"risk_scores", "row_risks", "failures", "cvpl"}
        assert sorted(payload["risk_scores"]) == ["P0", "P1", "P2"]
        assert sorted(payload["row_risks"]) == ["P0#0", "P0#1", "P1#0", "P2#0"]

    def test_grid_search_json(self, tmp_path):
        cfg_path = write_study_json(
            tmp_path, sigma0=None, sigma1=None, sigma_grid={"start": 0.5, "stop": 1.0, "step": 0.5}
        )
        rc = run_cli(["--config", cfg_path, "--out", tmp_path / "out", "grid-search"])
        assert rc == 0
        with open(tmp_path / "out" / "grid_search.json") as fh:
            table = json.load(fh)
        assert len(table) == 4
        assert {(e["sigma0"], e["sigma1"]) for e in table} == {
            (a, b) for a in (0.5, 1.0) for b in (0.5, 1.0)
        }

    def test_null_sim_json(self, tmp_path):
        cfg_path = write_study_json(tmp_path)
        rc = run_cli(
            ["--config", cfg_path, "--out", tmp_path / "out", "--seed", 7, "null-sim", "--cohorts", 2]
        )
        assert rc == 0
        with open(tmp_path / "out" / "null_simulation.json") as fh:
            rows = json.load(fh)
        assert [r["cohort"] for r in rows] == [0, 1]

    def test_synth_writes_cohort(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(
            json.dumps(
                {
                    "n_patients": 2,
                    "images_per_patient": 1,
                    "image_size": 8,
                    "class_mix": {"blob": 1.0},
                    "hazard_multipliers": {"blob": 1.0},
                    "censor_rate": 0.0,
                    "seed": 3,
                }
            )
        )
        out = tmp_path / "cohort"
        rc = run_cli(["--out", out, "synth", spec])
        assert rc == 0
        assert (out / "manifest.json").exists()
        assert (out / "survival.csv").exists()
        with open(out / "manifest.json") as fh:
            manifest = json.load(fh)
        assert len(manifest) == 2
        for paths in manifest.values():
            for rel in paths:
                assert (out / rel).exists()


class TestErrorContract:
    def read_error(self, capsys):
        err = capsys.readouterr().err.strip().splitlines()
        assert len(err) == 1
        return json.loads(err[0])["error"]

    def test_missing_file_reports_json(self, tmp_path, capsys):
        rc = run_cli(["--out", tmp_path, "km", tmp_path / "nope.csv"])
        assert rc == 2
        error = self.read_error(capsys)
        assert error["code"] == "FileNotFound"
        assert "nope.csv" in error["message"]

    def test_domain_error_reports_json(self, tmp_path, capsys):
        img = write_image(tmp_path, body="7,0\n0,1\n")
        rc = run_cli(["--out", tmp_path, "sedt", img, "--class-mode", "two-class"])
        assert rc == 2
        error = self.read_error(capsys)
        assert error["code"] == "InvalidLabel"

    def test_study_command_requires_config(self, tmp_path, capsys):
        rc = run_cli(["--out", tmp_path, "loocv"])
        assert rc == 2
        error = self.read_error(capsys)
        assert error["code"] == "ConfigError"
        assert "--config" in error["message"]

    def test_threads_must_be_positive(self, tmp_path, capsys):
        surv = tmp_path / "survival.csv"
        surv.write_text(SURVIVAL_BODY)
        rc = run_cli(["--threads", 0, "km", surv])
        assert rc == 2
        error = self.read_error(capsys)
        assert error["code"] == "ConfigError"
        assert "--threads" in error["message"]

    def test_bad_config_file_reports_json(self, tmp_path, capsys):
        cfg = tmp_path / "study.json"
        cfg.write_text("{broken")
        rc = run_cli(["--config", cfg, "--out", tmp_path, "report"])
        assert rc == 2
        assert self.read_error(capsys)["code"] == "ConfigError"


def test_module_entry_point(tmp_path):
    surv = tmp_path / "survival.csv"
    surv.write_text(SURVIVAL_BODY)
    proc = subprocess.run(
        [sys.executable, "-m", "tdasurv.cli", "--out", str(tmp_path / "out"), "km", str(surv)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "out" / "km.csv").exists()
