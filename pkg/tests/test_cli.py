import json

import numpy as np
import pytest

from doublephase import Field, Mesh1D, write_field_csv
from doublephase.cli import (ConfigError, build_mesh, build_phase, load_config,
                             main, parse_config_text)


def run_cli(args):
    return main(args)


class TestConfigParsing:
    def test_defaults_and_overrides(self):
        cfg = load_config(None, {"phase.p": "2.5"})
        assert cfg["phase.p"] == "2.5"
        assert cfg["mesh.n"] == "512"

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("nonsense.key=1\n")
        with pytest.raises(ConfigError):
            load_config(None, {"not.a.key": "1"})

    def test_comments_and_blank_lines(self):
        cfg = parse_config_text("# a comment\n\nseed=42\nsolver.tol_lambda=1e-8\n")
        assert cfg == {"seed": "42", "solver.tol_lambda": "1e-8"}

    def test_config_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("phase.p=2\nphase.q=4\nmesh.n=100\n")
        cfg = load_config(str(path), {})
        assert cfg["mesh.n"] == "100"

    def test_missing_config_file(self):
        with pytest.raises(ConfigError):
            load_config("/no/such/file.cfg", {})

    def test_mesh_validation(self):
        with pytest.raises(ConfigError):
            build_mesh(load_config(None, {"mesh.b": "-1"}))
        with pytest.raises(ConfigError):
            build_mesh(load_config(None, {"mesh.dim": "3"}))

    def test_phase_validation(self):
        cfg = load_config(None, {"phase.p": "0.5"})
        with pytest.raises(ConfigError):
            build_phase(cfg, build_mesh(cfg))


class TestNormCommand:
    def test_golden_ratio(self, capsys):
        code = run_cli(["norm", "--set", "phase.p=2", "--set", "phase.q=4",
                        "--set", "mesh.n=128"])
        out = capsys.readouterr().out
        assert code == 0
        val = float([ln for ln in out.splitlines()
                     if ln.startswith("luxemburg_norm=")][0].split("=")[1].split()[0])
        assert val == pytest.approx(1.2720196495140690, abs=1e-9)
        assert "closed_form_norm=1.27201964951" in out

    def test_zero_field(self, tmp_path, capsys):
        mesh = Mesh1D(0, 1, 64)
        path = tmp_path / "zero.csv"
        write_field_csv(path, Field.zero(mesh))
        code = run_cli(["norm", "--set", f"norm.field={path}",
                        "--set", "mesh.n=64", "--set", "phase.p=2",
                        "--set", "phase.q=4"])
        out = capsys.readouterr().out
        assert code == 0
        assert "luxemburg_norm=0 " in out

    def test_p_not_below_q_exits_2(self, capsys):
        code = run_cli(["norm", "--set", "phase.p=3", "--set", "phase.q=3"])
        assert code == 2
        assert "phase.p < phase.q" in capsys.readouterr().err

    def test_missing_field_file_exits_2(self, capsys):
        code = run_cli(["norm", "--set", "norm.field=/does/not/exist.csv"])
        assert code == 2


class TestEigCommand:
    def test_prints_lambda_near_pi(self, tmp_path, capsys):
        code = run_cli(["eig", "--seed", "3", "--out", str(tmp_path),
                        "--resolution", "256",
                        "--set", "phase.p=2", "--set", "phase.q=2",
                        "--set", "solver.restarts=2"])
        out = capsys.readouterr().out
        assert code == 0
        lam = float([ln for ln in out.splitlines()
                     if ln.startswith("lambda=")][0].split("=")[1])
        assert lam == pytest.approx(np.pi, rel=1e-2)
        files = sorted(p.name for p in tmp_path.iterdir())
        assert files == ["eig_p2_q2_n256_seed3.csv", "eig_p2_q2_n256_seed3.json"]
        meta = json.loads((tmp_path / files[1]).read_text())
        assert meta["seed"] == 3 and meta["converged"]

    def test_strict_nonconvergence_exits_4(self, tmp_path, capsys):
        code = run_cli(["eig", "--strict", "--out", str(tmp_path),
                        "--resolution", "128",
                        "--set", "phase.p=2", "--set", "phase.q=3",
                        "--set", "solver.max_iter=2",
                        "--set", "solver.tol_lambda=1e-15",
                        "--set", "solver.tol_residual=1e-15",
                        "--set", "solver.restarts=1"])
        assert code == 4

    def test_same_seed_byte_identical(self, tmp_path, capsys):
        for sub in ("a", "b"):
            run_cli(["eig", "--seed", "9", "--out", str(tmp_path / sub),
                     "--resolution", "128", "--set", "phase.p=2",
                     "--set", "phase.q=2.4", "--set", "solver.restarts=2"])
        name = "eig_p2_q2.4_n128_seed9"
        for ext in (".csv", ".json"):
            assert ((tmp_path / "a" / (name + ext)).read_bytes()
                    == (tmp_path / "b" / (name + ext)).read_bytes())


class TestEigmCommand:
    def test_table_non_decreasing(self, tmp_path, capsys):
        code = run_cli(["eigm", "--out", str(tmp_path), "--resolution", "128",
                        "--set", "phase.p=2", "--set", "phase.q=2",
                        "--set", "eig.m_max=3", "--set", "solver.restarts=1"])
        out = capsys.readouterr().out
        assert code == 0
        rows = [ln.split() for ln in out.splitlines()
                if ln and ln[0].isdigit()]
        bounds = [float(r[1]) for r in rows]
        assert bounds == sorted(bounds)
        csv = (tmp_path / "eigm_seed0.csv").read_text()
        assert csv.startswith("# schema=1\nm,upper_bound\n")


class TestExperimentCommand:
    def test_unknown_name_exits_2(self, capsys):
        assert run_cli(["experiment", "nope"]) == 2

    def test_non_nested_domains_exit_2(self, capsys):
        code = run_cli(["experiment", "domains", "--resolution", "64",
                        "--set", "experiment.domains=4,2",
                        "--set", "phase.p=2", "--set", "phase.q=2.4",
                        "--set", "solver.restarts=1"])
        assert code == 2

    def test_symmetry_end_to_end(self, tmp_path, capsys):
        code = run_cli(["experiment", "symmetry", "--out", str(tmp_path),
                        "--set", "mesh.n=127", "--set", "phase.p=2",
                        "--set", "phase.q=3", "--set", "solver.restarts=2"])
        out = capsys.readouterr().out
        assert code == 0
        assert "experiment symmetry: PASS" in out
        assert (tmp_path / "symmetry.csv").exists()
        assert (tmp_path / "symmetry.svg").exists()

    def test_symmetry_requires_unit_weight(self, capsys):
        code = run_cli(["experiment", "symmetry",
                        "--set", "phase.weight=constant:2"])
        assert code == 2

    def test_same_seed_byte_identical_report(self, tmp_path, capsys):
        for sub in ("a", "b"):
            run_cli(["experiment", "largeexp", "--seed", "4",
                     "--out", str(tmp_path / sub), "--set", "mesh.n=128",
                     "--set", "experiment.h_list=1,2,4",
                     "--set", "phase.p=2", "--set", "phase.q=4",
                     "--set", "solver.restarts=1"])
        assert ((tmp_path / "a" / "largeexp.csv").read_bytes()
                == (tmp_path / "b" / "largeexp.csv").read_bytes())
