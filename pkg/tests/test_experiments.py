import json
from dataclasses import replace

import numpy as np
import pytest

from shmm import io
from shmm.cell import MicroSolveConfig
from shmm.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, OUTPUT_ENV, main
from shmm.core import SHMMConfig
from shmm.experiments import (
    PRESETS,
    TABLE_COLUMNS,
    CheckConfig,
    ConfigError,
    DNSConfig,
    ExperimentConfig,
    ResultRecord,
    check_record,
    compare_tables,
    run_experiment,
    scaling_csv,
    scaling_probe,
)
from shmm.flowgen import StreamSpec
from shmm.tensor import DiffTensor2

SMALL_TOML = """
[experiment]
id = "custom"
name = "small"
macro_n = 2
points_per_level = 64
oracle_n = 64

[experiment.stream]
variant = "cellular-sum"
components = [[0.5, 5, 5]]

[experiment.micro]
method = "direct"

[experiment.dns]
enabled = true
n = 64
dt = 2e-5
t_end = 0.02

[experiment.check]
rel_err_max = 0.05
"""


@pytest.fixture
def small():
    return ExperimentConfig.from_toml(SMALL_TOML)


class TestConfig:
    def test_defaults(self):
        c = ExperimentConfig()
        assert (c.kappa, c.alpha, c.depth, c.macro_n, c.points_per_level) == (1.0, 5, 2, 10, 64)
        assert c.base == DiffTensor2.iso(1.0) and c.shmm.alpha == 5

    def test_toml(self, small):
        assert small.name == "small" and small.micro.method == "direct"
        assert small.stream.components == ((0.5, 5, 5),) and small.dns.enabled

    @pytest.mark.parametrize("name", PRESETS)
    def test_presets_load(self, name):
        c = ExperimentConfig.preset(name)
        assert c.name == name and c.alpha == 5

    def test_preset_contents(self):
        c = ExperimentConfig.preset("paper-4.2")
        assert c.stream.components == ((1 / 3, 5, 5), (1 / 3, 25, 25))
        assert c.macro_points == ((0, 0), (0, 1), (1, 0), (1, 1)) and c.dns.n == 256
        assert ExperimentConfig.preset("paper-4.4").stream.variant == "continuous-spectrum"

    @pytest.mark.parametrize(
        "text",
        [
            "[other]\n",
            "[experiment\n",
            '[experiment]\nid = "nope"\n',
            "[experiment]\nkappa = -1.0\n",
            "[experiment]\nbogus = 1\n",
            "[experiment]\nmacro_n = 2\nmacro_points = [[5, 0]]\n",
            '[experiment.stream]\nvariant = "wavy"\n',
            "[experiment.micro]\nn_micro = 1\n",
        ],
    )
    def test_config_errors(self, text):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_toml(text)

    def test_unknown_preset_and_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentConfig.preset("paper-9.9")
        with pytest.raises(ConfigError):
            ExperimentConfig.load(tmp_path / "absent.toml")

    def test_fingerprint_tracks_content(self, small):
        assert small.fingerprint() == ExperimentConfig.from_toml(SMALL_TOML).fingerprint()
        assert small.fingerprint() != replace(small, kappa=2.0).fingerprint()
        assert small.fingerprint() == replace(small, output_dir="elsewhere").fingerprint()


class TestRun:
    def test_zero_flow(self, tmp_path):
        cfg = ExperimentConfig(macro_n=2, points_per_level=16, oracle_n=16, micro=MicroSolveConfig(method="direct"))
        rec = run_experiment(cfg, tmp_path)
        assert rec.ok
        assert rec.shmm.max_abs_diff(DiffTensor2.iso(1.0)) < 1e-12
        assert rec.oracle == DiffTensor2.iso(1.0) and max(rec.rel_err) < 1e-12

    def test_small_run_writes_artifacts(self, small, tmp_path):
        rec = run_experiment(small, tmp_path)
        assert rec.ok, rec.errors
        for name in ("config.json", "psi.csv", "psi11_L1.csv", "effdiff_field.csv", "shmm_tensor.csv",
                     "oracle_tensor.csv", "dns_field.csv", "macro_profile_avg.csv", "baseline_profile_mid.csv",
                     "run_summary.json", "record.json", "timing.json"):
            assert (tmp_path / name).exists(), name
        assert max(rec.rel_err) < 0.05
        assert 0.0 <= rec.profile["dns_min"] and rec.profile["dns_max"] <= 1.0
        assert rec.profile["macro_l2"] < rec.profile["baseline_l2"]
        assert io.tensor_from_csv((tmp_path / "shmm_tensor.csv").read_text()) == rec.shmm
        back = ResultRecord.from_json((tmp_path / "record.json").read_text())
        assert back.shmm == rec.shmm and back.profile == rec.profile and back.wall_times == {}

    def test_artifacts_are_deterministic(self, small, tmp_path):
        run_experiment(small, tmp_path / "a")
        run_experiment(small, tmp_path / "b")
        names = sorted(p.name for p in (tmp_path / "a").iterdir() if p.name != "timing.json")
        for n in names:
            assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes(), n

    def test_failing_stage_is_recorded(self, small, tmp_path):
        cfg = replace(small, micro=MicroSolveConfig(max_steps=2), dns=DNSConfig())
        rec = run_experiment(cfg, tmp_path)
        assert "shmm" in rec.errors and rec.oracle is not None and rec.shmm is None
        assert json.loads((tmp_path / "record.json").read_text())["errors"]["shmm"]

    def test_check_record(self):
        rec = ResultRecord("custom", "x", rel_err=(0.02, 0.01), profile={"macro_l2": 0.01, "baseline_l2": 0.02})
        assert check_record(rec, CheckConfig()) == []
        assert check_record(rec, CheckConfig(rel_err_max=0.05, profile_l2_max=0.03)) == []
        miss = check_record(rec, CheckConfig(rel_err_max=0.01, baseline_factor=3.0))
        assert len(miss) == 2
        assert check_record(ResultRecord("custom", "y"), CheckConfig(profile_l2_max=0.1)) == ["profile comparison unavailable"]


class TestTables:
    def test_columns_and_rows(self):
        a = ResultRecord("shear", "a", DiffTensor2.diag(3.0, 1.0), DiffTensor2.diag(3.0, 1.0), (0.0, 0.0), wall_times={"shmm": 1.5})
        b = ResultRecord("custom", "b")
        text, csv = compare_tables([a, b])
        lines = csv.splitlines()
        assert lines[0].split(",") == list(TABLE_COLUMNS)
        assert lines[1].split(",")[:2] == ["a", "3.000000"] and lines[1].endswith("1.50")
        assert "nan" in lines[2] and len(text.splitlines()) == 3

    def test_empty(self):
        with pytest.raises(ValueError):
            compare_tables([])


def test_scaling_work_is_linear():
    pts = scaling_probe([1, 2, 3], SHMMConfig(points_per_level=16, micro=MicroSolveConfig(method="direct")))
    assert [p.grid_points for p in pts] == [256, 512, 768]
    assert [p.flat_points for p in pts] == [256, 256 * 25, 256 * 625]
    assert [p.hmm_calls for p in pts] == [1, 2, 3]
    assert scaling_csv(pts).splitlines()[0].startswith("depth,wall_time_s,grid_points")
    with pytest.raises(ValueError):
        scaling_probe([2, 1])


class TestCLI:
    def test_generate_decompose_effdiff(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path))
        assert main(["generate", "--components", "1/3,5,5;1/3,25,25"]) == EXIT_OK
        psi = tmp_path / "generate" / "psi.csv"
        assert psi.exists()
        assert main(["decompose", str(psi), "--alpha", "5"]) == EXIT_OK
        assert (tmp_path / "decompose" / "psi22_L1.csv").exists()
        capsys.readouterr()
        assert main(["effdiff", str(psi), "--method", "oracle", "--oracle-n", "64"]) == EXIT_OK
        k = DiffTensor2.from_csv(capsys.readouterr().out.strip())
        assert k.k11 > 1.0

    def test_shear_method(self, tmp_path, capsys):
        from shmm.fields import SpectralField2D

        io.write_spectral(tmp_path / "psi.csv", SpectralField2D.from_modes({(0, 1): -0.5j}))
        assert main(["effdiff", str(tmp_path / "psi.csv"), "--method", "shear", "--out", str(tmp_path)]) == EXIT_OK
        k = DiffTensor2.from_csv(capsys.readouterr().out.strip())
        assert k.k11 == pytest.approx(1.5, abs=1e-12) and k.k22 == pytest.approx(1.0, abs=1e-12)

    def test_dns_and_macro(self, tmp_path):
        assert main(["generate", "--components", "0.2,1,1", "--out", str(tmp_path)]) == EXIT_OK
        assert main(["dns", str(tmp_path / "psi.csv"), "--n", "32", "--dt", "1e-4", "--t-end", "0.002", "--out", str(tmp_path)]) == EXIT_OK
        (tmp_path / "k.csv").write_text(io.tensor_to_csv(DiffTensor2.diag(1.2, 1.0)))
        assert main(["macro", "--tensor", str(tmp_path / "k.csv"), "--n", "32", "--t-end", "0.002", "--out", str(tmp_path)]) == EXIT_OK
        for name in ("dns_field.csv", "dns_summary.json", "macro_profile_avg.csv"):
            assert (tmp_path / name).exists()

    def test_experiment_exit_codes(self, tmp_path):
        cfg = tmp_path / "small.toml"
        cfg.write_text(SMALL_TOML)
        assert main(["experiment", "--config", str(cfg), "--check", "--out", str(tmp_path / "ok")]) == EXIT_OK
        assert (tmp_path / "ok" / "table.csv").exists()
        strict = SMALL_TOML.replace("rel_err_max = 0.05", "rel_err_max = 1e-12")
        cfg.write_text(strict)
        assert main(["experiment", "--config", str(cfg), "--check", "--out", str(tmp_path / "miss")]) == EXIT_CHECK
        cfg.write_text(SMALL_TOML.replace('method = "direct"', 'method = "evolve"\nmax_steps = 2'))
        assert main(["experiment", "--config", str(cfg), "--out", str(tmp_path / "fail")]) == EXIT_SOLVER

    @pytest.mark.parametrize(
        "argv",
        [
            ["experiment", "--preset", "paper-0"],
            ["effdiff", "missing.csv"],
            ["generate", "--variant", "zigzag"],
            ["dns", "PSI", "--n", "16", "--dt", "1e-2", "--t-end", "0.1"],
            ["effdiff", "PSI", "--kappa", "-1"],
            ["nonsense"],
        ],
    )
    def test_config_errors(self, argv, tmp_path):
        main(["generate", "--components", "0.2,1,1", "--out", str(tmp_path)])
        argv = [str(tmp_path / "psi.csv") if a == "PSI" else a for a in argv]
        assert main(argv + (["--out", str(tmp_path)] if argv[0] not in ("nonsense", "generate") else [])) == EXIT_CONFIG

    def test_scaling_verb(self, tmp_path, capsys):
        rc = main(["scaling", "--depths", "1", "2", "--points-per-level", "16", "--micro-method", "direct", "--out", str(tmp_path)])
        assert rc == EXIT_OK and (tmp_path / "scaling.csv").exists()
