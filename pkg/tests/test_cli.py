"""
场景配置、运行器与命令行
"""

import json
import logging

import pandas as pd
import pytest

from src import __version__
from src.cli.commands import main
from src.cli.scene_runner import CSV_COLUMNS, dump_config, emit_csv, exit_code_for, parse_config, run
from src.core.exceptions import ConfigError
from src.models.scene import CheckResult, CheckStatus, RunReport, SceneConfig
from src.utils.parallel import get_default_threads, set_default_threads
from tests.conftest import THIN_CONTACT_A0, THIN_SCHEDULE

BOX_2D = {"lo": [-1.0, -1.0], "hi": [1.0, 1.0]}
HALF_NORM_SQ = {"kind": "max_quad", "pieces": [{"c": 0.0, "p": [0.0, 0.0], "A": [[1.0, 0.0], [0.0, 1.0]]}]}
NEG_HALF_NORM_SQ = {"kind": "max_quad", "pieces": [{"c": 0.0, "p": [0.0, 0.0], "A": [[-1.0, 0.0], [0.0, -1.0]]}]}
# ½|y|² − 1：边界最大值 0，内部为负
BOWL = {"kind": "max_quad", "pieces": [{"c": -1.0, "p": [0.0, 0.0], "A": [[1.0, 0.0], [0.0, 1.0]]}]}


def _scene(checks, **overrides):
    data = {
        "dim": 2,
        "seed": 7,
        "grid": 11,
        "functions": {"w": HALF_NORM_SQ, "neg": NEG_HALF_NORM_SQ, "bowl": BOWL},
        "subequations": {"convex": {"name": "convex"}, "lap": {"name": "laplace_0"}},
        "checks": checks,
    }
    data.update(overrides)
    return data


TRIVIAL_CHECKS = [
    {"type": "ae", "function": "w", "subequation": "convex", "domain": BOX_2D, "label": "convex bowl"},
    {"type": "viscosity", "function": "w", "subequation": "lap", "domain": BOX_2D},
    {"type": "zmp", "u": "bowl", "domain": BOX_2D},
    {"type": "positivity_audit", "subequation": "convex", "n_samples": 2_000},
]

CONTACT_MEASURE = {"type": "contact_measure", "function": "w", "x0": [0.0, 0.0],
                   "A0": [[0.0, 0.0], [0.0, 0.0]], "rhos": [2.0 ** -k for k in range(1, 9)],
                   "n_samples": 500}

# ½y² + max(0, y − 0.2, −y − 0.2)：折点落在每个见证球内
DOUBLE_KINK = {"kind": "max_quad", "pieces": [
    {"c": 0.0, "p": [0.0], "A": [[1.0]]},
    {"c": -0.2, "p": [1.0], "A": [[1.0]]},
    {"c": -0.2, "p": [-1.0], "A": [[1.0]]},
]}

MALFORMED_PARAMS = [
    {"name": "variable_laplace", "params": {"terms": [{"coef": 1.0, "powers": [2]}]}},
    {"name": "variable_laplace", "params": {"terms": [{"powers": [1, 0]}]}},
    {"name": "kth_eig", "params": {"k": 1.5}},
    {"name": "kth_eig", "params": {"k": "2"}},
]


def _witness_scene(budget):
    check = {"type": "witness", "function": "k", "x0": [0.0], "p0": [0.0], "A0": [[THIN_CONTACT_A0]],
             "budget": budget, "eps_schedule": THIN_SCHEDULE}
    return {"dim": 1, "seed": 3, "functions": {"k": DOUBLE_KINK}, "checks": [check]}


def _write(tmp_path, data, name="scene.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


@pytest.fixture(autouse=True)
def restore_logging():
    """main() 会重置根日志处理器，测试结束后还原"""
    root = logging.getLogger()
    handlers, level, threads = list(root.handlers), root.level, get_default_threads()
    yield
    root.handlers[:] = handlers
    root.setLevel(level)
    set_default_threads(threads)


class TestParseConfig:
    def test_minimal_config(self, tmp_path):
        config = parse_config(_write(tmp_path, _scene(TRIVIAL_CHECKS[:1])))
        assert config.dim == 2
        assert [c.type for c in config.checks] == ["ae"]

    def test_dangling_reference_named(self, tmp_path):
        checks = [{"type": "ae", "function": "u2", "subequation": "convex", "domain": BOX_2D}]
        with pytest.raises(ConfigError) as info:
            parse_config(_write(tmp_path, _scene(checks)))
        assert any("u2" in err for err in info.value.errors)

    def test_dimension_mismatch(self, tmp_path):
        with pytest.raises(ConfigError) as info:
            parse_config(_write(tmp_path, _scene(TRIVIAL_CHECKS[:1], dim=3)))
        assert any("维数" in err for err in info.value.errors)

    def test_all_errors_reported(self, tmp_path):
        checks = [
            {"type": "ae", "function": "u2", "subequation": "convex", "domain": BOX_2D},
            {"type": "zmp", "u": "u3", "domain": BOX_2D},
        ]
        data = _scene(checks)
        data["subequations"]["bad"] = {"name": "monge_ampere"}
        with pytest.raises(ConfigError) as info:
            parse_config(_write(tmp_path, data))
        joined = "\n".join(info.value.errors)
        assert "u2" in joined and "u3" in joined and "monge_ampere" in joined

    @pytest.mark.parametrize("entry", MALFORMED_PARAMS)
    def test_malformed_catalog_params(self, tmp_path, entry):
        data = _scene([])
        data["subequations"]["bad"] = entry
        with pytest.raises(ConfigError) as info:
            parse_config(_write(tmp_path, data))
        assert any(err.startswith("subequations.bad:") for err in info.value.errors)

    def test_unknown_check_type(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(_write(tmp_path, _scene([{"type": "telepathy"}])))

    def test_syntax_error(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{\"dim\": 2,", encoding="utf-8")
        with pytest.raises(ConfigError) as info:
            parse_config(str(path))
        assert "JSON" in info.value.errors[0]

    def test_sum_of_sums_rejected(self, tmp_path):
        data = _scene([])
        data["functions"]["s"] = {"kind": "sum", "u": "w", "v": "neg"}
        data["functions"]["ss"] = {"kind": "sum", "u": "s", "v": "w"}
        with pytest.raises(ConfigError) as info:
            parse_config(_write(tmp_path, data))
        assert any("ss" in err for err in info.value.errors)

    def test_normal_form_round_trip(self, tmp_path):
        data = _scene(TRIVIAL_CHECKS + [CONTACT_MEASURE])
        data["functions"]["s"] = {"kind": "sum", "u": "w", "v": "neg"}
        data["functions"]["smp"] = {"kind": "sampled", "sites": [[0.0, 0.0], [0.5, 0.5]],
                                    "values": [0.0, 1.0], "eps": 0.5}
        config = parse_config(_write(tmp_path, data))
        out = str(tmp_path / "normal.json")
        dump_config(config, out)
        again = parse_config(out)
        assert again == config
        assert again.config_hash() == config.config_hash()


class TestRun:
    def test_trivial_scene_holds(self):
        report = run(SceneConfig.model_validate(_scene(TRIVIAL_CHECKS)))
        assert [c.status for c in report.checks] == [CheckStatus.HOLDS] * len(TRIVIAL_CHECKS)
        assert report.exit_code == 0
        assert report.seed == 7

    def test_failing_ae_carries_witness(self):
        checks = [{"type": "ae", "function": "neg", "subequation": "convex", "domain": BOX_2D}]
        report = run(SceneConfig.model_validate(_scene(checks)))
        result = report.checks[0]
        assert result.status == CheckStatus.FAILS
        assert result.witness is not None
        assert result.witness.A == [[-1.0, 0.0], [0.0, -1.0]]
        assert report.exit_code == 1

    def test_zero_contact_fraction_is_inconclusive(self):
        report = run(SceneConfig.model_validate(_scene([CONTACT_MEASURE])))
        assert report.checks[0].status == CheckStatus.INCONCLUSIVE
        assert report.exit_code == 2

    def test_exhausted_witness_budget(self):
        report = run(SceneConfig.model_validate(_witness_scene(budget=1)))
        result = report.checks[0]
        assert result.status == CheckStatus.INCONCLUSIVE
        assert result.witness is not None
        assert report.exit_code == 2

    def test_witness_budget_sufficient(self):
        report = run(SceneConfig.model_validate(_witness_scene(budget=4096)))
        assert report.checks[0].status == CheckStatus.HOLDS
        assert report.exit_code == 0

    def test_strict_comparison_without_gap(self):
        checks = [{"type": "strict_comparison", "G": "lap", "F": "lap", "u": "bowl", "v": "neg",
                   "domain": BOX_2D, "n_audit": 500}]
        report = run(SceneConfig.model_validate(_scene(checks)))
        assert report.checks[0].status == CheckStatus.PRECONDITION_ERROR
        assert "Int" in report.checks[0].error
        assert report.exit_code == 3

    def test_dual_reference(self):
        data = _scene([{"type": "ae", "function": "neg", "subequation": "convex_dual", "domain": BOX_2D}])
        data["subequations"]["convex_dual"] = {"name": "convex", "dual": True}
        report = run(SceneConfig.model_validate(data))
        # −I 的最大特征值为 −1，仍不在对偶中
        assert report.checks[0].status == CheckStatus.FAILS

    def test_tolerance_override_order(self):
        data = _scene([{"type": "ae", "function": "w", "subequation": "convex", "domain": BOX_2D, "tol": 0.0}])
        report = run(SceneConfig.model_validate(data), tol=1e-6)
        assert report.exit_code == 0

    def test_exit_code_precedence(self):
        def result(status):
            return CheckResult(index=0, type="ae", status=status)

        assert exit_code_for([]) == 0
        assert exit_code_for([result(CheckStatus.INCONCLUSIVE), result(CheckStatus.HOLDS)]) == 2
        assert exit_code_for([result(CheckStatus.INCONCLUSIVE), result(CheckStatus.FAILS)]) == 1
        assert exit_code_for([result(CheckStatus.ERROR)]) == 1
        assert exit_code_for([result(CheckStatus.FAILS), result(CheckStatus.PRECONDITION_ERROR)]) == 3

    def test_wall_time_only_with_timings(self):
        config = SceneConfig.model_validate(_scene(TRIVIAL_CHECKS[:1]))
        assert "wall_time" not in json.loads(run(config).to_json())
        assert json.loads(run(config, timings=True).to_json())["wall_time"] >= 0


class TestEmitCsv:
    def test_one_row_per_rho(self, tmp_path):
        report = run(SceneConfig.model_validate(_scene([CONTACT_MEASURE])))
        path = tmp_path / "out" / "measure.csv"
        emit_csv(report, str(path))
        df = pd.read_csv(path)
        assert list(df.columns) == CSV_COLUMNS
        assert len(df) == 8
        assert df["rho"].tolist() == CONTACT_MEASURE["rhos"]
        assert (df["n_samples"] == 500).all()

    def test_empty_check_list_is_header_only(self, tmp_path):
        report = RunReport(seed=0, config_hash="0" * 64, exit_code=0)
        path = tmp_path / "empty.csv"
        emit_csv(report, str(path))
        assert path.read_text(encoding="utf-8").strip() == ",".join(CSV_COLUMNS)

    def test_summary_row_per_check(self, tmp_path):
        report = run(SceneConfig.model_validate(_scene(TRIVIAL_CHECKS)))
        path = tmp_path / "summary.csv"
        emit_csv(report, str(path))
        df = pd.read_csv(path)
        assert df["check_type"].tolist() == ["ae", "viscosity", "zmp", "positivity_audit"]
        assert (df["status"] == "holds").all()

    def test_deterministic_bytes(self, tmp_path):
        config = SceneConfig.model_validate(_scene(TRIVIAL_CHECKS + [CONTACT_MEASURE]))
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        emit_csv(run(config), str(a))
        emit_csv(run(config), str(b))
        assert a.read_bytes() == b.read_bytes()


class TestCommandLine:
    def test_run_writes_report_and_csv(self, tmp_path, capsys):
        path = _write(tmp_path, _scene(TRIVIAL_CHECKS))
        out = tmp_path / "reports"
        assert main(["run", path, "--out", str(out)]) == 0
        stdout = capsys.readouterr().out
        report = json.loads(stdout)
        assert report["exit_code"] == 0
        assert (out / "scene.report.json").read_text(encoding="utf-8") == stdout
        assert (out / "scene.csv").exists()

    def test_run_exit_codes(self, tmp_path):
        failing = [{"type": "ae", "function": "neg", "subequation": "convex", "domain": BOX_2D}]
        assert main(["run", _write(tmp_path, _scene(failing), "fail.json"), "--out", str(tmp_path)]) == 1
        assert main(["run", _write(tmp_path, _scene([CONTACT_MEASURE]), "inc.json"), "--out", str(tmp_path)]) == 2

    def test_invalid_config_exit_3(self, tmp_path, capsys):
        checks = [{"type": "ae", "function": "u2", "subequation": "convex", "domain": BOX_2D}]
        assert main(["run", _write(tmp_path, _scene(checks)), "--out", str(tmp_path)]) == 3
        captured = capsys.readouterr()
        assert "u2" in captured.err
        assert captured.out == ""

    @pytest.mark.parametrize("entry", MALFORMED_PARAMS)
    def test_malformed_params_exit_3(self, tmp_path, capsys, entry):
        data = _scene([])
        data["subequations"]["bad"] = entry
        assert main(["run", _write(tmp_path, data), "--out", str(tmp_path)]) == 3
        assert "subequations.bad" in capsys.readouterr().err

    def test_exhausted_witness_budget_exit_2(self, tmp_path):
        path = _write(tmp_path, _witness_scene(budget=1), "witness.json")
        assert main(["run", path, "--out", str(tmp_path)]) == 2

    def test_missing_config_exit_3(self, tmp_path):
        assert main(["run", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 3

    def test_report_independent_of_threads(self, tmp_path):
        path = _write(tmp_path, _scene(TRIVIAL_CHECKS + [CONTACT_MEASURE]))
        reports = []
        for t in (1, 2, 8):
            out = tmp_path / f"t{t}"
            main(["run", path, "--out", str(out), "--threads", str(t)])
            reports.append((out / "scene.report.json").read_bytes())
        assert get_default_threads() == 8
        assert reports[0] == reports[1] == reports[2]

    def test_seed_flag_echoed(self, tmp_path, capsys):
        path = _write(tmp_path, _scene(TRIVIAL_CHECKS[:1]))
        main(["run", path, "--out", str(tmp_path), "--seed", "99"])
        assert json.loads(capsys.readouterr().out)["seed"] == 99

    def test_timings_flag(self, tmp_path, capsys):
        path = _write(tmp_path, _scene(TRIVIAL_CHECKS[:1]))
        main(["run", path, "--out", str(tmp_path)])
        assert "wall_time" not in json.loads(capsys.readouterr().out)
        main(["run", path, "--out", str(tmp_path), "--timings"])
        assert "wall_time" in json.loads(capsys.readouterr().out)

    def test_output_dir_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("QCV_OUTPUT_DIR", str(tmp_path / "env_out"))
        path = _write(tmp_path, _scene(TRIVIAL_CHECKS[:1]))
        assert main(["run", path]) == 0
        assert (tmp_path / "env_out" / "scene.report.json").exists()

    def test_catalog(self, capsys):
        assert main(["catalog", "--dim", "3"]) == 0
        names = [e["name"] for e in json.loads(capsys.readouterr().out)]
        assert "convex" in names and "kth_eig" in names

    def test_audit_positivity(self, capsys):
        assert main(["audit-positivity", "laplace_0", "--samples", "2000"]) == 0
        assert json.loads(capsys.readouterr().out)["violation_count"] == 0

    def test_audit_positivity_bad_arguments(self, capsys):
        assert main(["audit-positivity", "monge_ampere"]) == 3
        assert main(["audit-positivity", "kth_eig", "--params", "{\"k\": 5}"]) == 3
        assert main(["audit-positivity", "convex", "--params", "{oops"]) == 3
        assert main(["audit-positivity", "variable_laplace", "--params", "{\"terms\": [{\"powers\": [1, 0]}]}"]) == 3
        assert main(["audit-positivity", "convex", "--params", "[1, 2]"]) == 3

    def test_version(self, capsys):
        assert main(["version"]) == 0
        assert capsys.readouterr().out.strip() == __version__
