import os

import numpy as np
import pytest
import yaml

from seirident.cli import (EXIT_OK, EXIT_PARTIAL, EXIT_TOTAL_FAILURE,
                           EXIT_VALIDATION, main)
from seirident.config import config_from_mapping
from seirident.report import (CSV_FILES, CaseNotFoundError, emit_plot_data,
                              run_experiment)
from seirident.observe import DataType, Frequency

TINY = {"scenarios": [2], "data_types": ["prevalence", "incidence"],
        "frequencies": ["daily"], "sigmas": [0.0, 0.05], "replicates": 6,
        "seed": 17}


@pytest.fixture(scope="module")
def tiny_report(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny_run")
    cfg = config_from_mapping(dict(TINY, output_dir=str(out)))
    report = run_experiment(cfg)
    return report, out


def test_run_experiment_writes_all_files(tiny_report):
    report, out = tiny_report
    for name in CSV_FILES + ("report.md",):
        assert (out / name).exists(), name
    assert report.n_failed == 0
    assert len(report.outcomes) == 2


def test_provenance_headers_on_every_csv(tiny_report):
    _, out = tiny_report
    for name in CSV_FILES:
        text = (out / name).read_text()
        head = [l for l in text.splitlines() if l.startswith("#")]
        joined = "\n".join(head)
        for key in ("version=", "seed=17", "replicates=6", "weighting="):
            assert key in joined, (name, key)


def test_rerun_is_byte_identical(tiny_report, tmp_path):
    _, first_out = tiny_report
    cfg = config_from_mapping(dict(TINY, output_dir=str(tmp_path)))
    run_experiment(cfg)
    for name in CSV_FILES + ("report.md",):
        assert (tmp_path / name).read_bytes() == (first_out / name).read_bytes(), name


def test_report_md_contains_grids(tiny_report):
    report, out = tiny_report
    text = (out / "report.md").read_text()
    assert "Monte-Carlo verdicts" in text
    assert "Correlation-matrix verdicts" in text
    assert "seed: 17" in text


def test_estimates_csv_shape(tiny_report):
    _, out = tiny_report
    lines = [l for l in (out / "mc_estimates.csv").read_text().splitlines()
             if l and not l.startswith("#")]
    # header + 2 cases * 2 sigma levels * 6 replicates
    assert len(lines) == 1 + 2 * 2 * 6


def test_emit_plot_data_shapes(tiny_report, tmp_path):
    report, _ = tiny_report

    path = tmp_path / "violin.csv"
    emit_plot_data(report, "violin", path, scenario_id=2,
                   data_type=DataType.PREVALENCE, frequency=Frequency.DAILY,
                   param="beta")
    rows = [l for l in path.read_text().splitlines() if l and not l.startswith("#")]
    assert len(rows) == 1 + 2 * 6  # header + M rows per sigma level

    path = tmp_path / "scatter.csv"
    emit_plot_data(report, "scatter-pairs", path, scenario_id=2,
                   data_type=DataType.PREVALENCE, frequency=Frequency.DAILY,
                   sigma=0.05)
    rows = [l for l in path.read_text().splitlines() if l and not l.startswith("#")]
    assert rows[0] == "replicate,beta_err,gamma_err,alpha_err"
    assert len(rows) == 1 + 6

    path = tmp_path / "are.csv"
    emit_plot_data(report, "are-vs-noise", path, scenario_id=2,
                   data_type=DataType.INCIDENCE, frequency=Frequency.DAILY)
    rows = [l for l in path.read_text().splitlines() if l and not l.startswith("#")]
    assert len(rows) == 1 + 2 * 3  # sigma levels x parameters


def test_emit_plot_data_missing_case(tiny_report, tmp_path):
    report, _ = tiny_report
    with pytest.raises(CaseNotFoundError):
        emit_plot_data(report, "violin", tmp_path / "x.csv", scenario_id=1,
                       data_type=DataType.PREVALENCE, frequency=Frequency.DAILY,
                       param="beta")
    with pytest.raises(ValueError):
        emit_plot_data(report, "no-such-kind", tmp_path / "x.csv", scenario_id=2,
                       data_type=DataType.PREVALENCE, frequency=Frequency.DAILY)


def test_cli_run_and_plot_data(tmp_path):
    cfg_path = tmp_path / "cfg.yaml"
    out = tmp_path / "out"
    cfg_path.write_text(yaml.safe_dump(dict(TINY, output_dir=str(out))))
    assert main(["run", "--config", str(cfg_path)]) == EXIT_OK
    assert (out / "report.md").exists()

    plot = tmp_path / "violin.csv"
    code = main(["plot-data", "--kind", "violin", "--from", str(out),
                 "--scenario", "2", "--data-type", "prevalence", "--freq", "daily",
                 "--param", "gamma", "--out", str(plot)])
    assert code == EXIT_OK
    rows = [l for l in plot.read_text().splitlines() if l and not l.startswith("#")]
    assert len(rows) == 1 + 2 * 6

    scatter = tmp_path / "scatter.csv"
    code = main(["plot-data", "--kind", "scatter-pairs", "--from", str(out),
                 "--scenario", "2", "--data-type", "prevalence", "--freq", "daily",
                 "--sigma", "0.05", "--out", str(scatter)])
    assert code == EXIT_OK

    # a case that was never run: validation-style failure
    code = main(["plot-data", "--kind", "violin", "--from", str(out),
                 "--scenario", "1", "--data-type", "prevalence", "--freq", "daily",
                 "--param", "beta", "--out", str(tmp_path / "nope.csv")])
    assert code == EXIT_VALIDATION


def test_cli_simulate(tmp_path):
    out = tmp_path / "traj.csv"
    assert main(["simulate", "--scenario", "1", "--out", str(out)]) == EXIT_OK
    rows = [l for l in out.read_text().splitlines() if l and not l.startswith("#")]
    assert rows[0] == "time,S,E,I,R,C"
    assert len(rows) == 1 + 366
    values = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
    assert abs(int(np.argmax(values[:, 3])) - 109) <= 1  # I column peaks on the peak day

    out2 = tmp_path / "traj_sens.csv"
    assert main(["simulate", "--scenario", "2", "--sens", "--out", str(out2)]) == EXIT_OK
    header = [l for l in out2.read_text().splitlines() if not l.startswith("#")][0]
    assert header.count(",") == 20  # time + 5 states + 15 sensitivities


def test_cli_cm_subcommand(tmp_path):
    out = tmp_path / "cm"
    code = main(["cm", "--scenario", "1", "--data-type", "incidence",
                 "--out", str(out)])
    assert code == EXIT_OK
    text = (out / "cm_verdicts.csv").read_text()
    for freq in ("daily", "weekly", "monthly"):
        assert f"1,incidence,{freq},yes" in text


def test_cli_validation_error(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"scenarios": [4], "frequencies": ["monthly"]}))
    assert main(["run", "--config", str(bad)]) == EXIT_VALIDATION
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == EXIT_VALIDATION


def test_cli_flag_overrides(tmp_path):
    out = tmp_path / "out"
    code = main(["mc", "--scenario", "4", "--data-type", "cumulative",
                 "--freq", "daily", "--sigma", "0.05", "--replicates", "4",
                 "--seed", "5", "--out", str(out)])
    assert code == EXIT_OK
    text = (out / "are_tables.csv").read_text()
    assert "# seed=5" in text and "# replicates=4" in text
    rows = [l for l in text.splitlines() if l and not l.startswith("#")]
    assert len(rows) == 1 + 2  # sigma 0 (implicit) + 0.05


def test_partial_and_total_failure_exit_codes(tmp_path, monkeypatch):
    import seirident.report as report_mod

    calls = {"n": 0}
    real_run_case = report_mod.run_case

    def flaky(case, cfg):
        calls["n"] += 1
        if case.data_type is DataType.INCIDENCE:
            raise RuntimeError("boom")
        return real_run_case(case, cfg)

    monkeypatch.setattr(report_mod, "run_case", flaky)
    cfg_path = tmp_path / "cfg.yaml"
    cfg_path.write_text(yaml.safe_dump(dict(TINY, output_dir=str(tmp_path / "o1"))))
    assert main(["run", "--config", str(cfg_path)]) == EXIT_PARTIAL
    assert "FAILED" in (tmp_path / "o1" / "report.md").read_text()

    monkeypatch.setattr(report_mod, "run_case",
                        lambda case, cfg: (_ for _ in ()).throw(RuntimeError("boom")))
    cfg_path.write_text(yaml.safe_dump(dict(TINY, output_dir=str(tmp_path / "o2"))))
    assert main(["run", "--config", str(cfg_path)]) == EXIT_TOTAL_FAILURE
