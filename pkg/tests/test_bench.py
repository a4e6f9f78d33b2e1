import math
from dataclasses import replace

import numpy as np
import pytest

from stationary_ar.bench import (CSV_COLUMNS, ConfigError, ExperimentConfig, SchemaError,
                                 config_from_mapping, load_config, outlier_forensics, parse_config_text,
                                 parse_results, read_results, record_to_row, results_csv_text,
                                 run_experiment, run_records, run_series, summarize, write_results)
from stationary_ar.core import characteristic_roots
from stationary_ar.metrics import bland_altman

TINY = ExperimentConfig(orders=(1, 2), n_processes=2, n_repetitions=2, raw_length=300, burn_in=100, seed=11)


@pytest.fixture(scope="module")
def tiny_records():
    return run_records(TINY)


class TestConfig:
    def test_parse_text(self):
        values = parse_config_text("# comment\norders = 1, 3\nprocesses = 4\nreps=2\nlearning_rate = 0.01  # inline\n")
        assert values == {"orders": (1, 3), "processes": 4, "reps": 2, "learning_rate": 0.01}
        c = config_from_mapping(values)
        assert c.orders == (1, 3) and c.n_processes == 4 and c.adam.learning_rate == 0.01
        assert c.n_series == 16

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            parse_config_text("colour = red\n")

    def test_bad_value(self):
        with pytest.raises(ConfigError):
            parse_config_text("processes = many\n")

    def test_invalid_combination(self):
        with pytest.raises(ConfigError):
            config_from_mapping({"length": 100, "burn_in": 200})
        with pytest.raises(ConfigError):
            config_from_mapping({"workers": 0})
        with pytest.raises(ConfigError):
            config_from_mapping({"orders": ()})

    def test_load_with_overrides(self, tmp_path):
        path = tmp_path / "bench.conf"
        path.write_text("processes = 3\nseed = 5\n", encoding="utf-8")
        c = load_config(path, {"seed": 9})
        assert c.n_processes == 3 and c.seed == 9

    def test_defaults(self):
        c = ExperimentConfig()
        assert c.orders == (1, 2, 3, 4, 5) and c.n_series == 1250
        assert c.raw_length - c.burn_in == 1000


class TestCsv:
    def test_rows_and_header(self, tiny_records, tmp_path):
        path = tmp_path / "results.csv"
        write_results(tiny_records, path)
        lines = path.read_bytes().split(b"\n")
        assert lines[0].decode().split(",") == list(CSV_COLUMNS)
        assert len([l for l in lines if l]) == len(tiny_records) + 1
        assert b"\r" not in path.read_bytes()

    def test_roundtrip(self, tiny_records, tmp_path):
        path = tmp_path / "results.csv"
        write_results(tiny_records, path)
        assert read_results(path) == tiny_records
        for r in tiny_records:
            assert record_to_row(parse_results(results_csv_text([r]))[0]) == record_to_row(r)

    def test_non_finite_roundtrip(self, tiny_records):
        r = tiny_records[0]
        odd = replace(r, cml=replace(r.cml, mse=math.inf, r2=math.nan, failure_reason="max_epochs",
                                     converged=False))
        back = parse_results(results_csv_text([odd]))[0]
        assert back.cml.mse == math.inf and math.isnan(back.cml.r2) and not back.cml.converged

    def test_truncated(self, tiny_records):
        text = results_csv_text(tiny_records)
        with pytest.raises(SchemaError):
            parse_results(text[: len(text) // 2 + 3])

    def test_missing_column(self, tiny_records):
        text = results_csv_text(tiny_records).replace("gd_mse", "gd_mse_x", 1)
        with pytest.raises(SchemaError, match="gd_mse"):
            parse_results(text)

    def test_two_series_config(self, tmp_path):
        config = ExperimentConfig(orders=(1,), n_processes=1, n_repetitions=2, raw_length=200,
                                  burn_in=50, output_dir=tmp_path)
        path, _ = run_experiment(config)
        assert len(path.read_text().splitlines()) == 3


class TestRun:
    def test_row_order_and_ids(self, tiny_records):
        assert [r.series_id for r in tiny_records] == [
            f"p{p}-{i:05d}-{j:03d}" for p in (1, 2) for i in range(2) for j in range(2)]

    def test_single_series_equals_run(self, tiny_records):
        one = run_series(TINY, 2, 1, 0)
        assert one.without_timing() == tiny_records[6].without_timing()

    def test_rerun_identical_modulo_timing(self, tiny_records):
        again = run_records(TINY)
        assert [r.without_timing() for r in again] == [r.without_timing() for r in tiny_records]

    def test_worker_independence(self, tiny_records):
        parallel = run_records(replace(TINY, workers=3))
        assert [r.without_timing() for r in parallel] == [r.without_timing() for r in tiny_records]

    def test_record_contents(self, tiny_records):
        for r in tiny_records:
            assert len(r.true_coeffs) == r.order == len(r.gd.coeffs) == len(r.cml.coeffs)
            assert r.true_max_abs_inv_root == characteristic_roots(np.array(r.true_coeffs)).max_abs_inverse_root
            assert r.gd.wall_time_ns > 0 and r.cml.wall_time_ns > 0


class TestSummary:
    def test_pure_function(self, tiny_records):
        assert summarize(tiny_records).text == summarize(list(tiny_records)).text

    def test_recomputed_from_csv(self, tiny_records):
        text = results_csv_text(tiny_records)
        assert summarize(parse_results(text)).text == summarize(tiny_records).text

    def test_files_written(self, tmp_path):
        config = replace(TINY, orders=(1,), n_processes=1, output_dir=tmp_path)
        path, summary = run_experiment(config)
        assert path.exists() and (tmp_path / "summary.txt").read_text() == summary.text
        for name in ("success", "headline", "bland_altman", "outliers", "root_proximity", "order_scaling"):
            assert (tmp_path / f"summary_{name}.csv").exists()
        assert not list(tmp_path.glob("*.tmp"))

    def test_sections(self, tiny_records):
        text = summarize(tiny_records).text
        for heading in ("convergence by order", "headline", "Bland-Altman", "outlier forensics",
                        "root proximity", "order scaling"):
            assert heading in text
        assert "CML #Success" in text and "NN #Success" in text


class TestForensics:
    def test_no_outliers(self, tiny_records):
        assert outlier_forensics(tiny_records, None).rows == []
        ba = bland_altman([0.0] * len(tiny_records), ids=[r.series_id for r in tiny_records])
        assert outlier_forensics(tiny_records, ba).rows == []

    def test_injected_outlier(self, tiny_records):
        records = list(tiny_records)
        bumped = replace(records[3], cml=replace(records[3].cml, mse=records[3].gd.mse + 10.0))
        records[3] = bumped
        summary = summarize(records)
        assert summary.mse_agreement.outlier_ids == [bumped.series_id]
        rows = summary.tables["outliers"].rows
        assert [r[2] for r in rows] == ["Process", "YW", "NN", "CML"]
        assert all(r[0] == bumped.series_id for r in rows)

    def test_root_moduli_recompute(self, tiny_records):
        ba = bland_altman([0.0] * (len(tiny_records) - 1) + [5.0], ids=[r.series_id for r in tiny_records])
        rows = outlier_forensics(tiny_records, ba).rows
        rec = tiny_records[-1]
        for row, coeffs in zip(rows, (rec.true_coeffs, rec.yw.coeffs, rec.gd.coeffs, rec.cml.coeffs)):
            moduli = np.sort(1.0 / np.abs(characteristic_roots(np.array(coeffs)).inverse_roots))[::-1]
            assert row[3] == "(" + ", ".join(f"{m:.2f}" for m in moduli) + ")"
            assert row[4] == "(" + ", ".join(f"{c:.2f}" for c in coeffs) + ")"
