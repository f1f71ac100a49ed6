import dataclasses

import numpy as np
import pytest

from meshcond.experiments import (
    CSV_COLUMNS,
    StudyConfig,
    envelope_violations,
    fit_loglog_slope,
    parse_study_config,
    read_study_csv,
    run_study,
    study_dimension,
    write_study_csv,
)


class TestFitSlope:
    def test_quadratic(self):
        xs = np.array([1.0, 2.0, 4.0, 8.0])
        assert fit_loglog_slope(xs, xs ** 2) == pytest.approx(2.0, abs=1e-12)

    def test_scaled_cubic(self):
        xs = np.array([3.0, 9.0, 27.0])
        assert fit_loglog_slope(xs, 5.0 * xs ** 3) == pytest.approx(3.0, abs=1e-12)

    def test_needs_three_points(self):
        with pytest.raises(ValueError):
            fit_loglog_slope([1.0, 2.0], [1.0, 4.0])

    def test_needs_positive_data(self):
        with pytest.raises(ValueError):
            fit_loglog_slope([1.0, 2.0, 3.0], [1.0, -4.0, 9.0])


class TestConfigParsing:
    def test_full_config(self, tmp_path):
        path = tmp_path / "study.cfg"
        path.write_text(
            "# chebyshev sweep\n"
            "case = chebyshev\n"
            "n_values = 64, 128, 256\n"
            "field = identity\n"
            "tol = 1e-8\n"
            "calibration = auto\n"
        )
        cfg = parse_study_config(path)
        assert cfg.case == "chebyshev"
        assert cfg.n_values == (64, 128, 256)
        assert study_dimension(cfg) == 1

    def test_aspect_case_needs_fixed_n(self, tmp_path):
        path = tmp_path / "study.cfg"
        path.write_text("case = skew2d-aspect\naspect_values = 2, 4\n")
        with pytest.raises(ValueError, match="fixed n"):
            parse_study_config(path)

    def test_sweep_must_increase(self, tmp_path):
        path = tmp_path / "study.cfg"
        path.write_text("case = chebyshev\nn_values = 64, 64, 128\n")
        with pytest.raises(ValueError, match="strictly increasing"):
            parse_study_config(path)

    def test_unknown_case(self, tmp_path):
        path = tmp_path / "study.cfg"
        path.write_text("case = spiral\nn_values = 4, 8\n")
        with pytest.raises(ValueError, match="unknown case"):
            parse_study_config(path)

    def test_uniform_needs_dim(self):
        with pytest.raises(ValueError, match="dim"):
            run_study(StudyConfig(case="uniform", n_values=(4, 8)))


class TestRunStudy:
    def test_chebyshev_small_sweep(self):
        cfg = StudyConfig(case="chebyshev", n_values=(64, 128, 256))
        rows, violations = run_study(cfg)
        assert violations == []
        assert [r.n for r in rows] == [64, 128, 256]
        assert all(r.status == "ok" for r in rows)
        slope = fit_loglog_slope([r.n for r in rows], [r.kappa for r in rows])
        assert slope == pytest.approx(3.0, abs=0.3)
        for r in rows:
            assert r.est_lambda_max_low <= r.lambda_max <= r.est_lambda_max_high
            assert r.est_lambda_min <= r.lambda_min

    def test_uniform_2d_scaling_neutral(self):
        # constant diagonal: Jacobi scaling is a scalar and cannot change kappa
        cfg = StudyConfig(case="uniform", dim=2, n_values=(4, 8))
        rows, violations = run_study(cfg)
        assert violations == []
        for r in rows:
            assert r.kappa_scaled == pytest.approx(r.kappa, rel=1e-9)

    def test_skew_aspect_sweep(self):
        cfg = StudyConfig(case="skew2d-aspect", n=8, aspect_values=(4.0, 8.0, 16.0))
        rows, violations = run_study(cfg)
        assert violations == []
        assert [r.aspect for r in rows] == [4.0, 8.0, 16.0]
        assert all(r.n == 8 for r in rows)
        kappas = [r.kappa for r in rows]
        assert kappas == sorted(kappas)

    def test_reproducible(self):
        cfg = StudyConfig(case="chebyshev", n_values=(32, 64, 128))
        rows1, _ = run_study(cfg)
        rows2, _ = run_study(cfg)
        for r1, r2 in zip(rows1, rows2):
            for column in CSV_COLUMNS:
                a, b = getattr(r1, column), getattr(r2, column)
                if column.startswith(("est_", "factor_")):
                    assert a == b, column  # estimates are deterministic, bitwise
                elif isinstance(a, float):
                    assert a == pytest.approx(b, rel=1e-8)
                else:
                    assert a == b


class TestEnvelopeCheck:
    def test_flags_fabricated_violation(self):
        from meshcond.bounds import ConditionBoundReport
        from meshcond.spectral import SpectralResult

        good = SpectralResult(lambda_min=1.0, lambda_max=3.0, kappa=3.0,
                              rel_tol_achieved=1e-12)
        bad = SpectralResult(lambda_min=1.0, lambda_max=10.0, kappa=10.0,
                             rel_tol_achieved=1e-12)
        report = ConditionBoundReport(
            dim=2, n_elements=10, exact=bad, exact_scaled=good,
            est_lambda_max=(2.0, 6.0), est_lambda_max_scaled=(1.0, 3.0),
            est_lambda_min=0.5, est_lambda_min_scaled=0.5,
            est_kappa=12.0, est_kappa_scaled=6.0,
            factor_base=1.0, factor_d_nonuniformity=1.0,
            factor_d_nonuniformity_scaled=1.0, factor_volume=1.0,
        )
        messages = envelope_violations(report)
        assert len(messages) == 1
        assert "lambda_max" in messages[0]


class TestCsvRoundtrip:
    def test_write_and_read(self, tmp_path):
        cfg = StudyConfig(case="chebyshev", n_values=(16, 32, 64))
        rows, _ = run_study(cfg)
        path = tmp_path / "out.csv"
        write_study_csv(rows, path)
        header = path.read_text().splitlines()[0]
        assert header == ",".join(CSV_COLUMNS)
        back = read_study_csv(path)
        assert len(back) == len(rows)
        for row, parsed in zip(rows, back):
            for column in CSV_COLUMNS:
                original = getattr(row, column)
                if isinstance(original, float):
                    assert parsed[column] == pytest.approx(original, rel=1e-15)
                else:
                    assert parsed[column] == original

    def test_columns_cover_study_row(self):
        from meshcond.experiments import StudyRow

        assert CSV_COLUMNS == tuple(
            f.name for f in dataclasses.fields(StudyRow)
        )
