"""Desk-scale conditioning studies over mesh families, written as CSV tables.

A study sweeps one mesh family (uniform, Chebyshev, or a skew family at
fixed aspect or fixed size), computes exact extreme eigenvalues of the
stiffness matrix before and after Jacobi scaling, evaluates every estimate,
and checks the two-sided envelopes inline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields as dataclass_fields

import numpy as np

from .assembly import assemble_stiffness
from .bounds import (
    auto_reference_subdivisions,
    calibrate_constant,
    condition_bounds,
    lambda_max_bounds,
    lambda_min_bound,
    load_calibration,
)
from .diffusion import parse_field_spec
from .mesh import (
    generate_chebyshev_mesh,
    generate_skew_mesh_2d,
    generate_skew_mesh_3d,
    generate_uniform_mesh,
)
from .spectral import ConvergenceError

__all__ = [
    "StudyConfig",
    "StudyRow",
    "CSV_COLUMNS",
    "parse_study_config",
    "run_study",
    "analyze_mesh",
    "envelope_violations",
    "write_study_csv",
    "fit_loglog_slope",
]

STUDY_CASES = (
    "uniform",
    "chebyshev",
    "skew2d-n",
    "skew2d-aspect",
    "skew3d-n",
    "skew3d-aspect",
)

# Relative slack applied to the two-sided envelopes to absorb the eigenvalue
# solver tolerance.
ENVELOPE_SLACK = 1e-7


@dataclass(frozen=True)
class StudyConfig:
    """One study: a mesh family, a sweep list and a diffusion field."""

    case: str
    n_values: tuple[int, ...] = ()
    aspect_values: tuple[float, ...] = ()
    n: int = 0
    aspect: float = 1.0
    dim: int = 0
    field: str = "identity"
    tol: float = 1e-8
    calibration: str = "auto"


@dataclass
class StudyRow:
    n: int
    aspect: float
    n_elements: int
    n_interior: int
    lambda_min: float
    lambda_max: float
    kappa: float
    lambda_min_scaled: float
    lambda_max_scaled: float
    kappa_scaled: float
    est_lambda_min: float
    est_lambda_min_scaled: float
    est_lambda_max_low: float
    est_lambda_max_high: float
    est_lambda_max_scaled_low: float
    est_lambda_max_scaled_high: float
    est_kappa: float
    est_kappa_scaled: float
    factor_base: float
    factor_d_nonuniformity: float
    factor_d_nonuniformity_scaled: float
    factor_volume: float
    status: str


CSV_COLUMNS = tuple(f.name for f in dataclass_fields(StudyRow))


def fit_loglog_slope(xs, ys):
    """Least-squares slope of log(y) against log(x); needs >= 3 points."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if len(xs) < 3 or len(xs) != len(ys):
        raise ValueError("slope fit needs at least 3 matching points")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("slope fit needs positive data")
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def _parse_sweep(text, cast):
    values = tuple(cast(v.strip()) for v in text.split(",") if v.strip())
    if not values:
        raise ValueError("sweep list is empty")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError(f"sweep list must be strictly increasing, got {values}")
    return values


def parse_study_config(path):
    """Read a study configuration from ``key = value`` lines."""
    raw = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            raw[key.strip()] = value.strip()
    if "case" not in raw:
        raise ValueError(f"{path}: missing 'case'")
    case = raw["case"]
    if case not in STUDY_CASES:
        raise ValueError(f"unknown case {case!r}, expected one of {STUDY_CASES}")
    cfg = StudyConfig(
        case=case,
        n_values=_parse_sweep(raw["n_values"], int) if "n_values" in raw else (),
        aspect_values=(
            _parse_sweep(raw["aspect_values"], float)
            if "aspect_values" in raw
            else ()
        ),
        n=int(raw.get("n", 0)),
        aspect=float(raw.get("aspect", 1.0)),
        dim=int(raw.get("dim", 0)),
        field=raw.get("field", "identity"),
        tol=float(raw.get("tol", 1e-8)),
        calibration=raw.get("calibration", "auto"),
    )
    _check_config(cfg)
    return cfg


def _check_config(cfg):
    if cfg.case.endswith("-aspect"):
        if not cfg.aspect_values:
            raise ValueError(f"case {cfg.case} needs aspect_values")
        if cfg.n <= 0:
            raise ValueError(f"case {cfg.case} needs a fixed n")
    else:
        if not cfg.n_values:
            raise ValueError(f"case {cfg.case} needs n_values")
    if cfg.case.endswith("-n") and cfg.aspect < 1.0:
        raise ValueError("skew sweeps need aspect >= 1")
    if cfg.case == "uniform" and cfg.dim not in (1, 2, 3):
        raise ValueError("uniform case needs dim in {1, 2, 3}")


def study_dimension(cfg):
    if cfg.case == "uniform":
        return cfg.dim
    if cfg.case == "chebyshev":
        return 1
    return 2 if cfg.case.startswith("skew2d") else 3


def _build_mesh(cfg, value):
    case = cfg.case
    if case == "uniform":
        return generate_uniform_mesh(cfg.dim, value), value, 1.0
    if case == "chebyshev":
        return generate_chebyshev_mesh(value), value, 1.0
    if case == "skew2d-n":
        return generate_skew_mesh_2d(value, cfg.aspect), value, cfg.aspect
    if case == "skew2d-aspect":
        return generate_skew_mesh_2d(cfg.n, value), cfg.n, value
    if case == "skew3d-n":
        return generate_skew_mesh_3d(value, cfg.aspect), value, cfg.aspect
    return generate_skew_mesh_3d(cfg.n, value), cfg.n, value


def envelope_violations(report):
    """Two-sided envelope failures of a condition report, as messages."""
    out = []
    lo, hi = report.est_lambda_max
    slack = ENVELOPE_SLACK
    if not lo * (1 - slack) <= report.exact.lambda_max <= hi * (1 + slack):
        out.append(
            f"lambda_max {report.exact.lambda_max:.6e} outside [{lo:.6e}, {hi:.6e}]"
        )
    lo, hi = report.est_lambda_max_scaled
    if not lo * (1 - slack) <= report.exact_scaled.lambda_max <= hi * (1 + slack):
        out.append(
            f"scaled lambda_max {report.exact_scaled.lambda_max:.6e} "
            f"outside [{lo:.6e}, {hi:.6e}]"
        )
    return out


def analyze_mesh(mesh, field, cal, tol=1e-8, n_label=0, aspect_label=1.0):
    """Condition report for one mesh as a study row plus envelope violations."""
    try:
        report = condition_bounds(mesh, field, cal, rel_tol=tol)
    except ConvergenceError:
        a = assemble_stiffness(mesh, field)
        lmax = lambda_max_bounds(a.diagonal(), mesh.dim)
        lmin = lambda_min_bound(mesh, field, cal, scaled=False)
        lmin_s = lambda_min_bound(mesh, field, cal, scaled=True)
        nan = float("nan")
        row = StudyRow(
            n=n_label, aspect=aspect_label,
            n_elements=mesh.n_elements, n_interior=mesh.n_interior,
            lambda_min=nan, lambda_max=nan, kappa=nan,
            lambda_min_scaled=nan, lambda_max_scaled=nan, kappa_scaled=nan,
            est_lambda_min=lmin, est_lambda_min_scaled=lmin_s,
            est_lambda_max_low=lmax.unscaled[0], est_lambda_max_high=lmax.unscaled[1],
            est_lambda_max_scaled_low=lmax.scaled[0],
            est_lambda_max_scaled_high=lmax.scaled[1],
            est_kappa=lmax.unscaled[1] / lmin,
            est_kappa_scaled=lmax.scaled[1] / lmin_s,
            factor_base=nan, factor_d_nonuniformity=nan,
            factor_d_nonuniformity_scaled=nan, factor_volume=nan,
            status="no-convergence",
        )
        return row, []
    row = StudyRow(
        n=n_label,
        aspect=aspect_label,
        n_elements=mesh.n_elements,
        n_interior=mesh.n_interior,
        lambda_min=report.exact.lambda_min,
        lambda_max=report.exact.lambda_max,
        kappa=report.exact.kappa,
        lambda_min_scaled=report.exact_scaled.lambda_min,
        lambda_max_scaled=report.exact_scaled.lambda_max,
        kappa_scaled=report.exact_scaled.kappa,
        est_lambda_min=report.est_lambda_min,
        est_lambda_min_scaled=report.est_lambda_min_scaled,
        est_lambda_max_low=report.est_lambda_max[0],
        est_lambda_max_high=report.est_lambda_max[1],
        est_lambda_max_scaled_low=report.est_lambda_max_scaled[0],
        est_lambda_max_scaled_high=report.est_lambda_max_scaled[1],
        est_kappa=report.est_kappa,
        est_kappa_scaled=report.est_kappa_scaled,
        factor_base=report.factor_base,
        factor_d_nonuniformity=report.factor_d_nonuniformity,
        factor_d_nonuniformity_scaled=report.factor_d_nonuniformity_scaled,
        factor_volume=report.factor_volume,
        status="ok",
    )
    return row, envelope_violations(report)


def resolve_calibration(cfg):
    """Calibration constant for a study: load a file or auto-calibrate."""
    dim = study_dimension(cfg)
    if cfg.calibration == "auto":
        field = parse_field_spec(cfg.field, dim)
        return calibrate_constant(dim, field, auto_reference_subdivisions(dim))
    cal = load_calibration(cfg.calibration)
    if cal.dim != dim:
        raise ValueError(f"calibration is for d={cal.dim}, study needs d={dim}")
    return cal


def run_study(cfg):
    """Run a study; returns (rows, envelope violation messages)."""
    _check_config(cfg)
    dim = study_dimension(cfg)
    field = parse_field_spec(cfg.field, dim)
    cal = resolve_calibration(cfg)
    sweep = cfg.aspect_values if cfg.case.endswith("-aspect") else cfg.n_values
    rows, violations = [], []
    for value in sweep:
        mesh, n_label, aspect_label = _build_mesh(cfg, value)
        row, bad = analyze_mesh(
            mesh, field, cal, tol=cfg.tol, n_label=n_label, aspect_label=aspect_label
        )
        rows.append(row)
        violations.extend(
            f"{cfg.case} n={n_label} aspect={aspect_label}: {msg}" for msg in bad
        )
    return rows, violations


def _format_cell(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float) and math.isnan(value):
        return "nan"
    return f"{value:.17g}"


def write_study_csv(rows, path):
    """Write study rows with the fixed, documented column order."""
    with open(path, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            fh.write(
                ",".join(_format_cell(getattr(row, c)) for c in CSV_COLUMNS) + "\n"
            )


def read_study_csv(path):
    """Read back a study CSV as a list of dicts keyed by column name."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        out = []
        for line in fh:
            parts = line.strip().split(",")
            row = {}
            for key, cell in zip(header, parts):
                if key == "status":
                    row[key] = cell
                elif key in ("n", "n_elements", "n_interior"):
                    row[key] = int(cell)
                else:
                    row[key] = float(cell)
            out.append(row)
        return out
