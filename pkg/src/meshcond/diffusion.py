"""SPD diffusion tensor fields, element averages and spectral bounds.

Fields are immutable closed-form objects: the identity, a constant SPD
matrix, or the rotated anisotropic tensor
R(psi) diag(l1, l2) R(psi)^T with psi = pi sin(x) cos(y).
Element averages use one-point barycenter quadrature, which is exact for
the constant fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mesh import element_edge_matrices, reference_simplex

__all__ = [
    "FieldError",
    "DiffusionField",
    "identity_field",
    "constant_field",
    "rotated_anisotropic_field",
    "parse_field_spec",
    "evaluate_field",
    "element_average",
    "element_averages",
    "field_spectral_bounds",
    "mapped_metric_tensors",
    "spd_norm2",
]


class FieldError(ValueError):
    """Raised when a diffusion tensor is not symmetric positive definite."""


@dataclass(frozen=True)
class DiffusionField:
    """Closed-form SPD tensor field D(x) on the unit domain.

    ``kind`` is one of ``identity``, ``constant`` or ``rotated``; the extra
    payload is ``matrix`` for a constant field and ``(l1, l2)`` eigenvalues
    for the rotated anisotropic field.
    """

    dim: int
    kind: str
    matrix: np.ndarray | None = None
    eigenvalues: tuple[float, float] | None = None

    @property
    def spec(self):
        """Canonical CLI string for this field."""
        if self.kind == "identity":
            return "identity"
        if self.kind == "constant":
            return "const:" + ",".join(f"{v:.17g}" for v in self.matrix.ravel())
        l1, l2 = self.eigenvalues
        return f"rotated:{l1:.17g},{l2:.17g}"


def identity_field(dim):
    return DiffusionField(dim=dim, kind="identity")


def constant_field(matrix):
    """Constant field D(x) = M for an SPD matrix M."""
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] not in (1, 2, 3):
        raise FieldError(f"constant field matrix must be d x d, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise FieldError("constant field matrix has non-finite entries")
    scale = max(abs(m).max(), 1.0)
    if abs(m - m.T).max() > 1e-14 * scale:
        raise FieldError("constant field matrix is not symmetric")
    m = 0.5 * (m + m.T)
    if np.linalg.eigvalsh(m).min() <= 0.0:
        raise FieldError("constant field matrix is not positive definite")
    m.flags.writeable = False
    return DiffusionField(dim=m.shape[0], kind="constant", matrix=m)


def rotated_anisotropic_field(l1=1000.0, l2=1.0):
    """2D field R(psi) diag(l1, l2) R(psi)^T with psi = pi sin(x) cos(y)."""
    if l1 <= 0.0 or l2 <= 0.0:
        raise FieldError("rotated field eigenvalues must be positive")
    return DiffusionField(dim=2, kind="rotated", eigenvalues=(float(l1), float(l2)))


def parse_field_spec(spec, dim):
    """Build a field from a CLI string: identity, const:<entries>, rotated:<l1>,<l2>.

    Constant entries are the d*d values of the matrix in row-major order.
    """
    spec = spec.strip()
    if spec == "identity":
        return identity_field(dim)
    if spec.startswith("const:"):
        values = [float(v) for v in spec[len("const:"):].split(",")]
        d = math.isqrt(len(values))
        if d * d != len(values):
            raise FieldError(f"const field needs d*d entries, got {len(values)}")
        field = constant_field(np.array(values).reshape(d, d))
        if field.dim != dim:
            raise FieldError(f"const field is {field.dim}D but the mesh is {dim}D")
        return field
    if spec == "rotated":
        field = rotated_anisotropic_field()
    elif spec.startswith("rotated:"):
        parts = spec[len("rotated:"):].split(",")
        if len(parts) != 2:
            raise FieldError(f"rotated field needs two eigenvalues, got {spec!r}")
        field = rotated_anisotropic_field(float(parts[0]), float(parts[1]))
    else:
        raise FieldError(f"unknown field spec {spec!r}")
    if dim != 2:
        raise FieldError("rotated field is only defined in 2D")
    return field


def _rotated_tensors(field, points):
    """Rotated field at an array of points, shape (m, 2, 2)."""
    l1, l2 = field.eigenvalues
    psi = np.pi * np.sin(points[:, 0]) * np.cos(points[:, 1])
    c, s = np.cos(psi), np.sin(psi)
    out = np.empty((len(points), 2, 2))
    out[:, 0, 0] = l1 * c * c + l2 * s * s
    out[:, 1, 1] = l1 * s * s + l2 * c * c
    out[:, 0, 1] = out[:, 1, 0] = (l1 - l2) * c * s
    return out


def evaluate_field(field, x):
    """Evaluate D(x); raises FieldError if the result is not SPD."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (field.dim,):
        raise ValueError(f"point has shape {x.shape}, field dim is {field.dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"point {x} is not finite")
    if field.kind == "identity":
        return np.eye(field.dim)
    if field.kind == "constant":
        return np.array(field.matrix)
    mat = _rotated_tensors(field, x[None, :])[0]
    if np.linalg.eigvalsh(mat).min() <= 0.0:
        raise FieldError(f"field evaluation at {x} is not positive definite")
    return mat


def _tensors_at(field, points):
    if field.kind == "identity":
        return np.broadcast_to(np.eye(field.dim), (len(points), field.dim, field.dim))
    if field.kind == "constant":
        return np.broadcast_to(field.matrix, (len(points), field.dim, field.dim))
    return _rotated_tensors(field, points)


def element_averages(field, mesh):
    """Barycenter value of D on every element, shape (ne, d, d)."""
    if field.dim != mesh.dim:
        raise FieldError(f"field dim {field.dim} does not match mesh dim {mesh.dim}")
    centers = mesh.vertices[mesh.elements].mean(axis=1)
    return _tensors_at(field, centers)


def element_average(field, mesh, k):
    """Average diffusion tensor D_K of element k (one-point quadrature)."""
    center = mesh.vertices[mesh.elements[k]].mean(axis=0)
    return evaluate_field(field, center)


def field_spectral_bounds(field, mesh=None):
    """Exact field-wide eigenvalue bounds (d_min, d_max) for closed-form kinds."""
    if field.kind == "identity":
        return 1.0, 1.0
    if field.kind == "constant":
        eigs = np.linalg.eigvalsh(field.matrix)
        return float(eigs[0]), float(eigs[-1])
    l1, l2 = field.eigenvalues
    return min(l1, l2), max(l1, l2)


def spd_norm2(mats):
    """Spectral norms of a stack of symmetric d x d matrices, d <= 3.

    Closed form for d <= 2; the trigonometric characteristic-root solve
    for d = 3.
    """
    mats = np.asarray(mats, dtype=float)
    single = mats.ndim == 2
    if single:
        mats = mats[None]
    d = mats.shape[-1]
    if d == 1:
        out = np.abs(mats[:, 0, 0])
    elif d == 2:
        a, b, c = mats[:, 0, 0], mats[:, 0, 1], mats[:, 1, 1]
        half = 0.5 * np.sqrt((a - c) ** 2 + 4.0 * b * b)
        out = 0.5 * (a + c) + half
    else:
        a11, a22, a33 = mats[:, 0, 0], mats[:, 1, 1], mats[:, 2, 2]
        a12, a13, a23 = mats[:, 0, 1], mats[:, 0, 2], mats[:, 1, 2]
        p1 = a12 ** 2 + a13 ** 2 + a23 ** 2
        q = (a11 + a22 + a33) / 3.0
        p2 = (a11 - q) ** 2 + (a22 - q) ** 2 + (a33 - q) ** 2 + 2.0 * p1
        p = np.sqrt(np.maximum(p2 / 6.0, 0.0))
        out = np.empty(len(mats))
        diag_like = p == 0.0
        if np.any(diag_like):
            out[diag_like] = np.max(
                np.abs(mats[diag_like][:, (0, 1, 2), (0, 1, 2)]), axis=1
            )
        rest = ~diag_like
        if np.any(rest):
            b = (mats[rest] - q[rest, None, None] * np.eye(3)) / p[rest, None, None]
            r = np.clip(np.linalg.det(b) / 2.0, -1.0, 1.0)
            phi = np.arccos(r) / 3.0
            out[rest] = q[rest] + 2.0 * p[rest] * np.cos(phi)
    return out[0] if single else out


def mapped_metric_tensors(mesh, field):
    """Per-element tensors (F'_K)^{-T} D_K (F'_K)^{-1}, shape (ne, d, d).

    F'_K is the Jacobian of the affine map from the regular unit-volume
    reference simplex onto the element.
    """
    d = mesh.dim
    ref = reference_simplex(d)
    ref_cols = (ref[1:] - ref[0]).T  # columns of the reference edge matrix
    edge_rows = element_edge_matrices(mesh)  # (ne, d, d), rows are edges
    # F' = E_cols @ inv(ref_cols) with E_cols = edge_rows^T per element
    finv = np.einsum("ab,ebc->eac", ref_cols, np.linalg.inv(edge_rows.transpose(0, 2, 1)))
    dk = element_averages(field, mesh)
    m = np.einsum("eba,ebc,ecd->ead", finv, dk, finv)
    return 0.5 * (m + m.transpose(0, 2, 1))
