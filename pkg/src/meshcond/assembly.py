"""Assembly of sparse symmetric stiffness and mass matrices.

Matrices are indexed by interior vertices only (homogeneous Dirichlet rows
and columns are never assembled) and stored as ``scipy.sparse.csr_matrix``
with the full symmetric pattern.  Diagonal scalings are plain 1-D arrays of
positive entries, one per interior vertex.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

from .diffusion import element_averages, mapped_metric_tensors, spd_norm2
from .mesh import element_edge_matrices

__all__ = [
    "AssemblyError",
    "assemble_stiffness",
    "assemble_mass",
    "jacobi_scaling",
    "alt_scaling",
    "apply_symmetric_scaling",
    "write_matrix",
]


class AssemblyError(ValueError):
    """Raised when a mesh element cannot be assembled."""


def _element_data(mesh):
    """Signed volumes and basis gradients for all elements.

    Gradients come from the inverse transpose of the vertex-difference
    matrix; raises AssemblyError naming the first degenerate element.
    """
    d = mesh.dim
    edges = element_edge_matrices(mesh)
    dets = np.linalg.det(edges)
    vols = dets / math.factorial(d)
    bad = ~np.isfinite(vols) | (vols <= 0.0)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise AssemblyError(f"element {k} is degenerate (signed volume {vols[k]})")
    inv = np.linalg.inv(edges)
    grads = np.empty((mesh.n_elements, d + 1, d))
    grads[:, 1:, :] = inv.transpose(0, 2, 1)
    grads[:, 0, :] = -grads[:, 1:, :].sum(axis=1)
    return vols, grads


def _scatter(mesh, local):
    """Accumulate (ne, d+1, d+1) element matrices into a CSR over interior dofs."""
    imap = mesh.interior_map()
    gidx = imap[mesh.elements]  # (ne, d+1)
    rows = np.broadcast_to(gidx[:, :, None], local.shape)
    cols = np.broadcast_to(gidx[:, None, :], local.shape)
    keep = (rows >= 0) & (cols >= 0)
    n = mesh.n_interior
    mat = sp.coo_matrix(
        (local[keep], (rows[keep], cols[keep])), shape=(n, n)
    ).tocsr()
    mat.sum_duplicates()
    return mat


def assemble_stiffness(mesh, field):
    """Stiffness matrix A_ij = sum_K |K| grad(phi_i) . D_K grad(phi_j).

    Parameters
    ----------
    mesh : SimplicialMesh
    field : DiffusionField
        Must have the same dimension as the mesh.

    Returns
    -------
    scipy.sparse.csr_matrix of order ``mesh.n_interior``, SPD.
    """
    vols, grads = _element_data(mesh)
    dk = element_averages(field, mesh)
    local = np.einsum("eia,eab,ejb->eij", grads, dk, grads)
    local = 0.5 * (local + local.transpose(0, 2, 1)) * vols[:, None, None]
    return _scatter(mesh, local)


def assemble_mass(mesh):
    """Mass matrix B_ij = int phi_i phi_j.

    Element entries are |K| (1 + delta_ij) / ((d+1)(d+2)), so the assembled
    diagonal is B_jj = 2 |omega_j| / ((d+1)(d+2)).
    """
    d = mesh.dim
    vols, _ = _element_data(mesh)
    base = (np.ones((d + 1, d + 1)) + np.eye(d + 1)) / ((d + 1) * (d + 2))
    local = vols[:, None, None] * base
    return _scatter(mesh, local)


def jacobi_scaling(mat):
    """Jacobi scaling s_j = sqrt(M_jj); requires a strictly positive diagonal."""
    diag = np.asarray(mat.diagonal(), dtype=float)
    if not np.all(np.isfinite(diag)) or np.any(diag <= 0.0):
        j = int(np.argmin(diag))
        raise ValueError(f"diagonal entry {j} is not positive ({diag[j]})")
    return np.sqrt(diag)


def alt_scaling(mesh, field):
    """Patchwise geometric scaling s_j^2 = sum_{K in omega_j} |K| ||F^-T D_K F^-1||_2.

    Coincides with the Jacobi scaling of the stiffness matrix in 1D and
    dominates it in general.
    """
    vols, _ = _element_data(mesh)
    norms = spd_norm2(mapped_metric_tensors(mesh, field))
    imap = mesh.interior_map()
    s2 = np.zeros(mesh.n_interior)
    local = imap[mesh.elements]
    weights = vols * norms
    for i in range(mesh.dim + 1):
        sel = local[:, i] >= 0
        np.add.at(s2, local[sel, i], weights[sel])
    return np.sqrt(s2)


def apply_symmetric_scaling(mat, scaling):
    """Symmetrically scaled matrix with entries M_ij / (s_i s_j)."""
    s = np.asarray(scaling, dtype=float)
    if s.shape != (mat.shape[0],):
        raise ValueError(f"scaling has shape {s.shape}, matrix order is {mat.shape[0]}")
    if not np.all(np.isfinite(s)) or np.any(s <= 0.0):
        raise ValueError("scaling entries must be positive and finite")
    dinv = sp.diags(1.0 / s)
    return (dinv @ mat @ dinv).tocsr()


def write_matrix(mat, path):
    """Dump a symmetric sparse matrix in coordinate text form.

    Header line ``%%sym n nnz``; one ``i j value`` line per stored entry
    with i <= j.
    """
    coo = sp.coo_matrix(mat)
    keep = coo.row <= coo.col
    rows, cols, vals = coo.row[keep], coo.col[keep], coo.data[keep]
    order = np.lexsort((cols, rows))
    with open(path, "w") as fh:
        fh.write(f"%%sym {mat.shape[0]} {len(vals)}\n")
        for i, j, v in zip(rows[order], cols[order], vals[order]):
            fh.write(f"{i} {j} {v:.17g}\n")
