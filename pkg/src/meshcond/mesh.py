"""Simplicial meshes: representation, geometry, generators, statistics and I/O.

Meshes live on the unit interval/square/cube and are immutable after
construction.  Elements are stored with positive signed volume; all vertex
coordinates are plain float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "SimplicialMesh",
    "ElementGeometry",
    "VertexPatch",
    "MeshStatistics",
    "MeshFormatError",
    "DegenerateElementError",
    "reference_simplex",
    "reference_gradients",
    "reference_gradient_bound",
    "generate_uniform_mesh",
    "generate_chebyshev_mesh",
    "generate_skew_mesh_2d",
    "generate_skew_mesh_3d",
    "element_geometry",
    "element_volumes",
    "element_edge_matrices",
    "vertex_patches",
    "mesh_statistics",
    "validate_mesh",
    "write_mesh",
    "read_mesh",
]


class MeshFormatError(ValueError):
    """Raised when a mesh file cannot be parsed; carries the offending line."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegenerateElementError(ValueError):
    """Raised for elements with zero or non-finite volume."""


@dataclass(frozen=True)
class SimplicialMesh:
    """A conforming simplicial mesh in d = 1, 2 or 3 dimensions.

    Attributes
    ----------
    dim : int
        Spatial dimension d.
    vertices : ndarray, shape (nv, d)
        Vertex coordinates.
    elements : ndarray, shape (ne, d + 1)
        Vertex indices of each simplex, positively oriented.
    boundary : ndarray of bool, shape (nv,)
        True for vertices on the domain boundary.
    """

    dim: int
    vertices: np.ndarray
    elements: np.ndarray
    boundary: np.ndarray

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        vertices = np.ascontiguousarray(self.vertices, dtype=float)
        if vertices.ndim == 1:
            vertices = vertices[:, None]
        elements = np.ascontiguousarray(self.elements, dtype=np.int64)
        boundary = np.ascontiguousarray(self.boundary, dtype=bool)
        if vertices.shape[1] != self.dim:
            raise ValueError("vertex coordinates do not match dim")
        if elements.ndim != 2 or elements.shape[1] != self.dim + 1:
            raise ValueError("elements must have d + 1 vertices each")
        if boundary.shape != (vertices.shape[0],):
            raise ValueError("boundary flags must match vertex count")
        if elements.size and (elements.min() < 0 or elements.max() >= len(vertices)):
            raise ValueError("element vertex index out of range")
        for arr in (vertices, elements, boundary):
            arr.flags.writeable = False
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "boundary", boundary)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    @property
    def n_interior(self):
        return int(np.count_nonzero(~self.boundary))

    def interior_indices(self):
        """Indices of interior vertices, in vertex order."""
        return np.flatnonzero(~self.boundary)

    def interior_map(self):
        """Map vertex index -> interior unknown index, -1 for boundary."""
        imap = np.full(self.n_vertices, -1, dtype=np.int64)
        imap[~self.boundary] = np.arange(self.n_interior)
        return imap


@dataclass(frozen=True)
class ElementGeometry:
    """Affine geometry of one simplex.

    ``jacobian`` maps the regular reference simplex of unit volume onto the
    element, so ``volume == abs(det(jacobian))``.  ``aspect`` is the ratio of
    the average size ``volume**(1/d)`` to the inscribed-ball diameter;
    ``diameter`` is the longest edge.
    """

    jacobian: np.ndarray
    volume: float
    in_diameter: float
    diameter: float
    avg_size: float
    aspect: float


@dataclass(frozen=True)
class VertexPatch:
    """Elements sharing one interior vertex and their total volume."""

    vertex: int
    elements: np.ndarray
    volume: float


@dataclass(frozen=True)
class MeshStatistics:
    n_elements: int
    n_interior: int
    k_min: float
    k_max: float
    k_bar: float
    omega_min: float
    omega_max: float
    p_max: int
    h_ratio: float


@lru_cache(maxsize=None)
def reference_simplex(dim):
    """Vertices of the regular d-simplex with unit volume, shape (d+1, d).

    Built from the Helmert embedding of the standard simplex (edge length
    sqrt(2)) and rescaled so that the volume is exactly one.
    """
    d = dim
    helmert = np.zeros((d, d + 1))
    for k in range(1, d + 1):
        helmert[k - 1, :k] = 1.0
        helmert[k - 1, k] = -float(k)
        helmert[k - 1] /= math.sqrt(k * (k + 1))
    verts = helmert.T.copy()  # (d+1, d), pairwise distance sqrt(2)
    det = np.linalg.det(verts[1:] - verts[0])
    if det < 0.0:  # keep the reference positively oriented
        verts[[d - 1, d]] = verts[[d, d - 1]]
    vol = abs(det) / math.factorial(d)
    verts *= (1.0 / vol) ** (1.0 / d)
    verts.flags.writeable = False
    return verts


@lru_cache(maxsize=None)
def reference_gradients(dim):
    """Gradients of the linear basis functions on the reference simplex.

    Returns an array of shape (d+1, d); row i is the gradient of the basis
    function attached to reference vertex i.
    """
    verts = reference_simplex(dim)
    edges = verts[1:] - verts[0]  # rows
    ginv = np.linalg.inv(edges.T)  # rows are gradients of vertices 1..d
    grads = np.empty((dim + 1, dim))
    grads[1:] = ginv
    grads[0] = -ginv.sum(axis=0)
    grads.flags.writeable = False
    return grads


@lru_cache(maxsize=None)
def reference_gradient_bound(dim):
    """Largest squared gradient norm over the reference basis functions."""
    grads = reference_gradients(dim)
    return float(np.max(np.sum(grads * grads, axis=1)))


def _signed_volumes(vertices, elements, dim):
    pts = vertices[elements]  # (ne, d+1, d)
    edges = pts[:, 1:, :] - pts[:, :1, :]
    return np.linalg.det(edges) / math.factorial(dim)


def element_volumes(mesh):
    """Volumes of all elements, shape (ne,)."""
    return np.abs(_signed_volumes(mesh.vertices, mesh.elements, mesh.dim))


def element_edge_matrices(mesh):
    """Edge matrices of all elements, shape (ne, d, d); row i is p_i - p_0."""
    pts = mesh.vertices[mesh.elements]
    return pts[:, 1:, :] - pts[:, :1, :]


def element_geometry(mesh, k):
    """Geometry of element ``k``: Jacobian, volume, in-diameter, aspect.

    Raises
    ------
    DegenerateElementError
        If the element volume is zero or non-finite.
    """
    d = mesh.dim
    pts = mesh.vertices[mesh.elements[k]]
    edges = pts[1:] - pts[0]
    det = np.linalg.det(edges)
    volume = abs(det) / math.factorial(d)
    if not np.isfinite(volume) or volume == 0.0:
        raise DegenerateElementError(f"element {k} is degenerate (volume {volume})")

    ref_edges = (reference_simplex(d)[1:] - reference_simplex(d)[0]).T
    jacobian = edges.T @ np.linalg.inv(ref_edges)

    if d == 1:
        in_diameter = volume
        diameter = volume
    elif d == 2:
        sides = [np.linalg.norm(pts[i] - pts[j]) for i, j in ((0, 1), (1, 2), (2, 0))]
        in_diameter = 4.0 * volume / sum(sides)
        diameter = max(sides)
    else:
        faces = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))
        area = 0.0
        for f in faces:
            a, b, c = pts[f[0]], pts[f[1]], pts[f[2]]
            area += 0.5 * np.linalg.norm(np.cross(b - a, c - a))
        in_diameter = 6.0 * volume / area
        diameter = max(
            np.linalg.norm(pts[i] - pts[j]) for i in range(4) for j in range(i + 1, 4)
        )
    avg_size = volume ** (1.0 / d)
    return ElementGeometry(
        jacobian=jacobian,
        volume=volume,
        in_diameter=in_diameter,
        diameter=float(diameter),
        avg_size=avg_size,
        aspect=avg_size / in_diameter,
    )


def element_diameters(mesh):
    """Longest-edge lengths of all elements, shape (ne,)."""
    pts = mesh.vertices[mesh.elements]
    nloc = mesh.dim + 1
    dmax = np.zeros(mesh.n_elements)
    for i in range(nloc):
        for j in range(i + 1, nloc):
            dij = np.linalg.norm(pts[:, i, :] - pts[:, j, :], axis=1)
            np.maximum(dmax, dij, out=dmax)
    return dmax


def _orient_positive(vertices, elements, dim):
    """Return elements reordered so every signed volume is positive."""
    elements = np.sort(elements, axis=1)
    vols = _signed_volumes(vertices, elements, dim)
    flip = vols < 0.0
    if np.any(flip):
        elements[flip, -2], elements[flip, -1] = (
            elements[flip, -1].copy(),
            elements[flip, -2].copy(),
        )
    return elements


def generate_uniform_mesh(dim, n):
    """Uniform mesh of the unit interval, square or cube.

    Parameters
    ----------
    dim : int
        Spatial dimension, 1, 2 or 3.
    n : int
        Subdivisions per axis, at least 2.

    Returns
    -------
    SimplicialMesh
        d = 1: ``n`` intervals; d = 2: two triangles per grid cell (all
        diagonals parallel); d = 3: six tetrahedra per cell (Kuhn split).
    """
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    if dim == 1:
        coords = np.array([[i / n] for i in range(n + 1)])
        elems = np.array([[i, i + 1] for i in range(n)], dtype=np.int64)
        boundary = np.zeros(n + 1, dtype=bool)
        boundary[[0, n]] = True
    elif dim == 2:
        coords = np.array(
            [[i / n, j / n] for j in range(n + 1) for i in range(n + 1)]
        )

        def vid(i, j):
            return j * (n + 1) + i

        elems = []
        for j in range(n):
            for i in range(n):
                v00, v10 = vid(i, j), vid(i + 1, j)
                v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
                elems.append((v00, v10, v11))
                elems.append((v00, v11, v01))
        elems = np.array(elems, dtype=np.int64)
        onb = np.array(
            [i in (0, n) or j in (0, n) for j in range(n + 1) for i in range(n + 1)]
        )
        boundary = onb
    else:
        coords = np.array(
            [
                [i / n, j / n, k / n]
                for k in range(n + 1)
                for j in range(n + 1)
                for i in range(n + 1)
            ]
        )

        def vid3(i, j, k):
            return (k * (n + 1) + j) * (n + 1) + i

        # Kuhn split: one tetrahedron per permutation of the axis order,
        # each containing the main diagonal of the cell.
        perms = (
            (0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0),
        )
        elems = []
        for k in range(n):
            for j in range(n):
                for i in range(n):
                    base = np.array([i, j, k])
                    for perm in perms:
                        corners = [base.copy()]
                        cur = base.copy()
                        for axis in perm:
                            cur = cur.copy()
                            cur[axis] += 1
                            corners.append(cur)
                        elems.append([vid3(*c) for c in corners])
        elems = np.array(elems, dtype=np.int64)
        onb = np.array(
            [
                i in (0, n) or j in (0, n) or k in (0, n)
                for k in range(n + 1)
                for j in range(n + 1)
                for i in range(n + 1)
            ]
        )
        boundary = onb
    elems = _orient_positive(coords, elems, dim)
    return SimplicialMesh(dim=dim, vertices=coords, elements=elems, boundary=boundary)


def generate_chebyshev_mesh(n):
    """1D mesh of [0, 1] with interior vertices at Chebyshev nodes.

    The interior nodes are x_i = (1 - cos((2i - 1) pi / (2(N - 1)))) / 2 for
    i = 1..N-1; the boundary vertices 0 and 1 are added so the mesh has
    exactly ``n`` elements.
    """
    if n < 3:
        raise ValueError(f"n must be at least 3, got {n}")
    i = np.arange(1, n)
    interior = 0.5 * (1.0 - np.cos((2 * i - 1) * np.pi / (2 * (n - 1))))
    coords = np.concatenate(([0.0], interior, [1.0]))[:, None]
    elems = np.array([[j, j + 1] for j in range(n)], dtype=np.int64)
    boundary = np.zeros(n + 1, dtype=bool)
    boundary[[0, n]] = True
    return SimplicialMesh(dim=1, vertices=coords, elements=elems, boundary=boundary)


def _shift_grid_layer(mesh, n, aspect, axis):
    """Move the grid layer nearest the domain mid-plane toward its neighbor.

    The layer of cells below the moved line gets thickness (1/n)/aspect; the
    layer above absorbs the difference.  aspect == 1 leaves the mesh
    bit-for-bit identical to the uniform one.
    """
    if aspect < 1.0:
        raise ValueError(f"aspect must be at least 1, got {aspect}")
    j0 = (n + 1) // 2
    new_pos = (j0 - 1 + 1.0 / aspect) / n
    if not ((j0 - 1) / n < new_pos < (j0 + 1) / n):
        raise ValueError(
            f"aspect {aspect} moves the grid layer across a neighboring line"
        )
    coords = np.array(mesh.vertices)
    old_pos = j0 / n
    onlayer = coords[:, axis] == old_pos
    coords[onlayer, axis] = new_pos
    return SimplicialMesh(
        dim=mesh.dim, vertices=coords, elements=mesh.elements, boundary=mesh.boundary
    )


def generate_skew_mesh_2d(n, aspect):
    """Uniform 2D mesh with one squeezed row of cells of height (1/n)/aspect.

    Yields 2n thin triangles whose longest-edge to inscribed-diameter ratio
    is within a factor of two of ``aspect``; all other elements keep O(1)
    shape.  ``aspect == 1`` reproduces ``generate_uniform_mesh(2, n)``
    vertex for vertex.
    """
    if n < 4:
        raise ValueError(f"n must be at least 4, got {n}")
    return _shift_grid_layer(generate_uniform_mesh(2, n), n, aspect, axis=1)


def generate_skew_mesh_3d(n, aspect):
    """Uniform 3D mesh with one squeezed slab of cells of height (1/n)/aspect.

    Yields 6 n^2 thin tetrahedra; ``aspect == 1`` reproduces
    ``generate_uniform_mesh(3, n)`` vertex for vertex.
    """
    if n < 4:
        raise ValueError(f"n must be at least 4, got {n}")
    return _shift_grid_layer(generate_uniform_mesh(3, n), n, aspect, axis=2)


def vertex_patches(mesh):
    """Element patches of all interior vertices, in interior order.

    Patch volumes are accumulated in element-index order, matching the
    summation order used by matrix assembly.
    """
    vols = element_volumes(mesh)
    interior = mesh.interior_indices()
    members = {int(v): [] for v in interior}
    for k, elem in enumerate(mesh.elements):
        for v in elem:
            lst = members.get(int(v))
            if lst is not None:
                lst.append(k)
    patches = []
    for v in interior:
        elems = np.array(members[int(v)], dtype=np.int64)
        patches.append(
            VertexPatch(vertex=int(v), elements=elems, volume=float(vols[elems].sum()))
        )
    return patches


def patch_volumes(mesh):
    """Patch volume per interior vertex, shape (n_interior,)."""
    vols = element_volumes(mesh)
    imap = mesh.interior_map()
    out = np.zeros(mesh.n_interior)
    local = imap[mesh.elements]  # (ne, d+1)
    for i in range(mesh.dim + 1):
        sel = local[:, i] >= 0
        np.add.at(out, local[sel, i], vols[sel])
    return out


def mesh_statistics(mesh):
    """Element and patch size statistics used by the conditioning bounds."""
    vols = element_volumes(mesh)
    omega = patch_volumes(mesh)
    imap = mesh.interior_map()
    counts = np.zeros(mesh.n_interior, dtype=np.int64)
    local = imap[mesh.elements]
    for i in range(mesh.dim + 1):
        sel = local[:, i] >= 0
        np.add.at(counts, local[sel, i], 1)
    diam = element_diameters(mesh)
    return MeshStatistics(
        n_elements=mesh.n_elements,
        n_interior=mesh.n_interior,
        k_min=float(vols.min()),
        k_max=float(vols.max()),
        k_bar=float(vols.sum()) / mesh.n_elements,
        omega_min=float(omega.min()),
        omega_max=float(omega.max()),
        p_max=int(counts.max()),
        h_ratio=float(diam.max() / diam.min()),
    )


def validate_mesh(mesh):
    """Check the structural mesh invariants; raise ValueError on failure."""
    vols = _signed_volumes(mesh.vertices, mesh.elements, mesh.dim)
    if not np.all(np.isfinite(vols)) or np.any(vols <= 0.0):
        bad = int(np.argmin(vols))
        raise DegenerateElementError(
            f"element {bad} has non-positive volume {vols[bad]}"
        )
    used = np.zeros(mesh.n_vertices, dtype=bool)
    used[mesh.elements.ravel()] = True
    missing = np.flatnonzero(~used & ~mesh.boundary)
    if missing.size:
        raise ValueError(f"interior vertex {missing[0]} belongs to no element")


def write_mesh(mesh, path):
    """Write a mesh in the plain-text format read back by :func:`read_mesh`."""
    with open(path, "w") as fh:
        fh.write(
            f"meshcond v1 dim={mesh.dim} nv={mesh.n_vertices} ne={mesh.n_elements}\n"
        )
        for coords, flag in zip(mesh.vertices, mesh.boundary):
            vals = " ".join(f"{c:.17g}" for c in coords)
            fh.write(f"{vals} {1 if flag else 0}\n")
        for elem in mesh.elements:
            fh.write(" ".join(str(int(v)) for v in elem) + "\n")


def read_mesh(path):
    """Read a mesh written by :func:`write_mesh`.

    Raises
    ------
    MeshFormatError
        On a malformed header, out-of-range vertex index or non-finite
        coordinate; the error message carries the offending line number.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].strip():
        raise MeshFormatError("missing header", line=1)
    head = lines[0].split()
    if len(head) != 5 or head[0] != "meshcond" or head[1] != "v1":
        raise MeshFormatError(f"malformed header {lines[0]!r}", line=1)
    fields = {}
    for token in head[2:]:
        key, _, value = token.partition("=")
        try:
            fields[key] = int(value)
        except ValueError:
            raise MeshFormatError(f"malformed header field {token!r}", line=1)
    if sorted(fields) != ["dim", "ne", "nv"]:
        raise MeshFormatError(f"malformed header {lines[0]!r}", line=1)
    dim, nv, ne = fields["dim"], fields["nv"], fields["ne"]
    if dim not in (1, 2, 3) or nv < dim + 1 or ne < 1:
        raise MeshFormatError(f"invalid header values dim={dim} nv={nv} ne={ne}", line=1)
    if len(lines) < 1 + nv + ne:
        raise MeshFormatError(
            f"expected {1 + nv + ne} lines, file has {len(lines)}", line=len(lines)
        )

    vertices = np.empty((nv, dim))
    boundary = np.empty(nv, dtype=bool)
    for i in range(nv):
        lineno = 2 + i
        parts = lines[1 + i].split()
        if len(parts) != dim + 1:
            raise MeshFormatError(
                f"expected {dim + 1} fields on vertex line, got {len(parts)}",
                line=lineno,
            )
        try:
            coords = [float(p) for p in parts[:dim]]
        except ValueError:
            raise MeshFormatError(f"bad coordinate in {parts[:dim]}", line=lineno)
        if not all(math.isfinite(c) for c in coords):
            raise MeshFormatError(f"non-finite coordinate {coords}", line=lineno)
        if parts[dim] not in ("0", "1"):
            raise MeshFormatError(f"boundary flag must be 0 or 1, got {parts[dim]!r}",
                                  line=lineno)
        vertices[i] = coords
        boundary[i] = parts[dim] == "1"

    elements = np.empty((ne, dim + 1), dtype=np.int64)
    for k in range(ne):
        lineno = 2 + nv + k
        parts = lines[1 + nv + k].split()
        if len(parts) != dim + 1:
            raise MeshFormatError(
                f"expected {dim + 1} vertex indices, got {len(parts)}", line=lineno
            )
        try:
            idx = [int(p) for p in parts]
        except ValueError:
            raise MeshFormatError(f"bad vertex index in {parts}", line=lineno)
        for v in idx:
            if v < 0 or v >= nv:
                raise MeshFormatError(f"vertex index {v} out of range", line=lineno)
        elements[k] = idx

    return SimplicialMesh(dim=dim, vertices=vertices, elements=elements,
                          boundary=boundary)
