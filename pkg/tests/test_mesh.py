import math

import numpy as np
import pytest

from meshcond.mesh import (
    DegenerateElementError,
    MeshFormatError,
    SimplicialMesh,
    element_geometry,
    element_volumes,
    generate_chebyshev_mesh,
    generate_skew_mesh_2d,
    generate_skew_mesh_3d,
    generate_uniform_mesh,
    mesh_statistics,
    read_mesh,
    reference_gradient_bound,
    reference_simplex,
    validate_mesh,
    vertex_patches,
    write_mesh,
)


def chebyshev_interior(n):
    i = np.arange(1, n)
    return 0.5 * (1.0 - np.cos((2 * i - 1) * np.pi / (2 * (n - 1))))


class TestReferenceSimplex:
    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_unit_volume_and_regularity(self, dim):
        verts = reference_simplex(dim)
        vol = np.linalg.det(verts[1:] - verts[0]) / math.factorial(dim)
        assert vol == pytest.approx(1.0, rel=1e-13)
        dists = [
            np.linalg.norm(verts[i] - verts[j])
            for i in range(dim + 1)
            for j in range(i + 1, dim + 1)
        ]
        assert np.ptp(dists) < 1e-13 * dists[0]

    def test_gradient_bound_1d_is_one(self):
        assert reference_gradient_bound(1) == pytest.approx(1.0)

    @pytest.mark.parametrize("dim", [2, 3])
    def test_gradient_bound_below_one(self, dim):
        # needed for the patchwise scaling to dominate the Jacobi scaling
        assert reference_gradient_bound(dim) < 1.0


class TestUniformMesh:
    def test_1d_counts(self):
        mesh = generate_uniform_mesh(1, 4)
        assert (mesh.n_vertices, mesh.n_elements, mesh.n_interior) == (5, 4, 3)
        assert element_volumes(mesh) == pytest.approx([0.25] * 4)

    def test_2d_counts(self):
        mesh = generate_uniform_mesh(2, 4)
        assert (mesh.n_vertices, mesh.n_elements, mesh.n_interior) == (25, 32, 9)
        vols = element_volumes(mesh)
        assert vols == pytest.approx([1.0 / 32] * 32)
        assert vols.sum() == pytest.approx(1.0, rel=1e-12)

    def test_3d_counts(self):
        mesh = generate_uniform_mesh(3, 2)
        assert (mesh.n_vertices, mesh.n_elements, mesh.n_interior) == (27, 48, 1)
        assert element_volumes(mesh).sum() == pytest.approx(1.0, rel=1e-12)

    @pytest.mark.parametrize("dim,n", [(1, 7), (2, 5), (3, 3)])
    def test_valid_and_unit_volume(self, dim, n):
        mesh = generate_uniform_mesh(dim, n)
        validate_mesh(mesh)
        assert element_volumes(mesh).sum() == pytest.approx(1.0, rel=1e-12)

    def test_rejects_small_n(self):
        with pytest.raises(ValueError):
            generate_uniform_mesh(2, 1)


class TestChebyshevMesh:
    def test_three_elements(self):
        mesh = generate_chebyshev_mesh(3)
        x = chebyshev_interior(3)
        assert x == pytest.approx([0.5 * (1 - np.cos(np.pi / 4)),
                                   0.5 * (1 - np.cos(3 * np.pi / 4))])
        assert mesh.vertices.ravel() == pytest.approx([0.0, x[0], x[1], 1.0])
        assert element_volumes(mesh) == pytest.approx(
            [0.14644660940672624, 0.7071067811865476, 0.14644660940672624]
        )

    @pytest.mark.parametrize("n", [3, 10, 64, 257])
    def test_nodes_strictly_increasing_inside(self, n):
        mesh = generate_chebyshev_mesh(n)
        x = mesh.vertices.ravel()
        assert np.all(np.diff(x) > 0)
        assert x[0] == 0.0 and x[-1] == 1.0
        assert np.all((x[1:-1] > 0) & (x[1:-1] < 1))
        assert element_volumes(mesh).sum() == pytest.approx(1.0, rel=1e-12)

    def test_rejects_small_n(self):
        with pytest.raises(ValueError):
            generate_chebyshev_mesh(2)


def slenderness(mesh, k):
    geo = element_geometry(mesh, k)
    return geo.diameter / geo.in_diameter


class TestSkewMesh2d:
    def test_aspect_one_is_uniform(self):
        skew = generate_skew_mesh_2d(4, 1.0)
        uni = generate_uniform_mesh(2, 4)
        assert np.array_equal(skew.vertices, uni.vertices)
        assert np.array_equal(skew.elements, uni.elements)

    def test_thin_element_count(self):
        a = 125.0
        mesh = generate_skew_mesh_2d(16, a)
        ratios = np.array([slenderness(mesh, k) for k in range(mesh.n_elements)])
        assert np.count_nonzero(ratios > a / 2) == 2 * 16
        assert ratios.max() < 2 * a
        # the remaining elements keep O(1) shape
        rest = np.sort(ratios)[: mesh.n_elements - 32]
        assert rest.max() < 5.0

    def test_area_preserved(self):
        mesh = generate_skew_mesh_2d(16, 125.0)
        assert element_volumes(mesh).sum() == pytest.approx(1.0, rel=1e-12)
        validate_mesh(mesh)

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            generate_skew_mesh_2d(3, 8.0)
        with pytest.raises(ValueError):
            generate_skew_mesh_2d(8, 0.5)


class TestSkewMesh3d:
    def test_aspect_one_is_uniform(self):
        skew = generate_skew_mesh_3d(4, 1.0)
        uni = generate_uniform_mesh(3, 4)
        assert np.array_equal(skew.vertices, uni.vertices)
        assert np.array_equal(skew.elements, uni.elements)

    def test_thin_element_count_and_aspect(self):
        a = 25.0
        mesh = generate_skew_mesh_3d(8, a)
        assert element_volumes(mesh).sum() == pytest.approx(1.0, rel=1e-12)
        ratios = np.array([slenderness(mesh, k) for k in range(mesh.n_elements)])
        assert np.count_nonzero(ratios > a / 2) == 6 * 64
        assert a / 2 < ratios.max() < 2 * a
        validate_mesh(mesh)


class TestElementGeometry:
    def test_1d_interval(self):
        mesh = generate_uniform_mesh(1, 4)
        geo = element_geometry(mesh, 0)
        assert geo.jacobian.ravel() == pytest.approx([0.25])
        assert geo.volume == pytest.approx(0.25)
        assert geo.in_diameter == pytest.approx(0.25)
        assert geo.aspect == pytest.approx(1.0)

    def test_right_triangle(self):
        mesh = SimplicialMesh(
            dim=2,
            vertices=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
            elements=np.array([[0, 2, 1]]),
            boundary=np.ones(3, dtype=bool),
        )
        geo = element_geometry(mesh, 0)
        assert geo.volume == pytest.approx(0.5)
        # in-diameter = 2 * inradius = 2 * area / semiperimeter
        assert geo.in_diameter == pytest.approx(2 * (1 - np.sqrt(2) / 2))

    def test_volume_equals_jacobian_determinant(self):
        rng = np.random.default_rng(42)
        checked = 0
        while checked < 1000:
            dim = int(rng.integers(1, 4))
            pts = rng.standard_normal((dim + 1, dim))
            det = np.linalg.det(pts[1:] - pts[0])
            if abs(det) < 0.3:
                continue
            mesh = SimplicialMesh(
                dim=dim,
                vertices=pts,
                elements=np.arange(dim + 1)[None, :],
                boundary=np.ones(dim + 1, dtype=bool),
            )
            geo = element_geometry(mesh, 0)
            jdet = abs(np.linalg.det(geo.jacobian))
            assert abs(geo.volume - jdet) <= 1e-14 * geo.volume
            assert geo.volume == pytest.approx(abs(det) / math.factorial(dim),
                                               rel=1e-14)
            checked += 1

    def test_degenerate_element(self):
        mesh = SimplicialMesh(
            dim=2,
            vertices=np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]),
            elements=np.array([[0, 1, 2]]),
            boundary=np.ones(3, dtype=bool),
        )
        with pytest.raises(DegenerateElementError):
            element_geometry(mesh, 0)

    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_regular_simplex_minimizes_aspect(self, dim):
        verts = np.asarray(reference_simplex(dim))
        mesh = SimplicialMesh(
            dim=dim,
            vertices=verts,
            elements=np.arange(dim + 1)[None, :],
            boundary=np.ones(dim + 1, dtype=bool),
        )
        regular = element_geometry(mesh, 0).aspect
        rng = np.random.default_rng(dim)
        for _ in range(200):
            pts = rng.standard_normal((dim + 1, dim))
            if abs(np.linalg.det(pts[1:] - pts[0])) < 0.1:
                continue
            other = SimplicialMesh(
                dim=dim,
                vertices=pts,
                elements=np.arange(dim + 1)[None, :],
                boundary=np.ones(dim + 1, dtype=bool),
            )
            assert element_geometry(other, 0).aspect >= regular * (1 - 1e-12)


class TestVertexPatches:
    def test_1d_middle_vertex(self):
        mesh = generate_uniform_mesh(1, 4)
        patches = vertex_patches(mesh)
        middle = [p for p in patches if p.vertex == 2][0]
        assert len(middle.elements) == 2
        assert middle.volume == pytest.approx(0.5)

    def test_2d_interior_patches(self):
        mesh = generate_uniform_mesh(2, 4)
        for patch in vertex_patches(mesh):
            assert len(patch.elements) == 6
            assert patch.volume == pytest.approx(6.0 / 32)

    @pytest.mark.parametrize("make", [
        lambda: generate_uniform_mesh(2, 5),
        lambda: generate_uniform_mesh(3, 3),
        lambda: generate_chebyshev_mesh(16),
        lambda: generate_skew_mesh_2d(8, 10.0),
    ])
    def test_patch_volume_sum_bounded(self, make):
        mesh = make()
        total = sum(p.volume for p in vertex_patches(mesh))
        domain = element_volumes(mesh).sum()
        assert total <= (mesh.dim + 1) * domain + 1e-12

    def test_patch_matches_membership(self):
        mesh = generate_skew_mesh_2d(6, 4.0)
        for patch in vertex_patches(mesh):
            for k in range(mesh.n_elements):
                assert (patch.vertex in mesh.elements[k]) == (k in patch.elements)


class TestMeshStatistics:
    def test_uniform_2d(self):
        stats = mesh_statistics(generate_uniform_mesh(2, 4))
        assert stats.n_elements == 32
        assert stats.n_interior == 9
        assert stats.k_bar == pytest.approx(1.0 / 32)
        assert stats.p_max == 6
        assert stats.k_min == stats.k_max == pytest.approx(stats.k_bar)

    def test_chebyshev_smallest_element(self):
        stats = mesh_statistics(generate_chebyshev_mesh(64))
        # smallest element is the boundary one, ending at the first
        # interior node
        assert stats.k_min == pytest.approx(
            0.5 * (1 - np.cos(np.pi / (2 * 63))), rel=1e-14
        )

    def test_uniform_all_equal(self):
        stats = mesh_statistics(generate_uniform_mesh(3, 3))
        assert stats.k_min == pytest.approx(stats.k_bar, rel=1e-12)
        assert stats.k_max == pytest.approx(stats.k_bar, rel=1e-12)
        assert stats.h_ratio == pytest.approx(1.0, rel=1e-12)

    def test_1d_interior_patch_count(self):
        stats = mesh_statistics(generate_uniform_mesh(1, 6))
        assert stats.p_max == 2


def random_mesh(rng, index):
    dim = index % 3 + 1
    if dim == 1:
        n = int(rng.integers(3, 12))
        interior = np.sort(rng.uniform(0.05, 0.95, n - 1))
        verts = np.concatenate(([0.0], interior, [1.0]))[:, None]
        elems = np.array([[i, i + 1] for i in range(n)])
        boundary = np.zeros(n + 1, dtype=bool)
        boundary[[0, -1]] = True
        return SimplicialMesh(dim=1, vertices=verts, elements=elems,
                              boundary=boundary)
    n = int(rng.integers(2, 5)) if dim == 2 else int(rng.integers(2, 4))
    mesh = generate_uniform_mesh(dim, n)
    verts = np.array(mesh.vertices)
    jitter = rng.uniform(-0.12 / n, 0.12 / n, verts.shape)
    jitter[mesh.boundary] = 0.0
    verts += jitter
    return SimplicialMesh(dim=dim, vertices=verts, elements=mesh.elements,
                          boundary=mesh.boundary)


class TestMeshIO:
    def test_roundtrip_uniform(self, tmp_path):
        mesh = generate_uniform_mesh(1, 4)
        path = tmp_path / "m.msh"
        write_mesh(mesh, path)
        back = read_mesh(path)
        assert np.array_equal(back.vertices, mesh.vertices)
        assert np.array_equal(back.elements, mesh.elements)
        assert np.array_equal(back.boundary, mesh.boundary)

    def test_roundtrip_randomized(self, tmp_path):
        rng = np.random.default_rng(2024)
        path = tmp_path / "m.msh"
        for i in range(100):
            mesh = random_mesh(rng, i)
            validate_mesh(mesh)
            write_mesh(mesh, path)
            back = read_mesh(path)
            assert back.dim == mesh.dim
            assert np.array_equal(back.vertices, mesh.vertices), f"mesh {i}"
            assert np.array_equal(back.elements, mesh.elements)
            assert np.array_equal(back.boundary, mesh.boundary)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.msh"
        path.write_text("")
        with pytest.raises(MeshFormatError, match="missing header"):
            read_mesh(path)

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "bad.msh"
        path.write_text("meshthing v1 dim=1 nv=2 ne=1\n0 1\n1 1\n0 1\n")
        with pytest.raises(MeshFormatError, match="header"):
            read_mesh(path)

    def test_index_out_of_range(self, tmp_path):
        path = tmp_path / "oob.msh"
        path.write_text(
            "meshcond v1 dim=1 nv=2 ne=1\n0 1\n1 1\n0 2\n"
        )
        with pytest.raises(MeshFormatError, match="out of range") as err:
            read_mesh(path)
        assert err.value.line == 4

    def test_non_finite_coordinate(self, tmp_path):
        path = tmp_path / "nan.msh"
        path.write_text("meshcond v1 dim=1 nv=2 ne=1\nnan 1\n1 1\n0 1\n")
        with pytest.raises(MeshFormatError, match="non-finite"):
            read_mesh(path)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "short.msh"
        path.write_text("meshcond v1 dim=1 nv=3 ne=2\n0 1\n")
        with pytest.raises(MeshFormatError):
            read_mesh(path)
