from __future__ import annotations

import numpy as np
import pytest
import scipy.linalg

from thermocontact.mesh import (
    MeshError,
    build_dof_maps,
    build_unit_square_mesh,
    estimate_scalar_trace_norm,
    estimate_trace_norm,
    load_mesh,
    triangle_geometry,
)

import oracles

SQUARE_FILE = """\
# smallest admissible square
nodes 4 triangles 2 edges 4
0 0
1 0
1 1
0 1
0 1 2
0 2 3
0 1 C   # bottom
1 2 N
2 3 N
3 0 D   # left
"""


def write(tmp_path, text):
    p = tmp_path / "mesh.txt"
    p.write_text(text)
    return str(p)


class TestLoadMesh:
    def test_smallest_square(self, tmp_path):
        mesh = load_mesh(write(tmp_path, SQUARE_FILE))
        assert mesh.triangles.shape == (2, 3)
        assert list(mesh.edge_tags).count("D") == 1
        assert list(mesh.edge_tags).count("C") == 1
        assert list(mesh.edge_tags).count("N") == 2

    def test_all_neumann_rejected(self, tmp_path):
        text = SQUARE_FILE.replace("3 0 D", "3 0 N").replace("0 1 C", "0 1 N")
        with pytest.raises(MeshError, match="empty Dirichlet part"):
            load_mesh(write(tmp_path, text))

    def test_node_index_out_of_range(self, tmp_path):
        text = SQUARE_FILE.replace("3 0 D", "3 9 D")
        with pytest.raises(MeshError, match="edge 3"):
            load_mesh(write(tmp_path, text))

    def test_bad_tag(self, tmp_path):
        text = SQUARE_FILE.replace("3 0 D", "3 0 Q")
        with pytest.raises(MeshError, match="bad tag"):
            load_mesh(write(tmp_path, text))

    def test_clockwise_triangle_rejected(self, tmp_path):
        text = SQUARE_FILE.replace("0 1 2\n", "0 2 1\n", 1)
        with pytest.raises(MeshError, match="orientation"):
            load_mesh(write(tmp_path, text))

    def test_untagged_boundary_edge_rejected(self, tmp_path):
        text = SQUARE_FILE.replace("nodes 4 triangles 2 edges 4", "nodes 4 triangles 2 edges 3")
        text = text.replace("3 0 D   # left\n", "")
        with pytest.raises(MeshError, match="no tag"):
            load_mesh(write(tmp_path, text))

    def test_truncated_file(self, tmp_path):
        text = "nodes 4 triangles 2 edges 4\n0 0\n1 0\n"
        with pytest.raises(MeshError, match="end of file"):
            load_mesh(write(tmp_path, text))


class TestBuildUnitSquare:
    def test_counts_n1(self):
        mesh = build_unit_square_mesh(1)
        assert mesh.triangles.shape[0] == 2
        assert mesh.n_nodes == 4

    def test_counts_n2(self):
        mesh = build_unit_square_mesh(2)
        assert mesh.triangles.shape[0] == 8
        assert mesh.n_nodes == 9

    def test_all_dirichlet(self):
        tags = {s: "D" for s in ("left", "right", "bottom", "top")}
        mesh = build_unit_square_mesh(4, tags)
        assert mesh.triangles.shape[0] == 32
        dofs = build_dof_maps(mesh)
        assert dofs.contact_nodes.size == 0

    def test_n_zero_rejected(self):
        with pytest.raises(MeshError):
            build_unit_square_mesh(0)

    @pytest.mark.parametrize("n", [1, 3, 5])
    def test_area_and_perimeter(self, n):
        mesh = build_unit_square_mesh(n)
        areas, _ = triangle_geometry(mesh)
        assert abs(areas.sum() - 1.0) <= 1e-12
        assert abs(mesh.edge_lengths().sum() - 4.0) <= 1e-12

    def test_normals_unit_and_outward(self):
        mesh = build_unit_square_mesh(3)
        for e, (i, j) in enumerate(mesh.boundary_edges):
            nu = mesh.edge_normals[e]
            assert abs(np.linalg.norm(nu) - 1.0) <= 1e-12
            tri = mesh.triangles[mesh.edge_owner[e]]
            centroid = mesh.nodes[tri].mean(axis=0)
            mid = 0.5 * (mesh.nodes[i] + mesh.nodes[j])
            assert np.dot(nu, centroid - mid) < 0


class TestDofMaps:
    def test_n1_left_dirichlet(self):
        mesh = build_unit_square_mesh(1)
        dofs = build_dof_maps(mesh)
        assert dofs.dirichlet_nodes.size == 2
        assert dofs.n_free_scalar == 2
        assert dofs.n_free_vector == 4

    def test_all_dirichlet_center_free(self):
        tags = {s: "D" for s in ("left", "right", "bottom", "top")}
        mesh = build_unit_square_mesh(2, tags)
        dofs = build_dof_maps(mesh)
        assert dofs.n_free_scalar == 1
        assert np.allclose(mesh.nodes[dofs.scalar_free_nodes[0]], [0.5, 0.5])

    def test_no_contact_edges(self):
        tags = {"left": "D", "right": "N", "bottom": "N", "top": "N"}
        dofs = build_dof_maps(build_unit_square_mesh(2, tags))
        assert dofs.contact_nodes.size == 0

    def test_corner_shared_with_dirichlet_is_constrained(self):
        # bottom-left corner lies on both the left (D) and bottom (C) sides
        mesh = build_unit_square_mesh(2)
        dofs = build_dof_maps(mesh)
        corner = 0
        assert corner in dofs.dirichlet_nodes
        assert corner in dofs.contact_nodes
        assert dofs.node_to_free[corner] == -1

    def test_contact_frames_orthonormal(self):
        mesh = build_unit_square_mesh(3)
        dofs = build_dof_maps(mesh)
        for nu, tau in zip(dofs.contact_normal, dofs.contact_tangent):
            assert abs(np.linalg.norm(nu) - 1.0) <= 1e-12
            assert abs(np.linalg.norm(tau) - 1.0) <= 1e-12
            assert abs(nu @ tau) <= 1e-12

    def test_vector_dofs_interleaved(self):
        mesh = build_unit_square_mesh(2)
        dofs = build_dof_maps(mesh)
        vd = dofs.vector_free_dofs()
        assert np.array_equal(vd[0::2], 2 * dofs.scalar_free_nodes)
        assert np.array_equal(vd[1::2], 2 * dofs.scalar_free_nodes + 1)

    def test_deterministic(self):
        a = build_dof_maps(build_unit_square_mesh(3))
        b = build_dof_maps(build_unit_square_mesh(3))
        assert np.array_equal(a.scalar_free_nodes, b.scalar_free_nodes)
        assert np.array_equal(a.contact_nodes, b.contact_nodes)
        assert np.array_equal(a.contact_normal, b.contact_normal)


class TestTraceNorm:
    def test_requires_contact_part(self):
        tags = {"left": "D", "right": "N", "bottom": "N", "top": "N"}
        mesh = build_unit_square_mesh(2, tags)
        with pytest.raises(MeshError):
            estimate_trace_norm(mesh, build_dof_maps(mesh))

    @pytest.mark.parametrize("n", [2, 4])
    def test_matches_dense_eigensolver(self, n):
        mesh = build_unit_square_mesh(n)
        dofs = build_dof_maps(mesh)
        value = estimate_trace_norm(mesh, dofs)

        free = dofs.vector_free_dofs()
        bmat = oracles.restrict(oracles.dense_tangential_contact_mass(mesh), free)
        kmat = oracles.restrict(oracles.dense_componentwise_vector_stiffness(mesh), free)
        lam = scipy.linalg.eigh(bmat, kmat, eigvals_only=True)[-1]
        assert value == pytest.approx(np.sqrt(lam), rel=1e-6)

    def test_refinement_monotone_bounded(self):
        vals = []
        for n in (4, 8, 16):
            mesh = build_unit_square_mesh(n)
            vals.append(estimate_trace_norm(mesh, build_dof_maps(mesh)))
        assert vals[0] <= vals[1] + 1e-12
        assert vals[1] <= vals[2] + 1e-12
        assert vals[2] < 5.0

    @pytest.mark.parametrize("parts", [("N", "C"), ("C",), ("N",)])
    def test_scalar_trace_matches_dense(self, parts):
        mesh = build_unit_square_mesh(3)
        dofs = build_dof_maps(mesh)
        value = estimate_scalar_trace_norm(mesh, dofs, parts=parts)

        f = dofs.scalar_free_nodes
        bmat = oracles.restrict(oracles.dense_boundary_mass(mesh, parts), f)
        kmat = oracles.restrict(oracles.dense_scalar_stiffness(mesh), f)
        lam = scipy.linalg.eigh(bmat, kmat, eigvals_only=True)[-1]
        assert value == pytest.approx(np.sqrt(max(lam, 0.0)), rel=1e-6)

    def test_scalar_trace_empty_parts(self):
        mesh = build_unit_square_mesh(2)
        dofs = build_dof_maps(mesh)
        tags = {"left": "D", "right": "D", "bottom": "D", "top": "D"}
        mesh2 = build_unit_square_mesh(2, tags)
        assert estimate_scalar_trace_norm(mesh2, build_dof_maps(mesh2)) == 0.0
        assert estimate_scalar_trace_norm(mesh, dofs) > 0.0
