"""
Tests Unitaires pour les domaines discrets
Construction, partition du bord, revêtement et format texte des maillages
"""

import pytest
import numpy as np

import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from core.domain import (
    BoundaryLabel, DomainMode, RegionTag, ThicknessProfile, attach_coating, build_interval_domain,
    build_planar_domain, build_radial_domain, gamma_coordinates, integrate_boundary, sphere_area,
)
from core.errors import InvalidMesh, InvalidParameter, MeshFoldover
from core.mesh_io import read_mesh, write_mesh
from core.meshes import annulus_mesh, disk_mesh, unit_square_mesh


class TestIntervalDomain:
    """Tests pour build_interval_domain."""

    def test_right_gamma(self):
        """(4, RIGHT): 5 nœuds, Γ_D = {0}, γ = {1}."""
        domain = build_interval_domain(4, "right")
        assert domain.n_nodes == 5
        assert domain.mode == DomainMode.INTERVAL
        dirichlet = domain.face_nodes[domain.partition.dirichlet_faces, 0]
        robin = domain.face_nodes[domain.partition.robin_faces, 0]
        assert domain.nodes[dirichlet, 0].tolist() == [0.0]
        assert domain.nodes[robin, 0].tolist() == [1.0]
        assert domain.boundary_measure(BoundaryLabel.ROBIN) == 1.0

    def test_pure_dirichlet(self):
        domain = build_interval_domain(4, "none")
        assert domain.partition.robin_faces.size == 0
        assert domain.partition.dirichlet_faces.size == 2
        assert domain.free_nodes.tolist() == [1, 2, 3]

    def test_too_few_cells(self):
        with pytest.raises(InvalidMesh):
            build_interval_domain(1, "right")

    def test_volumes_sum_to_length(self):
        domain = build_interval_domain(10)
        assert domain.element_volumes.sum() == pytest.approx(1.0, abs=1e-14)
        assert np.all(domain.quad_weights > 0)

    def test_arrays_are_read_only(self):
        domain = build_interval_domain(4)
        with pytest.raises(ValueError):
            domain.nodes[0, 0] = 3.0


class TestRadialDomain:
    """Tests pour la réduction radiale."""

    def test_annulus_weight_two_dimensions(self):
        domain = build_radial_domain(64, 0.5, 1.0, 2)
        assert integrate_boundary(domain, BoundaryLabel.ROBIN, 1.0) == pytest.approx(2 * np.pi, rel=1e-12)
        assert integrate_boundary(domain, BoundaryLabel.DIRICHLET, 1.0) == pytest.approx(np.pi, rel=1e-12)
        # aire de la couronne π(1 - 1/4)
        assert domain.element_volumes.sum() == pytest.approx(0.75 * np.pi, rel=1e-12)

    def test_annulus_weight_three_dimensions(self):
        domain = build_radial_domain(64, 0.5, 1.0, 3)
        assert np.all(domain.radial_weight > 0)
        assert domain.boundary_measure(BoundaryLabel.ROBIN) == pytest.approx(sphere_area(3), rel=1e-12)
        volume = 4.0 / 3.0 * np.pi * (1.0 - 0.125)
        assert domain.element_volumes.sum() == pytest.approx(volume, rel=1e-10)

    def test_ball_leaves_center_unlabeled(self):
        domain = build_radial_domain(16, 0.0, 1.0, 2, inner_label=None)
        assert domain.n_faces == 1
        assert domain.partition.dirichlet_faces.size == 0

    def test_inverted_radii(self):
        with pytest.raises(InvalidMesh):
            build_radial_domain(64, 1.0, 0.5, 2)


class TestPlanarDomain:
    """Tests pour les maillages triangulés."""

    def test_unit_square_bottom_gamma(self):
        domain = unit_square_mesh(4, gamma_sides=("bottom",))
        assert integrate_boundary(domain, BoundaryLabel.ROBIN, 1.0) == pytest.approx(1.0, abs=1e-14)
        total = domain.boundary_measure()
        parts = domain.boundary_measure(BoundaryLabel.DIRICHLET) + domain.boundary_measure(BoundaryLabel.ROBIN)
        assert parts == total
        assert total == pytest.approx(4.0, abs=1e-14)

    def test_outward_normals(self):
        domain = unit_square_mesh(3, gamma_sides=("bottom",))
        normals = domain.face_normals[domain.partition.robin_faces]
        np.testing.assert_allclose(normals, np.tile([0.0, -1.0], (3, 1)), atol=1e-14)

    def test_interface_nodes_are_corners(self):
        domain = unit_square_mesh(4, gamma_sides=("bottom",))
        corners = domain.nodes[domain.partition.interface_nodes]
        assert sorted(map(tuple, corners.tolist())) == [(0.0, 0.0), (1.0, 0.0)]

    def test_unlabeled_edge_rejected(self):
        vertices = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        triangles = np.array([[0, 1, 2]])
        with pytest.raises(InvalidMesh):
            build_planar_domain(vertices, triangles, [(0, 1, "dirichlet"), (1, 2, "robin")])

    def test_disk_with_whole_gamma(self):
        domain = disk_mesh(3)
        assert domain.partition.dirichlet_faces.size == 0
        assert domain.boundary_measure(BoundaryLabel.ROBIN) == pytest.approx(2 * np.pi, rel=1e-2)

    def test_refinement_consistency(self):
        coarse = unit_square_mesh(2, gamma_sides=("top", "left"))
        fine = unit_square_mesh(8, gamma_sides=("top", "left"))
        assert integrate_boundary(coarse, "robin", 2.5) == pytest.approx(integrate_boundary(fine, "robin", 2.5))

    def test_gamma_coordinates(self):
        domain = unit_square_mesh(4, gamma_sides=("top",))
        s = np.sort(gamma_coordinates(domain))
        np.testing.assert_allclose(s, (np.arange(4) + 0.5) / 4, atol=1e-14)


class TestCoating:
    """Tests pour attach_coating."""

    def test_interval_coating(self):
        base = build_interval_domain(10)
        coated = attach_coating(base, ThicknessProfile.constant(base, 1.0), 0.1, 4)
        extended = coated.extended
        assert extended.nodes[:, 0].max() == pytest.approx(1.1, abs=1e-14)
        assert coated.layer_elements.size == 4
        assert coated.coating_volume == pytest.approx(0.1, abs=1e-14)
        assert extended.partition.robin_faces.size == 0
        assert extended.partition.outer_faces.size == 1
        assert np.all(extended.region_tags[coated.layer_elements] == int(RegionTag.COATING))

    def test_radial_coating_thickness(self):
        base = build_radial_domain(32, 0.5, 1.0, 2)
        coated = attach_coating(base, ThicknessProfile.constant(base, 2.0), 0.05, 4)
        assert coated.extended.nodes[:, 0].max() == pytest.approx(1.1, abs=1e-14)

    def test_planar_coating_volume(self):
        base = unit_square_mesh(4, gamma_sides=("top",))
        coated = attach_coating(base, ThicknessProfile.constant(base, 1.0), 0.02, 2)
        assert coated.coating_volume == pytest.approx(0.02, rel=1e-12)
        assert coated.extended.nodes[:, 1].max() == pytest.approx(1.02, abs=1e-14)

    def test_disk_coating_volume_first_order(self):
        base = disk_mesh(3)
        epsilon = 0.01
        coated = attach_coating(base, ThicknessProfile.constant(base, 1.0), epsilon, 2)
        perimeter = base.boundary_measure(BoundaryLabel.ROBIN)
        assert coated.coating_volume == pytest.approx(epsilon * perimeter, rel=5 * epsilon)

    def test_zero_epsilon(self):
        base = build_interval_domain(10)
        with pytest.raises(InvalidParameter):
            attach_coating(base, ThicknessProfile.constant(base, 1.0), 0.0)

    def test_empty_gamma(self):
        base = build_interval_domain(10, "none")
        with pytest.raises(InvalidParameter):
            attach_coating(base, ThicknessProfile(np.ones(1)), 0.1)

    def test_radial_coating_through_center(self):
        base = build_radial_domain(16, 0.1, 1.0, 2, inner_label="robin", outer_label="dirichlet")
        with pytest.raises(MeshFoldover):
            attach_coating(base, ThicknessProfile.constant(base, 1.0), 0.5)

    def test_nonpositive_rho(self):
        with pytest.raises(InvalidParameter):
            ThicknessProfile(np.array([1.0, 0.0]))


class TestMeshFile:
    """Tests pour le format texte."""

    def test_round_trip_planar(self, tmp_path):
        domain = annulus_mesh(12, 3, 0.5, 1.0)
        path = write_mesh(domain, tmp_path / "annulus.mesh")
        again = read_mesh(path)
        assert np.array_equal(again.nodes, domain.nodes)
        assert np.array_equal(again.face_labels, domain.face_labels)
        assert again.same_as(domain)

    def test_round_trip_coated(self, tmp_path):
        base = build_interval_domain(8)
        coated = attach_coating(base, ThicknessProfile.constant(base, 1.0), 0.1, 2)
        again = read_mesh(write_mesh(coated.extended, tmp_path / "coated.mesh"))
        assert again.same_as(coated.extended)
        assert np.array_equal(again.region_tags, coated.extended.region_tags)

    def test_malformed_file_reports_line(self, tmp_path):
        path = tmp_path / "broken.mesh"
        path.write_text("mesh interval 1\nnodes 2\n0.0\n1.0\nelement 1\n0 1\n", encoding='utf-8')
        with pytest.raises(InvalidMesh, match=":5:"):
            read_mesh(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InvalidMesh):
            read_mesh(tmp_path / "nope.mesh")
