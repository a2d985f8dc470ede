import numpy as np
import pytest

from ibfsi.errors import SceneSpecError
from ibfsi.fesolid import write_fe_mesh, read_fe_mesh
from ibfsi.fiber import read_fiber_mesh, write_fiber_mesh
from ibfsi.geometry import (
    BERDAJS_ANGLES,
    ChannelValveSpec,
    LeafletSpec,
    RootSpec,
    TubeSpec,
    _root_lumen_radius,
    make_channel_leaflet_2d,
    make_leaflet_membranes,
    make_root,
    make_tube,
)


def test_annulus_node_count_and_jacobians():
    spec = TubeSpec(inner_radius=1.0, thickness=0.2, n_radial=4, n_theta=32)
    mesh = make_tube(spec)
    assert mesh.n_nodes == (4 + 1) * 32 == 160
    assert np.all(mesh.reference_jacobians() > 0)


def test_tube_3d_jacobians_and_tags():
    spec = TubeSpec(
        inner_radius=0.8, thickness=0.2, n_radial=2, n_theta=12, dim=3,
        length=3.0, n_axial=4, center=(0.0, 0.0, 0.0),
    )
    mesh = make_tube(spec)
    assert np.all(mesh.reference_jacobians() > 0)
    r_inner = np.linalg.norm(mesh.nodes[mesh.tags["inner"], :2], axis=1)
    assert np.allclose(r_inner, 0.8, atol=1e-12)
    r_outer = np.linalg.norm(mesh.nodes[mesh.tags["outer"], :2], axis=1)
    assert np.allclose(r_outer, 1.0, atol=1e-12)


def test_zero_thickness_rejected():
    with pytest.raises(SceneSpecError):
        make_tube(TubeSpec(inner_radius=1.0, thickness=0.0, n_radial=2, n_theta=8))


def test_symmetric_root_three_fold_symmetry():
    spec = RootSpec(n_theta=24, n_axial=8, n_radial=1)
    mesh = make_root(spec)
    assert np.all(mesh.reference_jacobians() > 0)
    # rotating by 120 degrees permutes the angular index by n_theta / 3
    nt = spec.n_theta
    shift = nt // 3
    c, s = np.cos(2 * np.pi / 3), np.sin(2 * np.pi / 3)
    R = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    rotated = mesh.nodes @ R.T
    n_ring_levels = mesh.n_nodes // nt
    perm = np.empty(mesh.n_nodes, dtype=int)
    for lev in range(n_ring_levels):
        base = lev * nt
        perm[base + np.arange(nt)] = base + (np.arange(nt) + shift) % nt
    assert np.max(np.abs(rotated - mesh.nodes[perm])) < 1e-10


def test_asymmetric_angles_sum_and_validation():
    assert sum(BERDAJS_ANGLES) == pytest.approx(360.0, abs=1e-9)
    spec = RootSpec(sinus_angles=BERDAJS_ANGLES, symmetric=False, n_theta=20)
    mesh = make_root(spec)
    assert np.all(mesh.reference_jacobians() > 0)
    with pytest.raises(SceneSpecError):
        RootSpec(sinus_angles=(120.0, 120.0, 130.0)).validate()


def test_root_belly_reaches_sinus_radius():
    spec = RootSpec(aortic_diameter=3.0, sinus_diameter=3.5)
    # evaluate the profile at the analytic peak: sector center, bulge center
    theta_mid = np.deg2rad(60.0)
    z_mid = spec.sinus_start + 0.5 * spec.sinus_height
    r = _root_lumen_radius(np.array([theta_mid]), np.array([z_mid]), spec)
    assert r[0] == pytest.approx(1.75, abs=1e-12)
    mesh = make_root(RootSpec(n_theta=36, n_axial=24))
    r_nodes = np.linalg.norm(mesh.nodes[mesh.tags["inner"], :2], axis=1)
    assert r_nodes.max() == pytest.approx(1.75, abs=0.01)


def test_leaflets_three_sectors_two_families():
    root = RootSpec()
    spec = LeafletSpec(root=root)
    meshes = make_leaflet_membranes(spec)
    assert len(meshes) == 6  # commissural + radial per sector
    commissural = meshes[0::2]
    radial = meshes[1::2]
    ratio = commissural[0].kstretch[0, 0] / radial[0].kstretch[0, 0]
    assert ratio == pytest.approx(10.0)
    # the two families are co-located surfaces
    for c, r in zip(commissural, radial):
        assert np.max(np.abs(np.swapaxes(c.x, 0, 1) - r.x)) == 0.0


def test_leaflet_attachment_on_luminal_surface():
    root = RootSpec()
    meshes = make_leaflet_membranes(LeafletSpec(root=root))
    for radial in meshes[1::2]:
        attach = radial.x[:, 0, :]  # w = 0 row
        zf = (attach[:, 2] - root.center[2]) / root.length
        r_surf = _root_lumen_radius(
            np.arctan2(attach[:, 1], attach[:, 0]), np.clip(zf, 0.0, 1.0), root
        )
        r_att = np.linalg.norm(attach[:, :2], axis=1)
        assert np.max(np.abs(r_att - r_surf)) < 1e-8


def test_channel_scene_construction_and_round_trip(tmp_path):
    spec = ChannelValveSpec()
    walls, leaflets, tethers = make_channel_leaflet_2d(spec)
    assert len(walls) == 2  # rigid seat rails, one per wall
    assert len(leaflets) == 2
    assert len(tethers) == 4
    for mesh, tet in zip(walls + leaflets, tethers):
        # anchored nodes coincide with their tether targets at t = 0
        iq, ir = tet.node_ids[:, 0], tet.node_ids[:, 1]
        assert np.max(np.abs(mesh.x[iq, ir, :] - tet.targets)) < 1e-10
    # every rail node is tethered (rigid mask)
    assert tethers[0].node_ids.shape[0] == walls[0].shape[1]
    # anchors sit the configured margin inside the walls
    assert leaflets[0].x[0, 0, 1] == spec.wall_margin
    assert leaflets[1].x[0, 0, 1] == spec.height - spec.wall_margin
    # scene round-trips through the mesh file format bitwise
    p1, p2 = tmp_path / "l.fib", tmp_path / "l2.fib"
    write_fiber_mesh(p1, leaflets[0])
    write_fiber_mesh(p2, read_fiber_mesh(p1))
    assert p1.read_bytes() == p2.read_bytes()


def test_leaflet_too_long_rejected():
    with pytest.raises(SceneSpecError):
        make_channel_leaflet_2d(ChannelValveSpec(leaflet_length=2.5, height=2.0))


def test_generated_meshes_write_and_reload(tmp_path):
    mesh = make_root(RootSpec(n_theta=12, n_axial=4))
    path = tmp_path / "root.femesh"
    write_fe_mesh(path, mesh)
    back = read_fe_mesh(path)
    assert np.array_equal(back.nodes, mesh.nodes)
    assert np.all(back.reference_jacobians() > 0)
