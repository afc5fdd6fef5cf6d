import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from restenosim.mesh import (Mesh, MeshError, element_geometry, evaluate_at, load_mesh,
                             locate_points, quadrature, save_mesh, shape_eval,
                             structured_rectangle)

UNIT_SQUARE = """\
mode plane
nodes 4
0 0
1 0
1 1
0 1
elements 1
quad 0 1 2 3
boundary 4
0 0 bottom
0 1 right
0 2 top
0 3 left
"""


def write(tmp_path, text, name="m.txt"):
    p = tmp_path / name
    p.write_text(text)
    return p


def distorted_quad():
    return Mesh(np.array([[0.0, 0.0], [2.0, 0.3], [1.7, 1.9], [-0.2, 1.2]]),
                np.array([[0, 1, 2, 3]]), np.zeros((0, 2)), (), "plane")


def test_unit_square_file(tmp_path):
    m = load_mesh(write(tmp_path, UNIT_SQUARE))
    assert m.n_elements == 1 and m.n_nodes == 4
    # bi-unit reference square -> unit square: detJ = 1/4
    np.testing.assert_allclose(element_geometry(m).detJ, 0.25, rtol=0, atol=1e-15)
    assert m.tags == ["bottom", "left", "right", "top"]


def test_node_index_out_of_bounds(tmp_path):
    bad = UNIT_SQUARE.replace("quad 0 1 2 3", "quad 0 1 2 99")
    with pytest.raises(MeshError, match="out of bounds"):
        load_mesh(write(tmp_path, bad))


def test_parse_error_reports_line(tmp_path):
    bad = UNIT_SQUARE.replace("1 1\n", "1 x\n", 1)
    with pytest.raises(MeshError, match=r"m\.txt:5"):
        load_mesh(write(tmp_path, bad))
    bad = UNIT_SQUARE.replace("quad 0 1 2 3", "quad 0 1 2")
    with pytest.raises(MeshError, match=r"m\.txt:8"):
        load_mesh(write(tmp_path, bad))


def test_inverted_element_reported(tmp_path):
    bad = UNIT_SQUARE.replace("quad 0 1 2 3", "quad 0 3 2 1")
    with pytest.raises(MeshError, match="element 0"):
        load_mesh(write(tmp_path, bad))


def test_mixed_element_types_rejected(tmp_path):
    text = "mode plane\nnodes 4\n0 0\n1 0\n1 1\n0 1\nelements 2\ntri 0 1 2\nquad 0 1 2 3\n"
    with pytest.raises(MeshError, match="mixed"):
        load_mesh(write(tmp_path, text))


def test_negative_radius_rejected():
    with pytest.raises(MeshError, match="negative radial"):
        Mesh(np.array([[-1.0, 0], [1, 0], [1, 1]]), np.array([[0, 1, 2]]),
             np.zeros((0, 2)), (), "axisym")


def test_save_load_round_trip(tmp_path):
    m = structured_rectangle(6, 0.8, 6, 2, "axisym", inner_radius=1.5, etype="tri")
    save_mesh(m, tmp_path / "rt.txt")
    m2 = load_mesh(tmp_path / "rt.txt")
    np.testing.assert_array_equal(m2.node_coords, m.node_coords)
    np.testing.assert_array_equal(m2.elements, m.elements)
    assert m2.boundary_tags == m.boundary_tags and m2.mode == m.mode


def test_quadrature_weights():
    assert quadrature("quad").weights.sum() == pytest.approx(4.0)
    assert quadrature("tri").weights.sum() == pytest.approx(0.5)
    assert quadrature("tri", 1).weights.sum() == pytest.approx(0.5)
    with pytest.raises(MeshError):
        quadrature("tri", 7)


def test_quad_center():
    m = structured_rectangle(1, 1, 1, 1, "plane")
    se = shape_eval(m, 0, (0.0, 0.0))
    np.testing.assert_allclose(se.N, 0.25)


def test_linear_completeness():
    m = structured_rectangle(1, 1, 1, 1, "plane")
    f = m.node_coords[:, 0]
    for qp in [(-0.3, 0.8), (0.5, -0.5), (0.9, 0.9)]:
        se = shape_eval(m, 0, qp)
        x = se.N @ m.node_coords[m.elements[0]]
        assert se.N @ f[m.elements[0]] == pytest.approx(x[0], abs=1e-14)


def test_distorted_quad_gradient_rows_sum_to_zero():
    m = distorted_quad()
    for qp in quadrature("quad").points:
        se = shape_eval(m, 0, qp)
        assert abs(se.N.sum() - 1) < 1e-12
        assert np.abs(se.dN_dx.sum(axis=0)).max() < 1e-12


def test_current_configuration_evaluation():
    m = structured_rectangle(1, 1, 1, 1, "plane")
    stretched = m.node_coords * np.array([2.0, 1.0])
    se = shape_eval(m, 0, (0, 0), weight=4.0, current_coords=stretched)
    assert se.detJ_times_w == pytest.approx(2.0)
    np.testing.assert_allclose(se.dN_dx.T @ stretched[m.elements[0]], np.eye(2), atol=1e-14)


def test_singular_jacobian_in_current_configuration():
    m = structured_rectangle(1, 1, 1, 1, "plane")
    flat = m.node_coords.copy()
    flat[:, 1] = 0.0
    with pytest.raises(MeshError, match="element 0"):
        shape_eval(m, 0, (0, 0), current_coords=flat)


def test_strip_counts():
    m = structured_rectangle(6, 0.8, 10, 4, "plane")
    assert (m.n_elements, m.n_nodes) == (40, 55)


def test_single_element_tags():
    m = structured_rectangle(1, 1, 1, 1, "plane")
    assert m.tags == ["inner", "left", "outer", "right"]
    assert len(m.boundary_tags) == 4


def test_axisymmetric_radii():
    m = structured_rectangle(6, 0.8, 60, 8, "axisym", inner_radius=1.5)
    assert m.node_coords[:, 0].min() >= 1.5
    assert m.node_coords[:, 0].max() == pytest.approx(2.3)
    np.testing.assert_allclose(np.sort(m.node_coords[m.tagged_nodes("inner"), 0]), 1.5)


def test_node_positions():
    m = structured_rectangle(2, 1, 2, 1, "plane")
    np.testing.assert_allclose(np.unique(m.node_coords[:, 0]), [0.0, 1.0, 2.0])


@pytest.mark.parametrize("etype", ["quad", "tri"])
def test_total_measure(etype):
    plane = structured_rectangle(6, 0.8, 12, 3, "plane", etype=etype)
    assert element_geometry(plane).dV.sum() == pytest.approx(4.8, rel=1e-10)
    ax = structured_rectangle(6, 0.8, 12, 3, "axisym", inner_radius=1.5, etype=etype)
    exact = np.pi * (2.3 ** 2 - 1.5 ** 2) * 6
    assert element_geometry(ax).dV.sum() == pytest.approx(exact, rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-2, 2), b=st.floats(-2, 2), c=st.floats(-2, 2),
       etype=st.sampled_from(["quad", "tri"]), jitter=st.integers(0, 10_000))
def test_patch_completeness(a, b, c, etype, jitter):
    rng = np.random.default_rng(jitter)
    m = structured_rectangle(3, 2, 3, 2, "plane", etype=etype)
    x = m.node_coords.copy()
    interior = (x[:, 0] > 0) & (x[:, 0] < 3) & (x[:, 1] > 0) & (x[:, 1] < 2)
    x[interior] += rng.uniform(-0.2, 0.2, (interior.sum(), 2))
    m = Mesh(x, m.elements, m.boundary_edges, m.boundary_tags, "plane")
    f = a + b * x[:, 0] + c * x[:, 1]
    geo = element_geometry(m)
    np.testing.assert_allclose(geo.interpolate(m, f),
                               a + b * geo.xq[..., 0] + c * geo.xq[..., 1], atol=1e-12)
    grad = geo.gradient(m, f)
    np.testing.assert_allclose(grad[..., 0], b, atol=1e-12)
    np.testing.assert_allclose(grad[..., 1], c, atol=1e-12)
    np.testing.assert_allclose(geo.dN_dx.sum(axis=2), 0.0, atol=1e-12)


def test_locate_and_evaluate():
    m = structured_rectangle(6, 0.8, 12, 4, "axisym", inner_radius=1.5, etype="tri")
    pts = np.array([[1.5, 3.0], [1.73, 2.21], [2.3, 6.0], [5.0, 5.0]])
    e, loc = locate_points(m, pts)
    assert e[-1] == -1 and (e[:-1] >= 0).all()
    vals = evaluate_at(m, 2.0 * m.node_coords[:, 0] - m.node_coords[:, 1], e, loc)
    np.testing.assert_allclose(vals[:-1], 2 * pts[:-1, 0] - pts[:-1, 1], atol=1e-12)
    assert np.isnan(vals[-1])
