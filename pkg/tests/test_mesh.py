import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phasesplit.mesh import PeriodicMesh, build_mesh, prolongate, shape_eval


@pytest.mark.parametrize("d,N,count", [(3, 17, 16**3), (2, 3, 4), (3, 33, 32**3)])
def test_counts(d, N, count):
    m = build_mesh(d, N)
    assert m.n_elements == count
    assert m.n_nodes == count


def test_connectivity_references_canonical_nodes():
    m = build_mesh(3, 5)
    assert m.conn.shape == (m.n_elements, 8)
    assert m.conn.min() >= 0 and m.conn.max() < m.n_nodes
    # each element has 8 distinct corners
    assert all(len(set(row)) == 8 for row in m.conn)
    # every node is a corner of exactly 2^d elements
    assert np.all(np.bincount(m.conn.ravel()) == 8)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        build_mesh(1, 5)
    with pytest.raises(ValueError):
        build_mesh(2, 2)


def test_mesh_is_immutable():
    m = build_mesh(2, 5)
    with pytest.raises(ValueError):
        m.conn[0, 0] = 1
    with pytest.raises(AttributeError):
        m.N = 9


@pytest.mark.parametrize("d", [2, 3])
def test_shape_functions_lagrange_property(d):
    corners = list(itertools.product([0.0, 1.0], repeat=d))
    for c in corners:
        vals, _ = shape_eval(np.array(c))
        assert np.isclose(vals.sum(), 1.0)
        assert np.count_nonzero(np.isclose(vals, 1.0)) == 1
        assert np.allclose(np.sort(vals)[:-1], 0.0)
    vals, _ = shape_eval(np.zeros(d))
    assert vals[0] == 1.0


@pytest.mark.parametrize("d", [2, 3])
def test_shape_functions_center(d):
    vals, _ = shape_eval(np.full(d, 0.5))
    assert np.allclose(vals, 2.0**-d)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=3, max_size=3))
def test_partition_of_unity(xi):
    vals, grads = shape_eval(np.array(xi))
    assert np.isclose(vals.sum(), 1.0)
    assert np.allclose(grads.sum(axis=0), 0.0, atol=1e-14)


def test_shape_gradient_matches_finite_difference(rng):
    xi = rng.uniform(0.1, 0.9, 3)
    _, grads = shape_eval(xi)
    step = 1e-6
    for k in range(3):
        e = np.zeros(3)
        e[k] = step
        fd = (shape_eval(xi + e)[0] - shape_eval(xi - e)[0]) / (2 * step)
        assert np.allclose(grads[:, k], fd, atol=1e-8)


@pytest.mark.parametrize("d,N", [(2, 3), (2, 9), (3, 5)])
def test_simpson_weights(d, N):
    m = build_mesh(d, N)
    assert np.isclose(m.qp_weights.sum(), m.h**d, rtol=1e-14)
    assert abs(m.integrate(np.ones((m.n_elements, m.n_qp))) - 1.0) < 1e-13


@settings(max_examples=40, deadline=None)
@given(st.tuples(*[st.integers(0, 3)] * 3))
def test_simpson_exact_for_cubic_monomials(powers):
    m = build_mesh(3, 4)
    x = m.qp_coords()
    f = np.prod([x[..., k] ** powers[k] for k in range(3)], axis=0)
    exact = np.prod([1.0 / (p + 1) for p in powers])
    assert np.isclose(m.integrate(f), exact, rtol=1e-12)


def test_periodic_identification():
    m = build_mesh(2, 7)
    v = np.random.default_rng(0).normal(size=m.n_nodes)
    full = m.full_grid(v)
    assert full.shape == (7, 7)
    assert np.array_equal(full[-1, :], full[0, :])
    assert np.array_equal(full[:, -1], full[:, 0])


def test_interpolation_of_linear_function_inside_elements():
    # a field linear in x0 (not periodic) is reproduced away from the wrap element
    m = build_mesh(2, 9)
    v = m.node_coords()[:, 0]
    vq = m.at_qp(v)
    xq = m.qp_coords()[..., 0]
    inner = m.node_coords()[:, 0] < 1 - m.h - 1e-12
    assert np.allclose(vq[inner], xq[inner])
    gq = m.grad_at_qp(v)
    assert np.allclose(gq[inner][..., 0], 1.0)
    assert np.allclose(gq[inner][..., 1], 0.0)


def test_integrate_against_shapes_sums_to_integral(rng):
    m = build_mesh(3, 5)
    f = rng.normal(size=(m.n_elements, m.n_qp))
    assert np.isclose(m.integrate_against_shapes(f).sum(), m.integrate(f))


def test_prolongate_constant():
    c, f = build_mesh(3, 17), build_mesh(3, 33)
    out = prolongate(np.full(c.n_nodes, 0.3), c, f)
    assert out.shape == (f.n_nodes,)
    assert np.allclose(out, 0.3)


def test_prolongate_hat_midpoints():
    c, f = build_mesh(2, 5), build_mesh(2, 9)
    v = np.zeros(c.shape)
    v[1, 2] = 1.0
    out = prolongate(v.ravel(), c, f).reshape(f.shape)
    assert out[2, 4] == 1.0
    assert out[3, 4] == 0.5 and out[1, 4] == 0.5
    assert out[2, 5] == 0.5 and out[2, 3] == 0.5
    assert out[3, 5] == 0.25


def test_prolongate_sawtooth_shared_nodes():
    c, f = build_mesh(2, 3), build_mesh(2, 5)
    vc = c.sample(lambda x: x[:, 0])
    vf = prolongate(vc, c, f).reshape(f.shape)
    assert np.array_equal(vf[::2, ::2].ravel(), vc)
    # the midpoint of the wrap element averages x = 1/2 and the periodic image 0
    assert vf[3, 0] == 0.25


def test_prolongate_matches_interpolant(rng):
    c, f = build_mesh(3, 5), build_mesh(3, 9)
    v = rng.normal(size=c.n_nodes)
    vf = prolongate(v, c, f)
    # fine nodes coincide with coarse quadrature points (Simpson points are at 0, 1/2, 1)
    vq = c.at_qp(v)
    fine = vf.reshape(f.shape)
    for e, idx in enumerate(np.array(np.unravel_index(np.arange(c.n_elements), c.shape)).T):
        for q, xi in enumerate(c.qp_ref):
            node = tuple(((2 * idx + (2 * xi).astype(int)) % f.n).tolist())
            assert np.isclose(fine[node], vq[e, q])


def test_prolongate_rejects_incompatible():
    with pytest.raises(ValueError):
        prolongate(np.zeros(16), build_mesh(2, 5), build_mesh(2, 8))
    with pytest.raises(ValueError):
        prolongate(np.zeros(16), build_mesh(2, 5), build_mesh(3, 9))


def test_mesh_class_direct():
    m = PeriodicMesh(2, 5)
    assert m.shape == (4, 4) and m.h == 0.25 and m.n_qp == 9
