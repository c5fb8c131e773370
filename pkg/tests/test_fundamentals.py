import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hexpfinsler import diffkit as dk
from hexpfinsler import fundamentals as fu
from hexpfinsler.metrics import MetricFunction, hexp_apply, make_hvector, make_metric

from conftest import draw, well_conditioned, zoo

ZOO = zoo()


def test_euclidean_tensors():
    t = fu.base_tensors(ZOO["euclidean"], [0.0, 0.0], [0.0, 1.0])
    np.testing.assert_allclose(t.g, np.eye(2))
    np.testing.assert_allclose(t.l, [0.0, 1.0])
    np.testing.assert_allclose(t.h, [[1.0, 0.0], [0.0, 0.0]], atol=1e-15)
    np.testing.assert_allclose(t.C, 0.0, atol=1e-15)
    c = fu.spray_connections(ZOO["euclidean"], [0.3, 0.1], [0.6, 0.8])
    for arr in (c.G, c.N, c.F):
        np.testing.assert_allclose(arr, 0.0, atol=1e-15)


def test_randers_supporting_element():
    r = make_metric({"kind": "randers", "oneform": [0.3, 0.0], "field": "identity"})
    t = fu.base_tensors(r, [0.0, 0.0], [1.0, 0.0])
    assert t.L == pytest.approx(1.3)
    assert t.l[0] == pytest.approx(1.3)


def test_degenerate_metric_error():
    squashed = MetricFunction(kind="riemannian", n=2, fn=lambda x, y: dk.sqrt(y[0] * y[0] + 0.0 * y[1]))
    with pytest.raises(fu.DegenerateMetricError):
        fu.base_tensors(squashed, [0.0, 0.0], [1.0, 0.0])


@pytest.mark.parametrize("name", list(ZOO))
def test_structure_identities(name):
    m = ZOO[name]
    x, y = draw([m], 40, accept=well_conditioned(m))
    t = fu.base_tensors(m, x, y)
    c = fu.spray_connections(m, x, y, t)
    ev = lambda s, *a: np.einsum(s, *a)
    np.testing.assert_allclose(t.g, t.L[:, None, None] * t.Lij + ev("ni,nj->nij", t.l, t.l), atol=1e-12)
    np.testing.assert_allclose(t.h, t.L[:, None, None] * t.Lij, atol=1e-12)
    np.testing.assert_allclose(t.ginv @ t.g, np.broadcast_to(np.eye(2), t.g.shape), atol=1e-12)
    assert np.max(np.abs(ev("nijk,nk->nij", t.C, y))) < 1e-12 * max(1.0, np.max(np.abs(t.C)))
    assert np.max(np.abs(ev("nij,nj->ni", t.h, y))) < 1e-12 * max(1.0, np.max(np.abs(t.h)))
    np.testing.assert_allclose(ev("ni,ni->n", t.l, y), t.L, rtol=1e-13)
    # deflection identities
    np.testing.assert_allclose(ev("nijk,nj->nik", c.F, y), c.N, atol=1e-9)
    np.testing.assert_allclose(ev("nik,nk->ni", c.N, y), 2 * c.G, atol=1e-9)
    assert np.max(np.abs(fu.metricity_residual(t, c))) < 1e-8
    assert np.max(np.abs(fu.supporting_element_residual(t, c))) < 1e-9
    # cheap spray agrees with the full bundle
    np.testing.assert_allclose(fu.spray_coefficients(m, x, y), c.G, atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(y0=st.floats(-1, 1), y1=st.floats(-1, 1), lam=st.floats(0.2, 5.0))
def test_euler_homogeneity(y0, y1, lam):
    m = ZOO["matsumoto"]
    y = np.array([y0, y1])
    if np.linalg.norm(y) < 1e-3:
        return
    x = np.array([0.1, 0.05])
    t = fu.base_tensors(m, x, y)
    assert abs(t.l @ y - t.L) / t.L < 1e-12
    np.testing.assert_allclose(fu.base_tensors(m, x, lam * y).g, t.g, rtol=1e-11, atol=1e-13)
    np.testing.assert_allclose(fu.spray_coefficients(m, x, lam * y), lam**2 * fu.spray_coefficients(m, x, y),
                               rtol=1e-10, atol=1e-13)


def test_conformal_cartan_coefficients_are_christoffels(conformal):
    x, y = draw([conformal], 16)
    F = fu.spray_connections(conformal, x, y).F
    k = np.array([1.0, 0.0])
    d = np.eye(2)
    gamma = np.einsum("ij,k->ijk", d, k) + np.einsum("ik,j->ijk", d, k) - np.einsum("jk,i->ijk", d, k)
    np.testing.assert_allclose(F, np.broadcast_to(gamma, F.shape), atol=1e-12)


def test_homothety_keeps_connection():
    r = ZOO["randers"]
    changed = hexp_apply(r, make_hvector("homothety", r, c=0.3))
    x, y = draw([r], 16)
    a, b = fu.spray_connections(r, x, y), fu.spray_connections(changed, x, y)
    for p, q in ((a.G, b.G), (a.N, b.N), (a.F, b.F)):
        np.testing.assert_allclose(q, p, atol=1e-13)


def test_covariant_derivative_examples(euclid, conformal, randers):
    x, y = draw([conformal], 8)
    for base, hv, zero in [
        (euclid, make_hvector("constant", euclid, a=[0.1, 0.0]), True),
        (randers, make_hvector("homothety", randers, c=0.2), True),
        (conformal, make_hvector("constant", conformal, a=[0.1, 0.0]), False),
    ]:
        t = fu.base_tensors(base, x, y)
        c = fu.spray_connections(base, x, y, t)
        cd = fu.h_cov_deriv_b(base, hv, c, t)
        np.testing.assert_allclose(cd.Esym + cd.Fskew, cd.bij, atol=1e-15)
        np.testing.assert_allclose(cd.E_00, cd.beta_0, atol=1e-14)
        if zero:
            assert np.max(np.abs(cd.bij)) < 1e-12
        else:
            expect = -np.einsum("r,nrij->nij", [0.1, 0.0], c.F)
            np.testing.assert_allclose(cd.bij, expect, atol=1e-14)
            assert np.max(np.abs(cd.bij)) > 1e-2


def test_v_covariant_derivative(randers, euclid):
    x, y = draw([randers], 8)
    t = fu.base_tensors(randers, x, y)
    # l_i|_j = h_ij / L
    np.testing.assert_allclose(fu.v_cov_deriv(t.l, t.Lij, t), t.h / t.L[:, None, None], atol=1e-13)
    te = fu.base_tensors(euclid, x, y)
    const = np.broadcast_to([0.4, -0.1], y.shape)
    np.testing.assert_allclose(fu.v_cov_deriv(const, np.zeros((8, 2, 2)), te), 0.0, atol=1e-15)


def test_berwald_coefficients(conformal):
    x, y = draw([conformal], 4)
    B = fu.berwald_coefficients(conformal, x, y)
    F = fu.spray_connections(conformal, x, y).F
    # Riemannian: the Berwald coefficients are the Christoffel symbols too
    np.testing.assert_allclose(B, F, atol=1e-8)
