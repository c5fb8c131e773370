import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hexpfinsler import closed_forms as cf
from hexpfinsler import fundamentals as fu
from hexpfinsler.metrics import hexp_apply, make_hvector, make_metric

from conftest import draw, well_conditioned, zoo

ZOO = zoo()
E = make_metric("euclidean")
B01 = make_hvector("constant", E, a=[0.1, 0.0])


def setup(base, hv, x, y):
    t = fu.base_tensors(base, x, y)
    b, _, _ = hv.jets(t.x, t.Ljet)
    cs = cf.change_scalars(t, b, hv.rho)
    return t, cs, cf.starred_tensors(t, cs)


def at(y, hv=B01, base=E, x=(0.0, 0.0)):
    return setup(base, hv, np.asarray(x, float), np.asarray(y, float))


def test_scalars_euclidean_example():
    _, cs, _ = at([0.0, 1.0])
    assert cs.tau == pytest.approx(0.0) and cs.nu == pytest.approx(1.0)
    np.testing.assert_allclose(cs.m, [0.1, 0.0])
    assert cs.m2 == pytest.approx(0.01)


def test_scalars_identity_and_homothety():
    _, cs, _ = at([0.3, 0.7], hv=make_hvector("constant", E))
    assert cs.tau == 0.0 and cs.nu == 1.0 and np.all(cs.m == 0.0)
    r = ZOO["randers"]
    _, cs, _ = at([0.3, 0.7], hv=make_hvector("homothety", r, c=0.2), base=r, x=(0.1, 0.2))
    assert cs.tau == pytest.approx(0.2) and cs.rho == 0.2 and cs.nu == pytest.approx(1.0)
    np.testing.assert_allclose(cs.m, 0.0, atol=1e-15)


def test_starred_examples_euclidean():
    _, _, s = at([0.0, 1.0])
    np.testing.assert_allclose(s.li, [0.1, 1.0])
    np.testing.assert_allclose(s.g, [[1.02, 0.1], [0.1, 1.0]], atol=1e-15)
    np.testing.assert_allclose(s.ginv, [[0.990099, -0.0990099], [-0.0990099, 1.009901]], atol=1e-6)
    _, _, s = at([1.0, 0.0])
    np.testing.assert_allclose(s.g, np.diag([np.exp(0.2), 0.9 * np.exp(0.2)]), atol=1e-15)
    assert s.L == pytest.approx(1.105171, abs=1e-6)


def test_starred_cartan_euclidean_example():
    t, cs, s = at([0.0, 1.0])
    m, h, L = cs.m, t.h, t.L
    sym = np.einsum("i,jk->ijk", m, h) + np.einsum("j,ki->ijk", m, h) + np.einsum("k,ij->ijk", m, h)
    expect = 2 / L * np.einsum("i,j,k->ijk", m, m, m) + (2 * cs.nu - 1) / (2 * L) * sym
    np.testing.assert_allclose(s.C, expect, atol=1e-15)
    oracle = fu.base_tensors(hexp_apply(E, B01), [0.0, 0.0], [0.0, 1.0])
    np.testing.assert_allclose(s.C, oracle.C, atol=1e-14)


def test_identity_change_is_bitwise_close(randers):
    x, y = draw([randers], 16)
    t, cs, s = setup(randers, make_hvector("constant", randers), x, y)
    for a, b in [(s.Li, t.l), (s.Lij, t.Lij), (s.Lijk, t.Lijk), (s.g, t.g), (s.C, t.C), (s.ginv, t.ginv),
                 (s.Cup, t.Cup)]:
        np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-15)


def test_homothety_scaling(randers):
    c = 0.2
    x, y = draw([randers], 16)
    t, cs, s = setup(randers, make_hvector("homothety", randers, c=c), x, y)
    np.testing.assert_allclose(s.Lij, np.exp(c) * t.Lij, rtol=1e-13)
    np.testing.assert_allclose(s.g, np.exp(2 * c) * t.g, rtol=1e-13, atol=1e-14)
    np.testing.assert_allclose(s.C, np.exp(2 * c) * t.C, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(s.ginv, np.exp(-2 * c) * t.ginv, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(s.Cup, t.Cup, rtol=1e-12, atol=1e-14)


CASES = {
    "constant-curved": (ZOO["conformal"], dict(family="constant", a=[0.1, 0.0])),
    "mixed-randers": (ZOO["randers"], dict(family="mixed", a=[0.05, -0.1], Q=[[0.1, 0.02], [0.02, -0.1]], c=0.3)),
    "homothety-kropina": (ZOO["kropina"], dict(family="homothety", c=-0.2)),
    "gradient-matsumoto": (ZOO["matsumoto"], dict(family="gradient", a=[0.1, 0.1], Q=[[0.2, 0.0], [0.0, 0.1]])),
}


@pytest.mark.parametrize("case", list(CASES))
def test_closed_forms_match_oracle(case):
    base, kw = CASES[case]
    kw = dict(kw)
    hv = make_hvector(kw.pop("family"), base, **kw)
    changed = hexp_apply(base, hv)
    x, y = draw([base, changed], 48, accept=well_conditioned(base))
    t, cs, s = setup(base, hv, x, y)
    o = fu.base_tensors(changed, x, y)
    for a, b in [(s.L, o.L), (s.Li, o.l), (s.Lij, o.Lij), (s.Lijk, o.Lijk), (s.g, o.g), (s.C, o.C),
                 (s.ginv, o.ginv), (s.Cup, o.Cup)]:
        scale = max(1.0, np.max(np.abs(b)))
        assert np.max(np.abs(a - b)) / scale < 1e-9
    # internal assembly: *C^h_ij = *g^hk *C_kij
    np.testing.assert_allclose(s.Cup, np.einsum("nhk,nkij->nhij", s.ginv, s.C), atol=1e-9)
    lemma = cf.star_inverse_metric_by_lemma(t, cs)
    np.testing.assert_allclose(lemma, s.ginv, rtol=1e-10, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(ax=st.floats(-0.3, 0.3), ay=st.floats(-0.3, 0.3), c=st.floats(-0.4, 0.4), seed=st.integers(0, 10**6))
def test_change_invariants(ax, ay, c, seed):
    base = ZOO["randers"]
    hv = make_hvector("mixed", base, a=[ax, ay], c=c)
    x, y = draw([base, hexp_apply(base, hv)], 8, seed=seed)
    t, cs, s = setup(base, hv, x, y)
    tol = 1e-12
    assert np.max(np.abs(np.einsum("ni,ni->n", cs.m, y))) < tol
    assert np.max(np.abs(cs.m2 - (cs.b2 - cs.tau**2))) < tol
    y_low = np.einsum("nij,nj->ni", t.g, y)
    assert np.max(np.abs(np.einsum("ni,ni->n", cs.m_up, y_low))) < 1e-12
    np.testing.assert_allclose(np.einsum("nij,nj->ni", s.g, y), s.L[:, None] * s.li, atol=1e-12)
    assert np.max(np.abs(np.einsum("nijk,nk->nij", s.C, y))) < 1e-12
    for T in (s.Lij, s.g):
        np.testing.assert_array_equal(T, np.swapaxes(T, -1, -2))
    np.testing.assert_allclose(s.C, np.transpose(s.C, (0, 2, 1, 3)), atol=1e-15)
    np.testing.assert_allclose(s.ginv @ s.g, np.broadcast_to(np.eye(2), s.g.shape), atol=1e-10)


def test_rank_one_lemma_examples():
    inv, det = cf.invert_rank_one(np.eye(2), np.array([1.0, 0.0]))
    np.testing.assert_allclose(inv, np.diag([0.5, 1.0]))
    assert det == pytest.approx(2.0)
    m = np.array([[2.0, 0.5], [0.5, 1.0]])
    inv, det = cf.invert_rank_one(m, np.zeros(2))
    np.testing.assert_allclose(inv, np.linalg.inv(m))
    assert det == pytest.approx(np.linalg.det(m))


def test_rank_one_lemma_random_spd():
    rng = np.random.default_rng(2024)
    A = rng.normal(size=(1000, 3, 3))
    m = A @ np.swapaxes(A, 1, 2) + 3 * np.eye(3)
    n = rng.normal(size=(1000, 3))
    inv, det = cf.invert_rank_one(m, n)
    prod = (m + n[:, :, None] * n[:, None, :]) @ inv
    assert np.max(np.abs(prod - np.eye(3))) < 1e-12
    np.testing.assert_allclose(det, np.linalg.det(m + n[:, :, None] * n[:, None, :]), rtol=1e-10)


def test_rank_one_singularity():
    with pytest.raises(cf.ShermanMorrisonSingularityError):
        cf.invert_rank_one(np.eye(2), np.array([1j, 0.0]))


def test_change_singularity():
    # nu = 1 + rho - tau vanishes when b = l (homothety-like part with c = 0 plus tau = 1)
    t = fu.base_tensors(E, [0.0, 0.0], [1.0, 0.0])
    with pytest.raises(cf.ChangeSingularityError):
        cf.change_scalars(t, np.array([1.0, 0.0]), 0.0)
