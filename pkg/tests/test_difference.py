import numpy as np
import pytest

from hexpfinsler import difference as df
from hexpfinsler.metrics import hexp_apply, make_hvector

from conftest import draw, zoo

ZOO = zoo()


@pytest.fixture(scope="module")
def curved_ctx(curved_pair):
    base, hv = curved_pair
    x, y = draw([base, hexp_apply(base, hv)], 64)
    ctx = df.change_context(base, hv, x, y)
    return ctx, df.difference_tensor(ctx), df.oracle_difference(ctx)


def test_pipeline_matches_oracle(curved_ctx):
    ctx, dt, orc = curved_ctx
    y = ctx.base.y
    assert np.max(np.abs(dt.Djk - orc.dF)) < 1e-7
    assert np.max(np.abs(dt.D0j - orc.dN)) < 1e-7
    assert np.max(np.abs(dt.D00 - 2 * orc.dG)) < 1e-7
    assert np.max(np.abs(orc.dF)) > 1e-2
    # contraction chain and symmetry
    np.testing.assert_allclose(np.einsum("nijk,nk->nij", dt.Djk, y), dt.D0j, atol=1e-9)
    np.testing.assert_allclose(np.einsum("nij,nj->ni", dt.D0j, y), dt.D00, atol=1e-9)
    np.testing.assert_allclose(dt.Djk, np.swapaxes(dt.Djk, -1, -2), atol=1e-12)
    np.testing.assert_allclose(dt.G_j, ctx.cs.etau[:, None] * (ctx.covd.E_i0 - ctx.covd.F_i0))
    np.testing.assert_allclose(dt.mD00, np.einsum("ni,ni->n", ctx.cs.m, dt.D00), atol=1e-12)


def test_defining_residuals(curved_ctx):
    ctx, dt, orc = curved_ctx
    for D in (dt.Djk, orc.dF):
        first, second = df.defining_residuals(D, ctx)
        assert np.max(np.abs(first)) < 1e-7 and np.max(np.abs(second)) < 1e-7
    bumped = orc.dF.copy()
    bumped[:, 0, 1, 1] += 1e-3
    first, second = df.defining_residuals(bumped, ctx)
    assert max(np.max(np.abs(first)), np.max(np.abs(second))) > 1e-4


def test_symmetric_and_skew_split_adds_up(curved_ctx):
    ctx, dt, _ = curved_ctx
    # the symmetric and skew parts of the first condition sum to the full one
    first, _ = df.defining_residuals(dt.Djk, ctx)
    sym = 0.5 * (first + np.swapaxes(first, -1, -2))
    skew = 0.5 * (first - np.swapaxes(first, -1, -2))
    np.testing.assert_allclose(sym + skew, first, atol=1e-15)
    assert np.max(np.abs(sym)) < 1e-10 and np.max(np.abs(skew)) < 1e-10


def test_solve_special_residuals(euclid):
    hv = make_hvector("constant", euclid, a=[0.1, 0.0])
    x, y = draw([euclid], 32)
    ctx = df.change_context(euclid, hv, x, y)
    rng = np.random.default_rng(5)
    Bi, B = rng.normal(size=(32, 2)), rng.normal(size=32)
    # solvable only when B_i y^i = 0, since *L_ir y^r = 0
    Bi -= (np.einsum("ni,ni->n", Bi, y) / ctx.base.L)[:, None] * ctx.base.l
    A = df.solve_special(Bi, B, ctx.cs, ctx.base)
    np.testing.assert_allclose(np.einsum("nir,nr->ni", ctx.star.Lij, A), Bi, atol=1e-10)
    np.testing.assert_allclose(np.einsum("nr,nr->n", ctx.star.Li, A), B, atol=1e-10)
    # A = s y solves (0, s *L): the direction is in the kernel of *L_ir
    s = 0.7
    A = df.solve_special(np.zeros((32, 2)), s * ctx.star.L, ctx.cs, ctx.base)
    np.testing.assert_allclose(A, s * y, atol=1e-12)
    # B_i = 0, B = e^tau
    A = df.solve_special(np.zeros((32, 2)), ctx.cs.etau, ctx.cs, ctx.base)
    np.testing.assert_allclose(np.einsum("nr,nr->n", ctx.star.Li, A), ctx.cs.etau, atol=1e-12)


@pytest.mark.parametrize(
    "name, hv_kw, parallel",
    [
        ("euclidean", dict(family="constant", a=[0.1, 0.0]), True),
        ("randers", dict(family="homothety", c=0.2), True),
        ("euclidean", dict(family="mixed", a=[0.1, 0.0], c=0.2), True),
        ("randers", dict(family="constant", a=[0.0, 0.0]), True),
        ("conformal", dict(family="constant", a=[0.1, 0.0]), False),
    ],
)
def test_parallel_criterion(name, hv_kw, parallel):
    base = ZOO[name]
    kw = dict(hv_kw)
    hv = make_hvector(kw.pop("family"), base, **kw)
    x, y = draw([base, hexp_apply(base, hv)], 32)
    v = df.parallel_check(base, hv, x, y)
    assert v.consistent
    assert v.parallel is parallel and v.vanishing is parallel
    if parallel:
        assert v.max_D < 1e-9
        dt = df.difference_tensor(df.change_context(base, hv, x, y))
        assert np.max(np.abs(dt.Djk)) < 1e-9
    else:
        assert v.max_D > 1e-3


def test_berwald_difference(curved_pair):
    base, hv = curved_pair
    x, y = draw([base], 32)
    lhs, rhs = df.berwald_diff(base, hv, x, y)
    assert np.max(np.abs(lhs - rhs)) < 1e-6
    assert np.max(np.abs(lhs)) > 1e-3


@pytest.mark.parametrize("name, hv_kw", [("euclidean", dict(family="constant", a=[0.1, 0.0])),
                                         ("randers", dict(family="homothety", c=0.2)),
                                         ("randers", dict(family="constant"))])
def test_berwald_difference_vanishes_for_parallel(name, hv_kw):
    base = ZOO[name]
    kw = dict(hv_kw)
    hv = make_hvector(kw.pop("family"), base, **kw)
    x, y = draw([base], 16)
    lhs, rhs = df.berwald_diff(base, hv, x, y)
    assert np.max(np.abs(lhs)) < 1e-9 and np.max(np.abs(rhs)) < 1e-9


def test_printed_form_witnesses(curved_ctx, randers):
    ctx, _, _ = curved_ctx
    records = df.printed_form_witnesses(ctx)
    assert [r["formula"] for r in records] == ["second-derivative-transport", "H_ik", "G_ij"]
    for r in records:
        w = r["witness"]
        assert w["corrected_residual"] < 1e-10
        assert w["literal_residual"] > 1e-4
    hom = make_hvector("homothety", randers, c=0.2)
    x, y = draw([randers], 4)
    for r in df.printed_form_witnesses(df.change_context(randers, hom, x, y)):
        assert r["witness"]["literal_residual"] < 1e-12
