"""Compiled-vs-pure backend equivalence for the hot kernels."""

import numpy as np
import pytest

import rotacell._ipm as ipm_mod
from rotacell._ipm import ConeLayout, _jordan_div, _jordan_prod, _Scaling, solve_ipm
from rotacell._kernels import BACKEND, pure

_fast = pytest.importorskip("rotacell._kernels._fast")


def path_inputs(rng, K=3, B=2, M=4, Q=5, p=3.0):
    c_los = rng.normal(size=(K, B, M)) + 1j * rng.normal(size=(K, B, M))
    v_los = rng.normal(size=(K, B, M, 3))
    v_los /= np.linalg.norm(v_los, axis=-1, keepdims=True)
    c_sc = rng.normal(size=(K, Q, B, M)) + 1j * rng.normal(size=(K, Q, B, M))
    v_sc = rng.normal(size=(Q, B, M, 3))
    v_sc /= np.linalg.norm(v_sc, axis=-1, keepdims=True)
    orient = rng.normal(size=(B, M, 3))
    orient /= np.linalg.norm(orient, axis=-1, keepdims=True)
    return c_los, v_los, c_sc, v_sc, orient, p


def test_default_backend_is_compiled():
    assert BACKEND == "compiled"


@pytest.mark.parametrize("Q", [0, 5])
def test_eval_channel_matches_pure(rng, Q):
    args = path_inputs(rng, Q=Q)
    assert np.allclose(_fast.eval_channel(*args), pure.eval_channel(*args), rtol=1e-13)


@pytest.mark.parametrize("Q", [0, 5])
def test_eval_channel_grad_matches_pure(rng, Q):
    args = path_inputs(rng, Q=Q)
    hf, gf = _fast.eval_channel_grad(*args)
    hp, gp = pure.eval_channel_grad(*args)
    assert np.allclose(hf, hp, rtol=1e-13)
    assert np.allclose(gf, gp, rtol=1e-13)


def test_eval_hessian_matches_pure(rng):
    args = path_inputs(rng, p=4.0)
    assert np.allclose(_fast.eval_hessian(*args), pure.eval_hessian(*args), rtol=1e-13)


def test_eval_channel_back_facing_agreement(rng):
    # flip orientations so some dot products go negative: both backends
    # must clamp identically
    args = list(path_inputs(rng))
    args[4] = -args[4]
    assert np.array_equal(
        np.asarray(_fast.eval_channel(*args)) == 0, np.asarray(pure.eval_channel(*args)) == 0
    )


# ---------------------------------------------------------------------------
# cone kernels: compare every wrapper under _CK set and _CK = None


def interior_pair(layout, rng):
    s = layout.bring_to_cone(rng.normal(size=layout.m))
    z = layout.bring_to_cone(rng.normal(size=layout.m))
    return s, z


@pytest.fixture
def layout():
    return ConeLayout(4, [3, 3, 5, 2])


def both_backends(monkeypatch, fn):
    compiled = fn()
    monkeypatch.setattr(ipm_mod, "_CK", None)
    return compiled, fn()


def test_scaling_outputs_match(layout, rng, monkeypatch):
    s, z = interior_pair(layout, rng)
    v = rng.normal(size=layout.m)
    G = rng.normal(size=(layout.m, 6))

    def run():
        sc = _Scaling(layout, s, z)
        assert sc.ok
        return (
            sc.lam.copy(),
            sc.apply_w(v),
            sc.apply_winv(v),
            sc.apply_w2(v),
            sc.apply_winv2(v),
            sc.scale_rows_winv(G),
        )

    comp, pure_out = both_backends(monkeypatch, run)
    for a, b in zip(comp, pure_out):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-14)


def test_scaling_identities(layout, rng):
    # lambda = W z = W^-1 s, and W^2 = W o W
    s, z = interior_pair(layout, rng)
    sc = _Scaling(layout, s, z)
    assert np.allclose(sc.apply_w(z), sc.lam, rtol=1e-10, atol=1e-12)
    assert np.allclose(sc.apply_winv(s), sc.lam, rtol=1e-10, atol=1e-12)
    v = rng.normal(size=layout.m)
    assert np.allclose(sc.apply_w(sc.apply_w(v)), sc.apply_w2(v), rtol=1e-10, atol=1e-12)
    assert np.allclose(sc.apply_winv2(sc.apply_w2(v)), v, rtol=1e-10, atol=1e-12)
    G = rng.normal(size=(layout.m, 4))
    cols = np.column_stack(
        [sc.apply_winv(np.ascontiguousarray(G[:, j])) for j in range(G.shape[1])]
    )
    assert np.allclose(sc.scale_rows_winv(G), cols, rtol=1e-10, atol=1e-12)


def test_scaling_rejects_boundary(layout, rng, monkeypatch):
    s, z = interior_pair(layout, rng)
    s_bad = s.copy()
    s_bad[0] = 0.0  # on the orthant boundary

    def run():
        return _Scaling(layout, s_bad, z).ok

    comp, pure_ok = both_backends(monkeypatch, run)
    assert comp is False and pure_ok is False


def test_max_step_matches(layout, rng, monkeypatch):
    s, _ = interior_pair(layout, rng)
    for _ in range(20):
        d = rng.normal(size=layout.m)

        def run():
            return layout.max_step(s, d)

        comp, pure_step = both_backends(monkeypatch, run)
        monkeypatch.undo()
        if np.isinf(pure_step):
            assert comp > 1e12 or np.isinf(comp)
        else:
            assert comp == pytest.approx(pure_step, rel=1e-9)
            # crossing point is on the boundary: step slightly short stays in
            lam2 = s + 0.999 * pure_step * d
            assert layout.bring_to_cone(lam2) is not None


def test_jordan_ops_match(layout, rng, monkeypatch):
    s, z = interior_pair(layout, rng)
    d = rng.normal(size=layout.m)

    def run():
        prod = _jordan_prod(layout, s, z)
        x = _jordan_div(layout, s, d)
        return prod, x

    comp, pure_out = both_backends(monkeypatch, run)
    assert np.allclose(comp[0], pure_out[0], rtol=1e-12, atol=1e-14)
    assert np.allclose(comp[1], pure_out[1], rtol=1e-12, atol=1e-14)
    # division inverts the product
    back = _jordan_prod(layout, s, comp[1])
    assert np.allclose(back, d, rtol=1e-9, atol=1e-11)


def feasible_socp(rng, n=8, l=5, q=(3, 4)):
    layout = ConeLayout(l, list(q))
    G = rng.normal(size=(layout.m, n))
    x0 = rng.normal(size=n)
    s0 = layout.bring_to_cone(rng.normal(size=layout.m))
    z0 = layout.bring_to_cone(rng.normal(size=layout.m))
    h = G @ x0 + s0
    c = -G.T @ z0
    return c, G, h, layout


def test_solver_end_to_end_matches(rng, monkeypatch):
    for trial in range(5):
        c, G, h, layout = feasible_socp(rng)

        def run():
            return solve_ipm(c, G, h, layout, tol=1e-9)

        comp, pure_res = both_backends(monkeypatch, run)
        monkeypatch.undo()
        assert comp.status == "Optimal" and pure_res.status == "Optimal"
        assert comp.objective == pytest.approx(pure_res.objective, rel=1e-6, abs=1e-8)
        scale = max(np.linalg.norm(comp.x), 1.0)
        assert np.linalg.norm(comp.x - pure_res.x) / scale < 1e-5
