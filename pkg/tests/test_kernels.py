import numpy as np
import pytest

from stylemerge.numerics import _kernels_py as py

ext = pytest.importorskip("stylemerge.numerics._kernels",
                          reason="compiled kernels not built")


def rand(rng, *shape):
    return rng.standard_normal(shape).astype(np.float32)


class TestSoftmaxParity:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_python(self, seed):
        rng = np.random.default_rng(seed)
        x = rand(rng, 8, 33) * 5
        np.testing.assert_allclose(ext.softmax_rows(x), py.softmax_rows(x),
                                   rtol=1e-6, atol=1e-7)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        p = ext.softmax_rows(rand(rng, 6, 10) * 20)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, rtol=1e-6)

    def test_large_logits_stable(self):
        x = np.array([[1000.0, 1000.0, -1000.0]], dtype=np.float32)
        p = ext.softmax_rows(x)
        assert np.isfinite(p).all()
        np.testing.assert_allclose(p[0, :2], 0.5, rtol=1e-6)


class TestXentParity:
    @pytest.mark.parametrize("seed", range(5))
    def test_loss_and_grad_match(self, seed):
        rng = np.random.default_rng(seed)
        logits = rand(rng, 12, 40) * 3
        targets = rng.integers(0, 40, size=12).astype(np.int64)
        le, ge = ext.softmax_xent(logits, targets)
        lp, gp = py.softmax_xent(logits, targets)
        assert le == pytest.approx(lp, rel=1e-6)
        np.testing.assert_allclose(ge, gp, rtol=1e-5, atol=1e-8)

    def test_perfect_prediction_low_loss(self):
        logits = np.full((4, 5), -20.0, dtype=np.float32)
        targets = np.arange(4, dtype=np.int64)
        logits[np.arange(4), targets] = 20.0
        loss, _ = ext.softmax_xent(logits, targets)
        assert loss < 1e-5


class TestAdamParity:
    @pytest.mark.parametrize("seed", range(5))
    def test_state_and_param_match(self, seed):
        rng = np.random.default_rng(seed)
        n = 64
        p1, g = rand(rng, n), rand(rng, n)
        p2 = p1.copy()
        m1 = np.zeros(n, dtype=np.float32)
        v1 = np.zeros(n, dtype=np.float32)
        m2, v2 = m1.copy(), v1.copy()
        for t in range(1, 6):
            ext.adam_update(p1, g, m1, v1, t, 1e-3, 0.9, 0.999, 1e-8)
            py.adam_update(p2, g, m2, v2, t, 1e-3, 0.9, 0.999, 1e-8)
        # both are float32; allow rounding-order noise between the two paths
        np.testing.assert_allclose(p1, p2, rtol=5e-5, atol=1e-7)
        np.testing.assert_allclose(m1, m2, rtol=5e-5, atol=1e-7)
        np.testing.assert_allclose(v1, v2, rtol=5e-5, atol=1e-7)


def test_backend_env_selection(monkeypatch):
    import importlib

    import stylemerge.numerics.backend as backend
    monkeypatch.setenv("STYLEMERGE_KERNELS", "python")
    mod = importlib.reload(backend)
    assert mod.BACKEND == "python"
    monkeypatch.delenv("STYLEMERGE_KERNELS")
    mod = importlib.reload(backend)
    assert mod.BACKEND in ("ext", "python")
