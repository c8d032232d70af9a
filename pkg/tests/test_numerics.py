import numpy as np
import pytest
from gradcheck import check_primitive

from stylemerge import numerics as nm
from stylemerge.errors import (NumericError, ShapeError, TapeError,
                               VocabularyError)
from stylemerge.numerics import (AdamState, GradTape, Tensor, adam_step,
                                 cross_entropy_next_token, embedding, matmul,
                                 mul, rmsnorm, rotary, scale, silu,
                                 softmax_rows, sum_all)


class TestMatmul:
    def test_worked_example(self):
        # manual matrix multiplication oracle: (2x1) . (1x2)
        out = matmul(Tensor([[2.0], [1.0]]), Tensor([[3.0, 4.0]]))
        np.testing.assert_array_equal(out.data, [[6.0, 8.0], [3.0, 4.0]])

    def test_identity(self):
        x = Tensor([[1.5, -2.0], [0.25, 7.0]])
        out = matmul(Tensor(np.eye(2)), x)
        np.testing.assert_array_equal(out.data, x.data)

    def test_zeros_annihilate(self):
        out = matmul(Tensor(np.zeros((3, 4))), Tensor(np.ones((4, 2))))
        np.testing.assert_array_equal(out.data, np.zeros((3, 2)))

    def test_dimension_mismatch_names_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 2))))

    def test_associativity(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            a = Tensor(rng.standard_normal((4, 5)))
            b = Tensor(rng.standard_normal((5, 3)))
            c = Tensor(rng.standard_normal((3, 6)))
            left = matmul(matmul(a, b), c).data
            right = matmul(a, matmul(b, c)).data
            np.testing.assert_allclose(left, right, atol=1e-4)


class TestSoftmax:
    def test_symmetry(self):
        out = softmax_rows(Tensor([[0.0, 0.0]]))
        np.testing.assert_allclose(out.data, [[0.5, 0.5]])

    def test_no_overflow(self):
        out = softmax_rows(Tensor([[1000.0, 0.0]]))
        assert np.isfinite(out.data).all()
        np.testing.assert_allclose(out.data, [[1.0, 0.0]], atol=1e-6)

    def test_closed_form(self):
        out = softmax_rows(Tensor([[np.log(1.0), np.log(3.0)]]))
        np.testing.assert_allclose(out.data, [[0.25, 0.75]], atol=1e-6)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(3)
        x = Tensor(rng.standard_normal((8, 16)) * 5)
        sums = softmax_rows(x).data.sum(axis=-1)
        np.testing.assert_allclose(sums, 1.0, atol=1e-6)

    def test_shift_invariance(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((5, 7)).astype(np.float32)
        shifted = x + rng.standard_normal((5, 1)).astype(np.float32)
        np.testing.assert_allclose(softmax_rows(Tensor(x)).data,
                                   softmax_rows(Tensor(shifted)).data, atol=1e-6)

    def test_nan_rejected(self):
        with pytest.raises(NumericError):
            softmax_rows(Tensor([[np.nan, 0.0]]))


class TestCrossEntropy:
    def test_uniform_logits(self):
        logits = Tensor(np.zeros((3, 256)))
        loss = cross_entropy_next_token(logits, [0, 17, 255])
        assert loss.item() == pytest.approx(np.log(256.0), abs=1e-4)

    def test_margin_drives_loss_to_zero(self):
        losses = []
        for margin in (5.0, 20.0, 60.0):
            row = np.zeros((1, 4), dtype=np.float32)
            row[0, 2] = margin
            losses.append(cross_entropy_next_token(Tensor(row), [2]).item())
        assert losses[0] > losses[1] > losses[2]
        assert losses[2] < 1e-6

    def test_worked_example(self):
        loss = cross_entropy_next_token(Tensor([[0.0, np.log(3.0)]]), [1])
        assert loss.item() == pytest.approx(-np.log(0.75), abs=1e-6)

    def test_out_of_range_target(self):
        with pytest.raises(VocabularyError):
            cross_entropy_next_token(Tensor(np.zeros((1, 4))), [4])


class TestBackward:
    def test_x_squared(self):
        tape = GradTape()
        x = Tensor([3.0])
        loss = sum_all(mul(x, x, tape), tape)
        tape.backward(loss)
        np.testing.assert_allclose(tape.grad(x), [6.0])

    def test_sum_of_matvec(self):
        # f(W) = sum(W v): grad is v broadcast over rows
        rng = np.random.default_rng(0)
        w = Tensor(rng.standard_normal((3, 4)))
        v = Tensor(rng.standard_normal((4, 1)))
        tape = GradTape()
        loss = sum_all(matmul(w, v, tape), tape)
        tape.backward(loss)
        expected = np.broadcast_to(v.data.T, (3, 4))
        np.testing.assert_allclose(tape.grad(w), expected, atol=1e-6)

    def test_untouched_parameter_gets_zero(self):
        tape = GradTape()
        x = Tensor([2.0])
        unused = Tensor([[1.0, 2.0]])
        loss = sum_all(mul(x, x, tape), tape)
        tape.backward(loss)
        np.testing.assert_array_equal(tape.grad(unused), np.zeros((1, 2)))

    def test_constant_loss_zero_grads(self):
        tape = GradTape()
        x = Tensor([5.0])
        loss = sum_all(scale(x, 0.0, tape), tape)
        tape.backward(loss)
        np.testing.assert_array_equal(tape.grad(x), [0.0])

    def test_loss_off_tape_rejected(self):
        tape = GradTape()
        with pytest.raises(TapeError):
            tape.backward(Tensor([1.0]))

    def test_grads_accumulate_across_reuse(self):
        tape = GradTape()
        x = Tensor([1.0, 2.0])
        y = nm.add(x, x, tape)
        loss = sum_all(y, tape)
        tape.backward(loss)
        np.testing.assert_allclose(tape.grad(x), [2.0, 2.0])


class TestAdam:
    def test_zero_grad_no_change(self):
        state = AdamState((2, 2))
        p = Tensor(np.ones((2, 2)))
        before = p.data.copy()
        adam_step(state, p, np.zeros((2, 2), dtype=np.float32))
        np.testing.assert_array_equal(p.data, before)
        assert state.t == 1

    def test_first_step_magnitude(self):
        # bias-corrected first step moves by ~lr * sign(g)
        for g in (0.7, -2.5):
            state = AdamState((1,), lr=1e-3)
            p = Tensor([1.0])
            adam_step(state, p, np.array([g], dtype=np.float32))
            delta = float(p.data[0]) - 1.0
            assert delta == pytest.approx(-1e-3 * np.sign(g), rel=1e-3)

    def test_deterministic(self):
        def run():
            state = AdamState((3,))
            p = Tensor([1.0, -1.0, 0.5])
            g = np.array([0.1, 0.2, -0.3], dtype=np.float32)
            adam_step(state, p, g)
            adam_step(state, p, g)
            return p.data.copy()
        np.testing.assert_array_equal(run(), run())

    def test_shape_mismatch(self):
        state = AdamState((2,))
        with pytest.raises(ShapeError):
            adam_step(state, Tensor([1.0, 2.0, 3.0]), np.zeros(3, dtype=np.float32))


class TestGradcheck:
    """Central finite differences vs the tape on random 4x4 inputs."""

    @pytest.mark.parametrize("seed", range(5))
    def test_matmul(self, seed):
        rng = np.random.default_rng(seed)
        a = Tensor(rng.standard_normal((4, 4)) * 0.5)
        b = Tensor(rng.standard_normal((4, 4)) * 0.5)
        check_primitive(nm.matmul, [a, b], rng)

    @pytest.mark.parametrize("seed", range(3))
    def test_batched_matmul(self, seed):
        rng = np.random.default_rng(seed)
        a = Tensor(rng.standard_normal((2, 4, 4)) * 0.5)
        b = Tensor(rng.standard_normal((2, 4, 4)) * 0.5)
        check_primitive(nm.matmul, [a, b], rng)

    @pytest.mark.parametrize("seed", range(3))
    def test_elementwise(self, seed):
        rng = np.random.default_rng(seed)
        a = Tensor(rng.standard_normal((4, 4)))
        b = Tensor(rng.standard_normal((4, 4)))
        check_primitive(nm.add, [a, b], rng)
        check_primitive(nm.mul, [a, b], rng)
        check_primitive(lambda x, tape: scale(x, 1.7, tape), [a], rng)
        check_primitive(lambda x, tape: silu(x, tape), [a], rng)

    @pytest.mark.parametrize("seed", range(3))
    def test_softmax(self, seed):
        rng = np.random.default_rng(seed)
        x = Tensor(rng.standard_normal((4, 4)))
        check_primitive(lambda t, tape: softmax_rows(t, tape), [x], rng)

    @pytest.mark.parametrize("seed", range(3))
    def test_rmsnorm(self, seed):
        rng = np.random.default_rng(seed)
        x = Tensor(rng.standard_normal((4, 4)))
        w = Tensor(rng.standard_normal(4) * 0.5 + 1.0)
        check_primitive(lambda a, b, tape: rmsnorm(a, b, 1e-5, tape), [x, w], rng)

    @pytest.mark.parametrize("seed", range(3))
    def test_rotary(self, seed):
        rng = np.random.default_rng(seed)
        x = Tensor(rng.standard_normal((4, 4)))
        ang = rng.standard_normal((4, 2))
        cos = np.cos(ang).astype(np.float32)
        sin = np.sin(ang).astype(np.float32)
        check_primitive(lambda t, tape: rotary(t, cos, sin, tape), [x], rng)

    @pytest.mark.parametrize("seed", range(3))
    def test_embedding(self, seed):
        rng = np.random.default_rng(seed)
        table = Tensor(rng.standard_normal((4, 4)))
        ids = rng.integers(0, 4, size=4)
        check_primitive(lambda t, tape: embedding(t, ids, tape), [table], rng)

    @pytest.mark.parametrize("seed", range(3))
    def test_cross_entropy(self, seed):
        rng = np.random.default_rng(seed)
        logits = Tensor(rng.standard_normal((4, 4)))
        targets = rng.integers(0, 4, size=4)
        check_primitive(
            lambda t, tape: cross_entropy_next_token(t, targets, tape), [logits], rng)


def test_determinism_same_seed_same_bits():
    def run():
        rng = np.random.default_rng(42)
        a = Tensor(rng.standard_normal((8, 8)))
        b = Tensor(rng.standard_normal((8, 8)))
        return matmul(softmax_rows(a), silu(b)).data.tobytes()
    assert run() == run()
