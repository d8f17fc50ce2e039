import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from samgc import autodiff as ad
from samgc.autodiff import Adam, Parameter, Tape, Tensor
from samgc.errors import ContractError, DataError, ShapeError
from samgc.gradcheck import check_gradients, numerical_gradient


def leaf(values):
    return Tensor(np.asarray(values, dtype=float), requires_grad=True)


class TestForward:
    def test_matmul_identity(self):
        x = Tensor([[1, 2], [3, 4]])
        assert_array_equal(ad.matmul(x, np.eye(2)).data, [[1, 2], [3, 4]])
        assert_array_equal(ad.matmul(np.eye(2), Tensor([[5], [7]])).data, [[5], [7]])

    def test_matmul_matches_loop_oracle(self, rng):
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
        expected = np.zeros((3, 2))
        for i in range(3):
            for j in range(2):
                for k in range(4):
                    expected[i, j] += a[i, k] * b[k, j]
        assert_allclose(ad.matmul(a, b).data, expected, atol=1e-12)

    def test_matmul_shape_error(self):
        with pytest.raises(ShapeError):
            ad.matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_concat_cols(self):
        out = ad.concat_cols([Tensor([[1, 2]]), Tensor([[3, 4, 5]])])
        assert_array_equal(out.data, [[1, 2, 3, 4, 5]])
        single = Tensor([[1.0, 2.0]])
        assert_array_equal(ad.concat_cols([single]).data, single.data)

    def test_concat_row_mismatch(self):
        with pytest.raises(ShapeError):
            ad.concat_cols([np.ones((2, 1)), np.ones((3, 1))])

    def test_relu(self, rng):
        assert_array_equal(ad.relu(Tensor([[-1.0, 0.0, 2.0]])).data, [[0, 0, 2]])
        x = rng.normal(size=(4, 5))
        assert_array_equal(ad.relu(ad.relu(x)).data, ad.relu(x).data)

    def test_leaky_relu_slope(self):
        assert_allclose(ad.relu(Tensor([[-2.0, 3.0]]), 0.01).data, [[-0.02, 3.0]])

    def test_reduce_rows(self):
        assert_array_equal(ad.reduce_rows(Tensor([[1, 5], [3, 2]]), "max").data, [[3, 5]])
        assert_array_equal(ad.reduce_rows(Tensor([[2, 4], [4, 8]]), "mean").data, [[3, 6]])
        row = Tensor([[1.5, -2.0]])
        for mode in ("max", "mean"):
            assert_array_equal(ad.reduce_rows(row, mode).data, row.data)

    def test_reduce_rows_rejects_empty(self):
        with pytest.raises(ContractError):
            ad.reduce_rows(np.zeros((0, 3)), "max")

    def test_row_softmax(self):
        assert_allclose(ad.row_softmax(Tensor([[0.0, 0.0]])).data, [[0.5, 0.5]])
        assert_allclose(ad.row_softmax(Tensor([[1000.0, 1000.0]])).data, [[0.5, 0.5]])
        probs = ad.row_softmax(Tensor([[np.log(1), np.log(2), np.log(3)]])).data
        assert_allclose(probs, [[1 / 6, 2 / 6, 3 / 6]], atol=1e-9)

    def test_cross_entropy_uniform(self):
        loss = ad.cross_entropy_mean(Tensor([[0.0, 0.0]]), [0])
        assert loss.item() == pytest.approx(np.log(2), abs=1e-9)
        assert round(loss.item(), 6) == 0.693147

    def test_cross_entropy_monotone_in_true_logit(self):
        losses = [
            ad.cross_entropy_mean(Tensor([[margin, 0.0]]), [0]).item()
            for margin in np.linspace(-3, 3, 13)
        ]
        assert all(a > b for a, b in zip(losses, losses[1:]))

    def test_cross_entropy_mask(self):
        logits = Tensor([[0.0, 0.0], [5.0, -5.0]])
        masked = ad.cross_entropy_mean(logits, [1, 0], mask=[0])
        assert masked.item() == pytest.approx(np.log(2))

    def test_cross_entropy_bad_label_names_row(self):
        with pytest.raises(DataError, match="row 1"):
            ad.cross_entropy_mean(Tensor(np.zeros((2, 2))), [0, 5])

    def test_segment_max_empty_segment_is_zero(self):
        x = Tensor([[1.0, -4.0], [3.0, -2.0], [-1.0, -1.0]])
        out = ad.segment_max(x, [0, 2, 2, 3])
        assert_array_equal(out.data, [[3, -2], [0, 0], [-1, -1]])

    def test_cosine_zero_norm(self):
        out = ad.cosine_rows(Tensor([[0.0, 0.0], [1.0, 0.0]]), Tensor([[1.0, 1.0], [2.0, 0.0]]))
        assert_allclose(out.data, [[0.0], [1.0]])

    def test_glorot_deterministic_and_bounded(self):
        a, b = ad.glorot_init(30, 20, 5), ad.glorot_init(30, 20, 5)
        assert_array_equal(a.data, b.data)
        assert np.abs(a.data).max() <= np.sqrt(6 / 50)

    def test_glorot_mean_near_zero(self):
        sample = ad.glorot_init(100, 100, 1).data
        sigma = np.sqrt(6 / 200) / np.sqrt(3)
        assert abs(sample.mean()) < 3 * sigma / np.sqrt(sample.size)

    def test_operations_outside_tape_do_not_record(self):
        x = leaf([[1.0, 2.0]])
        out = ad.relu(x)
        assert out._tape is None and ad.active_tape() is None


class TestBackward:
    def test_sum_gradient_is_ones(self, rng):
        x = leaf(rng.normal(size=(3, 2)))
        with Tape():
            loss = ad.sum_all(x)
        ad.backward(loss)
        assert_array_equal(x.grad, np.ones((3, 2)))

    def test_quadratic_form(self, rng):
        x = leaf(rng.normal(size=(4, 1)))
        with Tape():
            loss = ad.matmul(ad.transpose(x), x)
        ad.backward(loss)
        assert_allclose(x.grad, 2 * x.data, rtol=1e-8)

    def test_fan_out_accumulates(self):
        x = leaf([[1.5]])
        with Tape():
            loss = ad.add(x, x)
        ad.backward(loss)
        assert_array_equal(x.grad, [[2.0]])

    def test_concat_gradient(self, rng):
        a, b = leaf(rng.normal(size=(2, 2))), leaf(rng.normal(size=(2, 3)))
        with Tape():
            loss = ad.sum_all(ad.concat_cols([a, b]))
        ad.backward(loss)
        assert_array_equal(a.grad, np.ones((2, 2)))

    def test_second_backward_rejected(self):
        x = leaf([[1.0, 2.0]])
        with Tape():
            loss = ad.sum_all(ad.mul(x, x))
        ad.backward(loss)
        with pytest.raises(ContractError):
            ad.backward(loss)

    def test_backward_releases_the_record(self):
        w = Parameter(np.ones((2, 2)))
        with Tape() as tape:
            loss = ad.sum_all(ad.mul(w, w))
        assert len(tape) == 2
        ad.backward(loss)
        assert len(tape) == 0
        assert_array_equal(w.grad, np.full((2, 2), 2.0))

    def test_backward_needs_scalar(self):
        x = leaf([[1.0, 2.0]])
        with Tape():
            out = ad.mul(x, 2.0)
        with pytest.raises(ContractError):
            ad.backward(out)

    def test_reduce_max_tie_routes_to_first_row(self):
        x = leaf([[1.0, 1.0], [1.0, 1.0]])
        with Tape():
            loss = ad.sum_all(ad.reduce_rows(x, "max"))
        ad.backward(loss)
        assert_array_equal(x.grad, [[1, 1], [0, 0]])

    def test_segment_max_tie_routes_to_lowest_row(self):
        x = leaf([[2.0], [2.0], [1.0]])
        with Tape():
            loss = ad.sum_all(ad.segment_max(x, [0, 2, 3]))
        ad.backward(loss)
        assert_array_equal(x.grad, [[1], [0], [1]])

    def test_relu_gradient_away_from_kink(self, rng):
        values = rng.uniform(-2, 2, size=(4, 4))
        values[np.abs(values) < 1e-3] = 0.5
        x = leaf(values)
        errors = check_gradients(lambda: ad.sum_all(ad.mul(ad.relu(x), x)), {"x": x})
        assert errors["x"] < 1e-6

    def test_cross_entropy_gradient(self, rng):
        logits = leaf(rng.normal(size=(5, 3)))
        labels = rng.integers(0, 3, size=5)
        errors = check_gradients(
            lambda: ad.cross_entropy_mean(logits, labels, mask=[0, 2, 4]),
            {"logits": logits},
        )
        assert errors["logits"] < 1e-6

    @pytest.mark.parametrize(
        "build",
        [
            lambda a, b: ad.sum_all(ad.mul(ad.sub(a, b), ad.abs_(a))),
            lambda a, b: ad.sum_all(ad.cosine_rows(a, b)),
            lambda a, b: ad.sum_all(ad.row_softmax(ad.mul(a, b))),
            lambda a, b: ad.sum_all(ad.gather_rows(ad.add(a, b), [2, 0, 2])),
            lambda a, b: ad.sum_all(ad.slice_rows(ad.mul(a, b), 1, 3)),
            lambda a, b: ad.sum_all(ad.mul(ad.reduce_rows(a, "mean"), b)),
        ],
    )
    def test_primitive_gradients(self, rng, build):
        a = leaf(rng.uniform(0.5, 2.0, size=(3, 4)))
        b = leaf(rng.uniform(-2.0, -0.5, size=(3, 4)))
        errors = check_gradients(lambda: build(a, b), {"a": a, "b": b})
        assert max(errors.values()) < 1e-6

    def test_numerical_gradient_restores_values(self, rng):
        values = rng.normal(size=(2, 2))
        array = values.copy()
        numerical_gradient(lambda: float((array**2).sum()), array)
        assert_array_equal(array, values)

    def test_dropout_identity_at_zero_rate(self, rng):
        x = Tensor(rng.normal(size=(3, 3)))
        assert ad.dropout(x, 0.0, rng) is x

    def test_dropout_scales_kept_entries(self, rng):
        x = Tensor(np.ones((50, 50)))
        out = ad.dropout(x, 0.5, rng).data
        assert set(np.unique(out)) <= {0.0, 2.0}


class TestAdam:
    def test_zero_gradient_leaves_parameter(self):
        w = Parameter(np.array([[0.3, -1.2]]))
        before = w.data.copy()
        ad.adam_step([w], lr=0.1)
        assert_array_equal(w.data, before)

    def test_quadratic_converges(self):
        w = Parameter(np.array([[1.0]]))
        for _ in range(200):
            with Tape():
                loss = ad.sum_all(ad.mul(w, w))
            ad.backward(loss)
            ad.adam_step([w], lr=0.1)
        assert abs(w.data[0, 0]) < 0.02

    def test_first_step_is_sign_of_gradient(self, rng):
        w = Parameter(rng.normal(size=(3, 3)))
        before = w.data.copy()
        target = rng.normal(size=(3, 3))
        with Tape():
            loss = ad.sum_all(ad.mul(ad.sub(w, target), ad.sub(w, target)))
        ad.backward(loss)
        sign = np.sign(w.grad)
        Adam(lr=0.05).step([w])
        delta = w.data - before
        assert_allclose(delta, -0.05 * sign, atol=1e-6)
        assert np.abs(delta).max() <= 0.05 + 1e-12

    def test_gradients_zeroed_after_step(self):
        w = Parameter(np.array([[2.0]]))
        with Tape():
            loss = ad.sum_all(ad.mul(w, w))
        ad.backward(loss)
        ad.adam_step([w], lr=0.1)
        assert_array_equal(w.grad, [[0.0]])

    def test_weight_decay_shrinks(self):
        w = Parameter(np.array([[1.0]]))
        ad.adam_step([w], lr=0.1, weight_decay=0.5)
        assert w.data[0, 0] == pytest.approx(0.95)
