import math

import numpy as np
from django.test import SimpleTestCase

from core_math import tensor as T
from core_math.exceptions import ConfigError, NumericalError, ShapeError
from core_math.gradcheck import check_gradient, check_parameter_gradients
from core_math.tensor import Tape, Tensor


class MatmulTests(SimpleTestCase):
    """Test cases for the matrix product and its backward rule"""

    def setUp(self):
        self.rng = np.random.default_rng(7)

    def test_identity(self):
        """Identity times a matrix returns the matrix"""
        m = Tensor([[1.0, 2.0], [3.0, 4.0]])
        out = T.matmul(Tensor(np.eye(2)), m)
        np.testing.assert_array_equal(out.data, m.data)

    def test_hand_product(self):
        """[[1,2]]·[[3],[4]] = [[11]]"""
        out = T.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
        np.testing.assert_array_equal(out.data, [[11.0]])

    def test_shape_mismatch_reports_both_shapes(self):
        """Mismatched inner extents raise with both shapes in the message"""
        with self.assertRaises(ShapeError) as ctx:
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
        self.assertIn('(2, 3)', str(ctx.exception))

    def test_gradient_matches_finite_differences(self):
        """d sum(a·b) / da matches central differences"""
        b = Tensor(self.rng.normal(size=(4, 2)))
        a = Tensor(self.rng.normal(size=(3, 4)))
        error = check_gradient(lambda x: T.reduce_sum(T.matmul(x, b)), a)
        self.assertLess(error, 1e-6)

    def test_gradient_wrt_both_operands(self):
        """Both backward rules, including the matrix-vector case"""
        tensors = {
            'a': Tensor(self.rng.normal(size=(3, 4))),
            'b': Tensor(self.rng.normal(size=(4, 2))),
            'v': Tensor(self.rng.normal(size=4)),
        }

        def f():
            y = T.matmul(tensors['a'], tensors['b'])
            w = T.matmul(tensors['a'], tensors['v'])
            return T.add(T.reduce_sum(T.mul(y, y)), T.reduce_sum(T.tanh(w)))

        errors = check_parameter_gradients(f, tensors)
        self.assertLess(max(errors.values()), 1e-6)


class ElementwiseTests(SimpleTestCase):
    """Test cases for elementwise ops"""

    def setUp(self):
        self.rng = np.random.default_rng(11)

    def test_zero_cases(self):
        """tanh(0) = 0 and sigmoid(0) = 0.5"""
        self.assertEqual(T.tanh(Tensor(0.0)).item(), 0.0)
        self.assertEqual(T.sigmoid(Tensor(0.0)).item(), 0.5)

    def test_sigmoid_closed_form(self):
        """sigmoid(ln 3) = 3/4"""
        self.assertAlmostEqual(T.sigmoid(Tensor(math.log(3.0))).item(), 0.75, places=12)

    def test_dispatch_by_name(self):
        """elementwise() routes names to ops and rejects unknown names"""
        x = Tensor([1.0, -2.0])
        np.testing.assert_allclose(T.elementwise('scale', x, 3.0).data, [3.0, -6.0])
        with self.assertRaises(ConfigError):
            T.elementwise('relu', x)

    def test_binary_shape_mismatch(self):
        """Non-broadcastable binary operands raise ShapeError"""
        with self.assertRaises(ShapeError):
            T.add(Tensor(np.ones(3)), Tensor(np.ones(4)))

    def test_gradients_of_all_ops(self):
        """Every elementwise op passes the finite-difference check"""
        y = Tensor(self.rng.normal(size=(2, 3)))
        for name, f in {
            'add': lambda x: T.add(x, y),
            'sub': lambda x: T.sub(y, x),
            'mul': lambda x: T.mul(x, y),
            'scale': lambda x: T.scale(x, -0.7),
            'tanh': T.tanh,
            'sigmoid': T.sigmoid,
            'exp': T.exp,
        }.items():
            with self.subTest(op=name):
                x = Tensor(self.rng.normal(size=(2, 3)))
                error = check_gradient(lambda t: T.reduce_sum(T.mul(f(t), y)), x)
                self.assertLess(error, 1e-6)

    def test_fan_out_accumulates(self):
        """y = x + x gives grad(x) = 2 * seed"""
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = T.add(x, x)
        tape.backward(y, seed=np.array([0.5, 3.0]))
        np.testing.assert_array_equal(x.grad, [1.0, 6.0])

    def test_backward_visits_in_reverse_order(self):
        """Records replay last-to-first"""
        x = Tensor(2.0, requires_grad=True)
        with Tape() as tape:
            y = T.mul(x, x)
            z = T.tanh(y)
        self.assertIs(tape.records[-1].output, z)
        tape.backward(z)
        self.assertAlmostEqual(x.grad.item(), (1 - math.tanh(4.0) ** 2) * 4.0)

    def test_no_tape_records_nothing(self):
        """Ops outside a tape do not require gradients"""
        x = Tensor([1.0], requires_grad=True)
        self.assertFalse(T.tanh(x).requires_grad)


class SoftmaxTests(SimpleTestCase):
    """Test cases for the stabilized, maskable softmax"""

    def test_constant_logits_are_uniform(self):
        """[c,c,c] -> 1/3 each"""
        for c in (-50.0, 0.0, 123.4):
            np.testing.assert_allclose(T.softmax(Tensor([c, c, c])).data, [1 / 3] * 3, atol=1e-15)

    def test_log_logits(self):
        """[ln1, ln2, ln3] -> [1/6, 2/6, 3/6]"""
        out = T.softmax(Tensor(np.log([1.0, 2.0, 3.0])))
        np.testing.assert_allclose(out.data, [1 / 6, 2 / 6, 3 / 6], atol=1e-15)

    def test_large_logits_do_not_overflow(self):
        """[1000, 0] -> [1, ~0]"""
        out = T.softmax(Tensor([1000.0, 0.0]))
        self.assertTrue(np.all(np.isfinite(out.data)))
        self.assertEqual(out.data[0], 1.0)
        self.assertLess(out.data[1], 1e-300)

    def test_mask_zeroes_invalid_entries(self):
        """Masked entries are exactly zero and the rest sum to one"""
        logits = Tensor([0.3, 5.0, -1.0, 2.0])
        out = T.softmax(logits, mask=[0, 2, 3])
        self.assertEqual(out.data[1], 0.0)
        self.assertAlmostEqual(out.data.sum(), 1.0, places=12)

    def test_empty_mask(self):
        """A mask without valid entries is rejected"""
        with self.assertRaises(ShapeError):
            T.softmax(Tensor([1.0, 2.0]), mask=np.zeros(2, dtype=bool))

    def test_cross_entropy_gradient(self):
        """softmax cross-entropy of random logits passes the gradient check"""
        rng = np.random.default_rng(3)
        target = 2

        def loss(x):
            return T.scale(T.getitem(T.log_softmax(x), target), -1.0)

        error = check_gradient(loss, Tensor(rng.normal(size=6)))
        self.assertLess(error, 1e-6)

    def test_masked_softmax_gradient(self):
        """Row-wise masked softmax passes the gradient check"""
        rng = np.random.default_rng(5)
        mask = np.array([[True, False, True], [True, True, True]])
        w = Tensor(rng.normal(size=(2, 3)))
        error = check_gradient(lambda x: T.reduce_sum(T.mul(T.softmax(x, mask=mask), w)),
                               Tensor(rng.normal(size=(2, 3))))
        self.assertLess(error, 1e-6)

    def test_probability_vector_property(self):
        """Random trials stay non-negative and sum to one"""
        rng = np.random.default_rng(9)
        for _ in range(200):
            n = rng.integers(1, 12)
            out = T.softmax(Tensor(rng.normal(scale=20.0, size=n))).data
            self.assertTrue(np.all(out >= 0.0))
            self.assertLess(abs(out.sum() - 1.0), 1e-9)


class StructureOpTests(SimpleTestCase):
    """Test cases for concat, split, stack, getitem and contract"""

    def setUp(self):
        self.rng = np.random.default_rng(13)

    def test_concat_vectors(self):
        """[1,2] ++ [3] = [1,2,3]"""
        np.testing.assert_array_equal(T.concat(Tensor([1.0, 2.0]), Tensor([3.0])).data, [1, 2, 3])

    def test_concat_split_round_trip(self):
        """split undoes concat exactly"""
        a, b = Tensor(self.rng.normal(size=(2, 3))), Tensor(self.rng.normal(size=(2, 4)))
        left, right = T.split(T.concat(a, b), [3, 4])
        np.testing.assert_array_equal(left.data, a.data)
        np.testing.assert_array_equal(right.data, b.data)

    def test_concat_gradient_is_ones(self):
        """d sum(concat(a, b)) is ones into both operands"""
        a, b = Tensor([1.0, 2.0], requires_grad=True), Tensor([3.0], requires_grad=True)
        with Tape() as tape:
            out = T.reduce_sum(T.concat(a, b))
        tape.backward(out)
        np.testing.assert_array_equal(a.grad, [1.0, 1.0])
        np.testing.assert_array_equal(b.grad, [1.0])

    def test_concat_shape_mismatch(self):
        """Off-axis extents must agree"""
        with self.assertRaises(ShapeError):
            T.concat(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3))))

    def test_gather_accumulates_repeats(self):
        """Repeated gather indices add their gradients"""
        table = Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
        with Tape() as tape:
            rows = T.getitem(table, np.array([0, 2, 0]))
            out = T.reduce_sum(rows)
        tape.backward(out)
        np.testing.assert_array_equal(table.grad, [[2, 2], [0, 0], [1, 1]])

    def test_contract_and_stack_gradients(self):
        """Batched dot products and stacking pass the gradient check"""
        tensors = {
            'h': Tensor(self.rng.normal(size=(2, 3, 4))),
            'q': Tensor(self.rng.normal(size=(2, 4))),
        }

        def f():
            scores = T.contract('bsn,bn->bs', tensors['h'], tensors['q'])
            ctx = T.contract('bs,bsn->bn', T.softmax(scores), tensors['h'])
            stacked = T.stack([ctx, tensors['q']], axis=0)
            return T.reduce_sum(T.tanh(stacked))

        errors = check_parameter_gradients(f, tensors)
        self.assertLess(max(errors.values()), 1e-6)


class DropoutTests(SimpleTestCase):
    """Test cases for inverted dropout masks"""

    def test_zero_probability_is_all_ones(self):
        mask = T.dropout_mask((4, 5), 0.0, np.random.default_rng(0))
        np.testing.assert_array_equal(mask.data, np.ones((4, 5)))

    def test_evaluation_mode_is_all_ones(self):
        mask = T.dropout_mask((3,), 0.5, np.random.default_rng(0), train=False)
        np.testing.assert_array_equal(mask.data, np.ones(3))

    def test_expectation_is_preserved(self):
        """Mean of 10^6 entries at p=0.2 is 1 within 0.01"""
        mask = T.dropout_mask((1_000_000,), 0.2, np.random.default_rng(42))
        self.assertLess(abs(mask.data.mean() - 1.0), 0.01)
        self.assertEqual(set(np.unique(mask.data)), {0.0, 1.25})

    def test_seed_determinism(self):
        a = T.dropout_mask((50,), 0.3, np.random.default_rng(5))
        b = T.dropout_mask((50,), 0.3, np.random.default_rng(5))
        np.testing.assert_array_equal(a.data, b.data)

    def test_probability_one_is_rejected(self):
        with self.assertRaises(ConfigError):
            T.dropout_mask((2,), 1.0, np.random.default_rng(0))


class GradientCheckTests(SimpleTestCase):
    """Test cases for the finite-difference oracle itself"""

    def test_sum_has_unit_gradient(self):
        x = Tensor(np.random.default_rng(1).normal(size=5))
        self.assertLess(check_gradient(T.reduce_sum, x), 1e-9)
        np.testing.assert_allclose(x.grad, np.ones(5))

    def test_non_finite_value_is_rejected(self):
        with self.assertRaises(NumericalError):
            check_gradient(lambda x: T.scale(T.reduce_sum(x), float('inf')), Tensor([1.0]))
