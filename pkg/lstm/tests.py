import numpy as np
from django.test import SimpleTestCase

from core_math import tensor as T
from core_math.exceptions import ShapeError
from core_math.gradcheck import check_parameter_gradients
from core_math.tensor import Tensor
from lstm.cell import GATE_ORDER, LstmState, carry, init_params, lstm_step


class LstmStepTestCase(SimpleTestCase):
    """Test cases for the stacked LSTM step"""

    def setUp(self):
        self.rng = np.random.default_rng(3)
        self.params = init_params(2, 4, 3, self.rng, scale=0.3)

    def test_shapes(self):
        """Every layer returns [B, n] states"""
        state, top = lstm_step(self.params, LstmState.zeros(2, 4, batch=5), Tensor(self.rng.normal(size=(5, 3))))
        self.assertEqual(top.shape, (5, 4))
        self.assertEqual(len(state.h), 2)
        self.assertEqual(state.c[0].shape, (5, 4))

    def test_zero_weights_give_half_cell_update(self):
        """With all-zero parameters every gate is 0.5 and the candidate 0"""
        for p in self.params:
            for t in (p.w_x, p.w_h, p.bias):
                t.data[...] = 0.0
        prev = LstmState.zeros(2, 4)
        prev.c[0] = Tensor(np.ones((1, 4)))
        state, _ = lstm_step(self.params, prev, Tensor(np.ones((1, 3))))
        np.testing.assert_allclose(state.c[0].data, 0.5)
        np.testing.assert_allclose(state.h[0].data, 0.5 * np.tanh(0.5))

    def test_gate_block_order(self):
        """The forget gate is the second n-wide block of the pre-activations"""
        self.assertEqual(GATE_ORDER, ('input', 'forget', 'candidate', 'output'))
        p = init_params(1, 2, 1, self.rng)[0]
        for t in (p.w_x, p.w_h, p.bias):
            t.data[...] = 0.0
        # saturate only the forget gate: the old cell passes through at ~full strength
        p.bias.data[2:4] = 50.0
        prev = LstmState.zeros(1, 2)
        prev.c[0] = Tensor(np.full((1, 2), 2.0))
        state, _ = lstm_step([p], prev, Tensor(np.zeros((1, 1))))
        np.testing.assert_allclose(state.c[0].data, 2.0, rtol=1e-12)

    def test_input_width_checked(self):
        """A wrong input width is a shape error"""
        with self.assertRaises(ShapeError):
            lstm_step(self.params, LstmState.zeros(2, 4), Tensor(np.ones((1, 5))))

    def test_carry_keeps_padded_rows(self):
        """Rows outside the mask keep their previous state exactly"""
        old = LstmState.zeros(2, 4, batch=2)
        new, _ = lstm_step(self.params, old, Tensor(self.rng.normal(size=(2, 3))))
        kept = carry(new, old, np.array([True, False]))
        np.testing.assert_array_equal(kept.h[1].data[0], new.h[1].data[0])
        np.testing.assert_array_equal(kept.h[1].data[1], 0.0)

    def test_gradients(self):
        """Two unrolled steps match central differences for every parameter"""
        tensors = {}
        for layer, p in enumerate(self.params):
            tensors.update(p.named(f"l{layer}"))
        xs = [Tensor(self.rng.normal(size=(2, 3))) for _ in range(2)]

        def f():
            state = LstmState.zeros(2, 4, batch=2)
            total = None
            for x in xs:
                state, top = lstm_step(self.params, state, x)
                term = T.reduce_sum(T.mul(top, top))
                total = term if total is None else T.add(total, term)
            return total

        errors = check_parameter_gradients(f, tensors, max_coords=12, floor=1e-5)
        self.assertLess(max(errors.values()), 1e-4)
