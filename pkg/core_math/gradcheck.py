"""Central finite differences against the tape's reverse-mode gradients."""
import logging

import numpy as np

from .exceptions import NumericalError
from .tensor import Tape

logger = logging.getLogger(__name__)


def relative_error(analytic, numeric, floor=1e-8):
    return np.abs(analytic - numeric) / np.maximum(floor, np.abs(analytic) + np.abs(numeric))


def _evaluate(f):
    value = f()
    value = float(np.asarray(value.data).sum())
    if not np.isfinite(value):
        raise NumericalError(f"function value is not finite: {value}")
    return value


def check_parameter_gradients(f, tensors, eps=1e-5, max_coords=None, rng=None, floor=1e-8):
    """
    Compare reverse-mode gradients of the scalar ``f()`` with respect to each
    tensor in ``tensors`` (a name -> Tensor mapping) with central differences.

    ``max_coords`` limits the number of checked coordinates per tensor; they
    are drawn with ``rng``. Errors are relative to ``max(floor, |analytic| +
    |numeric|)``. Returns ``{name: max relative error}``.
    """
    for tensor in tensors.values():
        tensor.requires_grad = True
        tensor.zero_grad()
    with Tape() as tape:
        value = f()
    if not np.all(np.isfinite(value.data)):
        raise NumericalError(f"function value is not finite: {value.data}")
    tape.backward(value)
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros(t.shape))
        for name, t in tensors.items()
    }

    errors = {}
    for name, tensor in tensors.items():
        coords = list(np.ndindex(*tensor.shape))
        if max_coords is not None and len(coords) > max_coords:
            rng = rng or np.random.default_rng(0)
            picked = rng.choice(len(coords), size=max_coords, replace=False)
            coords = [coords[i] for i in sorted(picked)]
        worst = 0.0
        for idx in coords:
            original = tensor.data[idx]
            tensor.data[idx] = original + eps
            plus = _evaluate(f)
            tensor.data[idx] = original - eps
            minus = _evaluate(f)
            tensor.data[idx] = original
            numeric = (plus - minus) / (2.0 * eps)
            worst = max(worst, float(relative_error(analytic[name][idx], numeric, floor)))
        errors[name] = worst
        logger.debug(f"gradient check {name}: max relative error {worst:.3e} over {len(coords)} coords")
    return errors


def check_gradient(f, x, eps=1e-5):
    """Max relative error between the gradient of scalar ``f(x)`` and central differences."""
    errors = check_parameter_gradients(lambda: f(x), {'x': x}, eps=eps)
    return errors['x']
