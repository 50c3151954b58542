"""Fast gradient-sign attack against a white-box gradient provider."""

from __future__ import annotations

import numpy as np

from ..imagery import quantize, to_unit
from . import AdversarialExample

DEFAULT_EPSILONS = (2, 4, 8, 16, 32)


def fgsm(model, raster: np.ndarray, label: int, epsilon: int) -> AdversarialExample:
    """One ascent step of size epsilon (8-bit units) along sign(dJ/dx).

    ``model`` must expose ``input_gradient(raster, label)`` returning the
    loss gradient at the raster's own resolution. The true label is used,
    so the step increases the classifier's loss (untargeted). The result is
    clamped to [0,255] and quantized, which keeps ||x - x_adv||_inf <= epsilon
    exactly.
    """
    x = to_unit(raster)
    if epsilon == 0:
        return AdversarialExample(raster, raster.copy(), "fgsm", {"epsilon": 0})
    grad = model.input_gradient(raster, label)
    x_adv = np.clip(x + (epsilon / 255.0) * np.sign(grad), 0.0, 1.0)
    return AdversarialExample(raster, quantize(x_adv), "fgsm", {"epsilon": int(epsilon)}).check_budget()
