"""Adversarial example generators: FGSM, multi-pixel DE, EOT patch."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError


@dataclass
class AdversarialExample:
    """A perturbed 8-bit image plus the norms its attack must respect."""

    original: np.ndarray     # (H,W,3) uint8
    perturbed: np.ndarray    # (H,W,3) uint8
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.original.shape != self.perturbed.shape:
            raise DataError("original and perturbed shapes differ")
        if self.original.dtype != np.uint8 or self.perturbed.dtype != np.uint8:
            raise DataError("adversarial images must be 8-bit")

    @property
    def linf_norm(self) -> int:
        """Max per-channel change in 8-bit units."""
        diff = self.original.astype(np.int16) - self.perturbed.astype(np.int16)
        return int(np.abs(diff).max())

    @property
    def l0_count(self) -> int:
        """Number of pixel sites (not channels) that changed."""
        changed = np.any(self.original != self.perturbed, axis=-1)
        return int(changed.sum())

    def check_budget(self):
        if self.kind == "fgsm" and self.linf_norm > self.params.get("epsilon", 255):
            raise DataError(f"fgsm L_inf {self.linf_norm} exceeds {self.params['epsilon']}")
        if self.kind == "pixels" and self.l0_count > self.params.get("budget", 1 << 30):
            raise DataError(f"pixel L0 {self.l0_count} exceeds {self.params['budget']}")
        return self


from .fgsm import fgsm  # noqa: E402
from .pixels import DeParams, de_pixel_attack  # noqa: E402
from .patch import Patch, apply_patch, train_patch  # noqa: E402

__all__ = [
    "AdversarialExample", "fgsm", "DeParams", "de_pixel_attack",
    "Patch", "apply_patch", "train_patch",
]
