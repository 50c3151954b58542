"""The artificial-visual-cortex pipeline.

Visual maps (three evolved trees + the fixed intensity formula) feed a
nine-level Gaussian pyramid per dimension; six center-surround differences
are normalized, rescaled and summed into a conspicuity map; the mental trees
transform each conspicuity map and their sum is pooled into a fixed-length
descriptor of the n largest responses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import imagery, primitives, trees
from .errors import ConfigError, DataError
from .genome import Genome
from .imagery import ColorSet

PYRAMID_LEVELS = 9
MIN_PYRAMID_SIDE = 2 ** (PYRAMID_LEVELS - 1)  # 256

# j = 1..6 of the center-surround level formula: (floor((j+9)/2)+1, floor((j+2)/2)+1)
CENTER_SURROUND_PAIRS = tuple(
    ((j + 9) // 2 + 1, (j + 2) // 2 + 1) for j in range(1, 7)
)

DIMENSION_KEYS = ("orientation", "color", "shape", "intensity")


@dataclass
class VisualMaps:
    orientation: np.ndarray
    color: np.ndarray
    shape: np.ndarray
    intensity: np.ndarray

    def as_dict(self):
        return {k: getattr(self, k) for k in DIMENSION_KEYS}


@dataclass
class Pyramid:
    """Nine smoothed-and-halved levels plus the reflect-padding bookkeeping."""

    levels: list
    pad: tuple  # (top, left, original_h, original_w)

    def __post_init__(self):
        if len(self.levels) != PYRAMID_LEVELS:
            raise DataError(f"pyramid needs {PYRAMID_LEVELS} levels")


def compute_visual_maps(g: Genome, cs: ColorSet, opponency: str = "diff") -> VisualMaps:
    """Evaluate the genome's three VO trees and the fixed intensity formula."""
    def run(tree):
        env = trees.env_for_colorset(cs, tree.dimension, opponency)
        return trees.eval_tree(tree, env)

    return VisualMaps(
        orientation=run(g.vo_orientation),
        color=run(g.vo_color),
        shape=run(g.vo_shape),
        intensity=imagery.intensity_map(cs),
    )


def _pad_to_min(vm: np.ndarray):
    h, w = vm.shape
    ph, pw = max(0, MIN_PYRAMID_SIDE - h), max(0, MIN_PYRAMID_SIDE - w)
    if ph == 0 and pw == 0:
        return vm, (0, 0, h, w)
    top, left = ph // 2, pw // 2
    padded = np.pad(vm, ((top, ph - top), (left, pw - left)), mode="reflect")
    return padded, (top, left, h, w)


def build_pyramid(vm: np.ndarray) -> Pyramid:
    """P0 = map; each next level is the Gaussian-smoothed map halved bilinearly.

    Inputs smaller than 256 on a side are reflect-padded up to 256 first;
    the pad is recorded so the conspicuity map can be cropped back.
    """
    base, pad = _pad_to_min(vm)
    levels = [base]
    for _ in range(PYRAMID_LEVELS - 1):
        prev = levels[-1]
        h, w = prev.shape
        nh, nw = (h + 1) // 2, (w + 1) // 2
        smoothed = primitives.gaussian(prev, 1.0)
        levels.append(imagery.resize_map(smoothed, nh, nw))
    return Pyramid(levels, pad)


def _normalize_unit(q: np.ndarray) -> np.ndarray:
    lo, hi = float(q.min()), float(q.max())
    if hi <= lo:
        return np.zeros_like(q)
    return (q - lo) / (hi - lo)


def center_surround(p: Pyramid, normalize_after_rescale: bool = False) -> np.ndarray:
    """Combine the six center-surround level pairs into one conspicuity map.

    Each difference is taken on the finer level's grid (the coarser operand
    is upsampled bilinearly), min-max normalized to [0,1], rescaled to the
    level-0 size and summed. Any pyramid padding is cropped off at the end.
    """
    h0, w0 = p.levels[0].shape
    cm = np.zeros((h0, w0))
    for coarse_idx, fine_idx in CENTER_SURROUND_PAIRS:
        coarse, fine = p.levels[coarse_idx], p.levels[fine_idx]
        up = imagery.resize_map(coarse, *fine.shape)
        q = up - fine
        if normalize_after_rescale:
            q = _normalize_unit(imagery.resize_map(q, h0, w0))
        else:
            q = imagery.resize_map(_normalize_unit(q), h0, w0)
        cm += q
    top, left, h, w = p.pad
    return cm[top:top + h, left:left + w]


def compute_mental_map(cm: np.ndarray, mm_trees) -> np.ndarray:
    """Sum of the mental trees evaluated over one conspicuity map."""
    if not 1 <= len(mm_trees) <= 9:
        raise DataError("mental-tree count must be 1..9")
    env = trees.env_for_cm(cm)
    out = np.zeros_like(cm)
    for tree in mm_trees:
        if tree.dimension != trees.MENTAL:
            raise DataError(f"mental map got a {tree.dimension!r} tree")
        out += trees.eval_tree(tree, env)
    return out


def build_descriptor(mms, n: int) -> np.ndarray:
    """The n largest values over the concatenated mental maps, sorted descending."""
    if n < 4:
        raise ConfigError(f"descriptor length must be >= 4, got {n}")
    flat = np.concatenate([m.ravel() for m in mms])
    if n > flat.size:
        raise ConfigError(f"descriptor length {n} exceeds {flat.size} available values")
    top = np.partition(flat, flat.size - n)[flat.size - n:]
    return np.sort(top)[::-1].copy()


def extract_descriptor(g: Genome, cs: ColorSet, n: int, opponency: str = "diff",
                       normalize_after_rescale: bool = False) -> np.ndarray:
    """Full pipeline: ColorSet -> VMs -> CMs -> MMs -> top-n descriptor."""
    vms = compute_visual_maps(g, cs, opponency)
    mms = []
    for key in DIMENSION_KEYS:
        pyr = build_pyramid(vms.as_dict()[key])
        cm = center_surround(pyr, normalize_after_rescale)
        mms.append(compute_mental_map(cm, g.mm_trees))
    return build_descriptor(mms, n)


def stage_maps(g: Genome, cs: ColorSet, opponency: str = "diff") -> dict:
    """Named intermediate maps of every stage, for heatmap dumps."""
    vms = compute_visual_maps(g, cs, opponency)
    out = {}
    for key in DIMENSION_KEYS:
        vm = vms.as_dict()[key]
        cm = center_surround(build_pyramid(vm))
        out[f"vm_{key}"] = vm
        out[f"cm_{key}"] = cm
        out[f"mm_{key}"] = compute_mental_map(cm, g.mm_trees)
    return out


class AvcDescriptorExtractor(BaseEstimator, TransformerMixin):
    """sklearn-style transformer: images (or ColorSets) -> descriptor matrix.

    Parameters
    ----------
    genome : Genome
        The evolved multi-tree program configuring the pipeline.
    n_features : int
        Descriptor length (count of pooled maxima).
    max_side : int or None
        Optional bilinear max-side resize applied to raw rasters first.
    """

    def __init__(self, genome=None, n_features=40, max_side=None,
                 opponency="diff", normalize_after_rescale=False):
        self.genome = genome
        self.n_features = n_features
        self.max_side = max_side
        self.opponency = opponency
        self.normalize_after_rescale = normalize_after_rescale

    def fit(self, X, y=None):
        if self.genome is None:
            raise ConfigError("AvcDescriptorExtractor needs a genome")
        return self

    def _colorset(self, item) -> ColorSet:
        if isinstance(item, ColorSet):
            return item
        if isinstance(item, imagery.LabeledImage):
            if self.max_side is None:
                return item.colorset
            item = item.pixels
        raster = np.asarray(item)
        if raster.dtype != np.uint8:
            raise DataError("raster inputs must be uint8 RGB")
        if self.max_side is not None:
            raster = imagery.resize_raster_max_side(raster, self.max_side)
        return imagery.decompose_colors(raster)

    def transform_one(self, item) -> np.ndarray:
        return extract_descriptor(self.genome, self._colorset(item), self.n_features,
                                  self.opponency, self.normalize_after_rescale)

    def transform(self, X):
        self.fit(X)
        return np.stack([self.transform_one(item) for item in X])
