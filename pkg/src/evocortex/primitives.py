"""Map-level semantics of the evolvable operator set.

All operators are total over finite float64 maps: division/log/sqrt/exp are
protected and every result is clamped to +-VALUE_CAP so that arbitrarily
nested trees (squaring chains in particular) can never produce NaN/Inf.
"""

from __future__ import annotations

import cv2
import numpy as np
from skimage.morphology import skeletonize

cv2.setNumThreads(1)

EPS = 1e-6
VALUE_CAP = 1e150

# Structuring elements: disk r=2, 3x3 square, diamond r=2.
_yy, _xx = np.mgrid[-2:3, -2:3]
SE_DISK = ((_yy ** 2 + _xx ** 2) <= 4).astype(np.uint8)
SE_SQUARE = np.ones((3, 3), np.uint8)
SE_DIAMOND = ((np.abs(_yy) + np.abs(_xx)) <= 2).astype(np.uint8)
del _yy, _xx


def _cap(a):
    return np.clip(a, -VALUE_CAP, VALUE_CAP)


def protected_div(a, b):
    # denominator sign(b) * max(|b|, EPS), with sign(0) treated as +1
    denom = np.where(b < 0, -1.0, 1.0) * np.maximum(np.abs(b), EPS)
    return _cap(a / denom)


def protected_log(a):
    return np.log(np.abs(a) + EPS)


def protected_sqrt(a):
    return np.sqrt(np.abs(a))


def protected_exp(a):
    # exp(710) overflows float64; clip the exponent, then cap
    return _cap(np.exp(np.minimum(a, 700.0)))


def gaussian(a, sigma):
    """Gaussian smoothing, normalized kernel of radius ceil(3*sigma), replicate border."""
    radius = int(np.ceil(3 * sigma))
    ksize = 2 * radius + 1
    return cv2.GaussianBlur(a, (ksize, ksize), sigma, borderType=cv2.BORDER_REPLICATE)


def deriv_x(a):
    """Central difference along x (columns) with replicate padding."""
    p = np.pad(a, ((0, 0), (1, 1)), mode="edge")
    return (p[:, 2:] - p[:, :-2]) * 0.5


def deriv_y(a):
    """Central difference along y (rows) with replicate padding."""
    p = np.pad(a, ((1, 1), (0, 0)), mode="edge")
    return (p[2:, :] - p[:-2, :]) * 0.5


def deriv(a, direction):
    if direction == "x":
        return deriv_x(a)
    if direction == "y":
        return deriv_y(a)
    if direction == "xx":
        return deriv_x(deriv_x(a))
    if direction == "yy":
        return deriv_y(deriv_y(a))
    if direction == "xy":
        return deriv_y(deriv_x(a))
    raise ValueError(f"unknown derivative direction {direction!r}")


def threshold(a):
    """Binary threshold at the map mean -> {0,1} map."""
    return (a > a.mean()).astype(np.float64)


def dilate(a, se):
    return cv2.dilate(a, se, borderType=cv2.BORDER_REPLICATE)


def erode(a, se):
    return cv2.erode(a, se, borderType=cv2.BORDER_REPLICATE)


def opening(a, se):
    return dilate(erode(a, se), se)


def closing(a, se):
    return erode(dilate(a, se), se)


def top_hat(a, se=SE_SQUARE):
    return a - opening(a, se)


def bottom_hat(a, se=SE_SQUARE):
    return closing(a, se) - a


def hit_or_miss(a, se):
    """Binary hit-or-miss; misses are the complement of the SE inside its window."""
    b = threshold(a)
    hit = erode(b, se)
    miss_se = (1 - se).astype(np.uint8)
    if miss_se.any():
        miss = erode(1.0 - b, miss_se)
    else:
        miss = np.ones_like(b)
    return hit * miss


def skeleton(a):
    """Binary skeleton of thr(A)."""
    b = threshold(a) > 0.5
    return skeletonize(b).astype(np.float64)


def perimeter(a):
    """Inner boundary of thr(A): pixels of the foreground eroded away by the 3x3 square."""
    b = threshold(a)
    return b - erode(b, SE_SQUARE)


# symbol -> (arity, uses_constant, callable). Binary callables take (a, b),
# constant callables take (k, a), plain unaries take (a).
FUNCTIONS = {
    "add": (2, False, lambda a, b: _cap(a + b)),
    "sub": (2, False, lambda a, b: _cap(a - b)),
    "mul": (2, False, lambda a, b: _cap(a * b)),
    "div": (2, False, protected_div),
    "k_add": (1, True, lambda k, a: _cap(k + a)),
    "k_sub": (1, True, lambda k, a: _cap(k - a)),
    "k_mul": (1, True, lambda k, a: _cap(k * a)),
    "div_k": (1, True, lambda k, a: _cap(a / max(k, EPS))),
    "abs": (1, False, np.abs),
    "abs_add": (2, False, lambda a, b: np.abs(_cap(a + b))),
    "abs_sub": (2, False, lambda a, b: np.abs(_cap(a - b))),
    "log": (1, False, protected_log),
    "exp": (1, False, protected_exp),
    "square": (1, False, lambda a: _cap(a * a)),
    "sqrt": (1, False, protected_sqrt),
    "complement": (1, False, lambda a: 1.0 - a),
    "round": (1, False, np.rint),
    "floor": (1, False, np.floor),
    "ceil": (1, False, np.ceil),
    "inf": (2, False, np.minimum),
    "sup": (2, False, np.maximum),
    "gauss1": (1, False, lambda a: gaussian(a, 1.0)),
    "gauss2": (1, False, lambda a: gaussian(a, 2.0)),
    "dx": (1, False, deriv_x),
    "dy": (1, False, deriv_y),
    "thr": (1, False, threshold),
    "dilate_disk": (1, False, lambda a: dilate(a, SE_DISK)),
    "dilate_square": (1, False, lambda a: dilate(a, SE_SQUARE)),
    "dilate_diamond": (1, False, lambda a: dilate(a, SE_DIAMOND)),
    "erode_disk": (1, False, lambda a: erode(a, SE_DISK)),
    "erode_square": (1, False, lambda a: erode(a, SE_SQUARE)),
    "erode_diamond": (1, False, lambda a: erode(a, SE_DIAMOND)),
    "open_square": (1, False, lambda a: opening(a, SE_SQUARE)),
    "close_square": (1, False, lambda a: closing(a, SE_SQUARE)),
    "skeleton": (1, False, skeleton),
    "perimeter": (1, False, perimeter),
    "hitmiss_disk": (1, False, lambda a: hit_or_miss(a, SE_DISK)),
    "hitmiss_square": (1, False, lambda a: hit_or_miss(a, SE_SQUARE)),
    "hitmiss_diamond": (1, False, lambda a: hit_or_miss(a, SE_DIAMOND)),
    "tophat": (1, False, top_hat),
    "bothat": (1, False, bottom_hat),
}


def arity(symbol) -> int:
    return FUNCTIONS[symbol][0]


def uses_constant(symbol) -> bool:
    return FUNCTIONS[symbol][1]


def apply_function(symbol, constant, args):
    ar, needs_k, fn = FUNCTIONS[symbol]
    if needs_k:
        return fn(constant, *args)
    return fn(*args)
