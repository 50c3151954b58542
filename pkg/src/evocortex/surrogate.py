"""Small differentiable softmax image classifier (the white-box target).

Everything is plain float64 numpy: two 3x3 conv layers with relu and 2x2
max-pooling, then a dense softmax head. Backpropagation provides exact
parameter gradients and exact input gradients; the classifier wrapper
resizes arbitrary rasters to the network side with an explicit separable
bilinear operator whose adjoint carries gradients back to native resolution.
"""

from __future__ import annotations

import json
import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator, ClassifierMixin

from .errors import ConfigError, DataError, TrainingError
from .imagery import LabeledImage, to_unit

CLASS_ORDER = (-1, 1)  # probability columns: index 0 -> label -1, index 1 -> +1


def label_to_index(label):
    return CLASS_ORDER.index(int(label))


def make_resize_matrix(n_out: int, n_in: int) -> np.ndarray:
    """1-D bilinear interpolation matrix with half-pixel centers."""
    if n_out == n_in:
        return np.eye(n_out)
    src = np.clip((np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5, 0, n_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    w = src - lo
    M = np.zeros((n_out, n_in))
    M[np.arange(n_out), lo] += 1 - w
    M[np.arange(n_out), hi] += w
    return M


def resize_image(img: np.ndarray, rh: np.ndarray, rw: np.ndarray) -> np.ndarray:
    """(H,W,3) -> (h,w,3) through the separable operator (rh, rw)."""
    tmp = np.tensordot(rh, img, axes=(1, 0))          # (h, W, 3)
    return np.tensordot(tmp, rw, axes=(1, 1)).transpose(0, 2, 1)


def resize_adjoint(grad: np.ndarray, rh: np.ndarray, rw: np.ndarray) -> np.ndarray:
    """Exact adjoint of resize_image: (h,w,3) grads -> (H,W,3) grads."""
    tmp = np.tensordot(rh.T, grad, axes=(1, 0))       # (H, w, 3)
    return np.tensordot(tmp, rw.T, axes=(1, 1)).transpose(0, 2, 1)


def _conv_forward(x, W, b):
    """Same-padded 3x3 convolution. x: (N,C,H,W); W: (Cout,C,3,3)."""
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))    # (N,C,H,W,3,3)
    out = np.tensordot(win, W, axes=([1, 4, 5], [1, 2, 3]))  # (N,H,W,Cout)
    return out.transpose(0, 3, 1, 2) + b[None, :, None, None], win


def _conv_backward(dout, win, W, x_shape):
    dW = np.tensordot(dout, win, axes=([0, 2, 3], [0, 2, 3]))  # (Cout,C,3,3)
    db = dout.sum(axis=(0, 2, 3))
    # full correlation of dout with the flipped kernel gives dx
    dp = np.pad(dout, ((0, 0), (0, 0), (1, 1), (1, 1)))
    dwin = sliding_window_view(dp, (3, 3), axis=(2, 3))        # (N,Cout,H,W,3,3)
    Wflip = W[:, :, ::-1, ::-1]
    dx = np.tensordot(dwin, Wflip, axes=([1, 4, 5], [0, 2, 3]))  # (N,H,W,C)
    return dW, db, dx.transpose(0, 3, 1, 2)


def _pool_forward(x):
    n, c, h, w = x.shape
    blocks = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = blocks.reshape(n, c, h // 2, w // 2, 4)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return out, idx


def _pool_backward(dout, idx, x_shape):
    n, c, h, w = x_shape
    dflat = np.zeros((n, c, h // 2, w // 2, 4))
    np.put_along_axis(dflat, idx[..., None], dout[..., None], axis=-1)
    blocks = dflat.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return blocks.reshape(n, c, h, w)


class ConvNet:
    """conv(3->c1) relu pool conv(c1->c2) relu pool dense(2) softmax."""

    def __init__(self, side=64, channels=(8, 16), seed=0):
        if side % 4 != 0 or side < 8:
            raise ConfigError("network side must be a multiple of 4 and >= 8")
        self.side = side
        self.channels = tuple(channels)
        self.seed = seed
        c1, c2 = self.channels
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        feat = c2 * (side // 4) ** 2
        self.params = {
            "W1": rng.normal(0, np.sqrt(2.0 / (3 * 9)), size=(c1, 3, 3, 3)),
            "b1": np.zeros(c1),
            "W2": rng.normal(0, np.sqrt(2.0 / (c1 * 9)), size=(c2, c1, 3, 3)),
            "b2": np.zeros(c2),
            "Wd": rng.normal(0, np.sqrt(1.0 / feat), size=(2, feat)),
            "bd": np.zeros(2),
        }

    def forward(self, x, want_cache=False):
        """x: (N,3,side,side) in [0,1] -> class probabilities (N,2)."""
        if x.ndim != 4 or x.shape[1:] != (3, self.side, self.side):
            raise DataError(f"input shape {x.shape} does not match (N,3,{self.side},{self.side})")
        p = self.params
        z1, win1 = _conv_forward(x, p["W1"], p["b1"])
        a1 = np.maximum(z1, 0.0)
        p1, idx1 = _pool_forward(a1)
        z2, win2 = _conv_forward(p1, p["W2"], p["b2"])
        a2 = np.maximum(z2, 0.0)
        p2, idx2 = _pool_forward(a2)
        flat = p2.reshape(len(x), -1)
        logits = flat @ p["Wd"].T + p["bd"]
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        probs = e / e.sum(axis=1, keepdims=True)
        if not want_cache:
            return probs
        cache = dict(x=x, z1=z1, win1=win1, a1=a1, idx1=idx1, p1=p1,
                     z2=z2, win2=win2, a2=a2, idx2=idx2, p2=p2,
                     flat=flat, probs=probs)
        return probs, cache

    def loss_and_grads(self, x, y_idx):
        """Mean cross-entropy over the batch plus parameter and input grads."""
        p = self.params
        probs, cache = self.forward(x, want_cache=True)
        n = len(x)
        eps = 1e-300
        loss = float(-np.mean(np.log(probs[np.arange(n), y_idx] + eps)))

        dlogits = probs.copy()
        dlogits[np.arange(n), y_idx] -= 1.0
        dlogits /= n
        grads = {
            "Wd": dlogits.T @ cache["flat"],
            "bd": dlogits.sum(axis=0),
        }
        dflat = dlogits @ p["Wd"]
        dp2 = dflat.reshape(cache["p2"].shape)
        da2 = _pool_backward(dp2, cache["idx2"], cache["a2"].shape)
        dz2 = da2 * (cache["z2"] > 0)
        grads["W2"], grads["b2"], dp1 = _conv_backward(dz2, cache["win2"], p["W2"], cache["p1"].shape)
        da1 = _pool_backward(dp1, cache["idx1"], cache["a1"].shape)
        dz1 = da1 * (cache["z1"] > 0)
        grads["W1"], grads["b1"], dx = _conv_backward(dz1, cache["win1"], p["W1"], x.shape)
        return loss, grads, dx

    def input_gradient(self, x, y_idx):
        """Exact d(cross-entropy)/d(input) for a single (3,side,side) input."""
        _, _, dx = self.loss_and_grads(x[None], np.array([y_idx]))
        return dx[0]

    def clone_params(self):
        return {k: v.copy() for k, v in self.params.items()}

    # -- persistence -------------------------------------------------------
    def save(self, path_prefix, extra=None):
        """Write <prefix>.json header + <prefix>.bin flat float64 tensors."""
        order = sorted(self.params)
        header = {
            "side": self.side,
            "channels": list(self.channels),
            "seed": self.seed,
            "tensors": [{"name": k, "shape": list(self.params[k].shape)} for k in order],
            "extra": extra or {},
        }
        with open(f"{path_prefix}.json", "w") as fh:
            json.dump(header, fh, indent=2, sort_keys=True)
        flat = np.concatenate([self.params[k].ravel() for k in order])
        flat.astype("<f8").tofile(f"{path_prefix}.bin")

    @classmethod
    def load(cls, path_prefix):
        with open(f"{path_prefix}.json") as fh:
            header = json.load(fh)
        net = cls(side=header["side"], channels=tuple(header["channels"]), seed=header["seed"])
        flat = np.fromfile(f"{path_prefix}.bin", dtype="<f8")
        pos = 0
        for spec in header["tensors"]:
            size = int(np.prod(spec["shape"]))
            net.params[spec["name"]] = flat[pos:pos + size].reshape(spec["shape"]).copy()
            pos += size
        if pos != flat.size:
            raise DataError(f"checkpoint size mismatch reading {path_prefix}.bin")
        return net, header.get("extra", {})


def train_net(net: ConvNet, x, y_idx, epochs, lr, batch_size=16, momentum=0.9,
              rng=None, x_val=None, y_val=None, on_epoch=None):
    """Mini-batch SGD with momentum; raises TrainingError on divergence."""
    rng = rng or np.random.default_rng(np.random.SeedSequence(net.seed + 1))
    n = len(x)
    velocity = {k: np.zeros_like(v) for k, v in net.params.items()}
    log = []
    last_good = net.clone_params()
    for epoch in range(epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            loss, grads, _ = net.loss_and_grads(x[idx], y_idx[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"training diverged at epoch {epoch}", checkpoint=last_good)
            for k in net.params:
                velocity[k] = momentum * velocity[k] - lr * grads[k]
                net.params[k] += velocity[k]
            losses.append(loss)
        last_good = net.clone_params()
        entry = {"epoch": epoch, "loss": float(np.mean(losses)),
                 "train_acc": float(np.mean(net.forward(x).argmax(axis=1) == y_idx))}
        if x_val is not None:
            entry["val_acc"] = float(np.mean(net.forward(x_val).argmax(axis=1) == y_val))
        log.append(entry)
        if on_epoch:
            on_epoch(entry)
    return log


class SurrogateClassifier(BaseEstimator, ClassifierMixin):
    """sklearn-style wrapper: rasters of any size -> resize -> ConvNet.

    ``input_gradient`` returns the exact loss gradient at the *native*
    raster resolution by pushing the network input gradient back through
    the adjoint of the bilinear resize.
    """

    def __init__(self, side=64, channels=(8, 16), epochs=20, lr=0.05,
                 batch_size=16, momentum=0.9, random_state=0):
        self.side = side
        self.channels = channels
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.momentum = momentum
        self.random_state = random_state

    # -- input plumbing ----------------------------------------------------
    def _matrices(self, h, w):
        if not hasattr(self, "_resize_cache"):
            self._resize_cache = {}
        key = (h, w)
        if key not in self._resize_cache:
            self._resize_cache[key] = (make_resize_matrix(self.side, h),
                                       make_resize_matrix(self.side, w))
        return self._resize_cache[key]

    def _to_unit_image(self, item):
        if isinstance(item, LabeledImage):
            item = item.pixels
        arr = np.asarray(item)
        if arr.dtype == np.uint8:
            return to_unit(arr)
        arr = arr.astype(np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise DataError("surrogate inputs must be (H,W,3) images")
        return arr

    def _net_input(self, item):
        img = self._to_unit_image(item)
        rh, rw = self._matrices(*img.shape[:2])
        return resize_image(img, rh, rw).transpose(2, 0, 1)

    def _batch(self, X):
        return np.stack([self._net_input(item) for item in X])

    # -- estimator API -----------------------------------------------------
    def fit(self, X, y, validation=None, on_epoch=None):
        y = np.asarray(y, dtype=int)
        if set(np.unique(y)) != {-1, 1}:
            raise ConfigError("surrogate training needs both labels present")
        xb = self._batch(list(X))
        yb = np.array([label_to_index(v) for v in y])
        xv = yv = None
        if validation is not None:
            xv = self._batch(list(validation[0]))
            yv = np.array([label_to_index(v) for v in np.asarray(validation[1], dtype=int)])
        self.net_ = ConvNet(side=self.side, channels=tuple(self.channels),
                            seed=self.random_state)
        rng = np.random.default_rng(np.random.SeedSequence(self.random_state))
        self.history_ = train_net(
            self.net_, xb, yb, epochs=self.epochs, lr=self.lr,
            batch_size=self.batch_size, momentum=self.momentum,
            rng=rng, x_val=xv, y_val=yv, on_epoch=on_epoch)
        self.classes_ = np.array(CLASS_ORDER)
        return self

    def predict_proba(self, X):
        return self.net_.forward(self._batch(list(X)))

    def predict(self, X):
        idx = self.predict_proba(X).argmax(axis=1)
        return np.array([CLASS_ORDER[i] for i in idx])

    def classify(self, image):
        """(label, confidence) of one raster; the black-box callback shape."""
        probs = self.net_.forward(self._net_input(image)[None])[0]
        i = int(probs.argmax())
        return CLASS_ORDER[i], float(probs[i])

    def proba_of(self, image, label):
        probs = self.net_.forward(self._net_input(image)[None])[0]
        return float(probs[label_to_index(label)])

    def loss(self, image, label):
        probs = self.net_.forward(self._net_input(image)[None])[0]
        return float(-np.log(probs[label_to_index(label)] + 1e-300))

    def input_gradient(self, image, label):
        """d(cross-entropy at ``label``)/d(pixels) at native resolution, in [0,1] units."""
        img = self._to_unit_image(image)
        rh, rw = self._matrices(*img.shape[:2])
        net_in = resize_image(img, rh, rw).transpose(2, 0, 1)
        g = self.net_.input_gradient(net_in, label_to_index(label))
        return resize_adjoint(g.transpose(1, 2, 0), rh, rw)

    def score(self, X, y):
        return float(np.mean(self.predict(X) == np.asarray(y)))

    # -- persistence -------------------------------------------------------
    def save(self, path_prefix):
        extra = {"history": getattr(self, "history_", []),
                 "params": {"epochs": self.epochs, "lr": self.lr,
                            "batch_size": self.batch_size, "momentum": self.momentum,
                            "random_state": self.random_state}}
        self.net_.save(os.fspath(path_prefix), extra=extra)

    @classmethod
    def load(cls, path_prefix):
        net, extra = ConvNet.load(os.fspath(path_prefix))
        params = extra.get("params", {})
        obj = cls(side=net.side, channels=net.channels,
                  epochs=params.get("epochs", 20), lr=params.get("lr", 0.05),
                  batch_size=params.get("batch_size", 16),
                  momentum=params.get("momentum", 0.9),
                  random_state=params.get("random_state", 0))
        obj.net_ = net
        obj.history_ = extra.get("history", [])
        obj.classes_ = np.array(CLASS_ORDER)
        return obj
