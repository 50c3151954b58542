"""The evolved-feature classifier: evolve a genome, train an SVM on its
descriptors, predict with calibrated confidence.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from . import evolve as ev
from .avc import AvcDescriptorExtractor
from .errors import ConfigError, DataError
from .genome import Genome
from .imagery import LabeledImage
from .svm import LinearSvm


def check_image_list(X):
    """Normalize classifier input into a list of LabeledImage-compatible items."""
    items = list(X)
    if not items:
        raise DataError("empty image list")
    return items


def as_labeled(items, labels=None):
    """Wrap raw rasters as LabeledImages so ColorSets are cached across uses."""
    out = []
    for i, item in enumerate(items):
        if isinstance(item, LabeledImage):
            out.append(item)
        else:
            lab = int(labels[i]) if labels is not None else 1
            out.append(LabeledImage(np.asarray(item, dtype=np.uint8), lab))
    return out


def fitness(genome: Genome, train, val, n_features: int, c_reg: float = 1.0,
            extractor: AvcDescriptorExtractor = None) -> float:
    """Validation accuracy of an SVM trained on this genome's descriptors."""
    extractor = extractor or AvcDescriptorExtractor(n_features=n_features)
    extractor.genome = genome
    tr_imgs, tr_y = train
    va_imgs, va_y = val
    if len(set(tr_y)) < 2 or len(set(va_y)) < 2:
        raise ConfigError("fitness needs both labels in train and validation sets")
    Xtr = extractor.transform(tr_imgs)
    Xva = extractor.transform(va_imgs)
    model = LinearSvm(c_reg=c_reg).fit(Xtr, np.asarray(tr_y))
    return float(np.mean(model.predict(Xva) == np.asarray(va_y)))


class BrainProgrammingClassifier(BaseEstimator, ClassifierMixin):
    """Binary image classifier built from an evolved visual-cortex program.

    ``fit`` evolves a population of multi-tree programs; each candidate is
    scored by the validation accuracy of a linear SVM trained on its
    descriptors. The best program and its SVM become the model.

    Parameters mirror the evolutionary-engine defaults; ``random_state``
    seeds every stochastic step, so fits are exactly reproducible.
    """

    def __init__(self, generations=30, population=30, n_features=40,
                 c_reg=1.0, p_cx_chrom=0.4, p_cx_gene=0.4,
                 p_mut_chrom=0.1, p_mut_gene=0.1,
                 dynamic_max_depth=7, real_max_depth=9,
                 tournament_size=5, elitism=True, acceptance_threshold=0.99,
                 validation_fraction=0.25, max_side=None, opponency="diff",
                 workers=1, random_state=0):
        self.generations = generations
        self.population = population
        self.n_features = n_features
        self.c_reg = c_reg
        self.p_cx_chrom = p_cx_chrom
        self.p_cx_gene = p_cx_gene
        self.p_mut_chrom = p_mut_chrom
        self.p_mut_gene = p_mut_gene
        self.dynamic_max_depth = dynamic_max_depth
        self.real_max_depth = real_max_depth
        self.tournament_size = tournament_size
        self.elitism = elitism
        self.acceptance_threshold = acceptance_threshold
        self.validation_fraction = validation_fraction
        self.max_side = max_side
        self.opponency = opponency
        self.workers = workers
        self.random_state = random_state

    def _gp_params(self):
        return ev.GpParams(
            generations=self.generations,
            population=self.population,
            p_cx_chrom=self.p_cx_chrom,
            p_cx_gene=self.p_cx_gene,
            p_mut_chrom=self.p_mut_chrom,
            p_mut_gene=self.p_mut_gene,
            dynamic_max_depth=self.dynamic_max_depth,
            real_max_depth=self.real_max_depth,
            tournament_size=self.tournament_size,
            elitism=self.elitism,
            acceptance_threshold=self.acceptance_threshold,
            rng_seed=self.random_state,
        )

    def _split(self, items, y, rng):
        """Deterministic stratified holdout split."""
        y = np.asarray(y)
        tr_idx, va_idx = [], []
        for label in (-1, 1):
            idx = np.flatnonzero(y == label)
            if len(idx) < 2:
                raise ConfigError("need at least 2 examples per class to split")
            idx = idx[rng.permutation(len(idx))]
            n_val = max(1, int(round(len(idx) * self.validation_fraction)))
            n_val = min(n_val, len(idx) - 1)
            va_idx.extend(idx[:n_val])
            tr_idx.extend(idx[n_val:])
        tr_idx, va_idx = sorted(tr_idx), sorted(va_idx)
        pick = lambda ix: ([items[i] for i in ix], y[ix])
        return pick(tr_idx), pick(va_idx)

    def fit(self, X, y, validation=None, on_generation=None):
        items = check_image_list(X)
        y = np.asarray(y, dtype=int)
        if set(np.unique(y)) != {-1, 1}:
            raise ConfigError("fit needs both labels {+1,-1} present")
        items = as_labeled(items, y)
        rng = np.random.default_rng(np.random.SeedSequence(self.random_state))

        if validation is not None:
            va_items, va_y = validation
            va_items = as_labeled(check_image_list(va_items), np.asarray(va_y, dtype=int))
            train, val = (items, y), (va_items, np.asarray(va_y, dtype=int))
            if len(set(val[1])) < 2:
                raise ConfigError("validation set needs both labels")
        else:
            train, val = self._split(items, y, rng)

        extractor = AvcDescriptorExtractor(
            n_features=self.n_features, max_side=self.max_side, opponency=self.opponency)

        def fit_fn(g):
            return fitness(g, train, val, self.n_features, self.c_reg, extractor)

        result = ev.evolve(fit_fn, self._gp_params(), rng=rng, workers=self.workers,
                           on_generation=on_generation)
        self.evolution_ = result
        self.genome_ = result.best
        return self._finalize(train)

    def _finalize(self, train):
        tr_items, tr_y = train
        self.extractor_ = AvcDescriptorExtractor(
            genome=self.genome_, n_features=self.n_features,
            max_side=self.max_side, opponency=self.opponency)
        Xtr = self.extractor_.transform(tr_items)
        self.svm_ = LinearSvm(c_reg=self.c_reg).fit(Xtr, np.asarray(tr_y))
        self.classes_ = np.array([-1, 1])
        return self

    def with_genome(self, genome: Genome, X, y):
        """Skip evolution: adopt a fixed genome and train only the SVM."""
        items = as_labeled(check_image_list(X), np.asarray(y, dtype=int))
        self.genome_ = genome
        return self._finalize((items, np.asarray(y, dtype=int)))

    # -- prediction --------------------------------------------------------
    def _descriptors(self, X):
        return self.extractor_.transform(check_image_list(X))

    def decision_function(self, X):
        return self.svm_.margin(self._descriptors(X))

    def predict(self, X):
        return self.svm_.predict(self._descriptors(X))

    def predict_proba(self, X):
        return self.svm_.predict_proba(self._descriptors(X))

    def classify(self, image):
        """(label, confidence) for a single raster; the black-box callback shape."""
        d = self.extractor_.transform_one(image if not isinstance(image, LabeledImage) else image)
        return self.svm_.predict_one(d)

    def score(self, X, y):
        return float(np.mean(self.predict(X) == np.asarray(y)))
