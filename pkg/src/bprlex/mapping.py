"""Target -> source embedding-space maps learned from seed translations.

Two map families, both fitted by plain per-pair SGD on the squared error:

* linear: ``x_e @ W`` with ``W`` of shape ``(d_E, d_F)``;
* four-layer tanh network without biases:
  ``phi4 @ tanh(phi3 @ tanh(phi2 @ tanh(phi1 @ x_e)))``.

Mapped target vectors live in the source space and serve as the word
embedding auxiliary features of the target words.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from typing import Mapping, Sequence

import numpy as np

from .core import FeatureStore
from .errors import ConfigError, DataError, TrainingDivergence

log = logging.getLogger(__name__)

LINEAR = "linear"
FOUR_LAYER_TANH = "four_layer_tanh"


@dataclass
class MappingModel:
    kind: str
    W: np.ndarray | None = None
    layers: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.kind == LINEAR:
            if self.W is None or np.ndim(self.W) != 2:
                raise ValueError("a linear map needs a 2-d matrix W")
            self.W = np.asarray(self.W, dtype=np.float64)
        elif self.kind == FOUR_LAYER_TANH:
            if len(self.layers) != 4:
                raise ValueError("the tanh map has exactly four weight matrices")
            self.layers = [np.asarray(L, dtype=np.float64) for L in self.layers]
            for inner, outer in zip(self.layers, self.layers[1:]):
                if outer.shape[1] != inner.shape[0]:
                    raise ValueError(f"layer shapes do not chain: {inner.shape} -> {outer.shape}")
        else:
            raise ValueError(f"unknown map kind {self.kind!r}")

    @property
    def d_in(self) -> int:
        return self.W.shape[0] if self.kind == LINEAR else self.layers[0].shape[1]

    @property
    def d_out(self) -> int:
        return self.W.shape[1] if self.kind == LINEAR else self.layers[3].shape[0]

    def copy(self) -> "MappingModel":
        if self.kind == LINEAR:
            return MappingModel(LINEAR, W=self.W.copy())
        return MappingModel(FOUR_LAYER_TANH, layers=[L.copy() for L in self.layers])


@dataclass(frozen=True)
class MapTrainConfig:
    eta: float = 0.01
    epochs: int = 200
    seed: int = 0
    hidden: tuple[int, int, int] = (200, 200, 200)

    def __post_init__(self):
        if not (math.isfinite(self.eta) and self.eta > 0):
            raise ConfigError("map eta must be finite and > 0")
        if self.epochs < 0:
            raise ConfigError("map epochs must be >= 0")
        if len(self.hidden) != 3 or min(self.hidden) < 1:
            raise ConfigError("hidden must list three positive sizes")

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "MapTrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown map config keys: {', '.join(unknown)}")
        kwargs = {}
        try:
            for key, raw in values.items():
                if key == "hidden":
                    kwargs[key] = (tuple(int(x) for x in str(raw).replace(",", " ").split())
                                   if isinstance(raw, str) else tuple(raw))
                elif key == "eta":
                    kwargs[key] = float(raw)
                else:
                    kwargs[key] = int(raw)
        except ValueError:
            raise ConfigError(f"bad map config value in {dict(values)}") from None
        return cls(**kwargs)


@dataclass
class SeedPairs:
    """Known ``(target word, source word)`` translations used to fit a map."""

    pairs: list[tuple[str, str]]

    def __len__(self) -> int:
        return len(self.pairs)

    def matrices(self, emb_E: FeatureStore, emb_F: FeatureStore) -> tuple[np.ndarray, np.ndarray]:
        missing = sorted({t for t, _ in self.pairs if t not in emb_E}
                         | {s for _, s in self.pairs if s not in emb_F})
        if missing:
            raise DataError(f"{len(missing)} seed words lack embeddings: {missing[:10]}")
        X_E = emb_E.matrix([t for t, _ in self.pairs])
        X_F = emb_F.matrix([s for _, s in self.pairs])
        return X_E, X_F


def apply_map(model: MappingModel, x_e: np.ndarray) -> np.ndarray:
    """Map one target vector (1-d) or a batch of them (rows) into source space."""
    x = np.asarray(x_e, dtype=np.float64)
    if x.shape[-1] != model.d_in or x.ndim not in (1, 2):
        raise ValueError(f"expected vectors of length {model.d_in}, got shape {x.shape}")
    if model.kind == LINEAR:
        return x @ model.W
    h = x
    for phi in model.layers[:3]:
        h = np.tanh(h @ phi.T)
    return h @ model.layers[3].T


def mean_squared_loss(model: MappingModel, X_E: np.ndarray, X_F: np.ndarray) -> float:
    """Mean over seed rows of ``||map(x_e) - x_f||^2``."""
    if len(X_E) == 0:
        return 0.0
    r = apply_map(model, X_E) - X_F
    return float(np.einsum("ij,ij->", r, r) / len(X_E))


def nn_loss_and_grads(layers: Sequence[np.ndarray], x_e: np.ndarray, x_f: np.ndarray):
    """Squared error of one pair under the tanh network and its layer gradients."""
    phi1, phi2, phi3, phi4 = layers
    h1 = np.tanh(phi1 @ x_e)
    h2 = np.tanh(phi2 @ h1)
    h3 = np.tanh(phi3 @ h2)
    r = phi4 @ h3 - x_f
    dy = 2.0 * r
    g4 = np.outer(dy, h3)
    d3 = (phi4.T @ dy) * (1.0 - h3 * h3)
    g3 = np.outer(d3, h2)
    d2 = (phi3.T @ d3) * (1.0 - h2 * h2)
    g2 = np.outer(d2, h1)
    d1 = (phi2.T @ d2) * (1.0 - h1 * h1)
    g1 = np.outer(d1, x_e)
    return float(r @ r), [g1, g2, g3, g4]


@dataclass
class MapFit:
    model: MappingModel
    initial_loss: float
    final_loss: float
    losses: list[float]


def train_linear_map(seeds: SeedPairs, emb_E: FeatureStore, emb_F: FeatureStore,
                     cfg: MapTrainConfig = MapTrainConfig()) -> MapFit:
    """Least-squares linear map fitted by SGD, one seed pair per update.

    ``W`` starts at zero; pairs are visited in a freshly shuffled order each epoch.
    """
    if len(seeds) == 0:
        raise DataError("need at least one seed pair to learn a map")
    X_E, X_F = seeds.matrices(emb_E, emb_F)
    rng = np.random.default_rng(cfg.seed)
    model = MappingModel(LINEAR, W=np.zeros((X_E.shape[1], X_F.shape[1])))
    W = model.W
    initial = mean_squared_loss(model, X_E, X_F)
    losses = []
    for epoch in range(cfg.epochs):
        for i in rng.permutation(len(X_E)):
            x = X_E[i]
            r = x @ W - X_F[i]
            W -= cfg.eta * 2.0 * np.outer(x, r)
        losses.append(mean_squared_loss(model, X_E, X_F))
        if not math.isfinite(losses[-1]):
            raise TrainingDivergence(f"linear map diverged in epoch {epoch}; lower eta")
    final = losses[-1] if losses else initial
    log.info("linear map: %d seeds, loss %.6g -> %.6g", len(seeds), initial, final)
    return MapFit(model, initial, final, losses)


def init_nn_layers(d_in: int, d_out: int, hidden: Sequence[int],
                   rng: np.random.Generator) -> list[np.ndarray]:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights for the four layers."""
    sizes = [d_in, *hidden, d_out]
    layers = []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        layers.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
    return layers


def train_nn_map(seeds: SeedPairs, emb_E: FeatureStore, emb_F: FeatureStore,
                 cfg: MapTrainConfig = MapTrainConfig()) -> MapFit:
    if len(seeds) == 0:
        raise DataError("need at least one seed pair to learn a map")
    X_E, X_F = seeds.matrices(emb_E, emb_F)
    rng = np.random.default_rng(cfg.seed)
    layers = init_nn_layers(X_E.shape[1], X_F.shape[1], cfg.hidden, rng)
    model = MappingModel(FOUR_LAYER_TANH, layers=layers)
    initial = mean_squared_loss(model, X_E, X_F)
    losses = []
    for epoch in range(cfg.epochs):
        for i in rng.permutation(len(X_E)):
            _, grads = nn_loss_and_grads(layers, X_E[i], X_F[i])
            for phi, g in zip(layers, grads):
                phi -= cfg.eta * g
        losses.append(mean_squared_loss(model, X_E, X_F))
        if not math.isfinite(losses[-1]):
            raise TrainingDivergence(f"tanh map diverged in epoch {epoch}; lower eta")
    final = losses[-1] if losses else initial
    log.info("tanh map %s: %d seeds, loss %.6g -> %.6g", cfg.hidden, len(seeds), initial, final)
    return MapFit(model, initial, final, losses)


WORD_SIGNAL = "we"


def build_word_aux_store(model: MappingModel, emb_E: FeatureStore,
                         emb_F: FeatureStore) -> tuple[FeatureStore, FeatureStore]:
    """Word-embedding aux features for both sides, all in the source space.

    Target words get their mapped vectors; source words keep their raw
    embeddings.
    """
    if emb_E.dim != model.d_in or emb_F.dim != model.d_out:
        raise ValueError(f"map is {model.d_in}->{model.d_out} but embeddings are "
                         f"{emb_E.dim} and {emb_F.dim} dimensional")
    words = emb_E.words
    mapped = apply_map(model, emb_E.matrix(words)) if words else np.zeros((0, model.d_out))
    target_store = FeatureStore(WORD_SIGNAL, model.d_out)
    for w, v in zip(words, mapped):
        target_store.add(w, v)
    source_store = FeatureStore(WORD_SIGNAL, emb_F.dim)
    for w in emb_F.words:
        source_store.add(w, emb_F.images(w))
    return target_store, source_store
