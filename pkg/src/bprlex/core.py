"""Vocabularies, observed translations, model parameters and the two scorers.

The translation matrix has target words in its rows and source words in its
columns. It is never materialized: observed entries live in a
:class:`TranslationGraph`, and scores come from either the latent-factor
dot product (:func:`score_mf`) or the auxiliary-feature scorer
(:func:`score_aux_single` / :func:`score_aux_combined`).
"""

from __future__ import annotations

import enum
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ColdScoringImpossible, ConfigError, DataError


class Side(str, enum.Enum):
    SOURCE = "source"
    TARGET = "target"


class Provenance(str, enum.Enum):
    WIKI = "WIKI"
    WIKI_CROWD = "WIKI_CROWD"
    IDENTITY = "IDENTITY"
    SEED = "SEED"

    @classmethod
    def parse(cls, text: str) -> "Provenance":
        key = text.strip().upper().replace("+", "_").replace("-", "_")
        try:
            return cls[key]
        except KeyError:
            raise ValueError(f"unknown provenance {text!r}") from None


ALL_PROVENANCES = frozenset(Provenance)


class Vocabulary:
    """Dense, zero-based word <-> id registry for one side of the matrix."""

    __slots__ = ("side", "_words", "_index")

    def __init__(self, side: Side | str, words: Iterable[str]):
        self.side = Side(side)
        self._words = tuple(words)
        self._index = {w: i for i, w in enumerate(self._words)}
        if len(self._index) != len(self._words):
            seen, dups = set(), []
            for w in self._words:
                if w in seen:
                    dups.append(w)
                seen.add(w)
            raise DataError(f"duplicate words in {self.side.value} vocabulary: {dups[:5]}")

    @property
    def words(self) -> tuple[str, ...]:
        return self._words

    def __len__(self) -> int:
        return len(self._words)

    def __contains__(self, word: object) -> bool:
        return word in self._index

    def __iter__(self):
        return iter(self._words)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return self.side == other.side and self._words == other._words

    def __repr__(self) -> str:
        return f"Vocabulary({self.side.value!r}, n={len(self)})"

    def id(self, word: str) -> int:
        try:
            return self._index[word]
        except KeyError:
            raise KeyError(f"{word!r} not in {self.side.value} vocabulary") from None

    def get(self, word: str, default=None):
        return self._index.get(word, default)

    def word(self, idx: int) -> str:
        return self._words[idx]


@dataclass(frozen=True)
class TranslationPair:
    target_id: int
    source_id: int
    provenance: Provenance
    score: float = 1.0

    def __post_init__(self):
        if self.score != 1.0:
            raise DataError("observed translations always carry score 1")


class TranslationGraph:
    """The set of observed translations, with per-source adjacency.

    One (target, source) cell may be observed under several provenances; each
    cell is stored once together with the set of provenances that observed it.
    """

    def __init__(self, target_vocab: Vocabulary, source_vocab: Vocabulary,
                 pairs: Iterable[TranslationPair] = ()):
        self.target_vocab = target_vocab
        self.source_vocab = source_vocab
        cells: dict[tuple[int, int], set[Provenance]] = defaultdict(set)
        n_e, n_f = len(target_vocab), len(source_vocab)
        for p in pairs:
            if not (0 <= p.target_id < n_e and 0 <= p.source_id < n_f):
                raise IndexError(f"pair {p} outside vocabulary bounds ({n_e}, {n_f})")
            cells[(p.target_id, p.source_id)].add(Provenance(p.provenance))
        self._cells = {k: frozenset(v) for k, v in sorted(cells.items())}
        self._by_target: dict[int, set[int]] = defaultdict(set)
        self._by_source: dict[int, dict[int, frozenset[Provenance]]] = defaultdict(dict)
        for (e, f), provs in self._cells.items():
            self._by_target[e].add(f)
            self._by_source[f][e] = provs
        self._cell_array = np.array(list(self._cells), dtype=np.int64).reshape(-1, 2)

    @classmethod
    def from_words(cls, target_vocab: Vocabulary, source_vocab: Vocabulary,
                   rows: Iterable[tuple[str, str, Provenance]]) -> "TranslationGraph":
        """Build from ``(source word, target word, provenance)`` rows.

        Rows naming a word missing from either vocabulary are dropped.
        """
        pairs = []
        for src, tgt, prov in rows:
            e, f = target_vocab.get(tgt), source_vocab.get(src)
            if e is None or f is None:
                continue
            pairs.append(TranslationPair(e, f, Provenance(prov)))
        return cls(target_vocab, source_vocab, pairs)

    def __len__(self) -> int:
        return len(self._cells)

    def __contains__(self, cell: tuple[int, int]) -> bool:
        return tuple(cell) in self._cells

    @property
    def cells(self) -> np.ndarray:
        """Observed ``(target_id, source_id)`` cells, shape ``(n, 2)``, sorted."""
        return self._cell_array

    def pairs(self) -> list[TranslationPair]:
        return [TranslationPair(e, f, p)
                for (e, f), provs in self._cells.items() for p in sorted(provs)]

    def provenances(self, e: int, f: int) -> frozenset[Provenance]:
        return self._cells.get((e, f), frozenset())

    def filtered(self, provenances: Iterable[Provenance | str]) -> "TranslationGraph":
        keep = {Provenance(p) for p in provenances}
        pairs = [TranslationPair(e, f, p)
                 for (e, f), provs in self._cells.items() for p in provs if p in keep]
        return TranslationGraph(self.target_vocab, self.source_vocab, pairs)

    def sources_of(self, e: int) -> set[int]:
        return self._by_target.get(e, set())

    def targets_of(self, f: int, provenances: Iterable[Provenance] | None = None) -> list[int]:
        adj = self._by_source.get(f, {})
        if provenances is None:
            return sorted(adj)
        keep = frozenset(Provenance(p) for p in provenances)
        return sorted(e for e, provs in adj.items() if provs & keep)

    def count(self, f: int, provenances: Iterable[Provenance] | None = None) -> int:
        return len(self.targets_of(f, provenances))


def identity_rows(target_vocab: Vocabulary, source_vocab: Vocabulary):
    """Word-identity rows for every surface form present on both sides."""
    return [(w, w, Provenance.IDENTITY) for w in source_vocab.words if w in target_vocab]


def self_identity_graph(target_vocab: Vocabulary) -> TranslationGraph:
    """Identity matrix over the target vocabulary (columns are target words).

    This is the training set of the auxiliary scorers: each target word is
    observed as a translation of itself only.
    """
    columns = Vocabulary(Side.SOURCE, target_vocab.words)
    pairs = (TranslationPair(i, i, Provenance.IDENTITY) for i in range(len(target_vocab)))
    return TranslationGraph(target_vocab, columns, pairs)


@dataclass
class LatentFactors:
    """Row factors ``P`` (targets x k) and column factors ``Q`` (sources x k)."""

    P: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=np.float64)
        self.Q = np.asarray(self.Q, dtype=np.float64)
        if self.P.ndim != 2 or self.Q.ndim != 2 or self.P.shape[1] != self.Q.shape[1]:
            raise ValueError(f"incompatible factor shapes {self.P.shape} and {self.Q.shape}")

    @property
    def k(self) -> int:
        return self.P.shape[1]

    @classmethod
    def initialize(cls, n_targets: int, n_sources: int, k: int, init_scale: float,
                   rng: np.random.Generator) -> "LatentFactors":
        P = rng.uniform(-init_scale, init_scale, size=(n_targets, k))
        Q = rng.uniform(-init_scale, init_scale, size=(n_sources, k))
        return cls(P, Q)

    def copy(self) -> "LatentFactors":
        return LatentFactors(self.P.copy(), self.Q.copy())

    def all_finite(self) -> bool:
        return bool(np.isfinite(self.P).all() and np.isfinite(self.Q).all())


class FeatureStore:
    """Word -> feature vectors for one auxiliary signal.

    Every word holds a ``(m, dim)`` block: ``m == 1`` for embeddings and up to
    the image cap for visual features. :meth:`vector` returns the row mean,
    which is the word's own vector whenever ``m == 1``.
    """

    def __init__(self, signal_name: str, dim: int, vectors: Mapping[str, np.ndarray] | None = None):
        if dim < 1:
            raise ValueError("feature dimensionality must be positive")
        self.signal_name = signal_name
        self.dim = int(dim)
        self._rows: dict[str, np.ndarray] = {}
        for word, vec in (vectors or {}).items():
            self.add(word, vec)

    def add(self, word: str, vectors) -> None:
        block = np.array(vectors, dtype=np.float64, ndmin=2)
        if block.ndim != 2 or block.shape[1] != self.dim or block.shape[0] == 0:
            raise DataError(f"{self.signal_name}: vector for {word!r} has shape "
                            f"{np.shape(vectors)}, expected length {self.dim}")
        self._rows[word] = block

    def append(self, word: str, vector) -> None:
        vec = np.asarray(vector, dtype=np.float64).reshape(1, -1)
        if word in self._rows:
            self.add(word, np.vstack([self._rows[word], vec]))
        else:
            self.add(word, vec)

    def __contains__(self, word: object) -> bool:
        return word in self._rows

    def __len__(self) -> int:
        return len(self._rows)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureStore):
            return NotImplemented
        return (self.signal_name == other.signal_name and self.dim == other.dim
                and list(self._rows) == list(other._rows)
                and all(np.array_equal(a, other._rows[w]) for w, a in self._rows.items()))

    @property
    def words(self) -> list[str]:
        return list(self._rows)

    def multiplicity(self, word: str) -> int:
        return self.images(word).shape[0]

    def images(self, word: str) -> np.ndarray:
        try:
            return self._rows[word]
        except KeyError:
            raise DataError(f"{self.signal_name}: no features for {word!r}") from None

    def vector(self, word: str) -> np.ndarray:
        block = self.images(word)
        return block[0] if block.shape[0] == 1 else block.mean(axis=0)

    def matrix(self, words: Sequence[str]) -> np.ndarray:
        missing = [w for w in words if w not in self._rows]
        if missing:
            raise DataError(f"{self.signal_name}: no features for {len(missing)} words, "
                            f"e.g. {missing[:5]}")
        if not words:
            return np.zeros((0, self.dim))
        return np.vstack([self.vector(w) for w in words])


@dataclass
class AuxModel:
    """Per-target weights ``theta`` and a shared bias vector for one signal."""

    signal_name: str
    theta: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        if self.theta.ndim != 2 or self.beta.shape != (self.theta.shape[1],):
            raise ValueError(f"incompatible aux shapes {self.theta.shape} / {self.beta.shape}")

    @property
    def dim(self) -> int:
        return self.beta.shape[0]

    def copy(self) -> "AuxModel":
        return AuxModel(self.signal_name, self.theta.copy(), self.beta.copy())

    def all_finite(self) -> bool:
        return bool(np.isfinite(self.theta).all() and np.isfinite(self.beta).all())

    def scores(self, theta_f: np.ndarray, targets=None) -> np.ndarray:
        """Aux scores of every (or the listed) target against one feature vector."""
        theta = self.theta if targets is None else self.theta[targets]
        return theta @ theta_f + self.beta @ theta_f


@dataclass
class AuxBundle:
    """Independently trained aux models combined by non-negative weights."""

    models: dict[str, AuxModel]
    alphas: list[tuple[str, float]] = field(default_factory=list)

    def __post_init__(self):
        if not self.alphas:
            self.alphas = [(name, 1.0 / len(self.models)) for name in self.models]
        for name, a in self.alphas:
            if name not in self.models:
                raise ConfigError(f"weight given for unknown signal {name!r}")
            if not (math.isfinite(a) and a >= 0):
                raise ConfigError(f"signal weight for {name!r} must be finite and >= 0")
        if sum(a for _, a in self.alphas) <= 0:
            raise ConfigError("signal weights must sum to a positive value")

    def present_weights(self, stores: Mapping[str, FeatureStore], f_word: str):
        """``[(model, feature, weight)]`` for the signals that have ``f_word``.

        When some signals are absent, the present weights are rescaled so they
        keep the total weight of the full set.
        """
        present = [(self.models[n], stores[n].vector(f_word), a) for n, a in self.alphas
                   if a > 0 and n in stores and f_word in stores[n]]
        got = sum(a for _, _, a in present)
        if got <= 0:
            raise ColdScoringImpossible(f"no auxiliary signal available for {f_word!r}")
        scale = sum(a for _, a in self.alphas) / got
        return [(m, v, a * scale) for m, v, a in present]


def sigmoid(x):
    """Logistic function, stable for large ``|x|``; scalars and arrays."""
    if np.ndim(x) == 0:
        x = float(x)
        if x >= 0:
            return 1.0 / (1.0 + math.exp(-x))
        z = math.exp(x)
        return z / (1.0 + z)
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    z = np.exp(x[~pos])
    out[~pos] = z / (1.0 + z)
    return out


def _check_index(idx: int, n: int, what: str) -> None:
    if not 0 <= idx < n:
        raise IndexError(f"{what} id {idx} out of range [0, {n})")


def score_mf(factors: LatentFactors, e: int, f: int) -> float:
    _check_index(e, factors.P.shape[0], "target")
    _check_index(f, factors.Q.shape[0], "source")
    return float(factors.P[e] @ factors.Q[f])


def score_aux_single(theta_e, beta, theta_f) -> float:
    theta_e, beta, theta_f = (np.asarray(v, dtype=np.float64) for v in (theta_e, beta, theta_f))
    if not (theta_e.shape == beta.shape == theta_f.shape) or theta_f.ndim != 1:
        raise ValueError(f"shape mismatch: {theta_e.shape}, {beta.shape}, {theta_f.shape}")
    return float(theta_e @ theta_f + beta @ theta_f)


def score_aux_combined(bundle: AuxBundle, stores: Mapping[str, FeatureStore],
                       e: int, f_word: str) -> float:
    """Weighted sum of per-signal aux scores for target ``e`` and source word ``f_word``.

    Signals lacking features for ``f_word`` are skipped and the remaining
    weights renormalized.
    """
    total = 0.0
    for model, feat, w in bundle.present_weights(stores, f_word):
        _check_index(e, model.theta.shape[0], "target")
        total += w * score_aux_single(model.theta[e], model.beta, feat)
    return total
