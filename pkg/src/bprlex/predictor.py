"""Back-off prediction: pick one scorer per source word and rank all candidates."""

from __future__ import annotations

import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (AuxBundle, FeatureStore, LatentFactors, Provenance, TranslationGraph,
                   Vocabulary)
from .errors import ColdScoringImpossible, ConfigError

log = logging.getLogger(__name__)


class Tier(str, enum.Enum):
    MF_W = "MF_W"
    MF_WC = "MF_WC"
    AUX = "AUX"


TIER_ORDER = (Tier.MF_W, Tier.MF_WC, Tier.AUX)
OOV = "OOV"


@dataclass(frozen=True)
class BackoffPolicy:
    wiki_min: int = 1
    wiki_crowd_min: int = 2
    alpha_we: float = 0.5
    alpha_vis: float = 0.5

    def __post_init__(self):
        if self.wiki_min < 0 or self.wiki_crowd_min < 0:
            raise ConfigError("back-off thresholds must be >= 0")
        if self.alpha_we < 0 or self.alpha_vis < 0:
            raise ConfigError("signal weights must be >= 0")

    @property
    def alphas(self) -> list[tuple[str, float]]:
        return [("we", self.alpha_we), ("vis", self.alpha_vis)]


@dataclass
class RankedList:
    source: str
    items: list[tuple[str, float]]
    tier: str

    @property
    def targets(self) -> list[str]:
        return [t for t, _ in self.items]

    def __len__(self) -> int:
        return len(self.items)


def classify_tier(f: int, graph: TranslationGraph, policy: BackoffPolicy = BackoffPolicy()) -> Tier:
    if graph.count(f, [Provenance.WIKI]) >= policy.wiki_min:
        return Tier.MF_W
    if graph.count(f, [Provenance.WIKI_CROWD]) >= policy.wiki_crowd_min:
        return Tier.MF_WC
    return Tier.AUX


def sort_scores(candidates: Sequence, scores: np.ndarray) -> list[tuple]:
    """Descending by score; equal scores keep candidate order (ascending id)."""
    order = np.lexsort((np.arange(len(scores)), -np.asarray(scores)))
    return [(candidates[i], float(scores[i])) for i in order]


def top_k(ranked: RankedList, k: int) -> RankedList:
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    return RankedList(ranked.source, ranked.items[:k], ranked.tier)


@dataclass
class ModelSet:
    """Trained scorers sharing one pair of vocabularies.

    Any of the scorers may be missing; words whose tier has no model fall
    through to the next available tier.
    """

    target_vocab: Vocabulary
    source_vocab: Vocabulary
    mf_w: LatentFactors | None = None
    mf_wc: LatentFactors | None = None
    aux: AuxBundle | None = None
    aux_stores: dict[str, FeatureStore] = field(default_factory=dict)

    def has(self, tier: Tier) -> bool:
        return {Tier.MF_W: self.mf_w, Tier.MF_WC: self.mf_wc, Tier.AUX: self.aux}[tier] is not None

    def resolve(self, tier: Tier) -> Tier:
        """First loaded tier at or after ``tier``; else the closest one before it."""
        i = TIER_ORDER.index(tier)
        for t in TIER_ORDER[i:] + TIER_ORDER[:i][::-1]:
            if self.has(t):
                if t is not tier:
                    log.debug("tier %s unavailable, using %s", tier.value, t.value)
                return t
        raise ConfigError("no trained model loaded")


def _mf_scores(factors: LatentFactors, f: int, cand: np.ndarray) -> np.ndarray:
    if f >= factors.Q.shape[0]:
        raise IndexError(f"source id {f} outside factor matrix")
    return factors.P[cand] @ factors.Q[f]


def rank_candidates(f: int, candidates: Sequence[int], models: ModelSet,
                    policy: BackoffPolicy, graph: TranslationGraph) -> RankedList:
    """Rank ``candidates`` (target ids) for source id ``f`` within a single tier."""
    tier = models.resolve(classify_tier(f, graph, policy))
    cand = np.asarray(candidates, dtype=np.int64)
    if tier is Tier.MF_W:
        scores = _mf_scores(models.mf_w, f, cand)
    elif tier is Tier.MF_WC:
        scores = _mf_scores(models.mf_wc, f, cand)
    else:
        word = models.source_vocab.word(f)
        scores = np.zeros(len(cand))
        for model, feat, w in models.aux.present_weights(models.aux_stores, word):
            scores += w * model.scores(feat, cand)
    words = [models.target_vocab.word(int(e)) for e in cand]
    return RankedList(models.source_vocab.word(f), sort_scores(words, scores), tier.value)


class Predictor:
    """Ranks source words against the whole target vocabulary."""

    def __init__(self, models: ModelSet, graph: TranslationGraph,
                 policy: BackoffPolicy = BackoffPolicy()):
        self.models = models
        self.graph = graph
        self.policy = policy
        self._candidates = np.arange(len(models.target_vocab))

    def rank(self, word: str, k: int | None = None) -> RankedList:
        f = self.models.source_vocab.get(word)
        if f is None:
            return RankedList(word, [], OOV)
        ranked = rank_candidates(f, self._candidates, self.models, self.policy, self.graph)
        return top_k(ranked, k) if k else ranked

    def _rank_or_skip(self, word: str, k: int | None) -> RankedList | None:
        try:
            return self.rank(word, k)
        except ColdScoringImpossible as exc:
            log.warning("skipping %r: %s", word, exc)
            return None

    def predict(self, words: Iterable[str], k: int | None = 10,
                workers: int = 1) -> list[RankedList]:
        """Rank many words; output order follows input order at any worker count."""
        words = list(words)
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                out = list(pool.map(lambda w: self._rank_or_skip(w, k), words))
        else:
            out = [self._rank_or_skip(w, k) for w in words]
        return [r for r in out if r is not None]


def tier_counts(ranked: Iterable[RankedList]) -> Mapping[str, int]:
    counts = {t.value: 0 for t in TIER_ORDER}
    counts[OOV] = 0
    for r in ranked:
        counts[r.tier] = counts.get(r.tier, 0) + 1
    return counts
