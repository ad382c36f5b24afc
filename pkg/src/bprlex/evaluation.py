"""Test-set construction, lemma-aware top-k accuracy, seed-size ablation."""

from __future__ import annotations

import logging
from collections import OrderedDict, defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .mapping import SeedPairs
from .predictor import RankedList

log = logging.getLogger(__name__)


@dataclass
class GoldSet:
    """One gold target per test source word, plus an optional lemma table."""

    entries: dict[str, str]
    lemma_map: dict[str, str] | None = None

    def __len__(self) -> int:
        return len(self.entries)

    def lemma(self, word: str) -> str:
        if self.lemma_map is None:
            return word
        return self.lemma_map.get(word, word)

    def matches(self, predicted: str, gold: str) -> bool:
        return predicted == gold or (self.lemma_map is not None
                                     and self.lemma(predicted) == self.lemma(gold))


def _as_rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def build_test_split(dictionary: Iterable[tuple[str, str]], n_max: int,
                     rng) -> tuple[GoldSet, SeedPairs]:
    """Sample up to ``n_max`` single-translation source words as the test set.

    ``dictionary`` holds ``(source, target)`` pairs. Entries containing
    whitespace never enter the test set. Every pair whose source word is not a
    test word becomes a seed ``(target, source)``.
    """
    rows = list(OrderedDict.fromkeys((s, t) for s, t in dictionary))
    targets: dict[str, set[str]] = defaultdict(set)
    for s, t in rows:
        targets[s].add(t)
    eligible = sorted(s for s, ts in targets.items()
                      if len(ts) == 1 and not any(c.isspace() for c in s + next(iter(ts))))
    order = _as_rng(rng).permutation(len(eligible))
    chosen = [eligible[i] for i in order[:max(n_max, 0)]]
    gold = GoldSet({s: next(iter(targets[s])) for s in chosen})
    seeds = SeedPairs([(t, s) for s, t in rows if s not in gold.entries])
    return gold, seeds


def gold_rank(ranked: RankedList | None, gold_word: str, gold: GoldSet) -> int | None:
    """1-based rank of the first correct candidate, or None."""
    if ranked is None:
        return None
    for r, cand in enumerate(ranked.targets, 1):
        if gold.matches(cand, gold_word):
            return r
    return None


def _by_source(predictions) -> Mapping[str, RankedList]:
    if isinstance(predictions, Mapping):
        return predictions
    return {r.source: r for r in predictions}


def acc_at_k(predictions: Iterable[RankedList] | Mapping[str, RankedList],
             gold: GoldSet, k: int) -> float:
    """Fraction of gold source words with a correct target in their top ``k``.

    Words without a prediction count as misses.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if len(gold) == 0:
        return 0.0
    preds = _by_source(predictions)
    missing = [s for s in gold.entries if s not in preds]
    if missing:
        log.info("%d gold words have no prediction and count as incorrect", len(missing))
    hits = 0
    for s, g in gold.entries.items():
        r = gold_rank(preds.get(s), g, gold)
        hits += r is not None and r <= k
    return hits / len(gold)


@dataclass
class EvalReport:
    label: str
    ks: tuple[int, ...]
    rows: list[tuple[str, dict[int, float], int]] = field(default_factory=list)
    per_word: list[tuple[str, str, str, int | None, str]] = field(default_factory=list)

    def accuracy(self, tier: str = "ALL", k: int = 10) -> float:
        for name, accs, _ in self.rows:
            if name == tier:
                return accs[k]
        raise KeyError(tier)


def evaluate(predictions, gold: GoldSet, ks: Sequence[int] = (1, 5, 10),
             label: str = "") -> EvalReport:
    """Overall and per-tier accuracy, plus one diagnostic row per gold word."""
    preds = _by_source(predictions)
    groups: dict[str, dict[str, str]] = defaultdict(dict)
    report = EvalReport(label, tuple(ks))
    for s, g in gold.entries.items():
        r = preds.get(s)
        tier = r.tier if r is not None else "MISSING"
        groups[tier][s] = g
        top = r.targets[0] if r is not None and r.items else ""
        report.per_word.append((s, g, tier, gold_rank(r, g, gold), top))
    report.rows.append(("ALL", {k: acc_at_k(preds, gold, k) for k in ks}, len(gold)))
    for tier in sorted(groups):
        sub = GoldSet(groups[tier], gold.lemma_map)
        report.rows.append((tier, {k: acc_at_k(preds, sub, k) for k in ks}, len(sub)))
    return report


def seed_ablation(sizes: Iterable[int], seeds: SeedPairs,
                  evaluate_with: Callable[[SeedPairs], float], rng) -> list[tuple[int, float]]:
    """Accuracy as a function of seed lexicon size.

    Seeds are shuffled once and each size takes a prefix of that order, so
    smaller seed sets are nested in larger ones. Each subset keeps the
    original seed order, so the full size reproduces the unablated run.
    Sizes are deduplicated and run in ascending order; sizes larger than
    the seed set are skipped.
    """
    order = _as_rng(rng).permutation(len(seeds))
    rows = []
    for size in sorted(set(int(s) for s in sizes)):
        if size > len(seeds) or size < 1:
            log.warning("skipping seed size %d (available: %d)", size, len(seeds))
            continue
        subset = SeedPairs([seeds.pairs[i] for i in sorted(order[:size])])
        rows.append((size, evaluate_with(subset)))
    return rows
