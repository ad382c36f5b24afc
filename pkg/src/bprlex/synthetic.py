"""Synthetic data with planted structure, for tests, demos and sanity runs.

``planted_matrix`` draws a low-rank score matrix and observes its top
entries. ``toy_language_pair`` builds a small bilingual setup in which
every source word has a known translation, split into WIKI, WIKI+CROWD and
cold words, with embeddings and image features that carry the same latent
concept on both sides.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import FeatureStore, Provenance
from . import dataio


@dataclass
class PlantedMatrix:
    scores: np.ndarray          # true |E| x |F| scores
    observed: np.ndarray        # (n, 2) cells (target, source) above the threshold
    train: np.ndarray
    held_out: np.ndarray


def planted_matrix(n_targets: int = 200, n_sources: int = 150, k: int = 5,
                   top_fraction: float = 0.05, holdout: float = 0.2,
                   seed: int = 0) -> PlantedMatrix:
    rng = np.random.default_rng(seed)
    P = rng.normal(size=(n_targets, k))
    Q = rng.normal(size=(n_sources, k))
    S = P @ Q.T
    n_obs = int(round(top_fraction * S.size))
    flat = np.argsort(-S, axis=None, kind="stable")[:n_obs]
    observed = np.column_stack(np.unravel_index(np.sort(flat), S.shape))
    perm = rng.permutation(len(observed))
    n_held = int(round(holdout * len(observed)))
    held = observed[np.sort(perm[:n_held])]
    train = observed[np.sort(perm[n_held:])]
    return PlantedMatrix(S, observed, train, held)


@dataclass
class ToyPair:
    dictionary: list[tuple[str, str]]
    translations: list[tuple[str, str, Provenance]]
    source_embeddings: FeatureStore
    target_embeddings: FeatureStore
    source_images: FeatureStore
    target_images: FeatureStore
    lemma_map: dict[str, str]
    tiers: dict[str, str]       # source word -> planted tier


def toy_language_pair(seed: int = 0, n_concepts: int = 400, n_distractors: int = 40,
                      n_inflected: int = 30, n_shared: int = 20, latent_dim: int = 12,
                      emb_dim: int = 16, img_dim: int = 24, n_images: int = 10,
                      emb_noise: float = 0.3, img_noise: float = 1.5,
                      tier_split: tuple[float, float] = (0.4, 0.25)) -> ToyPair:
    """A planted bilingual lexicon over ``n_concepts`` shared concepts.

    Concept ``c`` is ``en_c`` on the target side and ``xx_c`` on the source
    side, except the first ``n_shared`` concepts, which share one surface
    form (``ne_c``) across languages. Target and source embeddings are two
    different noisy linear images of the concept vector; image features are
    one language-independent image plus per-image noise.
    """
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(n_concepts + n_distractors, latent_dim))
    A_E = rng.normal(size=(latent_dim, emb_dim)) / np.sqrt(latent_dim)
    A_F = rng.normal(size=(latent_dim, emb_dim)) / np.sqrt(latent_dim)
    B = rng.normal(size=(latent_dim, img_dim)) / np.sqrt(latent_dim)

    def tgt(c):
        return f"ne_{c:04d}" if c < n_shared else f"en_{c:04d}"

    def src(c):
        return f"ne_{c:04d}" if c < n_shared else f"xx_{c:04d}"

    emb_E = FeatureStore("we", emb_dim)
    emb_F = FeatureStore("we", emb_dim)
    img_E = FeatureStore("vis", img_dim)
    img_F = FeatureStore("vis", img_dim)

    def add_images(store, word, z):
        store.add(word, np.round(z @ B + img_noise * rng.normal(size=(n_images, img_dim)), 4))

    for c in range(n_concepts + n_distractors):
        word = tgt(c) if c < n_concepts else f"en_x{c - n_concepts:03d}"
        emb_E.add(word, np.round(Z[c] @ A_E + emb_noise * rng.normal(size=emb_dim), 6))
        add_images(img_E, word, Z[c])
    for c in range(n_concepts):
        emb_F.add(src(c), np.round(Z[c] @ A_F + emb_noise * rng.normal(size=emb_dim), 6))
        add_images(img_F, src(c), Z[c])

    inflected = rng.choice(np.arange(n_shared, n_concepts), size=n_inflected, replace=False)
    lemma_map = {}
    for c in sorted(inflected):
        word = tgt(c) + "s"
        emb_E.add(word, np.round(emb_E.vector(tgt(c)) + 0.05 * rng.normal(size=emb_dim), 6))
        add_images(img_E, word, Z[c])
        lemma_map[word] = tgt(c)
        lemma_map[tgt(c)] = tgt(c)

    # concepts nearest in latent space supply plausible but wrong links
    dist = ((Z[:n_concepts, None, :] - Z[None, :n_concepts, :]) ** 2).sum(-1)
    np.fill_diagonal(dist, np.inf)
    neighbours = np.argsort(dist, axis=1)[:, :5]

    dictionary = []
    for c in range(n_concepts):
        dictionary.append((src(c), tgt(c)))
        if rng.random() < 0.25:
            dictionary.append((src(c), tgt(int(rng.choice(neighbours[c])))))

    order = rng.permutation(n_concepts)
    n_w = int(tier_split[0] * n_concepts)
    n_wc = int(tier_split[1] * n_concepts)
    tiers, translations = {}, []
    for rank, c in enumerate(order):
        c = int(c)
        related = [tgt(int(r)) for r in rng.choice(neighbours[c], size=2, replace=False)]
        if rank < n_w:
            tiers[src(c)] = "WIKI"
            links = [tgt(c)] if rng.random() < 0.9 else []
            links += related[:int(rng.integers(0, 3))]
            if not links:
                links = related[:1]
            translations += [(src(c), t, Provenance.WIKI) for t in links]
        elif rank < n_w + n_wc:
            tiers[src(c)] = "WIKI_CROWD"
            links = ([tgt(c)] if rng.random() < 0.9 else []) + related
            translations += [(src(c), t, Provenance.WIKI_CROWD) for t in links[:3]]
        else:
            tiers[src(c)] = "COLD"
            if rng.random() < 0.5:
                translations.append((src(c), related[0], Provenance.WIKI_CROWD))
    return ToyPair(dictionary, translations, emb_F, emb_E, img_F, img_E, lemma_map, tiers)


def write_toy_language_pair(out_dir, seed: int = 0, **kwargs) -> ToyPair:
    """Generate a toy pair and write it in the package's file formats."""
    out = Path(out_dir)
    toy = toy_language_pair(seed, **kwargs)
    dataio.save_dictionary(out / "dictionary.tsv", toy.dictionary)
    dataio.write_text(out / "translations.tsv",
                      "".join(f"{s}\t{t}\t{p.value}\n" for s, t, p in toy.translations))
    dataio.save_embeddings(toy.source_embeddings, out / "source.vec")
    dataio.save_embeddings(toy.target_embeddings, out / "target.vec")
    dataio.save_image_features(toy.source_images, out / "source_images.tsv")
    dataio.save_image_features(toy.target_images, out / "target_images.tsv")
    dataio.write_text(out / "lemma.tsv", "".join(f"{w}\t{l}\n" for w, l in toy.lemma_map.items()))
    dataio.write_text(out / "tiers.tsv", "".join(f"{w}\t{t}\n" for w, t in toy.tiers.items()))
    return toy
