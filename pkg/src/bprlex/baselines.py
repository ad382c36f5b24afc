"""Unsupervised comparison systems: mapped-space cosine and CNN-AvgMax."""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from .core import FeatureStore
from .errors import ColdScoringImpossible, DataError
from .mapping import MappingModel, apply_map
from .predictor import RankedList, sort_scores

log = logging.getLogger(__name__)

MAX_IMAGES = 10


def cosine_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise cosines between rows; any pair involving a zero row gets -1."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    na = np.linalg.norm(A, axis=1)
    nb = np.linalg.norm(B, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        C = (A @ B.T) / np.outer(na, nb)
    C[(na == 0)[:, None] | (nb == 0)[None, :]] = -1.0
    return C


def cosine_rank(f: str, candidates: Sequence[str], model: MappingModel,
                emb_E: FeatureStore, emb_F: FeatureStore) -> RankedList:
    """Rank target words by cosine between their mapped vector and ``f``'s."""
    if f not in emb_F:
        raise ColdScoringImpossible(f"no embedding for source word {f!r}")
    missing = [e for e in candidates if e not in emb_E]
    if missing:
        raise DataError(f"{len(missing)} candidates lack embeddings, e.g. {missing[:5]}")
    mapped = apply_map(model, emb_E.matrix(list(candidates)))
    scores = cosine_matrix(emb_F.vector(f), mapped)[0]
    zero = np.flatnonzero(np.linalg.norm(mapped, axis=1) == 0)
    if len(zero) or not emb_F.vector(f).any():
        log.warning("zero-norm vectors while ranking %r; scored -1", f)
    return RankedList(f, sort_scores(list(candidates), scores), "MNN")


def cnn_avgmax(f_images: np.ndarray, e_images: np.ndarray) -> float:
    """Mean over ``f``'s images of the best cosine to any of ``e``'s images."""
    f_images = np.asarray(f_images, dtype=np.float64)
    e_images = np.asarray(e_images, dtype=np.float64)
    if f_images.size == 0 or e_images.size == 0:
        raise DataError("CNN-AvgMax needs at least one image on each side")
    return float(cosine_matrix(f_images, e_images).max(axis=1).mean())


def visual_rank(f: str, candidates: Sequence[str], images: FeatureStore,
                target_images: FeatureStore | None = None) -> RankedList:
    """Rank candidates by CNN-AvgMax against ``f``'s images.

    ``target_images`` holds the candidates' images when the two languages
    are stored separately; by default both come from ``images``.
    """
    if target_images is None:
        target_images = images
    if f not in images:
        raise ColdScoringImpossible(f"no images for source word {f!r}")
    f_images = images.images(f)
    kept = [e for e in candidates if e in target_images]
    if len(kept) < len(candidates):
        log.info("visual_rank(%r): %d candidates without images skipped",
                 f, len(candidates) - len(kept))
    scores = np.array([cnn_avgmax(f_images, target_images.images(e)) for e in kept])
    return RankedList(f, sort_scores(kept, scores), "CNN_AVGMAX")
