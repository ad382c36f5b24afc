"""Triple sampling and per-triple stochastic gradient ascent on the BPR objective.

Both scorers are trained with the same loop: draw an observed cell
``(e, f)``, draw an unobserved column ``g`` for the same row, and move the
parameters along ``sigmoid(-x_efg) * d x_efg / d theta - lambda * theta``
where ``x_efg = x_ef - x_eg``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .core import (AuxModel, FeatureStore, LatentFactors, Provenance, TranslationGraph,
                   sigmoid)
from .errors import ConfigError, DataError, TrainingDivergence

log = logging.getLogger(__name__)

MAX_NEGATIVE_RETRIES = 100
PROBE_TRIPLES = 2000


class Triple(NamedTuple):
    e: int
    f: int
    g: int


@dataclass(frozen=True)
class TrainConfig:
    eta: float = 0.05
    lambda_P: float = 0.01
    lambda_Qpos: float = 0.01
    lambda_Qneg: float = 0.01
    lambda_theta: float = 0.01
    lambda_beta: float = 0.01
    k: int = 50
    epochs: int = 100
    samples_per_epoch: int | None = None  # None: one pass worth of observed cells
    seed: int = 0
    init_scale: float = 0.01

    def __post_init__(self):
        for name in ("eta", "init_scale"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be finite and > 0, got {v}")
        for name in ("lambda_P", "lambda_Qpos", "lambda_Qneg", "lambda_theta", "lambda_beta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be finite and >= 0, got {v}")
        if self.k < 1:
            raise ConfigError("k must be a positive integer")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.samples_per_epoch is not None and self.samples_per_epoch < 1:
            raise ConfigError("samples_per_epoch must be positive")

    @classmethod
    def from_mapping(cls, values: Mapping[str, object]) -> "TrainConfig":
        """Build from string-valued keys; unknown keys are rejected."""
        types = {f.name: f.type for f in fields(cls)}
        unknown = sorted(set(values) - set(types))
        if unknown:
            raise ConfigError(f"unknown training config keys: {', '.join(unknown)}")
        kwargs = {}
        for key, raw in values.items():
            kwargs[key] = _coerce(key, types[key], raw)
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "TrainConfig":
        """Read a flat ``key = value`` file (``#`` starts a comment)."""
        values = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            values[key] = val
        return cls.from_mapping(values)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def replace(self, **changes) -> "TrainConfig":
        return TrainConfig(**{**self.to_dict(), **changes})


def _coerce(key, typ, raw):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if "int" in str(typ):
            if "None" in str(typ) and text.lower() in ("", "none", "auto"):
                return None
            return int(text)
        return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


@dataclass
class TrainLog:
    """Mean triple objective ``ln sigmoid(x_efg)`` on a fixed probe set of triples."""

    initial_objective: float = float("nan")
    objective: list[float] = field(default_factory=list)


def bpr_triple_objective(x_hat_ef: float, x_hat_eg: float) -> float:
    """``ln sigmoid(x_ef - x_eg)`` without the regularization term."""
    margin = x_hat_ef - x_hat_eg
    # ln sigmoid(m) = -log1p(exp(-m)), rearranged to avoid overflow for m << 0
    if margin >= 0:
        return -math.log1p(math.exp(-margin))
    return margin - math.log1p(math.exp(margin))


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))


def _pick_negative(graph: TranslationGraph, e: int, rng: np.random.Generator) -> int | None:
    observed = graph.sources_of(e)
    n_f = len(graph.source_vocab)
    if len(observed) >= n_f:
        return None
    for _ in range(MAX_NEGATIVE_RETRIES):
        g = int(rng.integers(n_f))
        if g not in observed:
            return g
    return None


def sample_triple(graph: TranslationGraph, rng: np.random.Generator) -> Triple:
    """Draw ``(e, f, g)`` with ``(e, f)`` uniform over observed cells and ``g``
    uniform over columns unobserved for ``e`` (rejection sampling)."""
    cells = graph.cells
    if len(cells) == 0:
        raise DataError("cannot sample from an empty translation graph")
    for _ in range(MAX_NEGATIVE_RETRIES):
        e, f = cells[rng.integers(len(cells))]
        g = _pick_negative(graph, int(e), rng)
        if g is not None:
            return Triple(int(e), int(f), g)
    raise DataError("could not find an unobserved column after "
                    f"{MAX_NEGATIVE_RETRIES} attempts; graph is too dense")


def _probe_triples(graph: TranslationGraph, seed: int) -> list[Triple]:
    rng = np.random.default_rng([seed, 0x5EED])
    n = min(PROBE_TRIPLES, max(len(graph), 1))
    return [sample_triple(graph, rng) for _ in range(n)]


# -- latent factor form -------------------------------------------------------

def mf_regularized_objective(pe, qf, qg, cfg: TrainConfig) -> float:
    """Per-triple objective whose gradient the update rule follows.

    The L2 terms carry a factor 1/2 so that their gradient is exactly
    ``-lambda * theta``, the decay used in the update rule.
    """
    x = float(pe @ (qf - qg))
    return (bpr_triple_objective(x, 0.0)
            - 0.5 * (cfg.lambda_P * pe @ pe + cfg.lambda_Qpos * qf @ qf
                     + cfg.lambda_Qneg * qg @ qg))


def mf_update_direction(pe, qf, qg, cfg: TrainConfig):
    """Ascent directions for ``(p_e, q_f, q_g)`` and the pre-update margin."""
    diff = qf - qg
    x = float(pe @ diff)
    s = sigmoid(-x)
    return (s * diff - cfg.lambda_P * pe,
            s * pe - cfg.lambda_Qpos * qf,
            -s * pe - cfg.lambda_Qneg * qg,
            x)


def sgd_step_mf(factors: LatentFactors, t: Triple, cfg: TrainConfig) -> float:
    """Apply one BPR step to rows ``p_e``, ``q_f``, ``q_g`` in place.

    All three updates use pre-update values. Returns the pre-update margin.
    """
    P, Q = factors.P, factors.Q
    e, f, g = t
    dp, dqf, dqg, x = mf_update_direction(P[e].copy(), Q[f].copy(), Q[g].copy(), cfg)
    eta = cfg.eta
    P[e] += eta * dp
    Q[f] += eta * dqf
    Q[g] += eta * dqg
    if not (math.isfinite(x) and math.isfinite(P[e].sum() + Q[f].sum() + Q[g].sum())):
        raise TrainingDivergence(f"non-finite parameters after step on triple {tuple(t)}")
    return x


def _mf_probe_objective(factors: LatentFactors, probe: list[Triple]) -> float:
    idx = np.array(probe)
    P, Q = factors.P, factors.Q
    x = np.einsum("ij,ij->i", P[idx[:, 0]], Q[idx[:, 1]] - Q[idx[:, 2]])
    return float(_log_sigmoid(x).mean())


def train_mf(graph: TranslationGraph, provenance_filter: Iterable[Provenance | str] | None,
             cfg: TrainConfig) -> tuple[LatentFactors, TrainLog]:
    """Fit latent factors to the observed cells admitted by ``provenance_filter``.

    ``None`` keeps every provenance.
    """
    if provenance_filter is not None:
        graph = graph.filtered(provenance_filter)
    if len(graph) == 0:
        raise DataError("no observed translations left after provenance filtering")
    rng = np.random.default_rng(cfg.seed)
    factors = LatentFactors.initialize(len(graph.target_vocab), len(graph.source_vocab),
                                       cfg.k, cfg.init_scale, rng)
    probe = _probe_triples(graph, cfg.seed)
    history = TrainLog(initial_objective=_mf_probe_objective(factors, probe))
    n_samples = cfg.samples_per_epoch or len(graph)
    for epoch in range(cfg.epochs):
        for step in range(n_samples):
            t = sample_triple(graph, rng)
            try:
                sgd_step_mf(factors, t, cfg)
            except TrainingDivergence as exc:
                raise TrainingDivergence(f"epoch {epoch}, step {step}: {exc}") from None
        history.objective.append(_mf_probe_objective(factors, probe))
        log.debug("mf epoch %d objective %.6f", epoch, history.objective[-1])
    return factors, history


# -- auxiliary feature form ---------------------------------------------------

def aux_regularized_objective(theta_e, beta, theta_f, theta_g, cfg: TrainConfig) -> float:
    x = float((theta_e + beta) @ (theta_f - theta_g))
    return (bpr_triple_objective(x, 0.0)
            - 0.5 * (cfg.lambda_theta * theta_e @ theta_e + cfg.lambda_beta * beta @ beta))


def aux_update_direction(theta_e, beta, theta_f, theta_g, cfg: TrainConfig):
    diff = theta_f - theta_g
    x = float((theta_e + beta) @ diff)
    s = sigmoid(-x)
    return s * diff - cfg.lambda_theta * theta_e, s * diff - cfg.lambda_beta * beta, x


def sgd_step_aux(model: AuxModel, features: np.ndarray, t: Triple, cfg: TrainConfig) -> float:
    """One BPR step on ``theta_e`` and the shared ``beta``.

    ``features`` holds the column feature vectors, row-indexed by column id.
    """
    e, f, g = t
    d_theta, d_beta, x = aux_update_direction(model.theta[e].copy(), model.beta.copy(),
                                              features[f], features[g], cfg)
    model.theta[e] += cfg.eta * d_theta
    model.beta += cfg.eta * d_beta
    if not (math.isfinite(x) and math.isfinite(model.theta[e].sum() + model.beta.sum())):
        raise TrainingDivergence(f"non-finite parameters after step on triple {tuple(t)}")
    return x


def _aux_probe_objective(model: AuxModel, features: np.ndarray, probe: list[Triple]) -> float:
    idx = np.array(probe)
    w = model.theta[idx[:, 0]] + model.beta
    x = np.einsum("ij,ij->i", w, features[idx[:, 1]] - features[idx[:, 2]])
    return float(_log_sigmoid(x).mean())


def train_aux(graph: TranslationGraph, store: FeatureStore,
              cfg: TrainConfig) -> tuple[AuxModel, TrainLog]:
    """Fit one weight vector per target plus a shared bias on column features.

    Every column of ``graph`` must have a vector in ``store``.
    """
    if len(graph) == 0:
        raise DataError("cannot train an aux model on an empty translation graph")
    features = store.matrix(graph.source_vocab.words)
    rng = np.random.default_rng(cfg.seed)
    n_e = len(graph.target_vocab)
    model = AuxModel(store.signal_name,
                     rng.uniform(-cfg.init_scale, cfg.init_scale, size=(n_e, store.dim)),
                     rng.uniform(-cfg.init_scale, cfg.init_scale, size=store.dim))
    probe = _probe_triples(graph, cfg.seed)
    history = TrainLog(initial_objective=_aux_probe_objective(model, features, probe))
    n_samples = cfg.samples_per_epoch or len(graph)
    for epoch in range(cfg.epochs):
        for step in range(n_samples):
            t = sample_triple(graph, rng)
            try:
                sgd_step_aux(model, features, t, cfg)
            except TrainingDivergence as exc:
                raise TrainingDivergence(f"epoch {epoch}, step {step}: {exc}") from None
        history.objective.append(_aux_probe_objective(model, features, probe))
        log.debug("aux %s epoch %d objective %.6f", store.signal_name, epoch,
                  history.objective[-1])
    return model, history
