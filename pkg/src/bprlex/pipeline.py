"""End-to-end pipeline driven by an INI config file.

Sections::

    [paths]      dictionary, translations, source_embeddings, target_embeddings,
                 source_images, target_images, lemma_map, target_words,
                 predict_words, split_dir, models_dir, output_dir
    [options]    seed, fold_case, identity_pairs, strict, workers
    [split]      n_max, seed
    [mf-w]       provenance + training keys      [mf-wc]   same
    [aux-we]     map (linear|nn) + training keys [aux-vis] training keys
    [map]        eta, epochs, seed, hidden
    [backoff]    wiki_min, wiki_crowd_min, alpha_we, alpha_vis
    [predict]    models, k, output
    [evaluation] ks, label, ablation_sizes

Relative paths resolve against the config file's directory. Every seed
defaults to ``[options] seed``.
"""

from __future__ import annotations

import configparser
import json
import logging
from dataclasses import dataclass, field, fields
from functools import cached_property
from pathlib import Path

import numpy as np

from . import dataio
from .core import (AuxBundle, FeatureStore, Provenance, Side, TranslationGraph,
                   TranslationPair, Vocabulary, identity_rows)
from .errors import ConfigError, DataError, PrerequisiteError
from .evaluation import EvalReport, GoldSet, build_test_split, evaluate, seed_ablation
from .mapping import (WORD_SIGNAL, MapTrainConfig, SeedPairs, build_word_aux_store,
                      train_linear_map, train_nn_map)
from .predictor import BackoffPolicy, ModelSet, Predictor, RankedList, tier_counts
from .training import TrainConfig, train_aux, train_mf

log = logging.getLogger(__name__)

VIS_SIGNAL = "vis"
MODEL_NAMES = ("mf-w", "mf-wc", "map-linear", "map-nn", "aux-we", "aux-vis")
PREDICT_MODELS = ("mf-w", "mf-wc", "aux-we", "aux-vis")
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
_MAP_KINDS = {"linear": "map-linear", "nn": "map-nn"}

SCHEMA = {
    "paths": {"dictionary", "translations", "source_embeddings", "target_embeddings",
              "source_images", "target_images", "lemma_map", "target_words", "predict_words",
              "split_dir", "models_dir", "output_dir"},
    "options": {"seed", "fold_case", "identity_pairs", "strict", "workers"},
    "split": {"n_max", "seed"},
    "mf-w": _TRAIN_KEYS | {"provenance"},
    "mf-wc": _TRAIN_KEYS | {"provenance"},
    "aux-we": _TRAIN_KEYS | {"map"},
    "aux-vis": _TRAIN_KEYS,
    "map": {f.name for f in fields(MapTrainConfig)},
    "backoff": {f.name for f in fields(BackoffPolicy)},
    "predict": {"models", "k", "output"},
    "evaluation": {"ks", "label", "ablation_sizes"},
}
_INPUTS = ("dictionary", "translations", "source_embeddings", "target_embeddings",
           "source_images", "target_images", "lemma_map", "target_words", "predict_words")
_DEFAULT_PROVENANCE = {"mf-w": "WIKI, IDENTITY", "mf-wc": "WIKI, WIKI_CROWD, IDENTITY"}


def _split_list(text: str) -> list[str]:
    return [t for t in text.replace(",", " ").split() if t]


def _bool(section, key, value: str) -> bool:
    low = value.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"[{section}] {key}: expected a boolean, got {value!r}")


def _int(section, key, value) -> int:
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"[{section}] {key}: expected an integer, got {value!r}") from None


@dataclass
class PipelineConfig:
    base_dir: Path
    paths: dict[str, Path | None]
    seed: int = 0
    fold_case: bool = False
    identity_pairs: bool = True
    strict: bool = False
    workers: int = 1
    n_max: int = 1000
    split_seed: int = 0
    train: dict[str, TrainConfig] = field(default_factory=dict)
    provenance: dict[str, list[Provenance]] = field(default_factory=dict)
    aux_we_map: str = "nn"
    map_cfg: MapTrainConfig = MapTrainConfig()
    policy: BackoffPolicy = BackoffPolicy()
    predict_models: list[str] = field(default_factory=lambda: list(PREDICT_MODELS[:3]))
    k: int = 10
    predictions_name: str = "predictions.tsv"
    ks: tuple[int, ...] = (1, 5, 10)
    label: str = "source-target"
    ablation_sizes: list[int | str] = field(default_factory=list)

    @classmethod
    def load(cls, path, seed: int | None = None, strict: bool | None = None) -> "PipelineConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} not found")
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_parser(parser, path.parent, seed, strict)

    @classmethod
    def from_parser(cls, parser: configparser.ConfigParser, base_dir: Path,
                    seed: int | None = None, strict: bool | None = None) -> "PipelineConfig":
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            unknown = sorted(set(parser[section]) - SCHEMA[section])
            if unknown:
                raise ConfigError(f"[{section}] unknown keys: {', '.join(unknown)}")
        sec = {name: dict(parser[name]) if parser.has_section(name) else {} for name in SCHEMA}

        opts = sec["options"]
        global_seed = _int("options", "seed", opts.get("seed", 0)) if seed is None else seed
        cfg = cls(base_dir=Path(base_dir), paths={}, seed=global_seed)
        cfg.fold_case = _bool("options", "fold_case", opts.get("fold_case", "false"))
        cfg.identity_pairs = _bool("options", "identity_pairs", opts.get("identity_pairs", "true"))
        cfg.strict = (_bool("options", "strict", opts.get("strict", "false"))
                      if strict is None else strict)
        cfg.workers = _int("options", "workers", opts.get("workers", 1))

        def own_seed(section: dict, name: str) -> int:
            if seed is not None or "seed" not in section:
                return global_seed
            return _int(name, "seed", section["seed"])

        for key in SCHEMA["paths"]:
            raw = sec["paths"].get(key, "").strip()
            cfg.paths[key] = (base_dir / raw) if raw else None
        out = cfg.paths["output_dir"] or base_dir / "out"
        cfg.paths["output_dir"] = out
        cfg.paths["split_dir"] = cfg.paths["split_dir"] or out / "split"
        cfg.paths["models_dir"] = cfg.paths["models_dir"] or out / "models"
        missing = [f"{k}={cfg.paths[k]}" for k in _INPUTS
                   if cfg.paths[k] is not None and not cfg.paths[k].is_file()]
        if missing:
            raise ConfigError("input files not found: " + ", ".join(missing))

        cfg.n_max = _int("split", "n_max", sec["split"].get("n_max", 1000))
        cfg.split_seed = own_seed(sec["split"], "split")

        for name in ("mf-w", "mf-wc", "aux-we", "aux-vis"):
            values = dict(sec[name])
            if name.startswith("mf"):
                try:
                    cfg.provenance[name] = [Provenance.parse(p) for p in _split_list(
                        values.pop("provenance", _DEFAULT_PROVENANCE[name]))]
                except ValueError as exc:
                    raise ConfigError(f"[{name}] provenance: {exc}") from None
            if name == "aux-we":
                cfg.aux_we_map = values.pop("map", "nn").strip()
                if cfg.aux_we_map not in _MAP_KINDS:
                    raise ConfigError("[aux-we] map must be 'linear' or 'nn'")
            values["seed"] = own_seed(values, name)
            cfg.train[name] = TrainConfig.from_mapping(values)

        mvals = dict(sec["map"])
        mvals["seed"] = own_seed(mvals, "map")
        cfg.map_cfg = MapTrainConfig.from_mapping(mvals)

        try:
            cfg.policy = BackoffPolicy(**{k: (float(v) if k.startswith("alpha") else int(v))
                                          for k, v in sec["backoff"].items()})
        except ValueError:
            raise ConfigError(f"[backoff] bad values: {sec['backoff']}") from None

        pred = sec["predict"]
        if "models" in pred:
            cfg.predict_models = _split_list(pred["models"])
        bad = [m for m in cfg.predict_models if m not in PREDICT_MODELS]
        if bad or not cfg.predict_models:
            raise ConfigError(f"[predict] models must be drawn from {PREDICT_MODELS}")
        cfg.k = _int("predict", "k", pred.get("k", 10))
        if cfg.k < 1:
            raise ConfigError("[predict] k must be >= 1")
        cfg.predictions_name = pred.get("output", "predictions.tsv").strip()

        ev = sec["evaluation"]
        cfg.ks = tuple(_int("evaluation", "ks", x) for x in _split_list(ev.get("ks", "1 5 10")))
        if not cfg.ks or min(cfg.ks) < 1:
            raise ConfigError("[evaluation] ks must be positive integers")
        cfg.label = ev.get("label", cfg.label).strip()
        cfg.ablation_sizes = [x.lower() if x.lower() == "all"
                              else _int("evaluation", "ablation_sizes", x)
                              for x in _split_list(ev.get("ablation_sizes", ""))]
        return cfg

    def path(self, key: str) -> Path | None:
        return self.paths[key]

    def require(self, key: str, purpose: str) -> Path:
        p = self.paths.get(key)
        if p is None:
            raise ConfigError(f"[paths] {key} is required to {purpose}")
        return p

    def checkpoint(self, name: str) -> Path:
        if name == "aux-we":
            name = f"aux-we-{self.aux_we_map}"
        return self.paths["models_dir"] / f"{name}.ckpt"

    @property
    def predictions_path(self) -> Path:
        return self.paths["output_dir"] / self.predictions_name


def _ordered_union(*groups) -> list[str]:
    seen: dict[str, None] = {}
    for g in groups:
        for w in g:
            seen.setdefault(w, None)
    return list(seen)


class Pipeline:
    """Loads inputs lazily and runs each pipeline step in memory."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg

    # -- inputs --
    @cached_property
    def dictionary(self) -> list[dataio.DictEntry]:
        path = self.cfg.require("dictionary", "build the test split")
        return dataio.load_dictionary(path, Provenance.SEED, self.cfg.strict, self.cfg.fold_case)

    @cached_property
    def translations(self) -> list[dataio.DictEntry]:
        path = self.cfg.path("translations")
        if path is None:
            return []
        return dataio.load_dictionary(path, Provenance.WIKI, self.cfg.strict, self.cfg.fold_case)

    def _optional_store(self, key: str, loader, *args) -> FeatureStore | None:
        path = self.cfg.path(key)
        return None if path is None else loader(path, *args)

    @cached_property
    def source_embeddings(self) -> FeatureStore | None:
        return self._optional_store("source_embeddings", dataio.load_embeddings, WORD_SIGNAL,
                                    self.cfg.fold_case)

    @cached_property
    def target_embeddings(self) -> FeatureStore | None:
        return self._optional_store("target_embeddings", dataio.load_embeddings, WORD_SIGNAL,
                                    self.cfg.fold_case)

    @cached_property
    def source_images(self) -> FeatureStore | None:
        return self._optional_store("source_images", dataio.load_image_features, VIS_SIGNAL, 10,
                                    self.cfg.strict, self.cfg.fold_case)

    @cached_property
    def target_images(self) -> FeatureStore | None:
        return self._optional_store("target_images", dataio.load_image_features, VIS_SIGNAL, 10,
                                    self.cfg.strict, self.cfg.fold_case)

    @cached_property
    def target_vocab(self) -> Vocabulary:
        if self.cfg.path("target_words") is not None:
            words = dataio.load_word_list(self.cfg.path("target_words"), self.cfg.fold_case)
            return Vocabulary(Side.TARGET, _ordered_union(words))
        emb = self.target_embeddings.words if self.target_embeddings else []
        img = self.target_images.words if self.target_images else []
        dict_targets = self.dictionary if self.cfg.path("dictionary") else []
        return Vocabulary(Side.TARGET, _ordered_union(
            emb, img, (r.target for r in self.translations), (r.target for r in dict_targets)))

    @cached_property
    def source_vocab(self) -> Vocabulary:
        emb = self.source_embeddings.words if self.source_embeddings else []
        img = self.source_images.words if self.source_images else []
        dict_sources = self.dictionary if self.cfg.path("dictionary") else []
        return Vocabulary(Side.SOURCE, _ordered_union(
            emb, img, (r.source for r in self.translations), (r.source for r in dict_sources)))

    @cached_property
    def graph(self) -> TranslationGraph:
        rows = [(r.source, r.target, r.provenance) for r in self.translations]
        if self.cfg.identity_pairs:
            rows += identity_rows(self.target_vocab, self.source_vocab)
        return TranslationGraph.from_words(self.target_vocab, self.source_vocab, rows)

    # -- split --
    def split(self) -> tuple[GoldSet, SeedPairs]:
        pairs = [(r.source, r.target) for r in self.dictionary]
        return build_test_split(pairs, self.cfg.n_max, np.random.default_rng(self.cfg.split_seed))

    def load_split(self) -> tuple[GoldSet, SeedPairs]:
        d = self.cfg.paths["split_dir"]
        if not (d / "gold.tsv").is_file() or not (d / "seeds.tsv").is_file():
            raise PrerequisiteError(f"no test split in {d}; run `bprlex split` first")
        gold_rows = dataio.load_dictionary(d / "gold.tsv", Provenance.SEED, strict=True)
        seed_rows = dataio.load_dictionary(d / "seeds.tsv", Provenance.SEED, strict=True)
        lemma = (dataio.load_lemma_map(self.cfg.path("lemma_map"), self.cfg.strict,
                                       self.cfg.fold_case)
                 if self.cfg.path("lemma_map") else None)
        gold = GoldSet({r.source: r.target for r in gold_rows}, lemma)
        return gold, SeedPairs([(r.target, r.source) for r in seed_rows])

    # -- training --
    def _require_embeddings(self, purpose: str) -> tuple[FeatureStore, FeatureStore]:
        self.cfg.require("source_embeddings", purpose)
        self.cfg.require("target_embeddings", purpose)
        return self.target_embeddings, self.source_embeddings

    def usable_seeds(self, seeds: SeedPairs) -> SeedPairs:
        emb_E, emb_F = self._require_embeddings("train a map")
        kept = [(t, s) for t, s in seeds.pairs if t in emb_E and s in emb_F]
        if len(kept) < len(seeds):
            log.warning("%d of %d seed pairs lack embeddings and are skipped",
                        len(seeds) - len(kept), len(seeds))
        return SeedPairs(kept)

    def train_map(self, kind: str, seeds: SeedPairs) -> dataio.ModelBundle:
        emb_E, emb_F = self._require_embeddings("train a map")
        trainer = train_nn_map if kind == "map-nn" else train_linear_map
        seeds = self.usable_seeds(seeds)
        fit = trainer(seeds, emb_E, emb_F, self.cfg.map_cfg)
        cfg = {f.name: getattr(self.cfg.map_cfg, f.name) for f in fields(MapTrainConfig)}
        cfg.update(n_seeds=len(seeds), hidden=list(self.cfg.map_cfg.hidden))
        return dataio.ModelBundle("map", kind, cfg, mapping=fit.model, history=fit.losses)

    def train_aux_we(self, map_bundle: dataio.ModelBundle) -> dataio.ModelBundle:
        emb_E, emb_F = self._require_embeddings("train aux-we")
        mapped, _ = build_word_aux_store(map_bundle.mapping, emb_E, emb_F)
        return self._train_aux("aux-we", mapped)

    def _train_aux(self, name: str, store: FeatureStore) -> dataio.ModelBundle:
        columns = [w for w in self.target_vocab.words if w in store]
        if not columns:
            raise DataError(f"{name}: no target word has {store.signal_name} features")
        col_vocab = Vocabulary(Side.SOURCE, columns)
        pairs = [TranslationPair(self.target_vocab.id(w), i, Provenance.IDENTITY)
                 for i, w in enumerate(columns)]
        graph = TranslationGraph(self.target_vocab, col_vocab, pairs)
        cfg = self.cfg.train[name]
        model, history = train_aux(graph, store, cfg)
        return dataio.ModelBundle("aux", name, cfg.to_dict(), target_vocab=self.target_vocab,
                                  aux={store.signal_name: model}, history=history.objective)

    def train(self, which: str) -> dataio.ModelBundle:
        if which not in MODEL_NAMES:
            raise ConfigError(f"unknown model {which!r}; choose from {MODEL_NAMES}")
        if which in ("mf-w", "mf-wc"):
            cfg = self.cfg.train[which]
            factors, history = train_mf(self.graph, self.cfg.provenance[which], cfg)
            meta = cfg.to_dict() | {"provenance": [p.value for p in self.cfg.provenance[which]]}
            return dataio.ModelBundle("mf", which, meta, self.target_vocab, self.source_vocab,
                                      factors=factors, history=history.objective)
        if which.startswith("map"):
            _, seeds = self.load_split()
            return self.train_map(which, seeds)
        if which == "aux-we":
            map_name = _MAP_KINDS[self.cfg.aux_we_map]
            path = self.cfg.checkpoint(map_name)
            if not path.is_file():
                raise PrerequisiteError(f"aux-we needs a trained map at {path}; "
                                        f"run `bprlex train {map_name}` first")
            return self.train_aux_we(dataio.load_checkpoint(path))
        self.cfg.require("target_images", "train aux-vis")
        self.cfg.require("source_images", "train aux-vis")
        return self._train_aux("aux-vis", self.target_images)

    # -- prediction --
    def _check_vocab(self, bundle: dataio.ModelBundle) -> None:
        if bundle.target_vocab is not None and bundle.target_vocab != self.target_vocab:
            raise DataError(f"{bundle.name} was trained on a different target vocabulary; retrain")
        if bundle.source_vocab is not None and bundle.source_vocab != self.source_vocab:
            raise DataError(f"{bundle.name} was trained on a different source vocabulary; retrain")

    def load_models(self, overrides: dict[str, dataio.ModelBundle] | None = None) -> ModelSet:
        overrides = overrides or {}
        models = ModelSet(self.target_vocab, self.source_vocab)
        aux: dict = {}
        for name in self.cfg.predict_models:
            if name in overrides:
                bundle = overrides[name]
            else:
                path = self.cfg.checkpoint(name)
                if not path.is_file():
                    raise PrerequisiteError(f"model {name} not found at {path}; "
                                            f"run `bprlex train {name}` first")
                bundle = dataio.load_checkpoint(path)
            self._check_vocab(bundle)
            if name == "mf-w":
                models.mf_w = bundle.factors
            elif name == "mf-wc":
                models.mf_wc = bundle.factors
            else:
                aux.update(bundle.aux)
        if WORD_SIGNAL in aux:
            models.aux_stores[WORD_SIGNAL] = self._require_embeddings("score aux-we")[1]
        if VIS_SIGNAL in aux:
            models.aux_stores[VIS_SIGNAL] = self.source_images
        if aux:
            alphas = [(n, a) for n, a in self.cfg.policy.alphas if n in aux]
            models.aux = AuxBundle(aux, alphas)
        return models

    def predict_words(self, gold: GoldSet | None = None) -> list[str]:
        if self.cfg.path("predict_words") is not None:
            return dataio.load_word_list(self.cfg.path("predict_words"), self.cfg.fold_case)
        if gold is None:
            gold, _ = self.load_split()
        return list(gold.entries)

    def predict(self, words: list[str], models: ModelSet | None = None) -> list[RankedList]:
        predictor = Predictor(models or self.load_models(), self.graph, self.cfg.policy)
        return predictor.predict(words, self.cfg.k, self.cfg.workers)

    # -- ablation --
    def ablate(self, sizes: list[int | str]) -> list[tuple[int, float]]:
        """Retrain the word-embedding map and aux scorer per seed size and score Acc@10.

        The size ``"all"`` stands for the full usable seed set.
        """
        gold, seeds = self.load_split()
        seeds = self.usable_seeds(seeds)
        sizes = [len(seeds) if str(s).lower() == "all" else int(s) for s in sizes]
        map_name = _MAP_KINDS[self.cfg.aux_we_map]
        words = list(gold.entries)
        k_eval = 10

        def run(subset: SeedPairs) -> float:
            overrides = {}
            if "aux-we" in self.cfg.predict_models:
                overrides["aux-we"] = self.train_aux_we(self.train_map(map_name, subset))
            ranked = self.predict(words, self.load_models(overrides))
            report = evaluate(ranked, gold, (k_eval,), self.cfg.label)
            return report.accuracy("ALL", k_eval)

        rng = np.random.default_rng([self.cfg.seed, 0xAB1A7E])
        return seed_ablation(sizes, seeds, run, rng)


# -- file-producing commands ----------------------------------------------------

def cmd_split(cfg: PipelineConfig) -> dict:
    pipe = Pipeline(cfg)
    gold, seeds = pipe.split()
    d = cfg.paths["split_dir"]
    dataio.save_dictionary(d / "gold.tsv", gold.entries.items())
    dataio.save_dictionary(d / "seeds.tsv", [(s, t) for t, s in seeds.pairs])
    manifest = {"seed": cfg.split_seed, "n_max": cfg.n_max, "n_test": len(gold),
                "n_seeds": len(seeds), "dictionary": str(cfg.path("dictionary").name)}
    dataio.write_text(d / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    log.info("split: %d test words, %d seed pairs", len(gold), len(seeds))
    return manifest


def cmd_train(cfg: PipelineConfig, which: str) -> Path:
    bundle = Pipeline(cfg).train(which)
    path = cfg.checkpoint(which)
    dataio.save_checkpoint(bundle, path)
    if bundle.history:
        log.info("%s: objective %.6g after %d epochs", which, bundle.history[-1],
                 len(bundle.history))
    return path


def cmd_predict(cfg: PipelineConfig) -> dict[str, int]:
    pipe = Pipeline(cfg)
    ranked = pipe.predict(pipe.predict_words())
    dataio.save_predictions(cfg.predictions_path, ranked)
    return dict(tier_counts(ranked))


def format_report(report: EvalReport) -> str:
    head = "pair\ttier\t" + "\t".join(f"acc@{k}" for k in report.ks) + "\tn_test\n"
    body = "".join(f"{report.label}\t{tier}\t" + "\t".join(f"{accs[k]:.6f}" for k in report.ks)
                   + f"\t{n}\n" for tier, accs, n in report.rows)
    return head + body


def format_per_word(report: EvalReport) -> str:
    rows = ["source\tgold\ttier\tgold_rank\ttop1\n"]
    for s, g, tier, rank, top in report.per_word:
        rows.append(f"{s}\t{g}\t{tier}\t{rank if rank is not None else ''}\t{top}\n")
    return "".join(rows)


def cmd_evaluate(cfg: PipelineConfig, predictions: Path | None = None) -> EvalReport:
    pipe = Pipeline(cfg)
    gold, _ = pipe.load_split()
    path = predictions or cfg.predictions_path
    if not path.is_file():
        raise PrerequisiteError(f"no predictions at {path}; run `bprlex predict` first")
    report = evaluate(dataio.load_predictions(path), gold, cfg.ks, cfg.label)
    stem = path.stem
    dataio.write_text(path.with_name(f"{stem}.report.tsv"), format_report(report))
    dataio.write_text(path.with_name(f"{stem}.per_word.tsv"), format_per_word(report))
    return report


def cmd_ablate(cfg: PipelineConfig, sizes: list[int | str] | None = None) -> list[tuple[int, float]]:
    sizes = sizes or cfg.ablation_sizes
    if not sizes:
        raise ConfigError("no seed sizes given (--sizes or [evaluation] ablation_sizes)")
    rows = Pipeline(cfg).ablate(sizes)
    text = "size\tacc@10\n" + "".join(f"{s}\t{a:.6f}\n" for s, a in rows)
    dataio.write_text(cfg.paths["output_dir"] / "ablation.tsv", text)
    return rows
