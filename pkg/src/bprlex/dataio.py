"""File formats: dictionaries, embeddings, image features, lemma maps,
word lists, prediction TSVs and model checkpoints.

All text is UTF-8 and every word is NFC-normalized on load. Loaders scan
the whole file and report every malformed line with its line number.
"""

from __future__ import annotations

import io
import json
import logging
import os
import tempfile
import unicodedata
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .core import AuxModel, FeatureStore, LatentFactors, Provenance, Vocabulary
from .errors import CheckpointError, DataError
from .mapping import FOUR_LAYER_TANH, LINEAR, MappingModel
from .predictor import RankedList

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


def normalize_word(word: str, fold_case: bool = False) -> str:
    word = unicodedata.normalize("NFC", word.strip())
    return word.casefold() if fold_case else word


def _read_lines(path) -> list[str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read().splitlines()
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not valid UTF-8 ({exc})") from None
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None


def _fail_or_warn(path, problems: list[str], strict: bool) -> None:
    if not problems:
        return
    msg = f"{path}: {len(problems)} malformed line(s):\n  " + "\n  ".join(problems[:20])
    if strict:
        raise DataError(msg)
    log.warning(msg)


def _atomic_write(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    umask = os.umask(0)
    os.umask(umask)
    try:
        os.chmod(tmp, 0o666 & ~umask)
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text(path, text: str) -> None:
    _atomic_write(path, text.encode("utf-8"))


# -- dictionaries -------------------------------------------------------------

class DictEntry(NamedTuple):
    source: str
    target: str
    provenance: Provenance | None


def parse_dictionary(lines: Iterable[str], default_provenance: Provenance | str | None = None,
                     fold_case: bool = False) -> tuple[list[DictEntry], list[str]]:
    """Parse ``source<TAB>target[<TAB>provenance]`` rows.

    Returns the unique entries in file order and the located problems.
    """
    default = Provenance(default_provenance) if default_provenance else None
    seen: dict[DictEntry, None] = {}
    problems, duplicates = [], 0
    for lineno, line in enumerate(lines, 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cols = line.rstrip("\r\n").split("\t")
        if len(cols) not in (2, 3) or not all(c.strip() for c in cols):
            problems.append(f"line {lineno}: expected 2 or 3 non-empty tab-separated fields")
            continue
        prov = default
        if len(cols) == 3:
            try:
                prov = Provenance.parse(cols[2])
            except ValueError:
                problems.append(f"line {lineno}: unknown provenance {cols[2]!r}")
                continue
        entry = DictEntry(normalize_word(cols[0], fold_case), normalize_word(cols[1], fold_case),
                          prov)
        if entry in seen:
            duplicates += 1
        seen[entry] = None
    if duplicates:
        log.warning("collapsed %d duplicate dictionary rows", duplicates)
    return list(seen), problems


def load_dictionary(path, default_provenance: Provenance | str | None = None,
                    strict: bool = False, fold_case: bool = False) -> list[DictEntry]:
    entries, problems = parse_dictionary(_read_lines(path), default_provenance, fold_case)
    _fail_or_warn(path, problems, strict)
    return entries


def save_dictionary(path, rows: Iterable[tuple[str, str]]) -> None:
    write_text(path, "".join(f"{s}\t{t}\n" for s, t in rows))


# -- embeddings ---------------------------------------------------------------

def parse_embeddings(lines: list[str], signal_name: str = "we",
                     fold_case: bool = False) -> tuple[FeatureStore | None, list[str]]:
    problems: list[str] = []
    if not lines:
        return None, ["line 1: missing 'count dim' header"]
    head = lines[0].split()
    try:
        count, dim = int(head[0]), int(head[1])
        if len(head) != 2 or count < 0 or dim < 1:
            raise ValueError
    except (ValueError, IndexError):
        return None, [f"line 1: bad header {lines[0]!r}, expected 'count dim'"]
    store = FeatureStore(signal_name, dim)
    rows, dups = 0, 0
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        parts = line.rstrip().split(" ")
        if len(parts) != dim + 1:
            problems.append(f"line {lineno}: {len(parts) - 1} values, expected {dim}")
            continue
        try:
            vec = np.array([float(x) for x in parts[1:]])
        except ValueError:
            problems.append(f"line {lineno}: non-numeric value")
            continue
        if not np.isfinite(vec).all():
            problems.append(f"line {lineno}: non-finite value")
            continue
        word = normalize_word(parts[0], fold_case)
        dups += word in store
        store.add(word, vec)
        rows += 1
    if rows + len(problems) != count:
        problems.append(f"header announces {count} vectors but the body has "
                        f"{rows + len(problems)}")
    if dups:
        log.warning("%d duplicate embedding words; the last vector wins", dups)
    return store, problems


def load_embeddings(path, signal_name: str = "we", fold_case: bool = False) -> FeatureStore:
    """Read word2vec text format: ``count dim`` header then ``word v1 ... vdim``."""
    store, problems = parse_embeddings(_read_lines(path), signal_name, fold_case)
    _fail_or_warn(path, problems, strict=True)
    return store


def _fmt(x: float) -> str:
    return repr(float(x))


def format_embeddings(store: FeatureStore) -> str:
    out = [f"{len(store)} {store.dim}\n"]
    for w in store.words:
        if store.multiplicity(w) != 1:
            raise DataError(f"{w!r} has {store.multiplicity(w)} vectors; "
                            "word2vec format holds one per word")
        out.append(w + " " + " ".join(_fmt(x) for x in store.vector(w)) + "\n")
    return "".join(out)


def save_embeddings(store: FeatureStore, path) -> None:
    write_text(path, format_embeddings(store))


# -- image features -----------------------------------------------------------

def parse_image_features(lines: Iterable[str], signal_name: str = "vis",
                         max_images: int = 10,
                         fold_case: bool = False) -> tuple[FeatureStore | None, list[str]]:
    """Rows ``word<TAB>index<TAB>v1 ... vd``; images past ``max_images`` are dropped."""
    problems: list[str] = []
    blocks: dict[str, list[np.ndarray]] = {}
    dim = None
    for lineno, line in enumerate(lines, 1):
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.rstrip("\r\n").split("\t")
        if len(cols) != 3 or not cols[0].strip():
            problems.append(f"line {lineno}: expected word, index and vector fields")
            continue
        try:
            int(cols[1])
            vec = np.array([float(x) for x in cols[2].split()])
        except ValueError:
            problems.append(f"line {lineno}: non-numeric index or value")
            continue
        if len(vec) == 0 or (dim is not None and len(vec) != dim):
            problems.append(f"line {lineno}: {len(vec)} values, expected {dim or 'at least 1'}")
            continue
        if not np.isfinite(vec).all():
            problems.append(f"line {lineno}: non-finite value")
            continue
        if dim is None:
            dim = len(vec)
        block = blocks.setdefault(normalize_word(cols[0], fold_case), [])
        if len(block) < max_images:
            block.append(vec)
    if dim is None:
        return None, problems
    store = FeatureStore(signal_name, dim)
    for w, vecs in blocks.items():
        store.add(w, np.vstack(vecs))
    return store, problems


def load_image_features(path, signal_name: str = "vis", max_images: int = 10,
                        strict: bool = False, fold_case: bool = False) -> FeatureStore:
    store, problems = parse_image_features(_read_lines(path), signal_name, max_images, fold_case)
    _fail_or_warn(path, problems, strict)
    if store is None:
        raise DataError(f"{path}: no image features found")
    return store


def save_image_features(store: FeatureStore, path) -> None:
    out = []
    for w in store.words:
        for i, v in enumerate(store.images(w)):
            out.append(f"{w}\t{i}\t" + " ".join(_fmt(x) for x in v) + "\n")
    write_text(path, "".join(out))


# -- small tables -------------------------------------------------------------

def load_lemma_map(path, strict: bool = False, fold_case: bool = False) -> dict[str, str]:
    table, problems = {}, []
    for lineno, line in enumerate(_read_lines(path), 1):
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 2 or not all(c.strip() for c in cols):
            problems.append(f"line {lineno}: expected word<TAB>lemma")
            continue
        table[normalize_word(cols[0], fold_case)] = normalize_word(cols[1], fold_case)
    _fail_or_warn(path, problems, strict)
    return table


def load_word_list(path, fold_case: bool = False) -> list[str]:
    words = (normalize_word(l, fold_case) for l in _read_lines(path))
    return [w for w in words if w and not w.startswith("#")]


# -- predictions --------------------------------------------------------------

PREDICTION_HEADER = "source\trank\ttarget\tscore\ttier\n"


def format_predictions(ranked: Iterable[RankedList]) -> str:
    out = [PREDICTION_HEADER]
    for r in ranked:
        if not r.items:
            out.append(f"{r.source}\t\t\t\t{r.tier}\n")
        for rank, (t, s) in enumerate(r.items, 1):
            out.append(f"{r.source}\t{rank}\t{t}\t{_fmt(s)}\t{r.tier}\n")
    return "".join(out)


def save_predictions(path, ranked: Iterable[RankedList]) -> None:
    write_text(path, format_predictions(ranked))


def load_predictions(path) -> dict[str, RankedList]:
    lines = _read_lines(path)
    if not lines or lines[0] + "\n" != PREDICTION_HEADER:
        raise DataError(f"{path}: missing prediction header")
    out: dict[str, RankedList] = {}
    problems = []
    for lineno, line in enumerate(lines[1:], 2):
        cols = line.split("\t")
        if len(cols) != 5:
            problems.append(f"line {lineno}: expected 5 fields")
            continue
        src, rank, tgt, score, tier = cols
        r = out.setdefault(src, RankedList(src, [], tier))
        if rank:
            try:
                r.items.append((tgt, float(score)))
            except ValueError:
                problems.append(f"line {lineno}: bad score {score!r}")
    _fail_or_warn(path, problems, strict=True)
    return out


# -- checkpoints --------------------------------------------------------------

@dataclass
class ModelBundle:
    """Everything one training command produces.

    ``kind`` is ``"mf"``, ``"map"`` or ``"aux"``; only the matching parameter
    fields are filled.
    """

    kind: str
    name: str
    config: dict = field(default_factory=dict)
    target_vocab: Vocabulary | None = None
    source_vocab: Vocabulary | None = None
    factors: LatentFactors | None = None
    aux: dict[str, AuxModel] = field(default_factory=dict)
    alphas: list[tuple[str, float]] = field(default_factory=list)
    mapping: MappingModel | None = None
    history: list[float] = field(default_factory=list)


def _arrays(bundle: ModelBundle) -> dict[str, np.ndarray]:
    arrays = {}
    if bundle.factors is not None:
        arrays["P"], arrays["Q"] = bundle.factors.P, bundle.factors.Q
    for name, m in bundle.aux.items():
        arrays[f"theta.{name}"], arrays[f"beta.{name}"] = m.theta, m.beta
    if bundle.mapping is not None:
        if bundle.mapping.kind == LINEAR:
            arrays["W"] = bundle.mapping.W
        else:
            for i, phi in enumerate(bundle.mapping.layers, 1):
                arrays[f"phi{i}"] = phi
    arrays["history"] = np.asarray(bundle.history, dtype=np.float64)
    return arrays


def checkpoint_bytes(bundle: ModelBundle) -> bytes:
    meta = {
        "format_version": FORMAT_VERSION,
        "kind": bundle.kind,
        "name": bundle.name,
        "config": bundle.config,
        "target_vocab": list(bundle.target_vocab.words) if bundle.target_vocab else None,
        "source_vocab": list(bundle.source_vocab.words) if bundle.source_vocab else None,
        "k": bundle.factors.k if bundle.factors is not None else None,
        "aux_signals": list(bundle.aux),
        "alphas": [[n, a] for n, a in bundle.alphas],
        "map_kind": bundle.mapping.kind if bundle.mapping else None,
    }
    buf = io.BytesIO()
    # fixed timestamps keep the archive byte-identical across runs
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        info = zipfile.ZipInfo("meta.json", _ZIP_EPOCH)
        zf.writestr(info, json.dumps(meta, sort_keys=True, ensure_ascii=False), zipfile.ZIP_DEFLATED)
        for key, arr in _arrays(bundle).items():
            npy = io.BytesIO()
            np.lib.format.write_array(npy, np.ascontiguousarray(arr), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(f"{key}.npy", _ZIP_EPOCH), npy.getvalue(),
                        zipfile.ZIP_DEFLATED)
    return buf.getvalue()


def save_checkpoint(bundle: ModelBundle, path) -> None:
    """Write atomically: a temp file in the same directory, then rename."""
    _atomic_write(path, checkpoint_bytes(bundle))


def load_checkpoint(path) -> ModelBundle:
    try:
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json").decode("utf-8"))
            version = meta.get("format_version")
            if version != FORMAT_VERSION:
                raise CheckpointError(f"{path}: checkpoint format {version} cannot be read by "
                                      f"format {FORMAT_VERSION}; retrain or migrate it")
            arrays = {n[:-4]: np.lib.format.read_array(io.BytesIO(zf.read(n)), allow_pickle=False)
                      for n in zf.namelist() if n.endswith(".npy")}
    except CheckpointError:
        raise
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint {path} does not exist") from None
    except (zipfile.BadZipFile, KeyError, ValueError, EOFError, OSError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint ({exc})") from None

    try:
        bundle = ModelBundle(meta["kind"], meta["name"], meta["config"])
        if meta["target_vocab"] is not None:
            bundle.target_vocab = Vocabulary("target", meta["target_vocab"])
        if meta["source_vocab"] is not None:
            bundle.source_vocab = Vocabulary("source", meta["source_vocab"])
        if "P" in arrays:
            bundle.factors = LatentFactors(arrays["P"], arrays["Q"])
            if bundle.factors.k != meta["k"]:
                raise CheckpointError(f"{path}: factor rank does not match recorded k")
        for name in meta["aux_signals"]:
            bundle.aux[name] = AuxModel(name, arrays[f"theta.{name}"], arrays[f"beta.{name}"])
        bundle.alphas = [(n, float(a)) for n, a in meta["alphas"]]
        if meta["map_kind"] == LINEAR:
            bundle.mapping = MappingModel(LINEAR, W=arrays["W"])
        elif meta["map_kind"] == FOUR_LAYER_TANH:
            bundle.mapping = MappingModel(FOUR_LAYER_TANH,
                                          layers=[arrays[f"phi{i}"] for i in range(1, 5)])
        bundle.history = arrays["history"].tolist()
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: incomplete checkpoint ({exc})") from None
    return bundle
