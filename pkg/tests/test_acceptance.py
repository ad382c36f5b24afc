"""Acceptance suite: one test per criterion, each at its stated tolerance.

The terminal summary prints one PASS/FAIL line per criterion.
"""

import itertools
import math
import os
import shutil
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bprlex import cli
from bprlex.baselines import cnn_avgmax
from bprlex.core import Provenance, TranslationGraph, TranslationPair, Vocabulary
from bprlex.evaluation import GoldSet, acc_at_k
from bprlex.mapping import (MapTrainConfig, SeedPairs, init_nn_layers, nn_loss_and_grads,
                            train_linear_map, train_nn_map)
from bprlex.core import FeatureStore
from bprlex.predictor import RankedList, Tier, classify_tier
from bprlex.synthetic import planted_matrix, write_toy_language_pair
from bprlex.training import (TrainConfig, aux_regularized_objective, aux_update_direction,
                             mf_regularized_objective, mf_update_direction, train_mf)

REPO = Path(__file__).resolve().parents[1]
VARIANTS = ["BPR_W", "BPR_W+C", "BPR_LN", "BPR_NN", "BPR_WE", "BPR_VIS"]


_LAMBDAS = ("lambda_P", "lambda_Qpos", "lambda_Qneg", "lambda_theta", "lambda_beta")


def central_diff(fun, x, h=1e-5):
    g = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (fun(xp) - fun(xm)) / (2 * h)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


@pytest.mark.criterion("AC-1", "gradient fidelity of MF and AUX updates (rel. err < 1e-4, 100 instances, < 10 s)")
def test_ac1_gradient_fidelity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        k = int(rng.integers(1, 11))
        d = int(rng.integers(1, 21))
        cfg = TrainConfig(lambda_P=rng.uniform(0, 0.5), lambda_Qpos=rng.uniform(0, 0.5),
                          lambda_Qneg=rng.uniform(0, 0.5), lambda_theta=rng.uniform(0, 0.5),
                          lambda_beta=rng.uniform(0, 0.5))
        pe, qf, qg = rng.normal(size=(3, k))
        dp, dqf, dqg, _ = mf_update_direction(pe, qf, qg, cfg)
        worst = max(worst,
                    rel_err(dp, central_diff(lambda v: mf_regularized_objective(v, qf, qg, cfg), pe)),
                    rel_err(dqf, central_diff(lambda v: mf_regularized_objective(pe, v, qg, cfg), qf)),
                    rel_err(dqg, central_diff(lambda v: mf_regularized_objective(pe, qf, v, cfg), qg)))
        te, b, tf, tg = rng.normal(size=(4, d))
        dt, db, _ = aux_update_direction(te, b, tf, tg, cfg)
        worst = max(worst,
                    rel_err(dt, central_diff(lambda v: aux_regularized_objective(v, b, tf, tg, cfg), te)),
                    rel_err(db, central_diff(lambda v: aux_regularized_objective(te, v, tf, tg, cfg), b)))
        # the same check against the unhalved penalty lambda*||theta||^2, whose
        # gradient is the update rule run with twice the decay
        twice = replace(cfg, **{n: 2 * getattr(cfg, n) for n in _LAMBDAS})

        def literal_mf(p, q1, q2):
            return (-float(np.logaddexp(0.0, -(p @ (q1 - q2)))) - cfg.lambda_P * p @ p
                    - cfg.lambda_Qpos * q1 @ q1 - cfg.lambda_Qneg * q2 @ q2)

        def literal_aux(t, bb):
            return (-float(np.logaddexp(0.0, -((t + bb) @ (tf - tg)))) - cfg.lambda_theta * t @ t
                    - cfg.lambda_beta * bb @ bb)
        dp, dqf, dqg, _ = mf_update_direction(pe, qf, qg, twice)
        dt, db, _ = aux_update_direction(te, b, tf, tg, twice)
        worst = max(worst,
                    rel_err(dp, central_diff(lambda v: literal_mf(v, qf, qg), pe)),
                    rel_err(dqf, central_diff(lambda v: literal_mf(pe, v, qg), qf)),
                    rel_err(dqg, central_diff(lambda v: literal_mf(pe, qf, v), qg)),
                    rel_err(dt, central_diff(lambda v: literal_aux(v, b), te)),
                    rel_err(db, central_diff(lambda v: literal_aux(te, v), b)))
    elapsed = time.perf_counter() - t0
    print(f"AC-1 worst relative error {worst:.2e} in {elapsed:.2f} s")
    assert worst < 1e-4
    assert elapsed < 10


@pytest.mark.criterion("AC-2", "synthetic matrix completion: held-out AUC > 0.90, Acc@10 > 0.60, < 60 s")
def test_ac2_synthetic_matrix_completion():
    t0 = time.perf_counter()
    pm = planted_matrix(n_targets=200, n_sources=150, k=5, top_fraction=0.05, holdout=0.2, seed=0)
    tv = Vocabulary("target", [f"e{i}" for i in range(200)])
    sv = Vocabulary("source", [f"f{i}" for i in range(150)])
    graph = TranslationGraph(tv, sv, [TranslationPair(int(e), int(f), Provenance.WIKI)
                                      for e, f in pm.train])
    factors, _ = train_mf(graph, None, TrainConfig())
    S = factors.P @ factors.Q.T
    observed = np.zeros(S.shape, dtype=bool)
    observed[pm.observed[:, 0], pm.observed[:, 1]] = True
    train_mask = np.zeros(S.shape, dtype=bool)
    train_mask[pm.train[:, 0], pm.train[:, 1]] = True

    # AUC: each held-out cell against 100 unobserved targets of the same source
    rng = np.random.default_rng(99)
    wins = []
    for e, f in pm.held_out:
        negatives = np.flatnonzero(~observed[:, f])
        neg = rng.choice(negatives, size=100)
        wins.append(np.mean((S[e, f] > S[neg, f]) + 0.5 * (S[e, f] == S[neg, f])))
    auc = float(np.mean(wins))

    # Acc@10: rank every target not already observed in training for that source
    hits = []
    held_by_source = {}
    for e, f in pm.held_out:
        held_by_source.setdefault(int(f), set()).add(int(e))
    for f, gold in held_by_source.items():
        scores = np.where(train_mask[:, f], -np.inf, S[:, f])
        top = np.argsort(-scores, kind="stable")[:10]
        hits.append(bool(gold & set(top.tolist())))
    acc10 = float(np.mean(hits))
    elapsed = time.perf_counter() - t0
    # sources without a held-out cell have nothing to retrieve; the figure
    # counting them as misses is reported for reference only
    print(f"AC-2 AUC {auc:.3f}  Acc@10 {acc10:.3f} over {len(hits)} sources "
          f"({sum(hits) / 150:.3f} over all 150)  {elapsed:.1f} s")
    assert auc > 0.90
    assert acc10 > 0.60
    assert elapsed < 60


@pytest.mark.criterion("AC-3", "linear map recovery: rel. Frobenius error < 1e-2, 100% NN retrieval, < 10 s")
def test_ac3_linear_map_recovery():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    d, n = 20, 500
    W_star = rng.normal(size=(d, d)) / math.sqrt(d)
    X_E = rng.normal(size=(n, d))
    X_F = X_E @ W_star
    emb_E = FeatureStore("we", d, {f"t{i}": v for i, v in enumerate(X_E)})
    emb_F = FeatureStore("we", d, {f"s{i}": v for i, v in enumerate(X_F)})
    fit = train_linear_map(SeedPairs([(f"t{i}", f"s{i}") for i in range(n)]), emb_E, emb_F,
                           MapTrainConfig())
    W = fit.model.W
    err = np.linalg.norm(W - W_star) / np.linalg.norm(W_star)
    mapped = X_E @ W
    dist = ((mapped[:, None, :] - X_F[None, :, :]) ** 2).sum(-1)
    retrieval = float(np.mean(dist.argmin(axis=1) == np.arange(n)))
    elapsed = time.perf_counter() - t0
    print(f"AC-3 relative error {err:.2e}  retrieval {retrieval:.3f}  {elapsed:.2f} s")
    assert err < 1e-2
    assert retrieval == 1.0
    assert elapsed < 10


@pytest.mark.criterion("AC-4", "tanh map fits 10 pairs to loss < 1e-3; backprop rel. err < 1e-4; < 30 s")
def test_ac4_nn_capacity_and_gradients():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    X_E, X_F = rng.normal(size=(10, 10)), rng.normal(size=(10, 10)) * 0.5
    emb_E = FeatureStore("we", 10, {f"t{i}": v for i, v in enumerate(X_E)})
    emb_F = FeatureStore("we", 10, {f"s{i}": v for i, v in enumerate(X_F)})
    fit = train_nn_map(SeedPairs([(f"t{i}", f"s{i}") for i in range(10)]), emb_E, emb_F,
                       MapTrainConfig())

    worst = 0.0
    for _ in range(5):
        layers = init_nn_layers(6, 4, (7, 5, 6), rng)
        x_e, x_f = rng.normal(size=6), rng.normal(size=4)
        _, grads = nn_loss_and_grads(layers, x_e, x_f)
        for li, phi in enumerate(layers):
            num = np.zeros_like(phi)
            for idx in np.ndindex(phi.shape):
                old = phi[idx]
                phi[idx] = old + 1e-5
                up = nn_loss_and_grads(layers, x_e, x_f)[0]
                phi[idx] = old - 1e-5
                down = nn_loss_and_grads(layers, x_e, x_f)[0]
                phi[idx] = old
                num[idx] = (up - down) / 2e-5
            worst = max(worst, rel_err(grads[li], num))
    elapsed = time.perf_counter() - t0
    print(f"AC-4 final loss {fit.final_loss:.2e}  worst grad error {worst:.2e}  {elapsed:.2f} s")
    assert fit.final_loss < 1e-3
    assert worst < 1e-4
    assert elapsed < 30


@pytest.mark.criterion("AC-5", "back-off dispatch truth table, 16/16 cases")
def test_ac5_backoff_truth_table():
    correct = 0
    for n_wiki, n_crowd in itertools.product(range(4), range(4)):
        n = max(n_wiki + n_crowd, 1)
        tv = Vocabulary("target", [f"e{i}" for i in range(n)])
        sv = Vocabulary("source", ["f"])
        pairs = [TranslationPair(i, 0, Provenance.WIKI) for i in range(n_wiki)]
        pairs += [TranslationPair(n_wiki + i, 0, Provenance.WIKI_CROWD) for i in range(n_crowd)]
        expected = Tier.MF_W if n_wiki >= 1 else Tier.MF_WC if n_crowd >= 2 else Tier.AUX
        correct += classify_tier(0, TranslationGraph(tv, sv, pairs)) is expected
    print(f"AC-5 {correct}/16 cases")
    assert correct == 16


def brute_avgmax(f_images, e_images):
    total = 0.0
    for a in f_images:
        best = -math.inf
        for b in e_images:
            dot = sum(x * y for x, y in zip(a, b))
            na = math.sqrt(sum(x * x for x in a))
            nb = math.sqrt(sum(y * y for y in b))
            best = max(best, dot / (na * nb))
        total += best
    return total / len(f_images)


@pytest.mark.criterion("AC-6", "CNN-AvgMax equals brute force to 1e-12 on 50 instances; asymmetry example")
def test_ac6_cnn_avgmax():
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(50):
        m, n = rng.integers(1, 11, size=2)
        f, e = rng.normal(size=(m, 64)), rng.normal(size=(n, 64))
        worst = max(worst, abs(cnn_avgmax(f, e) - brute_avgmax(f.tolist(), e.tolist())))
    two, one = np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([[1.0, 0.0]])
    forward, backward = cnn_avgmax(two, one), cnn_avgmax(one, two)
    print(f"AC-6 worst deviation {worst:.1e}; asymmetry {forward} vs {backward}")
    assert worst < 1e-12
    assert forward == pytest.approx(0.5, abs=1e-15) and backward == pytest.approx(1.0, abs=1e-15)


def _ranked(source, targets, tier="MF_W"):
    return RankedList(source, [(t, -float(i)) for i, t in enumerate(targets)], tier)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.lists(st.integers(0, 8), max_size=20), min_size=1, max_size=8),
       st.lists(st.booleans(), min_size=8, max_size=8))
def _acc_monotone_property(lists, present):
    gold = GoldSet({f"s{i}": "w0" for i in range(len(lists))}, {"w1": "w0"})
    preds = [_ranked(f"s{i}", [f"w{j}" for j in dict.fromkeys(li)])
             for i, li in enumerate(lists) if present[i % len(present)]]
    accs = [acc_at_k(preds, gold, k) for k in range(1, 25)]
    assert all(a <= b for a, b in zip(accs, accs[1:]))


@pytest.mark.criterion("AC-7", "evaluator fixtures exact (lemma and missing paths); Acc@k monotone in k")
def test_ac7_evaluator_fidelity():
    filler = [f"z{i}" for i in range(12)]
    gold = GoldSet({"a": "A", "b": "B", "c": "C"})
    preds = [_ranked("a", ["x", "A"] + filler[:8]), _ranked("b", filler[:10] + ["B"]),
             _ranked("c", filler)]
    assert [acc_at_k(preds, gold, k) for k in (1, 5, 10)] == [0.0, 1 / 3, 1 / 3]

    lemma_gold = GoldSet({"a": "dog", "b": "cat", "c": "sun"}, {"dogs": "dog", "cats": "cat"})
    lemma_preds = [_ranked("a", ["dogs"]), _ranked("b", ["x", "y", "z", "w", "v", "cats"])]
    assert [acc_at_k(lemma_preds, lemma_gold, k) for k in (1, 5, 10)] == [1 / 3, 1 / 3, 2 / 3]

    missing_gold = GoldSet({"a": "A", "b": "B", "c": "C", "d": "D"})
    assert [acc_at_k([_ranked("a", ["A"])], missing_gold, k) for k in (1, 5, 10)] == \
        [0.25, 0.25, 0.25]
    _acc_monotone_property()


# -- end-to-end toy pipeline ----------------------------------------------------

def _run_toy(root: Path) -> float:
    """Copy the presets next to a link to the committed toy data and run every step."""
    (root / "configs").mkdir(parents=True)
    shutil.copytree(REPO / "configs" / "toy", root / "configs" / "toy")
    os.symlink(REPO / "data", root / "data")
    cfg = root / "configs" / "toy"
    t0 = time.perf_counter()

    def step(variant, *args):
        code = cli.main([*args, "--config", str(cfg / f"{variant}.ini"), "--quiet"])
        assert code == 0, f"{variant} {args} exited with {code}"
    step("BPR_WE", "split")
    for which in ("mf-w", "mf-wc", "map-linear", "map-nn", "aux-vis", "aux-we"):
        step("BPR_WE", "train", which)
    step("BPR_LN", "train", "aux-we")
    for v in VARIANTS:
        step(v, "predict")
        step(v, "evaluate")
    return time.perf_counter() - t0


def _acc10(root: Path, variant: str) -> float:
    rows = (root / "runs" / "toy" / variant / "predictions.report.tsv").read_text().splitlines()
    head = rows[0].split("\t")
    for row in rows[1:]:
        cols = row.split("\t")
        if cols[1] == "ALL":
            return float(cols[head.index("acc@10")])
    raise AssertionError("no ALL row")


def _tree(d: Path) -> dict[str, bytes]:
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def toy_runs(tmp_path_factory):
    first, second = tmp_path_factory.mktemp("toy_a"), tmp_path_factory.mktemp("toy_b")
    return (first, _run_toy(first)), (second, _run_toy(second))


@pytest.mark.criterion("AC-8", "toy pipeline < 5 min, BPR_WE Acc@10 >= 0.5 and >= BPR_W, byte-identical rerun")
def test_ac8_toy_pipeline(toy_runs, tmp_path):
    (a, seconds), (b, _) = toy_runs
    accs = {v: _acc10(a, v) for v in VARIANTS}
    print("AC-8 " + "  ".join(f"{v}={acc:.3f}" for v, acc in accs.items()) + f"  {seconds:.1f} s")
    assert seconds < 300
    assert accs["BPR_WE"] >= 0.5
    assert accs["BPR_WE"] >= accs["BPR_W"]
    assert _tree(a / "runs") == _tree(b / "runs")
    # the committed data is what the seeded generator produces
    write_toy_language_pair(tmp_path / "regen", seed=0)
    assert _tree(tmp_path / "regen") == _tree(REPO / "data" / "toy")


@pytest.mark.criterion("AC-9", "every training command re-run with the same seed gives bit-identical checkpoints")
def test_ac9_checkpoint_determinism(toy_runs):
    (a, _), (b, _) = toy_runs
    ckpts_a = _tree(a / "runs" / "toy" / "models")
    ckpts_b = _tree(b / "runs" / "toy" / "models")
    expected = {"mf-w.ckpt", "mf-wc.ckpt", "map-linear.ckpt", "map-nn.ckpt", "aux-vis.ckpt",
                "aux-we-nn.ckpt", "aux-we-linear.ckpt"}
    assert set(ckpts_a) == expected
    assert ckpts_a == ckpts_b
