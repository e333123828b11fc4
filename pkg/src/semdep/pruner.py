"""First-order feature-rich unlabeled arc pruner and label-frequency
filtering.

The pruner is a log-linear model over hashed feature templates (per-arc
logistic regression; positives are gold unlabeled arcs). Arcs whose
posterior falls below the threshold are discarded before candidate
enumeration.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .autodiff import AdamState, ParamTensor, adam_step

N_BUCKETS = 1 << 20

_DIST_EDGES = (1, 2, 3, 7)


def _distance_bucket(i: int, j: int) -> str:
    d = j - i
    sign = "+" if d > 0 else "-"
    m = abs(d)
    if m <= 3:
        return f"{sign}{m}"
    if m <= 7:
        return f"{sign}4-7"
    return f"{sign}8+"


def _bucket(template: str, value: str) -> int:
    h = hashlib.blake2b(f"{template}={value}".encode("utf-8"), digest_size=8)
    return int.from_bytes(h.digest(), "little") % N_BUCKETS


def featurize_arc(sentence, i: int, j: int) -> np.ndarray:
    """Hashed feature buckets for a candidate arc i -> j (deterministic)."""
    if i == j:
        raise ValueError("no self-loop arcs")
    hi = sentence.tokens[i - 1]
    mj = sentence.tokens[j - 1]
    feats = {
        _bucket("hf", hi.form),
        _bucket("mf", mj.form),
        _bucket("hp", hi.pos),
        _bucket("mp", mj.pos),
        _bucket("pp", f"{hi.pos}|{mj.pos}"),
        _bucket("dist", _distance_bucket(i, j)),
        _bucket("bias", ""),
    }
    return np.array(sorted(feats), dtype=np.int64)


@dataclass
class PrunerModel:
    task: str
    weights: np.ndarray
    bias: float = 0.0


@dataclass
class PruneStats:
    kept: int
    total: int
    gold_kept: int
    gold_total: int

    @property
    def kept_fraction(self) -> float:
        return self.kept / self.total if self.total else 0.0

    @property
    def gold_recall(self) -> float:
        return self.gold_kept / self.gold_total if self.gold_total else 1.0


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


def arc_score(model: PrunerModel, sentence, i: int, j: int) -> float:
    feats = featurize_arc(sentence, i, j)
    return float(model.weights[feats].sum()) + model.bias


def arc_posterior(model: PrunerModel, sentence, i: int, j: int) -> float:
    return _sigmoid(arc_score(model, sentence, i, j))


def train_pruner(records, task: str, epochs: int = 10, seed: int = 0,
                 eta: float = 0.05) -> PrunerModel:
    """Per-arc logistic log-loss over all ordered pairs, one Adam step per
    sentence. Deterministic given the seed.

    The step size suits a bag-of-templates linear model; the optimizer's
    moment/epsilon defaults are shared with the rest of the system.
    """
    if not records:
        raise ValueError("cannot train a pruner on an empty corpus")
    examples = []
    for rec in records:
        n = len(rec.sentence)
        gold = {(a.head, a.modifier) for a in rec.gold.arcs}
        pairs = []
        for i in range(1, n + 1):
            for j in range(1, n + 1):
                if i != j:
                    pairs.append((featurize_arc(rec.sentence, i, j),
                                  1.0 if (i, j) in gold else 0.0))
        if pairs:
            examples.append(pairs)

    w = ParamTensor(f"pruner:{task}:weights", np.zeros(N_BUCKETS))
    b = ParamTensor(f"pruner:{task}:bias", np.zeros(()))
    state = AdamState([w, b])
    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        order = rng.permutation(len(examples))
        for si in order:
            w.zero_grad()
            b.zero_grad()
            for feats, y in examples[si]:
                s = float(w.value[feats].sum()) + float(b.value)
                g = _sigmoid(s) - y
                np.add.at(w.grad, feats, g)
                b.grad += g
            adam_step([w, b], state, eta)
    return PrunerModel(task, w.value, float(b.value))


def prune(model: PrunerModel, sentence, threshold: float = 1e-4,
          gold=None):
    """Keep arcs with posterior >= threshold; stats against gold when given."""
    n = len(sentence)
    kept = set()
    total = 0
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            if i == j:
                continue
            total += 1
            if arc_posterior(model, sentence, i, j) >= threshold:
                kept.add((i, j))
    gold_pairs = set()
    if gold is not None:
        gold_pairs = {(a.head, a.modifier) for a in gold.arcs}
    stats = PruneStats(len(kept), total, len(kept & gold_pairs),
                       len(gold_pairs))
    return kept, stats


def label_filter(records_by_task: dict, min_count: int = 30) -> dict:
    """Labels occurring fewer than min_count times in training are dropped
    from each task's candidate set."""
    out = {}
    for task, records in records_by_task.items():
        counts = {}
        for rec in records:
            for a in rec.gold.arcs:
                counts[a.label] = counts.get(a.label, 0) + 1
        out[task] = {lab for lab, c in counts.items() if c >= min_count}
    return out
