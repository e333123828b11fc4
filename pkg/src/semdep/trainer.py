"""Structured hinge training with cost-augmented decoding, learning-rate
annealing, gradient clipping, and patience-based early stopping."""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np

from .autodiff import AdamState, adam_step, clip_global_norm
from .decoder import (CostSpec, active_parts, decode_full,
                      enumerate_candidates, recovered_cost,
                      restrict_to_candidates)
from .evaluate import micro_average, prf_counts
from .graph import LabelVocab, Multigraph
from .model import Model, build_vocabs, new_model
from .pruner import label_filter, train_pruner
from .scorer import build_score_table
from .sdp_io import RunConfig

log = logging.getLogger(__name__)


def learning_rate(eta0: float, epoch: int) -> float:
    """Annealed by 0.5 every 10 epochs."""
    return eta0 * 0.5 ** (epoch // 10)


@dataclass
class TrainState:
    epoch: int = 0
    eta: float = 0.0
    best_metric: float = -1.0
    best_epoch: int = -1
    since_improve: int = 0
    task_loss: dict = field(default_factory=dict)


@dataclass
class HingeResult:
    loss: float
    cost: float
    margin: float
    decoded: Multigraph
    converged: bool


def hinge_loss(model: Model, sentence, gold: Multigraph, rng=None,
               mode: str = "auto", train_mode: bool = True) -> HingeResult:
    """One sentence's structured hinge: gradients are accumulated onto the
    model parameters (the caller is responsible for zeroing them).

    loss = [S(x, y_hat) + c(y_hat, y)] - S(x, y) + l2 penalty, with y_hat
    the cost-augmented decode. The l2 gradient is added analytically.
    """
    cfg = model.config
    pruners = model.pruners if (cfg.use_pruner and model.pruners) else None
    candidates = enumerate_candidates(
        sentence, model.tasks, model.labels, pruners=pruners,
        threshold=cfg.prune_threshold, cross=cfg.cross_task)
    gold_f = restrict_to_candidates(gold, candidates)

    table = build_score_table(sentence, candidates, model,
                              train_mode=train_mode, rng=rng)
    mg_hat, table, result = decode_full(
        sentence, model, cost=CostSpec(gold_f), mode=mode,
        candidates=candidates, table=table)
    cost = recovered_cost(table, mg_hat)

    tape = table.tape
    s_hat = tape.addn([table.nodes[p] for p in active_parts(mg_hat, candidates)])
    s_gold = tape.addn([table.nodes[p] for p in active_parts(gold_f, candidates)])
    margin = tape.sub(s_hat, s_gold)
    tape.backward(margin)

    lam = cfg.l2
    for p in model.params.values():
        p.grad += lam * p.value
    loss = float(margin.value) + cost + model.l2_penalty()
    converged = result.converged if result is not None else True
    return HingeResult(loss, cost, float(margin.value), mg_hat, converged)


def _dev_metrics(model: Model, dev_sentences, dev_golds, mode="ad3"):
    per_task_lab = {t: [] for t in model.tasks}
    per_task_unlab = {t: [] for t in model.tasks}
    for sent, gold in zip(dev_sentences, dev_golds):
        pred = decode_full(sent, model, mode=mode)[0]
        for t in model.tasks:
            per_task_lab[t].append(prf_counts(pred[t], gold[t], labeled=True))
            per_task_unlab[t].append(prf_counts(pred[t], gold[t], labeled=False))
    out = {}
    for t in model.tasks:
        lf = micro_average(per_task_lab[t])[2]
        uf = micro_average(per_task_unlab[t])[2]
        out[t] = {"LF": 100 * lf, "UF": 100 * uf}
    micro_lf = 100 * micro_average([c for cs in per_task_lab.values()
                                    for c in cs])[2]
    return out, micro_lf


def align_multitask(records_by_task: dict):
    """Zip per-task corpora into (sentence, gold Multigraph) pairs; parallel
    files must agree on tokenization."""
    tasks = sorted(records_by_task)
    lengths = {t: len(records_by_task[t]) for t in tasks}
    if len(set(lengths.values())) != 1:
        raise ValueError(f"corpora disagree on sentence count: {lengths}")
    sentences, golds = [], []
    for rows in zip(*(records_by_task[t] for t in tasks)):
        forms = [[tok.form for tok in r.sentence.tokens] for r in rows]
        if any(f != forms[0] for f in forms[1:]):
            raise ValueError(f"token mismatch across tasks at sentence "
                             f"{rows[0].sentence.id!r}")
        sentences.append(rows[0].sentence)
        golds.append(Multigraph({t: r.gold for t, r in zip(tasks, rows)}))
    return sentences, golds


def train(records_by_task: dict, config: RunConfig,
          dev_by_task: dict | None = None, pretrained=None,
          decode_mode: str = "auto", log_rows: list | None = None) -> Model:
    """Full training loop; returns the model restored to its best-dev state.

    One Adam step per sentence (no mini-batches), gradients clipped to unit
    global norm, eta annealed by 0.5 every 10 epochs, early stopping on dev
    labeled F1 (micro-averaged over tasks).
    """
    sentences, golds = align_multitask(records_by_task)
    if not sentences:
        raise ValueError("no training sentences")
    if dev_by_task is None:
        dev_by_task = records_by_task
    dev_sentences, dev_golds = align_multitask(dev_by_task)

    word_vocab, pos_vocab = build_vocabs(records_by_task)
    surviving = label_filter(records_by_task, config.label_min_count)
    labels = LabelVocab.from_graphs(
        {t: [r.gold for r in rs] for t, rs in records_by_task.items()},
        surviving=surviving)

    rng = np.random.default_rng(config.seed)
    model = new_model(config, sorted(records_by_task), word_vocab, pos_vocab,
                      labels, pretrained=pretrained, rng=rng)
    if config.use_pruner:
        for t in model.tasks:
            model.pruners[t] = train_pruner(records_by_task[t], t,
                                            epochs=config.pruner_epochs,
                                            seed=config.seed)

    params = model.all_params()
    state = AdamState(params)
    tstate = TrainState()
    best_values = {p.name: p.value.copy() for p in params}

    for epoch in range(config.epochs):
        tstate.epoch = epoch
        tstate.eta = learning_rate(config.learning_rate, epoch)
        order = rng.permutation(len(sentences))
        total_loss = 0.0
        for si in order:
            model.zero_grads()
            out = hinge_loss(model, sentences[si], golds[si], rng=rng,
                             mode=decode_mode)
            total_loss += out.loss
            if out.loss < -1e-6:
                log.debug("negative hinge (approximate decode): %.3g", out.loss)
            clip_global_norm([p.grad for p in params if p.trainable], 1.0)
            adam_step(params, state, tstate.eta)
        per_task, micro_lf = _dev_metrics(model, dev_sentences, dev_golds)
        row = {"epoch": epoch, "eta": tstate.eta,
               "train_loss": total_loss / len(sentences),
               "dev": {t: {"UF": round(v["UF"], 1), "LF": round(v["LF"], 1)}
                       for t, v in per_task.items()},
               "micro_lf": round(micro_lf, 1)}
        if log_rows is not None:
            log_rows.append(row)
        log.info("epoch %d eta %.2g loss %.4f micro LF %.1f",
                 epoch, tstate.eta, row["train_loss"], micro_lf)
        if micro_lf > tstate.best_metric + 1e-9:
            tstate.best_metric = micro_lf
            tstate.best_epoch = epoch
            tstate.since_improve = 0
            best_values = {p.name: p.value.copy() for p in params}
        else:
            tstate.since_improve += 1
            if tstate.since_improve >= config.patience:
                log.info("early stop at epoch %d (best %.1f at epoch %d)",
                         epoch, tstate.best_metric, tstate.best_epoch)
                break

    for p in params:
        p.value[...] = best_values[p.name]
    return model
