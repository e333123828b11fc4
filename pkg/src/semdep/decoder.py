"""Candidate enumeration, cost augmentation, the exact brute-force oracle,
and the end-to-end decode pipeline."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, product

import numpy as np

from .factorgraph import (Ad3Result, ad3, build_factor_graph,
                          multigraph_objective, round_repair)
from .graph import (ArcPart, CrossArcPart, CrossLabeledPart, LabeledArc,
                    LabeledArcPart, Multigraph, PredPart, SemanticGraph,
                    part_key, parts_of)
from .model import Model
from .scorer import ScoreTable, build_score_table


def enumerate_candidates(sentence, tasks, vocab, pruners=None,
                         threshold: float = 1e-4, cross: bool = False) -> set:
    """All-pairs candidate parts, optionally pruned.

    Cross-task parts are instantiated only for (i, j) pairs surviving in all
    participating tasks, with labeled combinations drawn from the surviving
    label sets.
    """
    from .pruner import arc_posterior

    n = len(sentence)
    parts = set()
    kept = {}
    for t in sorted(tasks):
        labels = vocab.task_labels(t)
        pairs = set()
        if labels:
            for i in range(1, n + 1):
                for j in range(1, n + 1):
                    if i == j:
                        continue
                    if pruners and t in pruners and \
                            arc_posterior(pruners[t], sentence, i, j) < threshold:
                        continue
                    pairs.add((i, j))
        kept[t] = pairs
        for (i, j) in pairs:
            parts.add(ArcPart(t, i, j))
            for lab in labels:
                parts.add(LabeledArcPart(t, i, j, lab))
        for i in {i for (i, _) in pairs}:
            parts.add(PredPart(t, i))

    if cross and len(tasks) >= 2:
        tasksets = list(combinations(sorted(tasks), 2))
        if len(tasks) >= 3:
            tasksets += list(combinations(sorted(tasks), 3))
        for ts in tasksets:
            shared = set.intersection(*(kept[t] for t in ts))
            for (i, j) in shared:
                parts.add(CrossArcPart(ts, i, j))
                for combo in product(*(vocab.task_labels(t) for t in ts)):
                    parts.add(CrossLabeledPart(ts, i, j, combo))
    return parts


@dataclass
class CostSpec:
    """Weighted Hamming costs for cost-augmented decoding."""
    gold: Multigraph
    false_positive: float = 0.4
    false_negative: float = 0.6
    enabled: bool = True

    def __post_init__(self):
        if self.false_positive < 0 or self.false_negative < 0:
            raise ValueError("costs must be nonnegative")


def augment_costs(table: ScoreTable, cost: CostSpec) -> ScoreTable:
    """Add the Hamming cost to the labeled-arc scores: +fp for non-gold
    arcs, -fn for gold ones. The gold arc count is tracked so the true cost
    of any decode is recoverable exactly."""
    if table.cost_augmented:
        raise ValueError("cost augmentation applied twice")
    gold_count = 0
    for t in cost.gold.tasks:
        gold_count += len(cost.gold[t].arcs)
    for part in table.scores:
        if isinstance(part, LabeledArcPart):
            g = cost.gold[part.task] if part.task in cost.gold.graphs else None
            in_gold = g is not None and \
                g.arc_label(part.head, part.modifier) == part.label
            delta = -cost.false_negative if in_gold else cost.false_positive
            table.scores[part] += delta
            table.cost_deltas[part] = delta
    table.cost_augmented = True
    table.gold_labeled_count = gold_count
    return table


def recovered_cost(table: ScoreTable, mg: Multigraph,
                   fp: float = 0.4, fn: float = 0.6) -> float:
    """Exact c(y_hat, gold) for a decode from an augmented table."""
    if not table.cost_augmented:
        raise ValueError("table was not cost-augmented")
    n_fp = n_tp = 0
    for t in mg.tasks:
        for a in mg[t].arcs:
            part = LabeledArcPart(t, a.head, a.modifier, a.label)
            if table.cost_deltas.get(part, 0.0) > 0:
                n_fp += 1
            else:
                n_tp += 1
    n_fn = table.gold_labeled_count - n_tp
    return fp * n_fp + fn * n_fn


def active_parts(mg: Multigraph, candidates) -> list:
    """The parts of a multigraph, including whichever candidate cross-task
    parts have all their member arcs present."""
    parts = []
    for t in sorted(mg.tasks):
        parts.extend(sorted(parts_of(mg[t]), key=part_key))
    for p in sorted(candidates, key=part_key):
        if isinstance(p, CrossArcPart):
            if all(t in mg.graphs and
                   mg[t].arc_label(p.head, p.modifier) is not None
                   for t in p.tasks):
                parts.append(p)
        elif isinstance(p, CrossLabeledPart):
            if all(t in mg.graphs and
                   mg[t].arc_label(p.head, p.modifier) == lab
                   for t, lab in zip(p.tasks, p.labels)):
                parts.append(p)
    return parts


def restrict_to_candidates(mg: Multigraph, candidates) -> Multigraph:
    """Drop arcs that are not candidate parts (pruned away or carrying a
    filtered label) and recompute predicates. Keeps losses consistent with
    what the decoder can actually produce."""
    graphs = {}
    for t, g in mg.graphs.items():
        arcs = [a for a in g.arcs
                if ArcPart(t, a.head, a.modifier) in candidates
                and LabeledArcPart(t, a.head, a.modifier, a.label) in candidates]
        graphs[t] = SemanticGraph.from_arcs(t, g.n, arcs)
    return Multigraph(graphs)


# ---------------------------------------------------------------------------
# Exact oracle.

def brute_force(n, tasks, candidates, table, vocab,
                max_block: int = 1 << 21, max_pairs: int = 24):
    """Exact maximizer over all internally consistent multigraphs.

    The search is exhaustive but organized head by head: nothing couples
    arcs with different heads (predicate and determinism constraints are
    per-head, cross-task factors join identical (i, j) slots), so each
    head's joint labeling over all tasks is enumerated independently. Ties
    go to the lexicographically smallest assignment (slots in canonical
    order, off before labels in vocabulary order), so an all-zero tie
    yields the empty graph.
    """
    tasks = sorted(tasks)
    slots = {}
    for p in candidates:
        if isinstance(p, ArcPart):
            slots.setdefault((p.head, p.task, p.modifier), [])
    for p in candidates:
        if isinstance(p, LabeledArcPart):
            key = (p.head, p.task, p.modifier)
            if key in slots:
                slots[key].append(p.label)
    for t in tasks:
        npairs = sum(1 for (_, tt, _) in slots if tt == t)
        if npairs > max_pairs:
            raise ValueError(f"instance too large: {npairs} arc slots for {t}")

    pred_score = {}
    for p in candidates:
        if isinstance(p, PredPart):
            pred_score[(p.task, p.head)] = table[p]
    cross_by_head = {}
    for p in sorted(candidates, key=part_key):
        if isinstance(p, (CrossArcPart, CrossLabeledPart)):
            cross_by_head.setdefault(p.head, []).append(p)

    chosen_arcs = {t: [] for t in tasks}
    objective = 0.0
    for head in sorted({h for (h, _, _) in slots}):
        keys = sorted(k for k in slots if k[0] == head)
        radix = []
        states = []  # per slot: list of (label or None, score)
        for (h, t, j) in keys:
            labs = sorted(slots[(h, t, j)], key=lambda l: vocab.index(t, l))
            ua = table[ArcPart(t, h, j)]
            st = [(None, 0.0)] + [
                (lab, ua + table[LabeledArcPart(t, h, j, lab)]) for lab in labs]
            states.append(st)
            radix.append(len(st))
        total = int(np.prod(radix, dtype=np.int64))
        if total > max_block:
            raise ValueError(f"instance too large: {total} assignments at head {head}")
        digits = np.stack(np.unravel_index(np.arange(total), radix), axis=1)
        score = np.zeros(total)
        for s, st in enumerate(states):
            score += np.array([v for _, v in st])[digits[:, s]]
        ok = np.ones(total, dtype=bool)
        for t in tasks:
            cols = [s for s, k in enumerate(keys) if k[1] == t]
            if not cols:
                continue
            on = (digits[:, cols] > 0).any(axis=1)
            ps = pred_score.get((t, head))
            if ps is None:
                ok &= ~on
            else:
                score += np.where(on, ps, 0.0)
            for lab in {l for s in cols for l in slots[keys[s]]
                        if vocab.is_deterministic(t, l)}:
                cnt = np.zeros(total, dtype=np.int64)
                for s in cols:
                    st = states[s]
                    ids = [d for d, (l, _) in enumerate(st) if l == lab]
                    if ids:
                        cnt += (digits[:, s] == ids[0])
                ok &= cnt <= 1
        slot_of = {k: s for s, k in enumerate(keys)}
        for p in cross_by_head.get(head, ()):
            if isinstance(p, CrossArcPart):
                want = [(slot_of.get((head, t, p.modifier)), None) for t in p.tasks]
            else:
                want = [(slot_of.get((head, t, p.modifier)), lab)
                        for t, lab in zip(p.tasks, p.labels)]
            if any(s is None for s, _ in want):
                continue
            on = np.ones(total, dtype=bool)
            for s, lab in want:
                if lab is None:
                    on &= digits[:, s] > 0
                else:
                    st = states[s]
                    ids = [d for d, (l, _) in enumerate(st) if l == lab]
                    on &= (digits[:, s] == ids[0]) if ids else False
            score += np.where(on, table[p], 0.0)
        masked = np.where(ok, score, -np.inf)
        best = int(np.argmax(masked))
        objective += float(masked[best])
        for s, (h, t, j) in enumerate(keys):
            lab = states[s][digits[best, s]][0]
            if lab is not None:
                chosen_arcs[t].append(LabeledArc(h, j, lab))

    graphs = {t: SemanticGraph.from_arcs(t, n, chosen_arcs[t]) for t in tasks}
    return Multigraph(graphs), objective


# ---------------------------------------------------------------------------
# Pipeline.

def oracle_block_limit(sentence, tasks, vocab) -> int:
    """Largest per-head assignment count a brute-force decode would face."""
    n = len(sentence)
    per_head = 1
    for t in tasks:
        per_head *= (1 + len(vocab.task_labels(t))) ** max(0, n - 1)
        if per_head > 1 << 62:
            return 1 << 62
    return per_head


def decode_full(sentence, model: Model, cost: CostSpec | None = None,
                mode: str = "ad3", candidates=None, table=None,
                train_mode: bool = False, rng=None,
                oracle_limit: int = 20000):
    """enumerate -> score -> (augment) -> infer -> repair.

    Returns (multigraph, table, Ad3Result or None).
    """
    cfg = model.config
    if candidates is None:
        pruners = model.pruners if (cfg.use_pruner and model.pruners) else None
        candidates = enumerate_candidates(
            sentence, model.tasks, model.labels, pruners=pruners,
            threshold=cfg.prune_threshold, cross=cfg.cross_task)
    if table is None:
        table = build_score_table(sentence, candidates, model,
                                  train_mode=train_mode, rng=rng)
    if cost is not None and cost.enabled:
        augment_costs(table, cost)

    if mode == "auto":
        mode = "oracle" if oracle_block_limit(sentence, model.tasks,
                                              model.labels) <= oracle_limit \
            else "ad3"
    if mode == "oracle":
        mg, obj = brute_force(len(sentence), model.tasks, candidates, table,
                              model.labels)
        result = Ad3Result({}, True, 0, primal_objective=obj)
        return mg, table, result
    fg = build_factor_graph(len(sentence), model.tasks, candidates,
                            table.scores, model.labels)
    result = ad3(fg, max_iter=cfg.ad3_max_iter)
    mg = round_repair(result, fg)
    result.primal_objective = multigraph_objective(fg, mg)
    return mg, table, result


def decode(sentence, model: Model, cost: CostSpec | None = None,
           mode: str = "ad3") -> Multigraph:
    mg, _, _ = decode_full(sentence, model, cost=cost, mode=mode)
    return mg
