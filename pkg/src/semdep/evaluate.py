"""Precision/recall/F1 over arcs, micro-averaging across tasks, the
weighted Hamming cost, and cross-formalism structural similarity."""

from __future__ import annotations

from dataclasses import dataclass

from .graph import LabeledArc, Multigraph, SemanticGraph


@dataclass
class PrfCounts:
    matched: int = 0
    predicted: int = 0
    gold: int = 0

    def __post_init__(self):
        if min(self.matched, self.predicted, self.gold) < 0:
            raise ValueError("counts must be nonnegative")
        if self.matched > min(self.predicted, self.gold):
            raise ValueError("matched exceeds predicted or gold")

    def __add__(self, other):
        return PrfCounts(self.matched + other.matched,
                         self.predicted + other.predicted,
                         self.gold + other.gold)

    def prf(self):
        p = self.matched / self.predicted if self.predicted else 0.0
        r = self.matched / self.gold if self.gold else 0.0
        f = 2 * p * r / (p + r) if (p + r) else 0.0
        return p, r, f


def _arc_keys(graph: SemanticGraph, labeled: bool):
    if labeled:
        return {(a.head, a.modifier, a.label) for a in graph.arcs}
    return {(a.head, a.modifier) for a in graph.arcs}


def prf_counts(pred: SemanticGraph, gold: SemanticGraph,
               labeled: bool = True) -> PrfCounts:
    if pred.n != gold.n:
        raise ValueError("graphs cover different sentences")
    pk = _arc_keys(pred, labeled)
    gk = _arc_keys(gold, labeled)
    return PrfCounts(len(pk & gk), len(pk), len(gk))


def prf(pred: SemanticGraph, gold: SemanticGraph, labeled: bool = True):
    """Counts plus (precision, recall, F1); zero where undefined."""
    c = prf_counts(pred, gold, labeled)
    return (c,) + c.prf()


def micro_average(counts) -> tuple:
    """Pool matched/predicted/gold across tasks, then compute P/R/F1."""
    total = PrfCounts()
    for c in counts:
        total = total + c
    return total.prf()


def hamming_cost(pred: Multigraph, gold: Multigraph,
                 fp: float = 0.4, fn: float = 0.6) -> float:
    """0.4 per spurious labeled arc + 0.6 per missing one, over all tasks."""
    n_fp = n_fn = 0
    for t in gold.tasks:
        gk = _arc_keys(gold[t], labeled=True)
        pk = _arc_keys(pred[t], labeled=True) if t in pred.graphs else set()
        n_fp += len(pk - gk)
        n_fn += len(gk - pk)
    for t in pred.tasks:
        if t not in gold.graphs:
            n_fp += len(pred[t].arcs)
    return fp * n_fp + fn * n_fn


def structural_similarity(records_a, records_b, directed: bool = True) -> float:
    """Unlabeled F1 (as a percentage) of corpus A's gold arcs read as
    predictions of corpus B's, over parallel sentences. Undirected mode
    matches arcs as unordered pairs."""
    if len(records_a) != len(records_b):
        raise ValueError("corpora have different sentence counts")
    total = PrfCounts()
    for ra, rb in zip(records_a, records_b):
        fa = [t.form for t in ra.sentence.tokens]
        fb = [t.form for t in rb.sentence.tokens]
        if fa != fb:
            raise ValueError(f"token mismatch at sentence {ra.sentence.id!r}")
        if directed:
            ka = {(a.head, a.modifier) for a in ra.gold.arcs}
            kb = {(a.head, a.modifier) for a in rb.gold.arcs}
        else:
            ka = {frozenset((a.head, a.modifier)) for a in ra.gold.arcs}
            kb = {frozenset((a.head, a.modifier)) for a in rb.gold.arcs}
        total = total + PrfCounts(len(ka & kb), len(ka), len(kb))
    return 100.0 * total.prf()[2]


def with_top_arcs(graph: SemanticGraph, tops) -> SemanticGraph:
    """Score top nodes as arcs from the virtual root (index 0)."""
    arcs = set(graph.arcs) | {LabeledArc(0, j, "TOP") for j in tops}
    preds = set(graph.predicates) | ({0} if tops else set())
    return SemanticGraph(graph.task, graph.n, frozenset(arcs), frozenset(preds))


def evaluate_records(pred_by_task: dict, gold_by_task: dict,
                     include_tops: bool = False) -> dict:
    """Corpus-level report: per-task labeled/unlabeled P/R/F1 and the micro
    average across tasks (percentages rounded to one decimal)."""
    report = {"tasks": {}, "micro": {}}
    lab_counts, unlab_counts = [], []
    for task in sorted(gold_by_task):
        preds = pred_by_task[task]
        golds = gold_by_task[task]
        if len(preds) != len(golds):
            raise ValueError(f"{task}: {len(preds)} predictions vs "
                             f"{len(golds)} gold sentences")
        lc = PrfCounts()
        uc = PrfCounts()
        for pr, gr in zip(preds, golds):
            pg, gg = pr.gold, gr.gold
            if include_tops:
                pg = with_top_arcs(pg, pr.tops)
                gg = with_top_arcs(gg, gr.tops)
            lc = lc + prf_counts(pg, gg, labeled=True)
            uc = uc + prf_counts(pg, gg, labeled=False)
        lab_counts.append(lc)
        unlab_counts.append(uc)
        lp, lr, lf = lc.prf()
        up, ur, uf = uc.prf()
        report["tasks"][task] = {
            "LP": round(100 * lp, 1), "LR": round(100 * lr, 1),
            "LF": round(100 * lf, 1), "UP": round(100 * up, 1),
            "UR": round(100 * ur, 1), "UF": round(100 * uf, 1),
        }
    lp, lr, lf = micro_average(lab_counts)
    up, ur, uf = micro_average(unlab_counts)
    report["micro"] = {
        "LP": round(100 * lp, 1), "LR": round(100 * lr, 1),
        "LF": round(100 * lf, 1), "UP": round(100 * up, 1),
        "UR": round(100 * ur, 1), "UF": round(100 * uf, 1),
    }
    return report
