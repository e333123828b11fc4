"""Structure scoring: output vectors, first-order inner products, low-rank
cross-task tensor scores, and assembly of the per-sentence score table.

The cross-task score of a structure made of one arc per task is

    sum_j  prod_t [U^t phi^t]_j [V^t psi^t]_j ,

the factorized form of contracting a rank-r parameter tensor against the
outer product of all participating representation vectors. The explicit
contraction is implemented separately as a test oracle and is never used on
the main path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .autodiff import Tape, Var
from .encoder import encode_sentence, input_rep
from .graph import (ArcPart, CrossArcPart, CrossLabeledPart, LabeledArcPart,
                    PredPart, Sentence)
from .model import Model


def score_first_order(phi: Var, psi: Var, tape: Tape) -> Var:
    return tape.inner(phi, psi)


def score_cross_task(phis: list[Var], psis: list[Var], u_mats: list[Var],
                     v_mats: list[Var], tape: Tape) -> Var:
    """Factorized score over a 2- or 3-task structure."""
    if not (len(phis) == len(psis) == len(u_mats) == len(v_mats)):
        raise ValueError("one phi/psi/U/V per participating task")
    if len(phis) not in (2, 3):
        raise ValueError("cross-task structures span 2 or 3 tasks")
    prod = None
    for phi, psi, u, v in zip(phis, psis, u_mats, v_mats):
        c = tape.mul(tape.matvec(u, phi), tape.matvec(v, psi))
        prod = c if prod is None else tape.mul(prod, c)
    return tape.vsum(prod)


def score_cross_task_explicit(phis, psis, u_mats, v_mats,
                              max_elems: int = 1 << 27) -> float:
    """Materialize the full parameter tensor and contract it directly.

    Test-only oracle for the factorized path; guarded against large shapes.
    """
    phis = [np.asarray(x) for x in phis]
    psis = [np.asarray(x) for x in psis]
    u_mats = [np.asarray(x) for x in u_mats]
    v_mats = [np.asarray(x) for x in v_mats]
    r = u_mats[0].shape[0]
    vecs = []
    for phi, psi in zip(phis, psis):
        vecs.extend([phi, psi])
    size = 1
    for v in vecs:
        size *= v.shape[0]
    if r * size > max_elems:
        raise ValueError(f"explicit tensor too large: {r} x {size} elements")
    mats = []
    for u, v in zip(u_mats, v_mats):
        mats.extend([u, v])
    w = np.zeros([v.shape[0] for v in vecs])
    for j in range(r):
        w += reduce(np.multiply.outer, [m[j] for m in mats])
    t = reduce(np.multiply.outer, vecs)
    return float(np.sum(w * t))


@dataclass
class ScoreTable:
    """Scores for every candidate part, with the tape nodes retained so the
    trainer can differentiate through selected parts."""
    scores: dict
    nodes: dict
    tape: Tape
    cost_augmented: bool = False
    cost_deltas: dict = field(default_factory=dict)
    gold_labeled_count: int = 0

    def __contains__(self, part):
        return part in self.scores

    def __getitem__(self, part) -> float:
        return self.scores[part]


def build_score_table(sentence: Sentence, candidates, model: Model,
                      train_mode: bool = False, rng=None) -> ScoreTable:
    """Score every candidate part with the current parameters.

    First-order parts get inner-product scores; cross-task parts (present
    only for third-order variants) get factorized tensor scores.
    """
    tape, encodings = encode_sentence(sentence, model, train_mode, rng)

    preds, arcs, larcs, cross_u, cross_l = [], [], [], [], []
    for part in candidates:
        if isinstance(part, PredPart):
            preds.append(part)
        elif isinstance(part, ArcPart):
            arcs.append(part)
        elif isinstance(part, LabeledArcPart):
            larcs.append(part)
        elif isinstance(part, CrossArcPart):
            cross_u.append(part)
        elif isinstance(part, CrossLabeledPart):
            cross_l.append(part)
        else:
            raise TypeError(f"unknown part type {type(part)}")

    phi_pred, phi_ua, phi_la = {}, {}, {}
    for p in sorted(preds):
        phi_pred[(p.task, p.head)] = input_rep(
            "pred", (p.head,), encodings, model, p.task, tape)
    ua_keys = {(p.task, p.head, p.modifier) for p in arcs}
    ua_keys |= {(t, p.head, p.modifier) for p in cross_u for t in p.tasks}
    for key in sorted(ua_keys):
        t, i, j = key
        phi_ua[key] = input_rep("ua", (i, j), encodings, model, t, tape)
    la_keys = {(p.task, p.head, p.modifier) for p in larcs}
    la_keys |= {(t, p.head, p.modifier) for p in cross_l for t in p.tasks}
    for key in sorted(la_keys):
        t, i, j = key
        phi_la[key] = input_rep("la", (i, j), encodings, model, t, tape)

    psi_pred = {t: tape.param(model.out_vec(t, "pred")) for t in model.tasks}
    psi_arc = {t: tape.param(model.out_vec(t, "arc")) for t in model.tasks}
    psi_label = {}

    def label_vec(task, label):
        key = (task, label)
        if key not in psi_label:
            psi_label[key] = tape.row(tape.param(model.out_vec(task, "label")),
                                      model.labels.index(task, label))
        return psi_label[key]

    nodes = {}
    for p in sorted(preds):
        nodes[p] = score_first_order(phi_pred[(p.task, p.head)],
                                     psi_pred[p.task], tape)
    for p in sorted(arcs):
        nodes[p] = score_first_order(phi_ua[(p.task, p.head, p.modifier)],
                                     psi_arc[p.task], tape)
    for p in sorted(larcs):
        nodes[p] = score_first_order(phi_la[(p.task, p.head, p.modifier)],
                                     label_vec(p.task, p.label), tape)

    if cross_u or cross_l:
        if not model.config.cross_task:
            raise ValueError(f"variant {model.variant} scores no cross-task parts")
        u_arc, v_arc, u_lab, v_lab = {}, {}, {}, {}
        for t in model.tasks:
            ua, va = model.tensor_mats(t, labeled=False)
            ul, vl = model.tensor_mats(t, labeled=True)
            u_arc[t], v_arc[t] = tape.param(ua), tape.param(va)
            u_lab[t], v_lab[t] = tape.param(ul), tape.param(vl)
        # factor caches: one r-vector per slot and per label
        cu_cache, cl_cache, vb_cache = {}, {}, {}
        for p in sorted(cross_u):
            factors = []
            for t in p.tasks:
                key = (t, p.head, p.modifier)
                if key not in cu_cache:
                    a = tape.matvec(u_arc[t], phi_ua[key])
                    b = tape.matvec(v_arc[t], psi_arc[t])
                    cu_cache[key] = tape.mul(a, b)
                factors.append(cu_cache[key])
            prod = reduce(lambda x, y: tape.mul(x, y), factors)
            nodes[p] = tape.vsum(prod)
        for p in sorted(cross_l):
            factors = []
            for t, lab in zip(p.tasks, p.labels):
                key = (t, p.head, p.modifier, lab)
                if key not in cl_cache:
                    akey = (t, p.head, p.modifier)
                    if akey not in vb_cache:
                        vb_cache[akey] = tape.matvec(u_lab[t], phi_la[akey])
                    bkey = (t, lab)
                    if bkey not in vb_cache:
                        vb_cache[bkey] = tape.matvec(v_lab[t], label_vec(t, lab))
                    cl_cache[key] = tape.mul(vb_cache[akey], vb_cache[bkey])
                factors.append(cl_cache[key])
            prod = reduce(lambda x, y: tape.mul(x, y), factors)
            nodes[p] = tape.vsum(prod)

    scores = {p: float(v.value) for p, v in nodes.items()}
    return ScoreTable(scores, nodes, tape)
