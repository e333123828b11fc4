"""End-to-end gradient verification on a tiny randomly initialized model.

Freezes the cost-augmented decode, then checks the analytic gradient of the
full loss (encoder + scorer + hinge margin + l2) against central finite
differences, coordinate by coordinate.
"""

from __future__ import annotations

import numpy as np

from .autodiff import finite_diff_check
from .decoder import (CostSpec, active_parts, augment_costs, brute_force,
                      enumerate_candidates, recovered_cost)
from .graph import LabelVocab, LabeledArc, Multigraph, SemanticGraph, Sentence, Token
from .model import Vocab, new_model
from .scorer import build_score_table
from .sdp_io import RunConfig


def tiny_setup(seed: int = 7, n: int = 3, variant: str = "freda3"):
    """A small 2-task model plus one sentence and a random gold multigraph."""
    rng = np.random.default_rng(seed)
    config = RunConfig(pretrained_dim=4, word_dim=3, pos_dim=3, rep_dim=8,
                       bilstm_dim=8, bilstm_layers=1, rank=4, variant=variant,
                       seed=seed)
    forms = [f"w{i}" for i in range(4)]
    tags = ["A", "B"]
    tokens = [Token(i + 1, forms[int(rng.integers(len(forms)))], "_",
                    tags[int(rng.integers(len(tags)))]) for i in range(n)]
    sentence = Sentence("tiny", tuple(tokens))
    tasks = ["t1", "t2"]
    labels = LabelVocab({t: ("x", "y") for t in tasks},
                        {t: frozenset(["y"]) for t in tasks})
    word_vocab = Vocab(forms, {f: 1 for f in forms})
    pos_vocab = Vocab(tags)
    model = new_model(config, tasks, word_vocab, pos_vocab, labels, rng=rng)

    graphs = {}
    for t in tasks:
        arcs = []
        for i in range(1, n + 1):
            for j in range(1, n + 1):
                if i != j and rng.random() < 0.4:
                    arcs.append(LabeledArc(i, j, "x" if rng.random() < 0.7 else "y"))
        # keep the gold feasible under determinism
        seen = set()
        arcs = [a for a in arcs
                if a.label != "y" or (a.head not in seen and not seen.add(a.head))]
        graphs[t] = SemanticGraph.from_arcs(t, n, arcs)
    return model, sentence, Multigraph(graphs)


def gradcheck(seed: int = 7, h: float = 1e-5, variant: str = "freda3") -> float:
    """Max relative error between analytic and numerical gradients of the
    full loss with the decoded structure held fixed."""
    model, sentence, gold = tiny_setup(seed=seed, variant=variant)
    candidates = enumerate_candidates(sentence, model.tasks, model.labels,
                                      cross=model.config.cross_task)
    table = build_score_table(sentence, candidates, model)
    augment_costs(table, CostSpec(gold))
    mg_hat, _ = brute_force(len(sentence), model.tasks, candidates, table,
                            model.labels)
    cost = recovered_cost(table, mg_hat)
    parts_hat = active_parts(mg_hat, candidates)
    parts_gold = active_parts(gold, candidates)

    tape = table.tape
    margin = tape.sub(tape.addn([table.nodes[p] for p in parts_hat]),
                      tape.addn([table.nodes[p] for p in parts_gold]))
    tape.backward(margin)
    lam = model.config.l2
    for p in model.params.values():
        p.grad += lam * p.value

    def loss() -> float:
        t = build_score_table(sentence, candidates, model)
        s_hat = sum(t.scores[p] for p in parts_hat)
        s_gold = sum(t.scores[p] for p in parts_gold)
        return s_hat + cost - s_gold + model.l2_penalty()

    return finite_diff_check(loss, model.all_params(), h=h)
