"""Shared fixtures: random decode instances and synthetic corpora."""

from __future__ import annotations

import numpy as np

from semdep.decoder import enumerate_candidates
from semdep.graph import (LabelVocab, LabeledArc, SemanticGraph, Sentence,
                          Token, part_key)
from semdep.scorer import ScoreTable
from semdep.sdp_io import CorpusRecord


def dummy_sentence(n: int, sid: str = "s") -> Sentence:
    return Sentence(sid, tuple(Token(i + 1, f"w{i + 1}", "_", "N")
                               for i in range(n)))


def random_instance(rng: np.random.Generator, n_max: int = 5,
                    tasks=("t1", "t2"), max_labels: int = 3,
                    cross: bool = True, det_prob: float = 0.4):
    """A random sentence-shaped decode problem with scores ~ U[-1, 1]."""
    n = int(rng.integers(2, n_max + 1))
    names = ["a", "b", "c", "d"]
    labels = {}
    det = {}
    for t in tasks:
        k = int(rng.integers(1, max_labels + 1))
        labels[t] = tuple(names[:k])
        det[t] = frozenset(l for l in labels[t] if rng.random() < det_prob)
    vocab = LabelVocab(labels, det)
    sent = dummy_sentence(n)
    candidates = enumerate_candidates(sent, list(tasks), vocab, cross=cross)
    # score assignment iterates in canonical part order so instances are
    # identical across processes regardless of hash salting
    scores = {p: float(rng.uniform(-1.0, 1.0))
              for p in sorted(candidates, key=part_key)}
    table = ScoreTable(scores, {}, None)
    return sent, list(tasks), vocab, candidates, table


def make_record(task: str, sid: str, forms, poses, arcs,
                tops=()) -> CorpusRecord:
    tokens = tuple(Token(i + 1, f, f.lower(), p)
                   for i, (f, p) in enumerate(zip(forms, poses)))
    sent = Sentence(sid, tokens)
    gold = SemanticGraph.from_arcs(task, len(tokens),
                                   [LabeledArc(*a) for a in arcs])
    return CorpusRecord(sent, gold, frozenset(tops),
                        tuple("_" for _ in tokens))


def synthetic_corpus(task: str, n_sentences: int, rng: np.random.Generator,
                     n_tokens=(3, 5), labels=("arg0", "arg1"),
                     vocab_size: int = 20, arc_prob: float = 0.35):
    """Random small corpus; acyclic by construction (arcs point left to
    right). Gold graphs are arbitrary, so this is NOT a learnable target;
    use consistent_corpus for overfitting tests."""
    records = []
    for s in range(n_sentences):
        n = int(rng.integers(n_tokens[0], n_tokens[1] + 1))
        forms = [f"w{int(rng.integers(vocab_size))}" for _ in range(n)]
        poses = [("V" if rng.random() < 0.4 else "N") for _ in range(n)]
        arcs = []
        for i in range(1, n + 1):
            for j in range(i + 1, n + 1):
                if rng.random() < arc_prob:
                    arcs.append((i, j, labels[int(rng.integers(len(labels)))]))
        records.append(make_record(task, f"{task}-{s}", forms, poses, arcs))
    return records


def consistent_corpus(task: str, n_sentences: int, rng: np.random.Generator,
                      n_tokens=(3, 5)):
    """Sentences whose gold graph is a deterministic function of the token
    sequence: each verb heads the following nouns up to the next verb,
    labeled arg0 when adjacent and arg1 otherwise. Memorizable."""
    records = []
    for s in range(n_sentences):
        n = int(rng.integers(n_tokens[0], n_tokens[1] + 1))
        poses = ["V" if rng.random() < 0.35 else "N" for _ in range(n)]
        forms = [f"{p.lower()}{int(rng.integers(10))}" for p in poses]
        arcs = []
        for i in range(1, n + 1):
            if poses[i - 1] != "V":
                continue
            for j in range(i + 1, n + 1):
                if poses[j - 1] == "V":
                    break
                arcs.append((i, j, "arg0" if j == i + 1 else "arg1"))
        records.append(make_record(task, f"{task}-{s}", forms, poses, arcs))
    return records


def multitask_corpus(n_sentences: int, rng: np.random.Generator,
                     n_tokens=(3, 4), tasks=("ta", "tb", "tc")):
    """Three parallel annotations sharing a rule-generated core (roughly
    70 percent pairwise arc overlap) plus per-task deterministic extras."""
    out = {t: [] for t in tasks}
    for s in range(n_sentences):
        n = int(rng.integers(n_tokens[0], n_tokens[1] + 1))
        poses = ["V" if rng.random() < 0.4 else "N" for _ in range(n)]
        forms = [f"{p.lower()}{int(rng.integers(8))}" for p in poses]
        core = []
        for i in range(1, n + 1):
            if poses[i - 1] != "V":
                continue
            for j in range(i + 1, n + 1):
                if poses[j - 1] == "V":
                    break
                core.append((i, j))

        def lab(i, j):
            return "x" if (i + j) % 2 == 0 else "y"

        for t in tasks:
            arcs = [(i, j, lab(i, j)) for (i, j) in core]
            if t == tasks[1] and n >= 3 and poses[0] == "N" and poses[-1] == "N":
                arcs.append((1, n, "x"))
            if t == tasks[2]:
                for i in range(1, n):
                    if poses[i - 1] == "N" and poses[i] == "V" \
                            and (i + 1, i) not in core:
                        arcs.append((i + 1, i, "y"))
            seen = set()
            uniq = []
            for a in arcs:
                if (a[0], a[1]) not in seen:
                    uniq.append(a)
                    seen.add((a[0], a[1]))
            out[t].append(make_record(t, f"s{s}", forms, poses, uniq))
    return out
