import numpy as np
import pytest

from semdep.graph import (ArcPart, LabelVocab, LabeledArc, LabeledArcPart,
                          PredPart, SemanticGraph, Sentence, Token,
                          graph_from_parts, multigraph_union, parts_of,
                          validate)


def g(task, n, arcs):
    return SemanticGraph.from_arcs(task, n, [LabeledArc(*a) for a in arcs])


def test_token_invariants():
    with pytest.raises(ValueError):
        Token(0, "a")
    with pytest.raises(ValueError):
        Token(1, "")


def test_sentence_contiguous_indices():
    with pytest.raises(ValueError):
        Sentence("s", (Token(1, "a"), Token(3, "b")))


def test_arc_invariants():
    with pytest.raises(ValueError):
        LabeledArc(2, 2, "x")
    with pytest.raises(ValueError):
        LabeledArc(0, 1, "x")  # head 0 reserved for TOP


def test_graph_rejects_duplicate_arc_labels():
    with pytest.raises(ValueError):
        SemanticGraph("t", 2, frozenset({LabeledArc(1, 2, "a"),
                                         LabeledArc(1, 2, "b")}),
                      frozenset({1}))


def test_parts_of_empty_graph():
    assert parts_of(g("t", 3, [])) == set()


def test_parts_of_single_arc():
    parts = parts_of(g("t", 2, [(1, 2, "ARG1")]))
    assert parts == {PredPart("t", 1), ArcPart("t", 1, 2),
                     LabeledArcPart("t", 1, 2, "ARG1")}


def test_parts_of_two_arcs_one_predicate():
    parts = parts_of(g("t", 3, [(1, 2, "A"), (1, 3, "B")]))
    assert len(parts) == 5
    assert sum(1 for p in parts if isinstance(p, PredPart)) == 1


def test_parts_round_trip():
    rng = np.random.default_rng(0)
    labels = ["a", "b", "c"]
    for _ in range(50):
        n = int(rng.integers(1, 6))
        arcs = []
        for i in range(1, n + 1):
            for j in range(1, n + 1):
                if i != j and rng.random() < 0.3:
                    arcs.append((i, j, labels[int(rng.integers(3))]))
        graph = g("t", n, arcs)
        back = graph_from_parts("t", n, parts_of(graph))
        assert back == graph


VOCAB = LabelVocab({"t": ("A", "B", "D")}, {"t": frozenset(["D"])})


def test_validate_empty_graph():
    assert validate(g("t", 3, []), VOCAB) == []


def test_validate_predicate_without_arc():
    graph = SemanticGraph("t", 2, frozenset(), frozenset({1}))
    v = validate(graph, VOCAB)
    assert len(v) == 1 and v[0].kind == "predicate-without-arc"


def test_validate_determinism_violation():
    graph = g("t", 3, [(1, 2, "D"), (1, 3, "D")])
    kinds = {v.kind for v in validate(graph, VOCAB)}
    assert kinds == {"determinism"}


def test_validate_unknown_label_is_violation_not_crash():
    graph = g("t", 2, [(1, 2, "WAT")])
    kinds = {v.kind for v in validate(graph, VOCAB)}
    assert kinds == {"unknown-label"}


def test_validate_biconditional_on_from_arcs_graphs():
    rng = np.random.default_rng(1)
    for _ in range(30):
        n = int(rng.integers(1, 6))
        arcs = [(i, j, "A") for i in range(1, n + 1) for j in range(1, n + 1)
                if i != j and rng.random() < 0.3]
        assert validate(g("t", n, arcs), VOCAB) == []


def test_multigraph_union_singleton_projection_identity():
    graph = g("dm", 3, [(1, 2, "A")])
    mg = multigraph_union({"dm": graph})
    assert mg["dm"] == graph


def test_multigraph_union_three_empty():
    mg = multigraph_union({t: g(t, 4, []) for t in ("dm", "pas", "psd")})
    assert len(mg.tasks) == 3
    assert all(len(mg[t].arcs) == 0 for t in mg.tasks)


def test_multigraph_union_toy_formalisms():
    # one sentence annotated three ways; arc counts survive the bundling
    dm = g("dm", 4, [(2, 1, "ARG1"), (2, 3, "ARG2")])
    pas = g("pas", 4, [(2, 1, "verb_ARG1"), (2, 3, "verb_ARG2"), (4, 3, "adj_ARG1")])
    psd = g("psd", 4, [(2, 3, "PAT-arg")])
    mg = multigraph_union({"dm": dm, "pas": pas, "psd": psd})
    assert {t: len(mg[t].arcs) for t in mg.tasks} == {"dm": 2, "pas": 3, "psd": 1}
    assert mg["pas"] == pas


def test_multigraph_union_length_mismatch():
    with pytest.raises(ValueError):
        multigraph_union({"a": g("a", 3, []), "b": g("b", 4, [])})


def test_multigraph_eq():
    a = multigraph_union({"t": g("t", 2, [(1, 2, "A")])})
    b = multigraph_union({"t": g("t", 2, [(1, 2, "A")])})
    assert a == b


def test_label_vocab_interning():
    v = LabelVocab({"t": ("x", "y")}, {"t": frozenset()})
    assert v.index("t", "y") == 1
    assert v.has("t", "x") and not v.has("t", "z")


def test_label_vocab_rejects_duplicates():
    with pytest.raises(ValueError):
        LabelVocab({"t": ("x", "x")}, {"t": frozenset()})


def test_label_vocab_from_graphs_strictest_determinism():
    g1 = g("t", 3, [(1, 2, "A"), (1, 3, "A"), (2, 3, "B")])
    g2 = g("t", 2, [(1, 2, "B")])
    v = LabelVocab.from_graphs({"t": [g1, g2]})
    # A occurred twice under head 1, B never repeated under one head
    assert not v.is_deterministic("t", "A")
    assert v.is_deterministic("t", "B")


def test_label_vocab_surviving_filter():
    g1 = g("t", 2, [(1, 2, "A")])
    v = LabelVocab.from_graphs({"t": [g1]}, surviving={"t": set()})
    assert v.task_labels("t") == ()
