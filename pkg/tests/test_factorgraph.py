import numpy as np
import pytest

from semdep.factorgraph import (OR_OUT, XOR_OUT, ad3, build_factor_graph,
                                project_amo, project_and,
                                project_and_reference, project_or_out,
                                project_simplex, project_xor_out,
                                round_repair)
from semdep.graph import (ArcPart, LabelVocab, LabeledArcPart, PredPart,
                          validate_multigraph)
from helpers import random_instance


# --- projections ------------------------------------------------------------

def test_simplex_projection_known_cases():
    assert np.allclose(project_simplex(np.array([[0.2, 0.8]])), [[0.2, 0.8]])
    assert np.allclose(project_simplex(np.array([[2.0, 0.0]])), [[1.0, 0.0]])
    got = project_simplex(np.array([[0.6, 0.6]]))[0]
    assert np.allclose(got, [0.5, 0.5])
    assert np.allclose(project_simplex(np.array([[1.0]])), [[1.0]])


def _check_projection_optimality(mu, eta, vertices, tol=1e-8):
    # mu must lie in the hull (up to tol) and be no farther from eta than
    # any hull point: test against all vertices and random mixtures
    rng = np.random.default_rng(0)
    d2 = np.sum((mu - eta) ** 2)
    for _ in range(200):
        w = rng.dirichlet(np.ones(len(vertices)))
        point = w @ vertices
        assert d2 <= np.sum((point - eta) ** 2) + tol


def _xor_out_vertices(k):
    vs = [np.zeros(k + 1)]
    for i in range(k):
        v = np.zeros(k + 1)
        v[i] = 1.0
        v[k] = 1.0
        vs.append(v)
    return np.array(vs)


def _or_out_vertices(k):
    vs = [np.zeros(k + 1)]
    for mask in range(1, 2 ** k):
        v = np.array([(mask >> i) & 1 for i in range(k)] + [1], dtype=float)
        vs.append(v)
    return np.array(vs)


def test_xor_out_projection_optimal():
    rng = np.random.default_rng(1)
    for _ in range(50):
        k = int(rng.integers(1, 5))
        eta = rng.uniform(-1.5, 2.5, k + 1)
        mu = project_xor_out(eta[None, :])[0]
        assert abs(mu[:k].sum() - mu[k]) < 1e-9
        _check_projection_optimality(mu, eta, _xor_out_vertices(k))


def test_or_out_projection_optimal():
    rng = np.random.default_rng(2)
    for _ in range(50):
        k = int(rng.integers(1, 5))
        eta = rng.uniform(-1.5, 2.5, k + 1)
        mu = project_or_out(eta[None, :])[0]
        assert mu[:k].max() <= mu[k] + 1e-9
        assert mu[:k].sum() >= mu[k] - 1e-9
        _check_projection_optimality(mu, eta, _or_out_vertices(k))


def test_amo_projection_optimal():
    rng = np.random.default_rng(3)
    verts = np.vstack([np.zeros(3), np.eye(3)])
    for _ in range(50):
        eta = rng.uniform(-1.5, 2.5, 3)
        mu = project_amo(eta[None, :])[0]
        assert mu.sum() <= 1 + 1e-9 and mu.min() >= -1e-12
        _check_projection_optimality(mu, eta, verts)


@pytest.mark.parametrize("k", [2, 3])
def test_and_projection_matches_vertex_active_set(k):
    # the closed-form subproblem must agree with projecting onto the convex
    # hull of the enumerated vertex assignments
    rng = np.random.default_rng(4 + k)
    for _ in range(120):
        eta = rng.uniform(-1.5, 2.5, k)
        s = float(rng.uniform(-2.0, 2.0))
        rho = float(rng.uniform(0.05, 2.0))
        fast = project_and(eta[None, :], np.array([s]), rho)[0]
        ref = project_and_reference(eta, s, rho)
        assert np.allclose(fast, ref, atol=1e-7), (eta, s, rho)


def test_and_zero_potential_is_box_projection():
    eta = np.array([[-0.3, 0.4, 1.7]])
    mu = project_and(eta, np.array([0.0]), 0.5)
    assert np.allclose(mu, [[0.0, 0.4, 1.0]])


# --- factor graph construction ----------------------------------------------

def test_builder_factor_coverage():
    rng = np.random.default_rng(5)
    sent, tasks, vocab, cands, table = random_instance(rng, n_max=4)
    fg = build_factor_graph(len(sent), tasks, cands, table.scores, vocab)
    la_in_xor = {}
    ua_in_xor_out = {}
    ua_in_or = {}
    for kind, ids, _ in fg.factors:
        if kind == XOR_OUT:
            for i in ids[:-1]:
                la_in_xor[i] = la_in_xor.get(i, 0) + 1
            ua_in_xor_out[ids[-1]] = ua_in_xor_out.get(ids[-1], 0) + 1
        elif kind == OR_OUT:
            for i in ids[:-1]:
                ua_in_or[i] = ua_in_or.get(i, 0) + 1
    for i, p in enumerate(fg.parts):
        if isinstance(p, LabeledArcPart):
            assert la_in_xor.get(i) == 1
        elif isinstance(p, ArcPart):
            assert ua_in_xor_out.get(i) == 1
            assert ua_in_or.get(i) == 1


# --- ad3 ---------------------------------------------------------------------

def _single_arc_instance():
    vocab = LabelVocab({"t": ("a",)}, {"t": frozenset()})
    cands = {PredPart("t", 1), ArcPart("t", 1, 2), LabeledArcPart("t", 1, 2, "a")}
    return vocab, cands


def test_ad3_single_positive_arc():
    vocab, cands = _single_arc_instance()
    scores = {PredPart("t", 1): 0.0, ArcPart("t", 1, 2): 1.0,
              LabeledArcPart("t", 1, 2, "a"): 1.0}
    fg = build_factor_graph(2, ["t"], cands, scores, vocab)
    res = ad3(fg)
    assert res.converged
    assert all(abs(v - 1.0) < 1e-4 for v in res.posteriors.values())


def test_ad3_all_negative_gives_empty():
    vocab, cands = _single_arc_instance()
    scores = {PredPart("t", 1): -0.5, ArcPart("t", 1, 2): -1.0,
              LabeledArcPart("t", 1, 2, "a"): -0.25}
    fg = build_factor_graph(2, ["t"], cands, scores, vocab)
    res = ad3(fg)
    mg = round_repair(res, fg)
    assert res.converged
    assert all(v < 0.5 for v in res.posteriors.values())
    assert len(mg["t"].arcs) == 0 and len(mg["t"].predicates) == 0


def test_ad3_posteriors_in_unit_interval():
    rng = np.random.default_rng(6)
    for _ in range(10):
        sent, tasks, vocab, cands, table = random_instance(rng, n_max=4)
        fg = build_factor_graph(len(sent), tasks, cands, table.scores, vocab)
        res = ad3(fg, max_iter=60)
        for v in res.posteriors.values():
            assert -1e-9 <= v <= 1 + 1e-9


def test_ad3_empty_instance():
    vocab = LabelVocab({"t": ("a",)}, {"t": frozenset()})
    fg = build_factor_graph(1, ["t"], set(), {}, vocab)
    res = ad3(fg)
    assert res.converged and res.posteriors == {}
    mg = round_repair(res, fg)
    assert len(mg["t"].arcs) == 0


def test_ad3_dual_objective_nonincreasing():
    # dual decomposition bound recorded per iteration should not increase
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(30):
        sent, tasks, vocab, cands, table = random_instance(rng, n_max=4)
        fg = build_factor_graph(len(sent), tasks, cands, table.scores, vocab)
        res = ad3(fg, track_dual=True)
        dh = res.dual_history
        worst = max(worst, max((dh[i + 1] - dh[i]
                                for i in range(len(dh) - 1)), default=0.0))
    assert worst <= 1e-9, f"dual objective increased by {worst}"


# --- rounding ----------------------------------------------------------------

def test_round_repair_integral_identity():
    rng = np.random.default_rng(8)
    for _ in range(20):
        sent, tasks, vocab, cands, table = random_instance(rng, n_max=4,
                                                           cross=False)
        from semdep.decoder import brute_force
        mg, _ = brute_force(len(sent), tasks, cands, table, vocab)
        fg = build_factor_graph(len(sent), tasks, cands, table.scores, vocab)
        z = np.zeros(len(fg.parts))
        from semdep.graph import parts_of
        active = set()
        for t in tasks:
            active |= parts_of(mg[t])
        for i, p in enumerate(fg.parts):
            z[i] = 1.0 if p in active else 0.0
        from semdep.factorgraph import Ad3Result
        res = Ad3Result({}, True, 0, z=z)
        assert round_repair(res, fg) == mg


def test_round_repair_argmax_label():
    vocab = LabelVocab({"t": ("a", "b")}, {"t": frozenset()})
    cands = {PredPart("t", 1), ArcPart("t", 1, 2),
             LabeledArcPart("t", 1, 2, "a"), LabeledArcPart("t", 1, 2, "b")}
    fg = build_factor_graph(2, ["t"], cands, {p: 0.0 for p in cands}, vocab)
    z = np.zeros(len(fg.parts))
    z[fg.index[ArcPart("t", 1, 2)]] = 0.9
    z[fg.index[LabeledArcPart("t", 1, 2, "a")]] = 0.6
    z[fg.index[LabeledArcPart("t", 1, 2, "b")]] = 0.7
    from semdep.factorgraph import Ad3Result
    mg = round_repair(Ad3Result({}, False, 1, z=z), fg)
    assert mg["t"].arc_label(1, 2) == "b"


def test_round_repair_fuzz_always_valid():
    rng = np.random.default_rng(9)
    for _ in range(1000):
        sent, tasks, vocab, cands, table = random_instance(
            rng, n_max=4, max_labels=3, det_prob=0.5)
        fg = build_factor_graph(len(sent), tasks, cands, table.scores, vocab)
        z = rng.uniform(0, 1, len(fg.parts))
        from semdep.factorgraph import Ad3Result
        mg = round_repair(Ad3Result({}, False, 1, z=z), fg)
        assert validate_multigraph(mg, vocab) == []
