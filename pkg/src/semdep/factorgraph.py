"""Factor graphs over candidate parts and AD3 approximate MAP inference.

Variables are binary indicators for candidate predicate / unlabeled-arc /
labeled-arc parts with their scores as unary log-potentials. Factors:

  XOR-WITH-OUTPUT   an unlabeled arc is active iff exactly one of its
                    labeled arcs is active
  OR-WITH-OUTPUT    a predicate is active iff at least one outgoing
                    unlabeled arc is active
  AT-MOST-ONE       a deterministic label appears at most once per head
  AND (dense)       a cross-task part pays its score on the all-active
                    assignment of its member arcs

AD3 runs consensus ADMM: each factor solves a quadratic projection onto the
convex hull of its feasible assignments, the consensus variables average the
factor-local solutions, and the multipliers do gradient steps on the
consensus constraints. All projections are closed form and batched across
factors of the same kind and arity; the AND-factor projection eliminates the
vertex distribution analytically (see _project_and) and is checked in the
tests against a vertex-enumeration active-set reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph import (ArcPart, CrossArcPart, CrossLabeledPart, LabeledArcPart,
                    LabeledArc, Multigraph, PredPart, SemanticGraph)

# ---------------------------------------------------------------------------
# Projections. Every routine takes row-stacked inputs and returns the
# projection of each row onto the factor's marginal polytope.


def project_simplex(c: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row onto the probability simplex."""
    r, k = c.shape
    if k == 1:
        return np.ones_like(c)
    a = -np.sort(-c, axis=1)
    cums = (np.cumsum(a, axis=1) - 1.0) / np.arange(1, k + 1)
    mask = a > cums
    idx = k - 1 - np.argmax(mask[:, ::-1], axis=1)
    theta = cums[np.arange(r), idx]
    return np.maximum(c - theta[:, None], 0.0)


def project_xor_out(eta: np.ndarray) -> np.ndarray:
    """Hull of {all off} u {output on with exactly one input on}; last
    column is the output. Flipping the output maps the hull onto the
    simplex."""
    t = eta.copy()
    t[:, -1] = 1.0 - t[:, -1]
    p = project_simplex(t)
    p[:, -1] = 1.0 - p[:, -1]
    return p


def project_or_out(eta: np.ndarray) -> np.ndarray:
    """Hull of {all off} u {output on, any nonempty input subset on}:
    {(x, y): 0 <= x_j <= y <= 1, sum x >= y}. Last column is the output."""
    r = eta.shape[0]
    k = eta.shape[1] - 1
    a = eta[:, :k]
    b = eta[:, k]
    if k == 0:
        return np.zeros((r, 1))
    # minimize (y-b)^2 + sum_{a_j > y} (a_j-y)^2, then clamp y to [0,1]
    s = -np.sort(-a, axis=1)
    cums = np.cumsum(s, axis=1)
    ms = np.arange(1, k + 1)
    cand = (b[:, None] + cums) / (1.0 + ms)
    upper = s
    lower = np.concatenate([s[:, 1:], np.full((r, 1), -np.inf)], axis=1)
    valid = (cand <= upper + 1e-12) & (cand >= lower - 1e-12)
    first = np.argmax(valid, axis=1)
    y = np.where(valid.any(axis=1), cand[np.arange(r), first], cand[:, -1])
    y = np.where(b >= s[:, 0] - 1e-12, b, y)  # empty active set wins if valid
    y = np.clip(y, 0.0, 1.0)
    x = np.clip(a, 0.0, y[:, None])
    out = np.concatenate([x, y[:, None]], axis=1)
    viol = x.sum(axis=1) < y - 1e-12
    if np.any(viol):
        # sum x = y is then active, which reduces to the xor-out hull
        out[viol] = project_xor_out(eta[viol])
    return out


def project_amo(eta: np.ndarray) -> np.ndarray:
    """Hull of {at most one on}: {x >= 0, sum x <= 1}."""
    x = np.maximum(eta, 0.0)
    over = x.sum(axis=1) > 1.0
    if np.any(over):
        x[over] = project_simplex(eta[over])
    return x


def _and_objective(mu, eta, s, rho, k):
    slack = np.maximum(0.0, mu.sum(axis=1) - (k - 1))
    return -0.5 * rho * np.sum((mu - eta) ** 2, axis=1) + s * slack


def project_and(eta: np.ndarray, s: np.ndarray, rho: float) -> np.ndarray:
    """Quadratic subproblem of a dense AND factor with potential s on the
    all-active assignment.

    Maximizes -rho/2 ||mu - eta||^2 + s * t(mu) over the box, where the
    optimal mass on the all-ones vertex given marginals mu is
    t = min_i mu_i for s >= 0 and t = max(0, sum mu - (k-1)) for s < 0
    (Frechet bounds, both achievable). Exact and batched.
    """
    r, k = eta.shape
    mu = np.empty_like(eta)
    pos = s >= 0.0
    if np.any(pos):
        e = eta[pos]
        sp = s[pos]
        srt = np.sort(e, axis=1)
        cums = np.cumsum(srt, axis=1)
        w = np.full(e.shape[0], np.nan)
        for m in range(1, k + 1):
            wm = (sp / rho + cums[:, m - 1]) / m
            ok = wm >= srt[:, m - 1] - 1e-12
            if m < k:
                ok &= wm <= srt[:, m] + 1e-12
            w = np.where(np.isnan(w) & ok, wm, w)
        w = np.where(np.isnan(w), (sp / rho + cums[:, -1]) / k, w)
        w = np.clip(w, 0.0, 1.0)
        mu[pos] = np.clip(e, w[:, None], 1.0)
    neg = ~pos
    if np.any(neg):
        e = eta[neg]
        sn = s[neg]
        rn = e.shape[0]
        target = float(k - 1)
        c1 = np.clip(e, 0.0, 1.0)
        ok1 = c1.sum(axis=1) <= target + 1e-12
        c2 = np.clip(e + (sn / rho)[:, None], 0.0, 1.0)
        ok2 = c2.sum(axis=1) >= target - 1e-12
        lo = np.min(e, axis=1) * 0.0 - np.max(e, axis=1) - 1.0
        hi = 2.0 - np.min(e, axis=1)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            h = np.clip(e + mid[:, None], 0.0, 1.0).sum(axis=1)
            hi = np.where(h >= target, mid, hi)
            lo = np.where(h >= target, lo, mid)
        c3 = np.clip(e + hi[:, None], 0.0, 1.0)
        f1 = np.where(ok1, _and_objective(c1, e, sn, rho, k), -np.inf)
        f2 = np.where(ok2, _and_objective(c2, e, sn, rho, k), -np.inf)
        f3 = _and_objective(c3, e, sn, rho, k)
        stacked = np.stack([c1, c2, c3])
        best = np.argmax(np.stack([f1, f2, f3]), axis=0)
        mu[neg] = stacked[best, np.arange(rn)]
    return mu


def project_and_reference(eta: np.ndarray, s: float, rho: float,
                          max_iter: int = 100) -> np.ndarray:
    """Reference solver for one AND factor: enumerate the 2^k vertex
    assignments and project onto their convex hull with an active-set
    method. Used to verify project_and."""
    k = eta.shape[0]
    verts = np.array([[(v >> i) & 1 for i in range(k)]
                      for v in range(2 ** k)], dtype=np.float64)
    pot = np.zeros(len(verts))
    pot[-1] = s  # all-ones vertex is last
    # min_q  rho/2 ||Mq - eta||^2 - pot.q   over the simplex
    init = int(np.argmax(verts @ eta + pot / rho))
    support = [init]
    q = {init: 1.0}
    for _ in range(max_iter):
        m = len(support)
        gram = verts[support] @ verts[support].T
        kkt = np.zeros((m + 1, m + 1))
        kkt[:m, :m] = rho * gram
        kkt[:m, m] = 1.0
        kkt[m, :m] = 1.0
        rhs = np.zeros(m + 1)
        rhs[:m] = rho * (verts[support] @ eta) + pot[support]
        rhs[m] = 1.0
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        qs, tau = sol[:m], sol[m]
        if np.min(qs) < -1e-12:
            cur = np.array([q[v] for v in support])
            diff = qs - cur
            steps = [cur[i] / -diff[i] for i in range(m) if diff[i] < -1e-15]
            t = min(1.0, min(steps)) if steps else 1.0
            newq = cur + t * diff
            q = {v: max(0.0, newq[i]) for i, v in enumerate(support)
                 if newq[i] > 1e-12}
            if not q:
                q = {support[int(np.argmax(newq))]: 1.0}
            support = list(q)
            continue
        q = {v: qs[i] for i, v in enumerate(support)}
        mu = verts[support].T @ qs
        grad = rho * (verts @ mu - verts @ eta) - pot
        viol = grad + tau
        j = int(np.argmin(viol))
        if viol[j] >= -1e-9:
            return mu
        if j in support:
            return mu
        support.append(j)
        q[j] = 0.0
    return verts[list(q)].T @ np.array([q[v] for v in q])


# ---------------------------------------------------------------------------
# Factor graph.

XOR_OUT, OR_OUT, AMO, AND = "xor_out", "or_out", "amo", "and"


def part_kind_rank(part) -> int:
    if isinstance(part, PredPart):
        return 0
    if isinstance(part, ArcPart):
        return 1
    return 2


@dataclass
class FactorGraph:
    n: int
    tasks: list
    vocab: object
    parts: list                       # variable id -> first-order part
    theta: np.ndarray                 # unary scores
    factors: list                     # (kind, [var ids], potential)
    slots: dict                       # (task,i,j) -> (ua_id, [(label, la_id)])
    heads: dict                       # (task,i) -> (pred_id, [ua ids])
    cross: list = field(default_factory=list)  # (part, [var ids], potential)

    @property
    def index(self):
        if not hasattr(self, "_index"):
            self._index = {p: i for i, p in enumerate(self.parts)}
        return self._index

    def num_vars(self):
        return len(self.parts)


def var_sort_key(part, vocab):
    if isinstance(part, PredPart):
        return (part.head, part.task, 0, 0, 0)
    if isinstance(part, ArcPart):
        return (part.head, part.task, 1, part.modifier, 0)
    return (part.head, part.task, 2, part.modifier,
            vocab.index(part.task, part.label))


def build_factor_graph(n, tasks, candidates, scores, vocab) -> FactorGraph:
    """Wire candidate parts into variables and constraint factors.

    Every labeled arc ends up in exactly one XOR-WITH-OUTPUT, every
    unlabeled arc in exactly one OR-WITH-OUTPUT (as input) and one
    XOR-WITH-OUTPUT (as output).
    """
    first = [p for p in candidates
             if isinstance(p, (PredPart, ArcPart, LabeledArcPart))]
    first.sort(key=lambda p: var_sort_key(p, vocab))
    index = {p: i for i, p in enumerate(first)}
    theta = np.array([scores[p] for p in first], dtype=np.float64)

    slots, heads, det = {}, {}, {}
    for p in first:
        if isinstance(p, ArcPart):
            slots.setdefault((p.task, p.head, p.modifier),
                             [index[p], []])
    for p in first:
        if isinstance(p, LabeledArcPart):
            key = (p.task, p.head, p.modifier)
            if key not in slots:
                raise ValueError(f"labeled arc {p} has no unlabeled candidate")
            slots[key][1].append((p.label, index[p]))
            if vocab.is_deterministic(p.task, p.label):
                det.setdefault((p.task, p.head, p.label), []).append(index[p])
    for p in first:
        if isinstance(p, PredPart):
            heads.setdefault((p.task, p.head), [index[p], []])
    for (task, i, j), (ua_id, _) in sorted(slots.items()):
        key = (task, i)
        if key not in heads:
            raise ValueError(f"arc slot {(task, i, j)} has no predicate candidate")
        heads[key][1].append(ua_id)

    factors = []
    for key in sorted(slots):
        ua_id, labs = slots[key]
        labs.sort(key=lambda x: vocab.index(key[0], x[0]))
        factors.append((XOR_OUT, [li for _, li in labs] + [ua_id], 0.0))
    for key in sorted(heads):
        pred_id, uas = heads[key]
        factors.append((OR_OUT, sorted(uas) + [pred_id], 0.0))
    for key in sorted(det):
        ids = det[key]
        if len(ids) > 1:
            factors.append((AMO, sorted(ids), 0.0))

    cross = []
    for p in sorted(c for c in candidates if isinstance(c, CrossArcPart)):
        ids = [index[ArcPart(t, p.head, p.modifier)] for t in p.tasks]
        factors.append((AND, ids, scores[p]))
        cross.append((p, ids, scores[p]))
    for p in sorted(c for c in candidates if isinstance(c, CrossLabeledPart)):
        ids = [index[LabeledArcPart(t, p.head, p.modifier, lab)]
               for t, lab in zip(p.tasks, p.labels)]
        factors.append((AND, ids, scores[p]))
        cross.append((p, ids, scores[p]))

    slots_out = {k: (v[0], sorted(v[1], key=lambda x: vocab.index(k[0], x[0])))
                 for k, v in slots.items()}
    heads_out = {k: (v[0], sorted(v[1])) for k, v in heads.items()}
    return FactorGraph(n, sorted(tasks), vocab, first, theta, factors,
                       slots_out, heads_out, cross)


# ---------------------------------------------------------------------------
# AD3.

@dataclass
class Ad3Result:
    """AD3 output. `converged` means the residuals dropped below tolerance
    AND the consensus solution is integral, i.e. the decisions need no
    rounding; a fractional fixed point of the relaxation counts as not
    converged and gets rounded like any other truncated run."""
    posteriors: dict
    converged: bool
    iterations: int
    primal_objective: float = 0.0
    integral: bool = True
    consensus: bool = True  # residuals below tolerance
    dual_history: list = field(default_factory=list)
    z: np.ndarray | None = None


def _group_factors(factors):
    groups = {}
    for kind, ids, pot in factors:
        groups.setdefault((kind, len(ids)), []).append((ids, pot))
    out = []
    for (kind, arity), items in sorted(groups.items()):
        idx = np.array([ids for ids, _ in items], dtype=np.int64)
        pot = np.array([p for _, p in items], dtype=np.float64)
        out.append((kind, idx, pot))
    return out


def _group_dual(kind, c, pot):
    """Max of (sigma - lambda).m + pot over the factor's assignments."""
    if kind == XOR_OUT:
        cy = c[:, -1]
        best = cy + np.max(c[:, :-1], axis=1) if c.shape[1] > 1 else cy
        return np.maximum(0.0, best if c.shape[1] > 1 else -np.inf * np.ones_like(cy))
    if kind == OR_OUT:
        cy = c[:, -1]
        x = c[:, :-1]
        pos_sum = np.maximum(x, 0.0).sum(axis=1)
        nonempty = np.where(pos_sum > 0, pos_sum, np.max(x, axis=1))
        return np.maximum(0.0, cy + nonempty)
    if kind == AMO:
        return np.maximum(0.0, np.max(c, axis=1))
    if kind == AND:
        # best proper subset never pays the potential; the full set does
        full = c.sum(axis=1) + pot
        all_pos = (c > 0).all(axis=1)
        proper = np.where(all_pos, c.sum(axis=1) - c.min(axis=1),
                          np.maximum(c, 0.0).sum(axis=1))
        return np.maximum(proper, full)
    raise ValueError(kind)


def ad3(fg: FactorGraph, max_iter: int = 500, rho0: float = 0.1,
        tol: float = 1e-6, track_dual: bool = False) -> Ad3Result:
    """Alternating-directions dual decomposition over the factor graph.

    Converged means the residuals dropped below tol and the consensus is
    integral; otherwise the posteriors still come back for rounding. The
    step size is rebalanced every 10 iterations (x2 when the primal
    residual exceeds 10x the dual one, /2 in the mirror case).
    track_dual records the Lagrangian bound per iteration.
    """
    nv = fg.num_vars()
    if nv == 0 or not fg.factors:
        post = {p: 1.0 if fg.theta[i] > 0 else 0.0
                for i, p in enumerate(fg.parts)}
        z = np.array([post[p] for p in fg.parts], dtype=np.float64)
        return Ad3Result(post, True, 0, z=z)
    consensus = False

    groups = _group_factors(fg.factors)
    deg = np.zeros(nv)
    for _, idx, _ in groups:
        np.add.at(deg, idx.ravel(), 1.0)
    lone = deg == 0  # variables outside every factor follow their score sign
    deg_safe = np.where(lone, 1.0, deg)
    sigma = fg.theta / deg_safe

    # starting from the empty assignment keeps exact score ties resolved
    # toward sparser graphs
    z = np.zeros(nv)
    z[lone] = (fg.theta[lone] > 0).astype(np.float64)
    lams = [np.zeros(idx.shape) for _, idx, _ in groups]
    mus = [np.zeros(idx.shape) for _, idx, _ in groups]
    rho = rho0
    total_slots = sum(idx.size for _, idx, _ in groups)
    it = 0
    dual_history = []

    for it in range(1, max_iter + 1):
        acc = np.zeros(nv)
        for g, (kind, idx, pot) in enumerate(groups):
            eta = z[idx] + (sigma[idx] + lams[g]) / rho
            if kind == XOR_OUT:
                mu = project_xor_out(eta)
            elif kind == OR_OUT:
                mu = project_or_out(eta)
            elif kind == AMO:
                mu = project_amo(eta)
            else:
                mu = project_and(eta, pot, rho)
            mus[g] = mu
            np.add.at(acc, idx.ravel(), mu.ravel())
        z_new = acc / deg_safe
        z_new[lone] = z[lone]

        primal_sq = 0.0
        dual_val = 0.0
        for g, (kind, idx, pot) in enumerate(groups):
            diff = mus[g] - z_new[idx]
            primal_sq += float(np.sum(diff * diff))
            lams[g] -= rho * diff
            if track_dual:
                dual_val += float(np.sum(_group_dual(kind, sigma[idx] + lams[g],
                                                     pot)))
        if track_dual:
            dual_history.append(dual_val)
        dz = z_new - z
        dual_res = rho * math.sqrt(float(np.sum(deg * dz * dz)) / total_slots)
        primal_res = math.sqrt(primal_sq / total_slots)
        z = z_new

        if primal_res < tol and dual_res < tol:
            consensus = True
            break
        if it % 10 == 0:
            if primal_res > 10.0 * dual_res:
                rho *= 2.0
            elif dual_res > 10.0 * primal_res:
                rho *= 0.5

    z = np.clip(z, 0.0, 1.0)
    post = {p: float(z[i]) for i, p in enumerate(fg.parts)}
    integral = bool(np.all(np.minimum(z, 1.0 - z) < 1e-3))
    result = Ad3Result(post, consensus and integral, it, integral=integral,
                       consensus=consensus, dual_history=dual_history, z=z)
    result.primal_objective = multigraph_objective(fg, round_repair(result, fg))
    return result


# ---------------------------------------------------------------------------
# Rounding and repair.

def round_repair(result: Ad3Result, fg: FactorGraph) -> Multigraph:
    """Threshold posteriors at 0.5 and repair to a feasible multigraph.

    Repair order: pick the argmax-posterior label for each active arc, drop
    labels of inactive arcs, enforce determinism keeping the
    highest-posterior arc, then recompute predicates from surviving arcs.
    """
    z = result.z
    arcs = {t: [] for t in fg.tasks}
    chosen = {}
    for (task, i, j), (ua_id, labs) in sorted(fg.slots.items()):
        if z[ua_id] <= 0.5 or not labs:
            continue
        best = max(labs, key=lambda x: (z[x[1]], -fg.vocab.index(task, x[0])))
        chosen[(task, i, j)] = (best[0], z[best[1]])
    # determinism repair
    by_det = {}
    for (task, i, j), (lab, zz) in chosen.items():
        if fg.vocab.is_deterministic(task, lab):
            by_det.setdefault((task, i, lab), []).append((zz, -j, j))
    for key, items in by_det.items():
        if len(items) > 1:
            items.sort(reverse=True)
            task, i, lab = key
            for _, _, j in items[1:]:
                del chosen[(task, i, j)]
    for (task, i, j), (lab, _) in chosen.items():
        arcs[task].append(LabeledArc(i, j, lab))
    graphs = {t: SemanticGraph.from_arcs(t, fg.n, arcs[t]) for t in fg.tasks}
    return Multigraph(graphs)


def multigraph_objective(fg: FactorGraph, mg: Multigraph) -> float:
    """Sum of unary scores of the multigraph's parts plus the potentials of
    cross-task factors whose members are all active."""
    total = 0.0
    index = fg.index
    for t in fg.tasks:
        g = mg[t]
        for p in g.predicates:
            total += fg.theta[index[PredPart(t, p)]]
        for a in g.arcs:
            total += fg.theta[index[ArcPart(t, a.head, a.modifier)]]
            total += fg.theta[index[LabeledArcPart(t, a.head, a.modifier, a.label)]]
    for part, ids, pot in fg.cross:
        if isinstance(part, CrossArcPart):
            on = all(mg[t].arc_label(part.head, part.modifier) is not None
                     for t in part.tasks)
        else:
            on = all(mg[t].arc_label(part.head, part.modifier) == lab
                     for t, lab in zip(part.tasks, part.labels))
        if on:
            total += pot
    return total
