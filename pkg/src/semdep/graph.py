"""Sentences, labeled dependency graphs, their part decomposition, and
structural-constraint checking.

All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

TOP_LABEL = "TOP"


@dataclass(frozen=True)
class Token:
    index: int  # 1-based
    form: str
    lemma: str = "_"
    pos: str = "_"

    def __post_init__(self):
        if self.index < 1:
            raise ValueError(f"token index must be >= 1, got {self.index}")
        if not self.form:
            raise ValueError("token form must be nonempty")


@dataclass(frozen=True)
class Sentence:
    id: str
    tokens: tuple[Token, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        for k, tok in enumerate(self.tokens, start=1):
            if tok.index != k:
                raise ValueError(f"token indices must be 1..n contiguous; "
                                 f"position {k} has index {tok.index}")

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True, order=True)
class LabeledArc:
    head: int
    modifier: int
    label: str

    def __post_init__(self):
        if self.head == self.modifier:
            raise ValueError("self-loop arc")
        if self.head < 0 or self.modifier < 1:
            raise ValueError(f"bad arc indices {self.head}->{self.modifier}")
        if self.head == 0 and self.label != TOP_LABEL:
            raise ValueError("head 0 is reserved for virtual-top arcs")


@dataclass(frozen=True)
class SemanticGraph:
    """One task's labeled directed graph over a sentence of n tokens.

    `predicates` is stored separately from the arcs so that constraint
    violations (a predicate with no outgoing arc, and vice versa) can be
    represented and reported by validate() instead of crashing.
    """
    task: str
    n: int
    arcs: frozenset[LabeledArc]
    predicates: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "arcs", frozenset(self.arcs))
        object.__setattr__(self, "predicates", frozenset(self.predicates))
        seen = {}
        for a in self.arcs:
            if a.head > self.n or a.modifier > self.n:
                raise ValueError(f"arc {a.head}->{a.modifier} outside 1..{self.n}")
            key = (a.head, a.modifier)
            if key in seen:
                raise ValueError(f"multiple labels on arc {key}")
            seen[key] = a.label
        for p in self.predicates:
            if p < 0 or p > self.n:
                raise ValueError(f"predicate index {p} outside range")

    @staticmethod
    def from_arcs(task: str, n: int, arcs) -> "SemanticGraph":
        """Build a graph whose predicate set is exactly the arc heads."""
        arcs = frozenset(arcs)
        return SemanticGraph(task, n, arcs, frozenset(a.head for a in arcs))

    @staticmethod
    def empty(task: str, n: int) -> "SemanticGraph":
        return SemanticGraph(task, n, frozenset(), frozenset())

    def arc_label(self, head: int, modifier: int) -> str | None:
        for a in self.arcs:
            if a.head == head and a.modifier == modifier:
                return a.label
        return None

    def restricted_to_labels(self, labels) -> "SemanticGraph":
        """Drop arcs whose label is not in `labels`; recompute predicates.

        Used to keep losses and recall denominators consistent after label
        filtering.
        """
        kept = [a for a in self.arcs if a.label in labels]
        return SemanticGraph.from_arcs(self.task, self.n, kept)

    def is_acyclic(self) -> bool:
        children = {}
        for a in self.arcs:
            children.setdefault(a.head, []).append(a.modifier)
        WHITE, GRAY, BLACK = 0, 1, 2
        color = {}

        def visit(u):
            color[u] = GRAY
            for v in children.get(u, ()):
                c = color.get(v, WHITE)
                if c == GRAY:
                    return False
                if c == WHITE and not visit(v):
                    return False
            color[u] = BLACK
            return True

        for u in list(children):
            if color.get(u, WHITE) == WHITE:
                if not visit(u):
                    return False
        return True


@dataclass(frozen=True)
class Multigraph:
    """Per-task graphs over the same sentence, decoded and scored jointly."""
    graphs: dict

    def __post_init__(self):
        ns = {g.n for g in self.graphs.values()}
        if len(ns) > 1:
            raise ValueError(f"component graphs disagree on token count: {sorted(ns)}")
        for t, g in self.graphs.items():
            if g.task != t:
                raise ValueError(f"graph filed under {t!r} has task {g.task!r}")

    @property
    def tasks(self):
        return list(self.graphs)

    def __getitem__(self, task: str) -> SemanticGraph:
        return self.graphs[task]

    def __eq__(self, other):
        return isinstance(other, Multigraph) and self.graphs == other.graphs


def multigraph_union(graphs: dict) -> Multigraph:
    """Bundle per-task graphs losslessly; projection returns them unchanged."""
    return Multigraph(dict(graphs))


# ---------------------------------------------------------------------------
# Parts: the scored local structures.

@dataclass(frozen=True, order=True)
class PredPart:
    task: str
    head: int


@dataclass(frozen=True, order=True)
class ArcPart:
    task: str
    head: int
    modifier: int


@dataclass(frozen=True, order=True)
class LabeledArcPart:
    task: str
    head: int
    modifier: int
    label: str


@dataclass(frozen=True, order=True)
class CrossArcPart:
    """Unlabeled arcs at the same (head, modifier) in two or three tasks."""
    tasks: tuple[str, ...]
    head: int
    modifier: int

    def __post_init__(self):
        if len(self.tasks) not in (2, 3):
            raise ValueError("cross-task part needs 2 or 3 tasks")
        if list(self.tasks) != sorted(set(self.tasks)):
            raise ValueError("tasks must be sorted and distinct")


@dataclass(frozen=True, order=True)
class CrossLabeledPart:
    """Labeled arcs at the same (head, modifier): one label per task."""
    tasks: tuple[str, ...]
    head: int
    modifier: int
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.tasks) not in (2, 3):
            raise ValueError("cross-task part needs 2 or 3 tasks")
        if len(self.labels) != len(self.tasks):
            raise ValueError("exactly one label per task in the taskset")
        if list(self.tasks) != sorted(set(self.tasks)):
            raise ValueError("tasks must be sorted and distinct")


def part_key(part) -> tuple:
    """Total order over mixed part types, for deterministic iteration."""
    if isinstance(part, PredPart):
        return (0, part.task, part.head, 0, "")
    if isinstance(part, ArcPart):
        return (1, part.task, part.head, part.modifier, "")
    if isinstance(part, LabeledArcPart):
        return (2, part.task, part.head, part.modifier, part.label)
    if isinstance(part, CrossArcPart):
        return (3, "|".join(part.tasks), part.head, part.modifier, "")
    return (4, "|".join(part.tasks), part.head, part.modifier,
            "|".join(part.labels))


def parts_of(graph: SemanticGraph) -> set:
    """Decompose a graph into its scored parts: one predicate part per
    predicate, one unlabeled and one labeled arc part per arc."""
    parts = set()
    for p in graph.predicates:
        parts.add(PredPart(graph.task, p))
    for a in graph.arcs:
        parts.add(ArcPart(graph.task, a.head, a.modifier))
        parts.add(LabeledArcPart(graph.task, a.head, a.modifier, a.label))
    return parts


def graph_from_parts(task: str, n: int, parts) -> SemanticGraph:
    """Inverse of parts_of for well-formed part sets (round-trip helper)."""
    arcs = [LabeledArc(p.head, p.modifier, p.label)
            for p in parts if isinstance(p, LabeledArcPart) and p.task == task]
    preds = [p.head for p in parts if isinstance(p, PredPart) and p.task == task]
    return SemanticGraph(task, n, frozenset(arcs), frozenset(preds))


# ---------------------------------------------------------------------------
# Label vocabulary.

@dataclass(frozen=True)
class LabelVocab:
    """Per-task ordered label lists with small-integer interning, plus the
    per-task deterministic label sets."""
    labels: dict        # task -> tuple of label strings
    deterministic: dict  # task -> frozenset of label strings
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        idx = {}
        for t, labs in self.labels.items():
            if len(set(labs)) != len(labs):
                raise ValueError(f"duplicate labels in task {t!r}")
            idx[t] = {lab: i for i, lab in enumerate(labs)}
        object.__setattr__(self, "_index", idx)

    @property
    def tasks(self):
        return list(self.labels)

    def task_labels(self, task: str) -> tuple:
        return self.labels[task]

    def index(self, task: str, label: str) -> int:
        return self._index[task][label]

    def has(self, task: str, label: str) -> bool:
        return label in self._index.get(task, ())

    def is_deterministic(self, task: str, label: str) -> bool:
        return label in self.deterministic.get(task, ())

    @staticmethod
    def from_graphs(graphs_by_task: dict, surviving: dict | None = None) -> "LabelVocab":
        """Build a vocab from training graphs.

        The deterministic set for a task is the strictest one consistent with
        the data: labels that never occur twice under the same head anywhere
        in the given graphs. `surviving` optionally restricts each task's
        label set (frequency filtering happens upstream).
        """
        labels = {}
        det = {}
        for task, graphs in graphs_by_task.items():
            seen = []
            seen_set = set()
            twice = set()
            for g in graphs:
                per_head = {}
                for a in sorted(g.arcs):
                    if a.label not in seen_set:
                        seen_set.add(a.label)
                        seen.append(a.label)
                    key = (a.head, a.label)
                    per_head[key] = per_head.get(key, 0) + 1
                for (_, lab), c in per_head.items():
                    if c > 1:
                        twice.add(lab)
            keep = sorted(seen_set if surviving is None else
                          (seen_set & set(surviving[task])))
            labels[task] = tuple(keep)
            det[task] = frozenset(l for l in keep if l not in twice)
        return LabelVocab(labels, det)


# ---------------------------------------------------------------------------
# Constraint checking.

@dataclass(frozen=True)
class Violation:
    kind: str
    task: str
    where: tuple
    message: str

    def __str__(self):
        return f"[{self.task}] {self.kind} at {self.where}: {self.message}"


def validate(graph: SemanticGraph, vocab: LabelVocab | None = None) -> list:
    """Check the decoding constraints on a graph; returns a list of
    violations (empty iff the graph is internally consistent).

    Checks: the predicate/outgoing-arc biconditional, the per-head
    determinism constraint, and (when a vocab is given) label membership.
    One-label-per-arc holds structurally for SemanticGraph.
    """
    out = []
    heads = {a.head for a in graph.arcs}
    for p in sorted(graph.predicates - heads):
        out.append(Violation("predicate-without-arc", graph.task, (p,),
                             "predicate has no outgoing arc"))
    for h in sorted(heads - graph.predicates):
        out.append(Violation("arc-without-predicate", graph.task, (h,),
                             "arc head is not marked as a predicate"))
    if vocab is not None:
        per_head_label = {}
        for a in sorted(graph.arcs):
            if a.head == 0 and a.label == TOP_LABEL:
                continue
            if not vocab.has(graph.task, a.label):
                out.append(Violation("unknown-label", graph.task,
                                     (a.head, a.modifier), f"label {a.label!r}"))
                continue
            if vocab.is_deterministic(graph.task, a.label):
                key = (a.head, a.label)
                per_head_label.setdefault(key, []).append(a.modifier)
        for (h, lab), mods in sorted(per_head_label.items()):
            if len(mods) > 1:
                out.append(Violation("determinism", graph.task, (h, lab),
                                     f"label {lab!r} on {len(mods)} arcs from head {h}"))
    return out


def validate_multigraph(mg: Multigraph, vocab: LabelVocab | None = None) -> list:
    out = []
    for t in sorted(mg.graphs):
        out.extend(validate(mg[t], vocab))
    return out
