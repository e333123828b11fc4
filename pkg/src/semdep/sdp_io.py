"""Reading and writing the SDP bilexical corpus format, pretrained
embedding files, and the JSON run configuration.

Corpus layout (2015 seven-fixed-columns variant): sentences separated by
blank lines, a '#'-prefixed line carrying the sentence id, then one
tab-separated line per token with columns

    ID  FORM  LEMMA  POS  TOP(+/-)  PRED(+/-)  FRAME  [ARG ...]

with one ARG column per '+'-marked predicate, in token order. '_' marks the
absence of an arc.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass

import numpy as np

from .graph import LabeledArc, SemanticGraph, Sentence, Token

log = logging.getLogger(__name__)

VARIANTS = ("basic", "shared1", "freda1", "shared3", "freda3")


class ParseError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class CorpusRecord:
    sentence: Sentence
    gold: SemanticGraph
    tops: frozenset[int]
    frames: tuple  # per-token strings, '_' when absent


def _split_sentences(text: str):
    block, start = [], 1
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.strip() == "":
            if block:
                yield start, block
                block = []
        else:
            if not block:
                start = lineno
            block.append((lineno, line))
    if block:
        yield start, block


def read_corpus(stream, task: str = "dm", reject_cyclic: bool = True) -> list:
    """Parse an SDP corpus into records; raises ParseError with the
    offending line number on malformed input.

    Predicates marked '+' but with no realized argument are dropped from the
    graph's predicate set (they would violate the predicate constraint) but
    still consume an argument column.
    """
    if hasattr(stream, "read"):
        text = stream.read()
    else:
        text = stream
    if isinstance(text, bytes):
        text = text.decode("utf-8")

    records = []
    for _, block in _split_sentences(text):
        sent_id = None
        rows = []
        for lineno, line in block:
            if line.startswith("#"):
                if rows:
                    raise ParseError("comment line inside token block", lineno)
                sent_id = line[1:].strip()
                continue
            cols = line.split("\t")
            if len(cols) < 7:
                raise ParseError(f"expected >= 7 tab-separated columns, got {len(cols)}", lineno)
            rows.append((lineno, cols))
        if not rows:
            continue
        if sent_id is None:
            sent_id = f"s{rows[0][0]}"

        tokens = []
        seen_ids = set()
        for k, (lineno, cols) in enumerate(rows, start=1):
            try:
                tid = int(cols[0])
            except ValueError:
                raise ParseError(f"bad token id {cols[0]!r}", lineno)
            if tid in seen_ids:
                raise ParseError(f"duplicate token id {tid}", lineno)
            seen_ids.add(tid)
            if tid != k:
                raise ParseError(f"token ids must be contiguous; expected {k} got {tid}", lineno)
            tokens.append(Token(tid, cols[1], cols[2], cols[3]))
        n = len(tokens)

        pred_indices = [k for k, (_, cols) in enumerate(rows, start=1) if cols[5] == "+"]
        width = 7 + len(pred_indices)
        arcs = []
        tops = set()
        frames = []
        for j, (lineno, cols) in enumerate(rows, start=1):
            if len(cols) != width:
                raise ParseError(f"expected {width} columns ({len(pred_indices)} "
                                 f"predicates), got {len(cols)}", lineno)
            if cols[4] == "+":
                tops.add(j)
            frames.append(cols[6])
            for k, head in enumerate(pred_indices):
                cell = cols[7 + k]
                if cell != "_":
                    if head == j:
                        raise ParseError(f"self-loop arc at token {j}", lineno)
                    arcs.append(LabeledArc(head, j, cell))

        sentence = Sentence(sent_id, tuple(tokens))
        try:
            gold = SemanticGraph.from_arcs(task, n, arcs)
        except ValueError as e:
            raise ParseError(str(e), rows[0][0])
        if reject_cyclic and not gold.is_acyclic():
            log.warning("dropping sentence %s: gold graph contains a cycle", sent_id)
            continue
        records.append(CorpusRecord(sentence, gold,
                                    frozenset(tops), tuple(frames)))
    return records


def write_corpus(records, include_gold: bool = True) -> str:
    """Render records in the normal form read_corpus round-trips on."""
    out = []
    for rec in records:
        sent = rec.sentence
        g = rec.gold
        preds = sorted(g.predicates) if include_gold else []
        label_at = {}
        for a in g.arcs:
            if "\t" in a.label or "\n" in a.label:
                raise ValueError(f"label {a.label!r} contains whitespace control chars")
            label_at[(a.head, a.modifier)] = a.label
        out.append(f"#{sent.id}")
        for tok in sent.tokens:
            j = tok.index
            cols = [str(j), tok.form, tok.lemma, tok.pos,
                    "+" if j in rec.tops else "-",
                    "+" if j in preds else "-",
                    rec.frames[j - 1] if rec.frames else "_"]
            for head in preds:
                cols.append(label_at.get((head, j), "_"))
            out.append("\t".join(cols))
        out.append("")
    return "\n".join(out) + ("\n" if out else "")


@dataclass
class EmbeddingTable:
    dimension: int
    vectors: dict
    unk: np.ndarray

    def lookup(self, word: str) -> np.ndarray:
        return self.vectors.get(word, self.unk)

    def __len__(self):
        return len(self.vectors)


def load_embeddings(stream, expected_dim: int) -> EmbeddingTable:
    """Load "word v1 ... vd" lines; out-of-table lookups get the zero
    unk vector."""
    if hasattr(stream, "read"):
        text = stream.read()
    else:
        text = stream
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    vectors = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.rstrip().split(" ")
        word = fields[0]
        vals = fields[1:]
        if len(vals) != expected_dim:
            raise ParseError(f"expected {expected_dim} values for {word!r}, "
                             f"got {len(vals)}", lineno)
        try:
            vec = np.array([float(v) for v in vals], dtype=np.float64)
        except ValueError:
            raise ParseError(f"malformed float in vector for {word!r}", lineno)
        vectors[word] = vec
    return EmbeddingTable(expected_dim, vectors, np.zeros(expected_dim))


@dataclass
class RunConfig:
    """Hyperparameters; defaults match the experimental setup."""
    pretrained_dim: int = 100
    word_dim: int = 25
    pos_dim: int = 25
    rep_dim: int = 100          # phi/psi dimension d
    mlp_layers: int = 2
    bilstm_layers: int = 2
    bilstm_dim: int = 200       # both directions concatenated
    task_bilstm_dim: int | None = None  # freda task encoders; None -> bilstm_dim
    rank: int = 100             # tensor rank r
    word_dropout: float = 0.25  # alpha
    epochs: int = 30
    learning_rate: float = 1e-3
    l2: float = 1e-6
    ad3_max_iter: int = 500
    prune_threshold: float = 1e-4
    label_min_count: int = 30
    variant: str = "basic"
    seed: int = 1
    patience: int = 5
    pruner_epochs: int = 10
    use_pruner: bool = False

    def __post_init__(self):
        for name in ("pretrained_dim", "word_dim", "pos_dim", "rep_dim",
                     "mlp_layers", "bilstm_layers", "bilstm_dim", "rank"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.bilstm_dim % 2:
            raise ValueError("bilstm_dim must be even (two directions)")
        if self.task_bilstm_dim is not None and (
                self.task_bilstm_dim < 0 or self.task_bilstm_dim % 2):
            raise ValueError("task_bilstm_dim must be a nonnegative even integer")
        if self.word_dropout < 0:
            raise ValueError("word_dropout must be >= 0")
        if not (0.0 < self.prune_threshold < 1.0):
            raise ValueError("prune_threshold must lie in (0, 1)")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")

    @property
    def input_dim(self) -> int:
        return self.pretrained_dim + self.word_dim + self.pos_dim

    @property
    def effective_task_dim(self) -> int:
        return self.bilstm_dim if self.task_bilstm_dim is None else self.task_bilstm_dim

    @property
    def cross_task(self) -> bool:
        return self.variant in ("shared3", "freda3")

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)


def load_config(text: str) -> RunConfig:
    """Parse a JSON config; unknown keys are an error so typos surface."""
    data = json.loads(text) if text.strip() else {}
    if not isinstance(data, dict):
        raise ParseError("config must be a JSON object")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ParseError(f"unknown config key(s): {', '.join(unknown)}")
    if "variant" in data:
        data["variant"] = str(data["variant"]).lower()
    return RunConfig(**data)
