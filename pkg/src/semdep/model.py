"""Model container: vocabularies, every learned parameter, checkpoint IO.

Parameter creation order is deterministic (and identical for the shared
variant and the degenerate freda configuration with zero-width task
encoders), so equal seeds give bit-identical models.
"""

from __future__ import annotations

import json
import numpy as np

from .autodiff import ParamTensor, glorot_init
from .graph import LabelVocab
from .sdp_io import EmbeddingTable, RunConfig

CHECKPOINT_FORMAT = "semdep.model"
CHECKPOINT_VERSION = 1

UNK = "<unk>"


class Vocab:
    """String-to-id mapping with <unk> at id 0 and per-entry counts."""

    def __init__(self, items, counts=None):
        self.itos = [UNK] + sorted(set(items) - {UNK})
        self.stoi = {s: i for i, s in enumerate(self.itos)}
        self.counts = np.zeros(len(self.itos), dtype=np.int64)
        if counts:
            for s, c in counts.items():
                if s in self.stoi:
                    self.counts[self.stoi[s]] = c

    def id(self, s: str) -> int:
        return self.stoi.get(s, 0)

    def count(self, s: str) -> int:
        return int(self.counts[self.id(s)])

    def __len__(self):
        return len(self.itos)


def build_vocabs(records_by_task: dict):
    """Word/POS vocabularies (with training counts) over all tasks' data."""
    wcounts = {}
    pos = set()
    for records in records_by_task.values():
        for rec in records:
            for tok in rec.sentence.tokens:
                wcounts[tok.form] = wcounts.get(tok.form, 0) + 1
                pos.add(tok.pos)
    return Vocab(wcounts.keys(), wcounts), Vocab(pos)


class Model:
    def __init__(self, config: RunConfig, tasks, word_vocab: Vocab,
                 pos_vocab: Vocab, labels: LabelVocab):
        self.config = config
        self.variant = config.variant
        self.tasks = sorted(tasks)
        self.word_vocab = word_vocab
        self.pos_vocab = pos_vocab
        self.labels = labels
        self.params: dict[str, ParamTensor] = {}
        self.pruners: dict = {}

    # -- layout ----------------------------------------------------------

    @property
    def uses_shared_encoder(self) -> bool:
        return self.variant != "basic"

    @property
    def task_encoder_dim(self) -> int:
        if self.variant in ("freda1", "freda3"):
            return self.config.effective_task_dim
        if self.variant == "basic":
            return self.config.bilstm_dim
        return 0

    def embedding_scopes(self):
        return list(self.tasks) if self.variant == "basic" else ["shared"]

    def emb_scope(self, task: str) -> str:
        return task if self.variant == "basic" else "shared"

    def encoder_scopes(self):
        scopes = []
        if self.uses_shared_encoder:
            scopes.append("shared")
        if self.variant == "basic" or (
                self.variant in ("freda1", "freda3") and self.task_encoder_dim > 0):
            scopes.extend(self.tasks)
        return scopes

    def task_scopes(self, task: str):
        """Encoder scopes whose states feed this task's representation
        functions, task-specific first."""
        if self.variant == "basic":
            return [task]
        if self.variant in ("freda1", "freda3") and self.task_encoder_dim > 0:
            return [task, "shared"]
        return ["shared"]

    def encoder_dim(self, scope: str) -> int:
        return self.config.bilstm_dim if scope == "shared" else self.task_encoder_dim

    def rep_position_dim(self, task: str) -> int:
        return sum(self.encoder_dim(s) for s in self.task_scopes(task))

    def mlp_input_dim(self, task: str, kind: str) -> int:
        per_pos = self.rep_position_dim(task)
        return per_pos if kind == "pred" else 2 * per_pos

    # -- parameter access --------------------------------------------------

    def _add(self, name: str, value) -> ParamTensor:
        p = ParamTensor(name, value)
        self.params[name] = p
        return p

    def p(self, name: str) -> ParamTensor:
        return self.params[name]

    def emb(self, scope: str, channel: str) -> ParamTensor:
        return self.params[f"emb:{scope}:{channel}"]

    def lstm(self, scope: str, layer: int, direction: str):
        base = f"lstm:{scope}:{layer}:{direction}"
        return (self.params[base + ":W"], self.params[base + ":U"],
                self.params[base + ":b"])

    def mlp(self, task: str, kind: str):
        layers = []
        for k in range(self.config.mlp_layers):
            base = f"mlp:{task}:{kind}:{k}"
            layers.append((self.params[base + ":W"], self.params[base + ":b"]))
        return layers

    def out_vec(self, task: str, kind: str) -> ParamTensor:
        return self.params[f"out:{task}:{kind}"]

    def tensor_mats(self, task: str, labeled: bool):
        kind = "label" if labeled else "arc"
        return (self.params[f"tensor:{task}:u_{kind}"],
                self.params[f"tensor:{task}:v_{kind}"])

    def all_params(self):
        return [self.params[k] for k in sorted(self.params)]

    def zero_grads(self):
        for p in self.params.values():
            p.zero_grad()

    def l2_penalty(self) -> float:
        lam = self.config.l2
        return 0.5 * lam * sum(float(np.sum(p.value * p.value))
                               for p in self.params.values())

    # -- initialization ----------------------------------------------------

    def initialize(self, rng: np.random.Generator,
                   pretrained: EmbeddingTable | None = None):
        cfg = self.config

        for scope in self.embedding_scopes():
            nv, npos = len(self.word_vocab), len(self.pos_vocab)
            pre = glorot_init(nv, cfg.pretrained_dim, rng)
            if pretrained is not None:
                if pretrained.dimension != cfg.pretrained_dim:
                    raise ValueError(f"embedding file has dim {pretrained.dimension}, "
                                     f"config wants {cfg.pretrained_dim}")
                for i, w in enumerate(self.word_vocab.itos):
                    pre[i] = pretrained.unk if i == 0 else pretrained.lookup(w)
            self._add(f"emb:{scope}:pretrained", pre)
            self._add(f"emb:{scope}:word", glorot_init(nv, cfg.word_dim, rng))
            self._add(f"emb:{scope}:pos", glorot_init(npos, cfg.pos_dim, rng))

        for scope in self.encoder_scopes():
            total = self.encoder_dim(scope)
            hidden = total // 2
            in_dim = cfg.input_dim
            for layer in range(cfg.bilstm_layers):
                for direction in ("fwd", "bwd"):
                    base = f"lstm:{scope}:{layer}:{direction}"
                    self._add(base + ":W", glorot_init(4 * hidden, in_dim, rng))
                    self._add(base + ":U", glorot_init(4 * hidden, hidden, rng))
                    b = np.zeros(4 * hidden)
                    b[hidden:2 * hidden] = 1.0  # forget gate
                    self._add(base + ":b", b)
                in_dim = total

        d = cfg.rep_dim
        for task in self.tasks:
            for kind in ("pred", "ua", "la"):
                in_dim = self.mlp_input_dim(task, kind)
                for k in range(cfg.mlp_layers):
                    base = f"mlp:{task}:{kind}:{k}"
                    self._add(base + ":W", glorot_init(d, in_dim, rng))
                    self._add(base + ":b", np.zeros(d))
                    in_dim = d

        for task in self.tasks:
            self._add(f"out:{task}:pred", glorot_init(1, d, rng)[0])
            self._add(f"out:{task}:arc", glorot_init(1, d, rng)[0])
            nl = max(1, len(self.labels.task_labels(task)))
            self._add(f"out:{task}:label", glorot_init(nl, d, rng))

        if cfg.cross_task:
            r = cfg.rank
            for task in self.tasks:
                for kind in ("arc", "label"):
                    self._add(f"tensor:{task}:u_{kind}", glorot_init(r, d, rng))
                    self._add(f"tensor:{task}:v_{kind}", glorot_init(r, d, rng))
        return self

    def set_all_zero(self):
        for p in self.params.values():
            p.value.fill(0.0)


def new_model(config: RunConfig, tasks, word_vocab, pos_vocab, labels,
              pretrained=None, rng=None) -> Model:
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    return Model(config, tasks, word_vocab, pos_vocab, labels).initialize(
        rng, pretrained)


# -- checkpoints -----------------------------------------------------------
#
# A checkpoint is a single .npz file. Array entries named "param:<name>"
# hold the parameters (row-major); "pruner:<task>" holds pruner weights.
# The "__meta__" entry is a JSON document with a versioned header, the run
# config, and the vocabularies. See README for the full schema.

def save_checkpoint(model: Model, path: str):
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": json.loads(model.config.to_json()),
        "tasks": model.tasks,
        "words": model.word_vocab.itos,
        "word_counts": model.word_vocab.counts.tolist(),
        "pos": model.pos_vocab.itos,
        "labels": {t: list(model.labels.task_labels(t)) for t in model.tasks},
        "deterministic": {t: sorted(model.labels.deterministic[t])
                          for t in model.tasks},
        "pruner_bias": {t: pm.bias for t, pm in model.pruners.items()},
    }
    arrays = {f"param:{name}": p.value for name, p in model.params.items()}
    for t, pm in model.pruners.items():
        arrays[f"pruner:{t}"] = pm.weights
    np.savez_compressed(path, __meta__=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path: str) -> Model:
    from .pruner import PrunerModel

    data = np.load(path, allow_pickle=False)
    meta = json.loads(str(data["__meta__"]))
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not a model checkpoint: {path}")
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
    config = RunConfig(**meta["config"])
    word_vocab = Vocab.__new__(Vocab)
    word_vocab.itos = list(meta["words"])
    word_vocab.stoi = {s: i for i, s in enumerate(word_vocab.itos)}
    word_vocab.counts = np.array(meta["word_counts"], dtype=np.int64)
    pos_vocab = Vocab.__new__(Vocab)
    pos_vocab.itos = list(meta["pos"])
    pos_vocab.stoi = {s: i for i, s in enumerate(pos_vocab.itos)}
    pos_vocab.counts = np.zeros(len(pos_vocab.itos), dtype=np.int64)
    labels = LabelVocab({t: tuple(v) for t, v in meta["labels"].items()},
                        {t: frozenset(v) for t, v in meta["deterministic"].items()})
    model = Model(config, meta["tasks"], word_vocab, pos_vocab, labels)
    for key in data.files:
        if key.startswith("param:"):
            name = key[len("param:"):]
            model.params[name] = ParamTensor(name, data[key])
        elif key.startswith("pruner:"):
            task = key[len("pruner:"):]
            model.pruners[task] = PrunerModel(
                task, data[key].copy(), float(meta["pruner_bias"][task]))
    return model
