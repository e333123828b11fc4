"""Token embedding, word dropout, stacked BiLSTM encoding, and the
per-structure input representation functions.

Each token's input vector concatenates three channels (pretrained word,
randomly initialized word, POS tag), all tuned during training. During
training a word w is replaced by <unk> with probability alpha / (1 + #(w));
the POS channel is left untouched.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tape, Var
from .graph import Sentence
from .model import Model


def unk_prob(alpha: float, count: int) -> float:
    return alpha / (1.0 + count)


def embed(sentence: Sentence, model: Model, scope: str,
          train_mode: bool = False, rng: np.random.Generator | None = None,
          tape: Tape | None = None) -> list[Var]:
    """Per-token input vectors for one embedding scope."""
    tape = tape if tape is not None else Tape()
    cfg = model.config
    pre = tape.param(model.emb(scope, "pretrained"))
    word = tape.param(model.emb(scope, "word"))
    pos = tape.param(model.emb(scope, "pos"))
    out = []
    for tok in sentence.tokens:
        wid = model.word_vocab.id(tok.form)
        if train_mode and wid != 0:
            if rng is None:
                raise ValueError("train-mode embedding needs an rng")
            p = unk_prob(cfg.word_dropout, model.word_vocab.count(tok.form))
            if rng.random() < p:
                wid = 0
        pid = model.pos_vocab.id(tok.pos)
        out.append(tape.concat([tape.row(pre, wid), tape.row(word, wid),
                                tape.row(pos, pid)]))
    return out


def _lstm_direction(tape: Tape, inputs: list[Var], w, u, b,
                    reverse: bool) -> list[Var]:
    """Single-direction LSTM pass; returns hidden states in sentence order."""
    hidden = b.value.shape[0] // 4
    wv, uv, bv = tape.param(w), tape.param(u), tape.param(b)
    h = tape.const(np.zeros(hidden))
    c = tape.const(np.zeros(hidden))
    order = range(len(inputs) - 1, -1, -1) if reverse else range(len(inputs))
    states: list[Var] = [None] * len(inputs)
    for t in order:
        gates = tape.add(tape.add(tape.matvec(wv, inputs[t]),
                                  tape.matvec(uv, h)), bv)
        # gate stacking: [input, forget, output, candidate]
        gi = tape.logistic(_slice(tape, gates, 0, hidden))
        gf = tape.logistic(_slice(tape, gates, hidden, 2 * hidden))
        go = tape.logistic(_slice(tape, gates, 2 * hidden, 3 * hidden))
        gc = tape.tanh(_slice(tape, gates, 3 * hidden, 4 * hidden))
        c = tape.add(tape.mul(gf, c), tape.mul(gi, gc))
        h = tape.mul(go, tape.tanh(c))
        states[t] = h
    return states


def _slice(tape: Tape, v: Var, lo: int, hi: int) -> Var:
    out = Var(v.value[lo:hi])

    def bw(g):
        full = np.zeros_like(v.value)
        full[lo:hi] = g
        v._add_grad(full)
    out._bw = bw
    return tape._push(out)


def encode(inputs: list[Var], model: Model, scope: str, tape: Tape) -> list[Var]:
    """Stacked BiLSTM; h_i concatenates the forward and backward states."""
    states = inputs
    for layer in range(model.config.bilstm_layers):
        fwd = _lstm_direction(tape, states, *model.lstm(scope, layer, "fwd"),
                              reverse=False)
        bwd = _lstm_direction(tape, states, *model.lstm(scope, layer, "bwd"),
                              reverse=True)
        states = [tape.concat([f, b]) for f, b in zip(fwd, bwd)]
    return states


def encode_sentence(sentence: Sentence, model: Model, train_mode: bool = False,
                    rng=None, tape: Tape | None = None):
    """Run every encoder the variant needs; returns (tape, scope -> states)."""
    tape = tape if tape is not None else Tape()
    emb_cache = {}
    encodings = {}
    for scope in model.encoder_scopes():
        es = scope if model.variant == "basic" else "shared"
        if es not in emb_cache:
            emb_cache[es] = embed(sentence, model, es, train_mode, rng, tape)
        encodings[scope] = encode(emb_cache[es], model, scope, tape)
    return tape, encodings


def input_rep(kind: str, indices: tuple, encodings: dict, model: Model,
              task: str, tape: Tape) -> Var:
    """The representation vector for one structure.

    kind "pred" takes one index; "ua"/"la" take (head, modifier). Token
    indices are 1-based. For freda variants the task-specific states come
    first, then the shared ones.
    """
    pieces = []
    for scope in model.task_scopes(task):
        for i in indices:
            pieces.append(encodings[scope][i - 1])
    x = pieces[0] if len(pieces) == 1 else tape.concat(pieces)
    for w, b in model.mlp(task, kind):
        x = tape.tanh(tape.add(tape.matvec(tape.param(w), x), tape.param(b)))
    return x
