"""Command-line entry point: train, parse, eval, similarity, gradcheck,
prune-stats.

Exit codes: 0 success, 1 bad flags, 2 data errors. Set SEMDEP_LOG=debug for
verbose logging.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from itertools import combinations

import numpy as np

from . import evaluate, reporting
from .decoder import decode
from .model import load_checkpoint, save_checkpoint
from .sdp_io import (CorpusRecord, ParseError, RunConfig, load_config,
                     load_embeddings, read_corpus, write_corpus)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


class DataError(Exception):
    pass


def _task_path(value: str):
    if "=" not in value:
        raise argparse.ArgumentTypeError(f"expected TASK=PATH, got {value!r}")
    task, path = value.split("=", 1)
    return task, path


def _read_task_corpora(pairs, reject_cyclic=True):
    out = {}
    for task, path in pairs:
        if task in out:
            raise DataError(f"task {task!r} given twice")
        try:
            with open(path, "r", encoding="utf-8") as fh:
                out[task] = read_corpus(fh, task=task, reject_cyclic=reject_cyclic)
        except OSError as e:
            raise DataError(str(e))
    return out


def build_arg_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="semdep", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--corpus", type=_task_path, action="append", required=True,
                   metavar="TASK=PATH")
    t.add_argument("--dev", type=_task_path, action="append", metavar="TASK=PATH")
    t.add_argument("--config", help="JSON config file")
    t.add_argument("--embeddings", help="pretrained embedding text file")
    t.add_argument("--model", required=True, help="output checkpoint path")
    t.add_argument("--variant", choices=["basic", "shared1", "freda1",
                                         "shared3", "freda3"])
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--log", help="write one JSON line per epoch here")
    t.add_argument("--figures-dir", help="render training curves here")

    p = sub.add_parser("parse", help="parse a corpus with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", type=_task_path, action="append", required=True)
    p.add_argument("--output", type=_task_path, action="append", required=True,
                   metavar="TASK=PATH")
    p.add_argument("--threads", type=int, default=1)

    e = sub.add_parser("eval", help="score predictions against gold")
    e.add_argument("--pred", type=_task_path, action="append", required=True)
    e.add_argument("--gold", type=_task_path, action="append", required=True)
    e.add_argument("--include-tops", action="store_true")
    e.add_argument("--output", help="write the JSON report here")
    e.add_argument("--figures-dir", help="render report figures + TSV here")

    s = sub.add_parser("similarity", help="structural similarity between corpora")
    s.add_argument("--corpus", type=_task_path, action="append", required=True)
    s.add_argument("--output", help="write TSV matrices here (directory)")
    s.add_argument("--figures-dir", help="render heatmaps here")

    g = sub.add_parser("gradcheck", help="finite-difference check on a tiny model")
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--tolerance", type=float, default=1e-4)

    r = sub.add_parser("prune-stats", help="train a pruner and report its stats")
    r.add_argument("--corpus", type=_task_path, action="append", required=True)
    r.add_argument("--eval-corpus", type=_task_path, action="append")
    r.add_argument("--epochs", type=int, default=10)
    r.add_argument("--threshold", type=float, default=1e-4)
    r.add_argument("--seed", type=int, default=0)
    return ap


def cmd_train(args) -> int:
    cfg_text = "{}"
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg_text = fh.read()
    config = load_config(cfg_text)
    overrides = {}
    if args.variant:
        overrides["variant"] = args.variant
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if overrides:
        config = RunConfig(**{**json.loads(config.to_json()), **overrides})

    corpora = _read_task_corpora(args.corpus)
    dev = _read_task_corpora(args.dev) if args.dev else None
    pretrained = None
    if args.embeddings:
        with open(args.embeddings, "r", encoding="utf-8") as fh:
            pretrained = load_embeddings(fh, config.pretrained_dim)

    from .trainer import train
    rows: list = []
    model = train(corpora, config, dev_by_task=dev, pretrained=pretrained,
                  log_rows=rows)
    save_checkpoint(model, args.model)
    if args.log:
        with open(args.log, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
    if args.figures_dir and rows:
        d = reporting.ensure_dir(args.figures_dir)
        reporting.render_training_curves(rows, os.path.join(d, "training.png"))
        reporting.write_tsv(
            os.path.join(d, "training.tsv"),
            ["epoch", "eta", "train_loss", "micro_lf"],
            [[r["epoch"], r["eta"], r["train_loss"], r["micro_lf"]] for r in rows])
    print(f"saved model to {args.model} "
          f"(best dev micro LF {max((r['micro_lf'] for r in rows), default=0.0)})")
    return 0


def cmd_parse(args) -> int:
    model = load_checkpoint(args.model)
    corpora = _read_task_corpora(args.corpus, reject_cyclic=False)
    outputs = dict(args.output)
    unknown = set(corpora) - set(model.tasks)
    if unknown:
        raise DataError(f"model was not trained for task(s): {sorted(unknown)}")
    if set(outputs) != set(corpora):
        raise DataError("each --corpus task needs a matching --output")

    base_task = sorted(corpora)[0]
    records = corpora[base_task]
    for task, recs in sorted(corpora.items()):
        if len(recs) != len(records):
            raise DataError(f"{task}: sentence count differs from {base_task}")
        for a, b in zip(recs, records):
            if [t.form for t in a.sentence.tokens] != \
                    [t.form for t in b.sentence.tokens]:
                raise DataError(f"{task}: tokenization differs from "
                                f"{base_task} at sentence {a.sentence.id!r}")
    sentences = [r.sentence for r in records]

    def run(sent):
        return decode(sent, model)

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as ex:
            graphs = list(ex.map(run, sentences))
    else:
        graphs = [run(s) for s in sentences]

    for task, path in sorted(outputs.items()):
        in_records = corpora[task]
        out_records = []
        for rec, mg in zip(in_records, graphs):
            out_records.append(CorpusRecord(rec.sentence, mg[task],
                                            rec.tops, rec.frames))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(write_corpus(out_records))
        print(f"wrote {len(out_records)} sentences to {path}")
    return 0


def cmd_eval(args) -> int:
    preds = _read_task_corpora(args.pred, reject_cyclic=False)
    golds = _read_task_corpora(args.gold, reject_cyclic=False)
    if set(preds) != set(golds):
        raise DataError("prediction and gold task sets differ")
    report = evaluate.evaluate_records(preds, golds,
                                       include_tops=args.include_tops)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    if args.figures_dir:
        d = reporting.ensure_dir(args.figures_dir)
        header, rows = reporting.eval_report_tables(report)
        reporting.write_tsv(os.path.join(d, "metrics.tsv"), header, rows)
        reporting.render_eval_figure(report, os.path.join(d, "metrics.png"))
    return 0


def cmd_similarity(args) -> int:
    corpora = _read_task_corpora(args.corpus, reject_cyclic=False)
    tasks = sorted(corpora)
    if len(tasks) < 2:
        raise DataError("similarity needs at least two corpora")
    directed, undirected = {}, {}
    for a, b in combinations(tasks, 2):
        for (x, y) in ((a, b), (b, a)):
            directed[(x, y)] = round(evaluate.structural_similarity(
                corpora[x], corpora[y], directed=True), 1)
            undirected[(x, y)] = round(evaluate.structural_similarity(
                corpora[x], corpora[y], directed=False), 1)

    def matrix_rows(mat):
        rows = []
        for a in tasks:
            rows.append([a] + [("-" if a == b else mat[(a, b)]) for b in tasks])
        return rows

    for name, mat in (("undirected", undirected), ("directed", directed)):
        print(f"# {name} unlabeled F1")
        print("\t".join([""] + tasks))
        for row in matrix_rows(mat):
            print("\t".join(str(v) for v in row))
    if args.output:
        d = reporting.ensure_dir(args.output)
        for name, mat in (("undirected", undirected), ("directed", directed)):
            reporting.write_tsv(os.path.join(d, f"similarity_{name}.tsv"),
                                [""] + tasks, matrix_rows(mat))
    if args.figures_dir:
        d = reporting.ensure_dir(args.figures_dir)
        reporting.render_similarity_figure(
            tasks, directed, undirected, os.path.join(d, "similarity.png"))
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import gradcheck
    err = gradcheck(seed=args.seed)
    print(f"max relative gradient error: {err:.3e}")
    if err >= args.tolerance:
        print(f"FAIL: error >= {args.tolerance}")
        return 1
    print("OK")
    return 0


def cmd_prune_stats(args) -> int:
    from .pruner import prune, train_pruner
    corpora = _read_task_corpora(args.corpus)
    evals = _read_task_corpora(args.eval_corpus) if args.eval_corpus else corpora
    out = {}
    for task in sorted(corpora):
        model = train_pruner(corpora[task], task, epochs=args.epochs,
                             seed=args.seed)
        kept = total = gkept = gtotal = 0
        for rec in evals.get(task, []):
            _, stats = prune(model, rec.sentence, threshold=args.threshold,
                             gold=rec.gold)
            kept += stats.kept
            total += stats.total
            gkept += stats.gold_kept
            gtotal += stats.gold_total
        out[task] = {
            "kept_fraction": round(kept / total, 4) if total else 0.0,
            "gold_recall": round(gkept / gtotal, 4) if gtotal else 1.0,
        }
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def main(argv=None) -> int:
    level = os.environ.get("SEMDEP_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    ap = build_arg_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 1
    np.seterr(over="ignore")
    handlers = {
        "train": cmd_train,
        "parse": cmd_parse,
        "eval": cmd_eval,
        "similarity": cmd_similarity,
        "gradcheck": cmd_gradcheck,
        "prune-stats": cmd_prune_stats,
    }
    try:
        return handlers[args.command](args)
    except (ParseError, DataError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
