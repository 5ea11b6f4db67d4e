"""Command-line entry point: stats, train, gate-train, predict, evaluate,
analyze.

Option resolution is CLI flag > config file > built-in default; every
command that writes an output also writes a ``<output>.manifest.json``
recording the resolved configuration, input digests, and wall-clock time.
Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import sys
import time
from pathlib import Path

from . import __version__
from .analysis import categorize_errors, span_word_histogram
from .checkpoint import (
    atomic_write_bytes,
    atomic_write_text,
    load_checkpoint,
    save_checkpoint,
)
from .dataio import (
    parse_dataset,
    read_predictions,
    write_predictions,
    PostPrediction,
)
from .embeddings import encode_post, load_embeddings, mean_pooled
from .errors import DataFormatError, ToxicSpansError, ValidationError
from .gate import (
    GateModel,
    apply_gate,
    gate_score,
    load_external_gate,
    load_gate,
    save_gate,
    train_gate,
)
from .metric import evaluate
from .model import predict
from .span_codec import BridgePolicy
from .tokenizer import tokenize
from .training import TrainConfig, build_examples, train

DEFAULTS = {
    "max_len": 128,
    "hidden": 128,
    "epochs": 30,
    "batch": 16,
    "lr": 1e-3,
    "seed": 0,
    "gate": "off",
    "gate_threshold": 0.5,
    "bridge_gap": 1,
    "dev_fraction": 0.1,
    "patience": 5,
    "clip": 5.0,
    "embedding_dim": 25,
    "samples": 3,
    "gate_epochs": 400,
}

_CONVERTERS = {
    "max_len": int,
    "hidden": int,
    "epochs": int,
    "batch": int,
    "lr": float,
    "seed": int,
    "gate": str,
    "gate_threshold": float,
    "bridge_gap": int,
    "dev_fraction": float,
    "patience": int,
    "clip": float,
    "embedding_dim": int,
    "samples": int,
    "gate_epochs": int,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toxicspans",
        description="Toxic span detection: train, predict, and evaluate.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, *names: str) -> None:
        p.add_argument("--config", help="flat key=value config file")
        if "data" in names:
            p.add_argument("--data", required=True, help="dataset CSV")
        if "embeddings" in names:
            p.add_argument("--embeddings", required=True, help="word-vector text file")
            p.add_argument("--embedding-dim", type=int, default=None,
                           help="vector dimensionality (default 25)")
        if "lenient" in names:
            p.add_argument("--lenient", action="store_true",
                           help="drop out-of-range gold indexes with a warning")

    p = sub.add_parser("stats", help="span-length histogram of a labeled dataset")
    add_common(p, "data", "lenient")
    p.add_argument("--out", help="also write the histogram as CSV")
    p.add_argument("--max-len", type=int, default=None,
                   help="report posts longer than this many tokens (default 128)")

    p = sub.add_parser("train", help="train the tagger")
    add_common(p, "data", "embeddings", "lenient")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--dev-fraction", type=float, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--clip", type=float, default=None)
    p.add_argument("--bridge-gap", type=int, default=None)
    p.add_argument("--finetune-embeddings", action="store_true")

    p = sub.add_parser("gate-train", help="train the internal post-level gate")
    add_common(p, "data", "embeddings", "lenient")
    p.add_argument("--out", required=True, help="gate model output path (JSON)")
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--gate-threshold", type=float, default=None)
    p.add_argument("--gate-epochs", type=int, default=None)

    p = sub.add_parser("predict", help="predict spans with a trained checkpoint")
    add_common(p, "data", "embeddings")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="prediction file output path")
    p.add_argument("--max-len", type=int, default=None,
                   help="override the checkpoint's max length")
    p.add_argument("--gate", default=None,
                   help="off, internal, or scores:<path>")
    p.add_argument("--gate-model", help="gate JSON from gate-train (internal gate)")
    p.add_argument("--gate-threshold", type=float, default=None)
    p.add_argument("--bridge-gap", type=int, default=None)

    p = sub.add_parser("evaluate", help="score a prediction file against gold")
    add_common(p, "data", "lenient")
    p.add_argument("--pred", required=True, help="prediction file")
    p.add_argument("--out", help="write the per-post TSV here instead of stdout")

    p = sub.add_parser("analyze", help="bucket prediction errors by category")
    add_common(p, "data", "lenient")
    p.add_argument("--pred", required=True, help="prediction file")
    p.add_argument("--samples", type=int, default=None,
                   help="sample posts shown per bucket")

    return parser


def _read_config_file(path: str) -> dict:
    values = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{line_no}: expected 'key = value'")
        key, _, raw = line.partition("=")
        key = key.strip().replace("-", "_")
        if key not in _CONVERTERS:
            raise ValidationError(f"{path}:{line_no}: unknown option {key!r}")
        try:
            values[key] = _CONVERTERS[key](raw.strip())
        except ValueError:
            raise ValidationError(f"{path}:{line_no}: bad value for {key!r}") from None
    return values


def _resolve(args: argparse.Namespace, key: str):
    """CLI flag beats config file beats built-in default."""
    cli_value = getattr(args, key, None)
    if cli_value is not None:
        return cli_value
    if key in getattr(args, "_config_values", {}):
        return args._config_values[key]
    return DEFAULTS.get(key)


def _require_file(path: str, role: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"{role} file not found: {path}")
    return p


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(
    out_path: str,
    command: str,
    config: dict,
    inputs: dict[str, str],
    outputs: list[str],
    started: float,
) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": config.get("seed"),
        "inputs": {
            role: {"path": str(path), "sha256": _sha256(Path(path))}
            for role, path in inputs.items()
        },
        "outputs": outputs,
        "wall_clock_seconds": round(time.time() - started, 3),
    }
    atomic_write_text(
        str(out_path) + ".manifest.json", json.dumps(manifest, indent=2, sort_keys=True)
    )


def _load_table(args: argparse.Namespace):
    path = _require_file(args.embeddings, "embedding")
    dim = _resolve(args, "embedding_dim")
    with open(path, "rb") as handle:
        return load_embeddings(handle, expected_dim=dim)


def _load_posts(args: argparse.Namespace, has_gold: bool):
    path = _require_file(args.data, "dataset")
    with open(path, "rb") as handle:
        return parse_dataset(
            handle, has_gold=has_gold, lenient=getattr(args, "lenient", False)
        )


def cmd_stats(args: argparse.Namespace) -> int:
    started = time.time()
    posts = _load_posts(args, has_gold=True)
    hist = span_word_histogram(posts)
    print(f"{'words':>6}  {'posts':>7}  {'percent':>8}")
    for words, count in hist.counts.items():
        print(f"{words:>6}  {count:>7}  {hist.percentages[words]:>7.2f}%")
    print(f"total posts: {len(posts)}")
    max_len = _resolve(args, "max_len")
    over = sum(1 for post in posts if len(tokenize(post.text)) > max_len)
    print(f"posts longer than {max_len} tokens: {over}")
    if args.out:
        lines = ["words,posts,percent"]
        lines += [
            f"{w},{c},{hist.percentages[w]:.4f}" for w, c in hist.counts.items()
        ]
        atomic_write_text(args.out, "\n".join(lines) + "\n")
        _write_manifest(args.out, "stats", {"lenient": args.lenient},
                        {"data": args.data}, [args.out], started)
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    started = time.time()
    table = _load_table(args)
    posts = _load_posts(args, has_gold=True)
    cfg = TrainConfig(
        epochs=_resolve(args, "epochs"),
        batch_size=_resolve(args, "batch"),
        seed=_resolve(args, "seed"),
        learning_rate=_resolve(args, "lr"),
        hidden_size=_resolve(args, "hidden"),
        gradient_clip_norm=_resolve(args, "clip"),
        early_stop_patience=_resolve(args, "patience"),
        dev_fraction=_resolve(args, "dev_fraction"),
        max_len=_resolve(args, "max_len"),
        finetune_embeddings=args.finetune_embeddings,
    )
    policy = BridgePolicy(bridge_gaps=True, max_gap=_resolve(args, "bridge_gap"))
    examples = build_examples(posts, table, cfg.max_len)

    def report(stats):
        print(
            f"epoch {stats.epoch:3d}  train_nll {stats.train_nll:10.6f}  "
            f"dev_f1 {stats.dev_f1:.4f}",
            file=sys.stderr,
        )

    params, history = train(examples, cfg, table, policy=policy, progress=report)
    save_checkpoint(args.out, params, cfg, table)
    history_path = str(args.out) + ".history.json"
    atomic_write_text(
        history_path,
        json.dumps(
            {
                "epochs": [
                    {"epoch": h.epoch, "train_nll": h.train_nll, "dev_f1": h.dev_f1}
                    for h in history
                ]
            },
            indent=2,
            sort_keys=True,
        ),
    )
    best = max(history, key=lambda h: h.dev_f1)
    print(f"best dev_f1 {best.dev_f1:.4f} at epoch {best.epoch}; checkpoint: {args.out}")
    _write_manifest(
        args.out,
        "train",
        {**cfg.to_dict(), "bridge_gap": policy.max_gap},
        {"data": args.data, "embeddings": args.embeddings},
        [str(args.out), history_path],
        started,
    )
    return 0


def cmd_gate_train(args: argparse.Namespace) -> int:
    started = time.time()
    table = _load_table(args)
    posts = _load_posts(args, has_gold=True)
    max_len = _resolve(args, "max_len")
    data = [
        (encode_post(tokenize(post.text), table, max_len), bool(post.gold))
        for post in posts
    ]
    model = train_gate(
        data,
        table,
        epochs=_resolve(args, "gate_epochs"),
        threshold=_resolve(args, "gate_threshold"),
    )
    save_gate(model, args.out)
    print(f"gate model written to {args.out}")
    _write_manifest(
        args.out,
        "gate-train",
        {"max_len": max_len, "gate_threshold": model.threshold,
         "gate_epochs": _resolve(args, "gate_epochs")},
        {"data": args.data, "embeddings": args.embeddings},
        [str(args.out)],
        started,
    )
    return 0


def _setup_gate(args: argparse.Namespace, threshold: float) -> GateModel | None:
    mode = _resolve(args, "gate")
    if mode == "off":
        return None
    if mode == "internal":
        if not args.gate_model:
            raise ValidationError("--gate internal requires --gate-model <path>")
        model = load_gate(_require_file(args.gate_model, "gate model"))
        # an explicit threshold (flag or config file) overrides the stored one
        if args.gate_threshold is not None or "gate_threshold" in args._config_values:
            model.threshold = threshold
        return model
    if mode.startswith("scores:"):
        return load_external_gate(
            _require_file(mode.split(":", 1)[1], "gate score"), threshold
        )
    raise ValidationError(f"--gate must be off, internal, or scores:<path>, got {mode!r}")


def cmd_predict(args: argparse.Namespace) -> int:
    started = time.time()
    table = _load_table(args)
    ckpt_path = _require_file(args.checkpoint, "checkpoint")
    params, cfg = load_checkpoint(ckpt_path, table)
    max_len = args.max_len if args.max_len is not None else (
        args._config_values.get("max_len", cfg.max_len)
    )
    policy = BridgePolicy(bridge_gaps=True, max_gap=_resolve(args, "bridge_gap"))
    threshold = _resolve(args, "gate_threshold")
    gate = _setup_gate(args, threshold)
    posts = _load_posts(args, has_gold=False)

    preds = []
    for post in posts:
        spans = predict(params, post.text, max_len, policy)
        if gate is not None:
            if gate.kind == "internal-logreg":
                pooled = mean_pooled(
                    encode_post(tokenize(post.text), table, max_len), table
                )
                score = gate_score(gate, post.id, pooled)
            else:
                score = gate_score(gate, post.id)
            spans = apply_gate(spans, score, gate.threshold)
        preds.append(PostPrediction(id=post.id, spans=spans))

    buffer = io.BytesIO()
    write_predictions(preds, buffer)
    atomic_write_bytes(args.out, buffer.getvalue())
    print(f"{len(preds)} predictions written to {args.out}")
    inputs = {"data": args.data, "embeddings": args.embeddings,
              "checkpoint": args.checkpoint}
    if args.gate_model:
        inputs["gate_model"] = args.gate_model
    gate_mode = _resolve(args, "gate")
    if gate_mode.startswith("scores:"):
        inputs["gate_scores"] = gate_mode.split(":", 1)[1]
    _write_manifest(
        args.out,
        "predict",
        {"max_len": max_len, "gate": _resolve(args, "gate"),
         "gate_threshold": threshold, "bridge_gap": policy.max_gap},
        inputs,
        [str(args.out)],
        started,
    )
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    started = time.time()
    golds = _load_posts(args, has_gold=True)
    with open(_require_file(args.pred, "prediction"), "rb") as handle:
        preds = read_predictions(handle)
    report = evaluate(preds, golds)
    lines = ["id\tprecision\trecall\tf1"]
    for pred, score in zip(preds, report.per_post):
        lines.append(
            f"{pred.id}\t{score.precision:.4f}\t{score.recall:.4f}\t{score.f1:.4f}"
        )
    lines.append(f"mean_f1\t{report.mean_f1:.4f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
        print(f"mean_f1\t{report.mean_f1:.4f}")
        _write_manifest(args.out, "evaluate", {}, {"data": args.data, "pred": args.pred},
                        [args.out], started)
    else:
        sys.stdout.write(text)
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    golds = _load_posts(args, has_gold=True)
    with open(_require_file(args.pred, "prediction"), "rb") as handle:
        preds = read_predictions(handle)
    if len(preds) != len(golds) or any(p.id != g.id for p, g in zip(preds, golds)):
        raise ValidationError("prediction file does not align with the dataset")
    buckets = categorize_errors(preds, golds)
    n_samples = _resolve(args, "samples")
    by_id = {post.id: post for post in golds}
    total = sum(len(b.post_ids) for b in buckets)
    for bucket in buckets:
        share = 100.0 * len(bucket.post_ids) / total if total else 0.0
        print(f"{bucket.category:>17}: {len(bucket.post_ids):>6} posts ({share:.2f}%)")
        for post_id in bucket.post_ids[:n_samples]:
            text = by_id[post_id].text.replace("\n", " ")
            snippet = text[:60] + ("..." if len(text) > 60 else "")
            print(f"{'':>19}#{post_id}: {snippet}")
    return 0


_COMMANDS = {
    "stats": cmd_stats,
    "train": cmd_train,
    "gate-train": cmd_gate_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "analyze": cmd_analyze,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        args._config_values = _read_config_file(args.config) if args.config else {}
        return _COMMANDS[args.command](args)
    except (DataFormatError, ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ToxicSpansError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
