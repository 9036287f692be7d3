"""Command-line entry points: train, evaluate, generate, calibrate, serve, chat.

Exit codes: 0 success, 1 usage error, 2 runtime error (bad files, corrupt
checkpoints, invalid configs). Usage problems print to stderr via argparse.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .autodiff import RandomStream
from .corpus import (
    CorpusError,
    detokenize,
    generate_corpus,
    load_corpus,
    save_corpus,
    tokenize,
)
from .inference import InferenceConfig, calibrate_alpha, respond_to_context
from .metrics import MetricError, evaluate
from .model import CheckpointError, load_checkpoint
from .trainer import PRESETS, ConfigError, load_config, records_to_csv, train

__all__ = ["build_parser", "cli_dispatch", "entrypoint"]

_RUNTIME_ERRORS = (CorpusError, CheckpointError, ConfigError, MetricError,
                   OSError, ValueError, FloatingPointError)


def _add_ranked_flags(sub, default_alpha=7.0, default_l=8):
    sub.add_argument("--alpha", type=float, default=default_alpha,
                     help="noise exploration factor (>= 1)")
    sub.add_argument("--L", type=int, default=default_l, dest="num_candidates",
                     help="candidates generated per response")
    sub.add_argument("--max-len", type=int, default=24,
                     help="decode length cap in tokens")
    sub.add_argument("--seed", type=int, default=0, help="sampling seed")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dialogan",
        description="Adversarial dialogue model: training, ranked-response "
                    "inference, and a chat service.")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("train", help="fit a model on a dialogue corpus")
    p.add_argument("--config", help="key = value hyperparameter file "
                                    "(defaults to the desk preset)")
    p.add_argument("--corpus", required=True, help="training dialogues, JSONL")
    p.add_argument("--out", required=True, help="final checkpoint path")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--log-csv", help="write per-iteration training records here")
    p.set_defaults(func=_cmd_train)

    p = subs.add_parser("evaluate", help="score a checkpoint on held-out data")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--test", required=True, help="test dialogues, JSONL")
    p.add_argument("--csv", help="also write the report as metric,value rows")
    _add_ranked_flags(p)
    p.set_defaults(func=_cmd_evaluate)

    p = subs.add_parser("generate",
                        help="rank responses for a batch of dialogue contexts")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--context-file", required=True,
                   help="JSONL, one array of context utterances per line")
    p.add_argument("--out", help="write responses here instead of stdout")
    _add_ranked_flags(p)
    p.set_defaults(func=_cmd_generate)

    p = subs.add_parser("calibrate",
                        help="grid-search the exploration factor on validation data")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--valid", required=True, help="validation dialogues, JSONL")
    p.add_argument("--alpha-max", type=int, default=20,
                   help="search alpha over 1..alpha-max")
    _add_ranked_flags(p)
    p.set_defaults(func=_cmd_calibrate)

    p = subs.add_parser("synth-corpus", help="emit a synthetic dialogue corpus")
    p.add_argument("--size", type=int, required=True, help="number of dialogues")
    p.add_argument("--vocab", type=int, default=8,
                   help="distinct template words per category (1-8)")
    p.add_argument("--turns", type=int, default=2, help="turns per dialogue (even)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output path (default: stdout)")
    p.set_defaults(func=_cmd_synth)

    p = subs.add_parser("serve", help="run the HTTP chat service")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    _add_ranked_flags(p)
    p.set_defaults(func=_cmd_serve)

    p = subs.add_parser("chat", help="talk to a checkpoint in the terminal")
    p.add_argument("--ckpt", required=True)
    _add_ranked_flags(p)
    p.set_defaults(func=_cmd_chat)

    return parser


def _inference_config(args):
    return InferenceConfig(num_candidates=args.num_candidates, alpha=args.alpha,
                           max_len=args.max_len)


def _cmd_train(args):
    config = load_config(args.config) if args.config else PRESETS["desk"]
    dialogues = load_corpus(args.corpus)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    result = train(config, dialogues, out_dir, resume_from=args.resume,
                   log_fn=lambda row: print(
                       f"epoch {row.epoch} it {row.iteration} "
                       f"mle {row.mle_loss:.4f} d_acc {row.d_acc:.3f}"))
    if os.path.abspath(result.checkpoint_path) != os.path.abspath(args.out):
        os.replace(result.checkpoint_path, args.out)
    if args.log_csv:
        records_to_csv(result.records, args.log_csv)
    print(f"saved checkpoint to {args.out}"
          + (f" (early stop, perplexity {result.final_perplexity:.4f})"
             if result.stopped_early else ""))
    return 0


def _cmd_evaluate(args):
    model, _ = load_checkpoint(args.ckpt)
    dialogues = load_corpus(args.test)
    report = evaluate(model, dialogues, _inference_config(args), seed=args.seed)
    print(report.to_table())
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as f:
            f.write(report.to_csv())
    return 0


def _load_contexts(path):
    contexts = []
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as e:
        raise CorpusError(f"cannot read context file {path}: {e}") from None
    for lineno, raw in enumerate(lines, 1):
        if not raw.strip():
            continue
        try:
            turns = json.loads(raw)
        except json.JSONDecodeError as e:
            raise CorpusError(f"{path} line {lineno}: {e}") from None
        if (not isinstance(turns, list) or not turns
                or not all(isinstance(t, str) and tokenize(t) for t in turns)):
            raise CorpusError(f"{path} line {lineno}: expected a nonempty "
                              "array of nonempty utterance strings")
        contexts.append([tokenize(t) for t in turns])
    if not contexts:
        raise CorpusError(f"{path}: no contexts found")
    return contexts


def _cmd_generate(args):
    model, _ = load_checkpoint(args.ckpt)
    contexts = _load_contexts(args.context_file)
    cfg = _inference_config(args)
    root = RandomStream(args.seed)
    lines = []
    for idx, turns in enumerate(contexts):
        ranked = respond_to_context(model, turns, cfg, root.derive("generate", idx))
        lines.append(detokenize(model.vocab.decode(ranked[0].token_ids)))
    text = "".join(line + "\n" for line in lines)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_calibrate(args):
    model, _ = load_checkpoint(args.ckpt)
    dialogues = load_corpus(args.valid)
    if args.alpha_max < 1:
        raise ValueError("alpha-max must be >= 1")
    cfg = _inference_config(args)
    best, scores = calibrate_alpha(model, dialogues, cfg,
                                   alpha_grid=range(1, args.alpha_max + 1),
                                   seed=args.seed)
    for alpha in sorted(scores):
        print(f"alpha {alpha:>3}  rouge-2 f1 {scores[alpha]:.6f}")
    print(f"best alpha: {best}")
    return 0


def _cmd_synth(args):
    corpus = generate_corpus(args.size, RandomStream(args.seed),
                             num_turns=args.turns, vocab_items=args.vocab)
    if args.out:
        save_corpus(corpus, args.out)
    else:
        for d in corpus:
            sys.stdout.write(
                json.dumps([detokenize(u) for u in d.utterances]) + "\n")
    return 0


def _cmd_serve(args):
    import uvicorn

    from .service import create_app

    model, _ = load_checkpoint(args.ckpt)
    app = create_app(model, base_config=_inference_config(args), seed=args.seed)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def _cmd_chat(args):
    from .inference import (advance_with_text, commit_utterance,
                            generate_candidates, rank_and_select)

    model, _ = load_checkpoint(args.ckpt)
    cfg = _inference_config(args)
    root = RandomStream(args.seed)
    state = model.generator.initial_state(1)
    turn = 0
    print("type a message; pick a reply by number (enter = best); "
          "ctrl-d or /quit to leave")
    while True:
        try:
            text = input("you> ").strip()
        except EOFError:
            print()
            return 0
        if text == "/quit":
            return 0
        if not text:
            continue
        try:
            state = advance_with_text(model, state, text)
        except ValueError as e:
            print(f"(ignored: {e})")
            continue
        decoded = generate_candidates(model, state, cfg, root.derive("chat", turn))
        ranked = rank_and_select(model, state, decoded, cfg)
        turn += 1
        for cand in ranked:
            print(f"  [{cand.rank}] d={cand.d_score:.4f} "
                  f"{detokenize(model.vocab.decode(cand.token_ids))}")
        try:
            pick = input("pick> ").strip()
        except EOFError:
            print()
            return 0
        chosen = int(pick) if pick.isdigit() else 0
        if not 0 <= chosen < len(ranked):
            chosen = 0
        state = commit_utterance(model, state, ranked[chosen].token_ids)
        print(f"bot> {detokenize(model.vocab.decode(ranked[chosen].token_ids))}")


def cli_dispatch(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 1
    try:
        return int(args.func(args) or 0)
    except BrokenPipeError:
        return 0
    except _RUNTIME_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def entrypoint():
    raise SystemExit(cli_dispatch())
