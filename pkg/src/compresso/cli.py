"""``compresso`` command-line entry point.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import torch

from . import gradcheck
from .corpus import (
    DEFAULT_NUM_OOV,
    DEFAULT_VOCAB_SIZE,
    CorpusError,
    Vocabulary,
    atomic_write_text,
    build_vocabulary,
    decode_with_oov,
    load_embeddings,
    random_embeddings,
    read_corpus,
    read_pairs,
    tokenize,
)
from .evaluation import (
    ABLATION_GRID,
    ablation_csv,
    all_text_system,
    evaluate,
    report_csv,
    report_table,
    run_ablation,
)
from .inference import DecodeSpec, baseline_f8w, compress, compress_sweep
from .model import MeanEmbedder, ModelConfig
from .noising import CorpusSampler, NoiseConfig, example_rng, make_training_example
from .training import (
    DENOISE,
    SUPERVISED,
    CheckpointError,
    TrainConfig,
    Trainer,
    apply_overrides,
    build_model,
    load_checkpoint,
    read_config,
)

logger = logging.getLogger("compresso")

GRADCHECK_TOLERANCE = 1e-4

# desk-scale overrides; everything else keeps the full-size defaults
PRESETS = {
    "tiny": {"hidden": "16", "layers": "1", "batch_size": "16", "lr_init": "0.005", "emb_dim": "32"},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("COMPRESSO_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"COMPRESSO_SEED is not an integer: {env!r}")
    return 0


def _int_list(text: str) -> list[int]:
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("lengths must be positive integers")
    return values


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="global seed (fallback: $COMPRESSO_SEED, then 0)")
    p.add_argument("--deterministic", action="store_true", help="single-threaded, deterministic kernels")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers for noising/evaluation")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file with TrainConfig/ModelConfig/NoiseConfig fields")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--vocab", help="vocabulary file from build-vocab (default: build from the corpus)")
    p.add_argument("--vocab-size", type=int, default=None)
    p.add_argument("--embeddings", help="GloVe-format word vector file")
    p.add_argument("--hidden", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--emb-dim", type=int, help="word vector size when no --embeddings file is given")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", dest="lr_init", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--shuffle", dest="shuffle_mode", choices=["unigram", "bigram"])
    p.add_argument("--no-attention", action="store_true")
    p.add_argument("--conditioning", action="store_true", help="condition the decoder on a sentence embedding")


def _add_decode_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--checkpoint", help="model checkpoint")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--ratio", type=float, default=0.5, help="target length as a fraction of the input")
    g.add_argument("--length", type=int, help="absolute target length")
    p.add_argument("--max-steps", type=int, help="hard cap on decoded tokens (default: target + 5)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="compresso", description="Unsupervised sentence compression with denoising auto-encoders.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build-vocab", help="build a vocabulary file from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--size", type=int, default=DEFAULT_VOCAB_SIZE)
    p.add_argument("--num-oov", type=int, default=DEFAULT_NUM_OOV)
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("train", help="train a model (denoising or supervised)")
    p.add_argument("--corpus", help="monolingual corpus (denoise mode) or paired file (supervised mode)", required=True)
    p.add_argument("--mode", choices=[DENOISE, SUPERVISED], default=None)
    p.add_argument("--out-dir", required=True)
    _add_model_flags(p)
    _add_common(p)

    p = sub.add_parser("compress", help="compress sentences from stdin")
    _add_decode_flags(p)
    p.add_argument("--sweep", type=_int_list, help='comma-separated target lengths, e.g. "7,9,11"')
    _add_common(p)

    p = sub.add_parser("sweep", help="decode each stdin sentence at several target lengths")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--lengths", type=_int_list, help="default: 7, 9, ... up to the input length")
    _add_common(p)

    p = sub.add_parser("evaluate", help="ROUGE report for a system on a paired file")
    p.add_argument("--system", choices=["model", "f8w", "all-text"], default="model")
    p.add_argument("--data", required=True, help="reference<TAB>summary file")
    p.add_argument("--out", help="write the CSV report here (default: stdout)")
    _add_decode_flags(p)
    _add_common(p)

    p = sub.add_parser("ablate", help="train and evaluate the six-cell ablation grid")
    p.add_argument("--corpus", required=True)
    p.add_argument("--data", required=True, help="reference<TAB>summary evaluation file")
    p.add_argument("--out", required=True, help="CSV table")
    p.add_argument("--ratio", type=float, default=0.5)
    _add_model_flags(p)
    _add_common(p)

    p = sub.add_parser("noise-preview", help="print noised training examples as TSV")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab")
    p.add_argument("--vocab-size", type=int, default=DEFAULT_VOCAB_SIZE)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--shuffle", dest="shuffle_mode", choices=["unigram", "bigram"], default="bigram")
    _add_common(p)

    p = sub.add_parser("grad-check", help="finite-difference gradient check on a tiny random model")
    p.add_argument("--hidden", type=int, default=8)
    p.add_argument("--vocab-size", type=int, default=50)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--samples", type=int, default=200, help="coordinates to check (0 = all)")
    p.add_argument("--no-attention", action="store_true")
    p.add_argument("--conditioning", action="store_true")
    _add_common(p)
    return parser


# -- helpers ----------------------------------------------------------------

def _configs(args) -> tuple[TrainConfig, ModelConfig, NoiseConfig, dict]:
    values: dict[str, str] = {}
    if args.preset:
        values.update(PRESETS[args.preset])
    if args.config:
        values.update(read_config(args.config))
    for key in ("hidden", "layers", "emb_dim", "batch_size", "lr_init", "epochs", "max_steps",
                "checkpoint_every", "shuffle_mode"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = str(v)
    if getattr(args, "mode", None):
        values["mode"] = args.mode
    if args.no_attention:
        values["use_attention"] = "false"
    if args.conditioning:
        values["use_conditioning"] = "true"
    values["seed"] = str(_seed(args))
    train_cfg = apply_overrides(TrainConfig(), values)
    model_cfg = apply_overrides(ModelConfig(vocab_size=1), values)
    noise_cfg = apply_overrides(NoiseConfig(), values)
    return train_cfg, model_cfg, noise_cfg, values


def _vocab_and_embeddings(args, references, model_cfg: ModelConfig, values: dict, seed: int):
    if args.vocab:
        vocab = Vocabulary.load(args.vocab)
    else:
        size = args.vocab_size or int(values.get("vocab_size", DEFAULT_VOCAB_SIZE))
        vocab = build_vocabulary(references, size=size, num_oov=model_cfg.num_oov)
    if args.embeddings:
        emb = load_embeddings(args.embeddings, vocab, seed=seed)
    else:
        emb = random_embeddings(vocab, model_cfg.emb_dim, seed=seed)
    return vocab, emb


def _train_model(references, pairs, train_cfg, model_cfg, noise_cfg, vocab, emb, out_dir=None):
    model = build_model(vocab, model_cfg, emb, seed=train_cfg.seed)
    trainer = Trainer(model, vocab, train_cfg, noise_cfg, corpus=references, pairs=pairs)
    loss_log = os.path.join(out_dir, "loss.csv") if out_dir else None
    trainer.run(checkpoint_dir=out_dir, loss_log=loss_log)
    return trainer


def _embedder(ckpt):
    if not ckpt.model.cfg.use_conditioning:
        return None
    return MeanEmbedder(ckpt.vocab, ckpt.model.word_emb.double().numpy())


def _decode_spec(args) -> DecodeSpec:
    if args.length is not None:
        return DecodeSpec(target_len=args.length, max_steps=args.max_steps)
    if not 0 < args.ratio:
        raise UsageError("--ratio must be positive")
    return DecodeSpec(ratio=args.ratio, max_steps=args.max_steps)


def _stdin_sentences():
    for line in sys.stdin:
        yield tokenize(line)


# -- commands -----------------------------------------------------------------

def cmd_build_vocab(args) -> int:
    vocab = build_vocabulary(read_corpus(args.corpus), size=args.size, num_oov=args.num_oov)
    vocab.save(args.out)
    print(f"wrote {args.out}: {vocab.size_content} content words, {vocab.num_special} specials")
    return 0


def cmd_train(args) -> int:
    train_cfg, model_cfg, noise_cfg, values = _configs(args)
    os.makedirs(args.out_dir, exist_ok=True)
    if train_cfg.mode == SUPERVISED:
        pairs, errors = read_pairs(args.corpus)
        if errors:
            raise CorpusError(f"{args.corpus}: {len(errors)} malformed lines (first: line {errors[0][0]}, {errors[0][1]})")
        references, corpus = [r for r, _ in pairs] + [s for _, s in pairs], None
    else:
        pairs = None
        references = corpus = read_corpus(args.corpus)
    if not references:
        raise CorpusError("empty corpus")
    vocab, emb = _vocab_and_embeddings(args, references, model_cfg, values, train_cfg.seed)
    vocab.save(os.path.join(args.out_dir, "vocab.txt"))
    trainer = _train_model(corpus, pairs, train_cfg, model_cfg, noise_cfg, vocab, emb, args.out_dir)
    final = os.path.join(args.out_dir, "final.ckpt")
    trainer.save(final)
    print(f"trained {trainer.state.step} steps; wrote {final}")
    return 0


def cmd_compress(args) -> int:
    if not args.checkpoint:
        raise UsageError("compress: --checkpoint is required")
    ckpt = load_checkpoint(args.checkpoint)
    embedder = _embedder(ckpt)
    spec = _decode_spec(args)
    for sent in _stdin_sentences():
        if not sent:
            print()
            continue
        if args.sweep:
            for n, out in compress_sweep(sent, args.sweep, ckpt.model, ckpt.vocab, embedder):
                print(f"{n}\t{' '.join(out)}")
        else:
            print(" ".join(compress(sent, spec, ckpt.model, ckpt.vocab, embedder)))
    return 0


def cmd_sweep(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    embedder = _embedder(ckpt)
    for sent in _stdin_sentences():
        if not sent:
            continue
        lengths = args.lengths or list(range(7, len(sent) + 1, 2)) or [len(sent)]
        print(f"I:\t{' '.join(sent)}")
        for n, out in compress_sweep(sent, lengths, ckpt.model, ckpt.vocab, embedder):
            print(f"L={n}:\t{' '.join(out)}")
        print()
    return 0


def cmd_evaluate(args) -> int:
    pairs, skipped = read_pairs(args.data)
    for lineno, reason in skipped:
        print(f"{args.data}:{lineno}: skipped ({reason})", file=sys.stderr)
    if args.system == "f8w":
        system, name = baseline_f8w, "f8w"
    elif args.system == "all-text":
        system, name = all_text_system, "all-text"
    else:
        if not args.checkpoint:
            raise UsageError("evaluate --system model needs --checkpoint")
        ckpt = load_checkpoint(args.checkpoint)
        spec, embedder = _decode_spec(args), _embedder(ckpt)
        system = lambda ref: compress(ref, spec, ckpt.model, ckpt.vocab, embedder)  # noqa: E731
        name = os.path.basename(args.checkpoint)
    report = evaluate(system, pairs, name=name, jobs=args.jobs, skipped=skipped)
    text = report_csv([report])
    if args.out:
        atomic_write_text(args.out, text)
        print(report_table([report]))
    else:
        sys.stdout.write(text)
    return 0


def cmd_ablate(args) -> int:
    train_cfg, model_cfg, noise_cfg, values = _configs(args)
    corpus = read_corpus(args.corpus)
    pairs, _ = read_pairs(args.data)
    vocab, emb = _vocab_and_embeddings(args, corpus, model_cfg, values, train_cfg.seed)
    spec = DecodeSpec(ratio=args.ratio)

    def build(cell):
        mc = replace(model_cfg, use_attention=cell.use_attention, use_conditioning=cell.use_conditioning)
        nc = replace(noise_cfg, shuffle_mode=cell.shuffle_mode)
        trainer = _train_model(corpus, None, replace(train_cfg, mode=DENOISE), mc, nc, vocab, emb)
        model = trainer.model
        embedder = trainer.embedder
        return lambda ref: compress(ref, spec, model, vocab, embedder)

    rows = run_ablation(ABLATION_GRID, build, pairs)
    atomic_write_text(args.out, ablation_csv(rows))
    for row in rows:
        if row.report is None:
            print(f"{row.cell.label:<32} error: {row.error}")
        else:
            a = row.report.corpus
            print(f"{row.cell.label:<32} {100 * a.r1:7.2f} {100 * a.r2:7.2f} {100 * a.rl:7.2f} {a.avg_len:6.1f}")
    return 0


def cmd_noise_preview(args) -> int:
    corpus = read_corpus(args.corpus)
    if not corpus:
        raise CorpusError("empty corpus")
    vocab = Vocabulary.load(args.vocab) if args.vocab else build_vocabulary(corpus, size=args.vocab_size)
    cfg = NoiseConfig(shuffle_mode=args.shuffle_mode)
    sampler = CorpusSampler(corpus)
    seed = _seed(args)
    n = min(args.count, len(corpus))

    def one(i):
        return make_training_example(corpus[i], sampler, vocab, cfg, example_rng(seed, 0, i), exclude=i)

    with ThreadPoolExecutor(max(1, args.jobs)) as pool:
        examples = list(pool.map(one, range(n)))
    for ex in examples:
        noised = " ".join(decode_with_oov(ex.input_ids, vocab, ex.oov_table))
        target = " ".join(decode_with_oov(ex.target_ids[:-1], vocab, ex.oov_table))
        print(f"{noised}\t{target}\t{ex.countdown_len}")
    return 0


def cmd_grad_check(args) -> int:
    seed = _seed(args)
    err = gradcheck.run(hidden=args.hidden, vocab_size=args.vocab_size, seed=seed,
                        use_attention=not args.no_attention, use_conditioning=args.conditioning,
                        eps=args.eps, samples=args.samples or None)
    print(f"max relative error: {err:.3e}")
    if err < GRADCHECK_TOLERANCE:
        return 0
    print(f"gradient check failed: {err:.3e} >= {GRADCHECK_TOLERANCE:g}", file=sys.stderr)
    return 2


COMMANDS = {
    "build-vocab": cmd_build_vocab,
    "train": cmd_train,
    "compress": cmd_compress,
    "sweep": cmd_sweep,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "noise-preview": cmd_noise_preview,
    "grad-check": cmd_grad_check,
}


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if not exc.code else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.deterministic:
        torch.use_deterministic_algorithms(True)
        torch.set_num_threads(1)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (CorpusError, CheckpointError, OSError, ValueError) as exc:
        print(f"compresso {args.command}: error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
