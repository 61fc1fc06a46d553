"""Command-line pipeline: build, train, pack, and evaluate models.

All machine-readable output is line-oriented UTF-8 with tab-separated
fields and is deterministic given the flags and the seed; the seed falls
back to the NFCLM_SEED environment variable, then to 0.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

from . import bundle as bundle_mod
from . import cfg as cfg_mod
from .classfst import ProbClassFst, build_from_entities, load_entities
from .dynfst import DynFstSession
from .engine import (DEFAULT_BEAM_DELTA, DEFAULT_BEAM_SIZE, DeadHistoryError,
                     NfclmModel, advance, exact_next_dist, next_dist, sample,
                     sequence_logprob)
from .evaluate import (FusionWeights, parse_nbest_file, perplexity,
                       rescore_nbest)
from .seqmodel import BackoffNGram, DeciderModel, train_decider, train_ngram
from .serialization import SerializationError
from .vocab import load_class_alphabet, load_vocabulary


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("NFCLM_SEED")
    return int(env) if env else 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None,
                        help="random seed (default: $NFCLM_SEED or 0)")
    parser.add_argument("--beam-n", type=int, default=None, help="beam size override")
    parser.add_argument("--beam-delta", type=float, default=None,
                        help="beam log-prob band override")
    parser.add_argument("--alpha", type=float, default=None,
                        help="decider prior-renormalization exponent override")
    parser.add_argument("--exact", action="store_true",
                        help="use exhaustive alignment enumeration instead of the beam")


def _load_bundle(args):
    return bundle_mod.load(
        args.bundle,
        beam_size=args.beam_n,
        beam_delta=args.beam_delta,
        alpha=args.alpha,
    )


def _read_sentences(path):
    return cfg_mod.read_corpus(path if path != "-" else sys.stdin.read().splitlines())


def cmd_build_fst(args) -> int:
    fst = build_from_entities(args.class_label, load_entities(args.entities))
    with open(args.out, "wb") as fh:
        fh.write(fst.serialize())
    if args.text_dump:
        with open(args.text_dump, "w", encoding="utf-8") as fh:
            fh.write(fst.text_dump())
    print(f"{args.class_label}\tstates\t{fst.num_states}\tentities\t{fst.entity_count}")
    return 0


def cmd_train_bglm(args) -> int:
    vocabulary = load_vocabulary(args.vocab)
    corpus = _read_sentences(args.corpus)
    model = train_ngram(corpus, vocabulary, order=args.order, discount=args.discount)
    with open(args.out, "wb") as fh:
        fh.write(model.serialize())
    print(f"bglm\torder\t{model.order}\tsentences\t{len(corpus)}")
    return 0


def cmd_train_decider(args) -> int:
    vocabulary = load_vocabulary(args.vocab)
    classes = load_class_alphabet(args.classes)
    corpus = _read_sentences(args.corpus)
    alpha = args.alpha if args.alpha is not None else 1.0
    model = train_decider(corpus, vocabulary, classes, order=args.order,
                          discount=args.discount, alpha=alpha)
    with open(args.out, "wb") as fh:
        fh.write(model.serialize())
    prior = "\t".join(f"{c}\t{_fmt(model.prior[c])}" for c in model.classes)
    print(f"decider\torder\t{model.ngram.order}\tprior\t{prior}")
    return 0


def cmd_expand_cfg(args) -> int:
    vocabulary = load_vocabulary(args.vocab)
    classes = load_class_alphabet(args.classes)
    grammar = cfg_mod.parse_grammar(args.patterns, args.entity_dir, vocabulary, classes)
    seed = _resolve_seed(args)
    expandfn = cfg_mod.expand_tagged if args.tagged else cfg_mod.expand
    sentences = expandfn(grammar, args.n, seed)
    _write_sentences(sentences, args.out)
    return 0


def _write_sentences(sentences, out) -> None:
    if out and out != "-":
        cfg_mod.write_corpus(sentences, out)
    else:
        for sentence in sentences:
            print(" ".join(sentence))


def cmd_mix(args) -> int:
    background = _read_sentences(args.background)
    tagged = _read_sentences(args.cfg)
    mixed = cfg_mod.mix_corpora(background, tagged, args.fraction,
                                _resolve_seed(args), size=args.size)
    _write_sentences(mixed, args.out)
    return 0


def cmd_pack(args) -> int:
    vocabulary = load_vocabulary(args.vocab)
    classes = load_class_alphabet(args.classes)
    with open(args.bglm, "rb") as fh:
        background = BackoffNGram.deserialize(fh.read())
    with open(args.decider, "rb") as fh:
        decider = DeciderModel.deserialize(fh.read())
    class_fsts = {}
    for spec in args.fst or []:
        label, _, path = spec.partition("=")
        if not path:
            raise ValueError(f"--fst expects label=path, got {spec!r}")
        with open(path, "rb") as fh:
            class_fsts[label] = ProbClassFst.deserialize(fh.read())
    if args.alpha is not None:
        decider.alpha = args.alpha
    model = NfclmModel(
        vocabulary=vocabulary,
        classes=classes,
        background=background,
        class_fsts=class_fsts,
        decider=decider,
        beam_size=args.beam_n if args.beam_n is not None else DEFAULT_BEAM_SIZE,
        beam_delta=args.beam_delta if args.beam_delta is not None else DEFAULT_BEAM_DELTA,
    )
    report = bundle_mod.pack(model, args.out_dir)
    for name in sorted(report):
        print(f"{name}\t{report[name]}")
    return 0


def cmd_score(args) -> int:
    model = _load_bundle(args)
    mode = "exact" if args.exact else "beam"
    for sentence in _read_sentences(args.corpus):
        lp = sequence_logprob(model, sentence, mode=mode)
        print(f"{_fmt(lp)}\t{' '.join(sentence)}")
    return 0


def cmd_ppl(args) -> int:
    model = _load_bundle(args)
    scorer = model.background if args.background_only else model
    report = perplexity(scorer, _read_sentences(args.corpus),
                        mode="exact" if args.exact else "beam",
                        skip_dead=args.skip_dead)
    print(f"perplexity\t{_fmt(report.perplexity)}")
    print(f"logprob\t{_fmt(report.total_logprob)}")
    print(f"symbols\t{report.symbol_count}")
    print(f"sentences\t{report.sentence_count}")
    print(f"dead\t{len(report.dead_sentences)}")
    for line in report.dead_sentences:
        print(f"dead-line\t{line}")
    return 0


def cmd_next(args) -> int:
    model = _load_bundle(args)
    history = tuple(args.history.split())
    if args.exact:
        dist = exact_next_dist(model, history)
    else:
        dist = next_dist(model, advance(model, history))
    for sym in sorted(dist, key=lambda s: (-dist[s], s)):
        print(f"{sym}\t{_fmt(dist[sym])}")
    return 0


def cmd_rescore(args) -> int:
    model = _load_bundle(args)
    entries = parse_nbest_file(args.nbest, references=args.references)
    weights = FusionWeights(lm_weight=args.lm_weight, ilm_weight=args.ilm_weight)
    mode = "exact" if args.exact else "beam"
    for rank, r in enumerate(rescore_nbest(model, entries, weights, mode=mode), start=1):
        flag = "FAILED" if r.failed else "ok"
        print(f"{rank}\t{r.entry.utterance_id}\t{_fmt(r.fused_score)}"
              f"\t{_fmt(r.entry.asr_score)}\t{_fmt(r.lm_logprob)}"
              f"\t{_fmt(r.entry.ilm_score)}\t{flag}\t{' '.join(r.entry.tokens)}")
    return 0


def cmd_sample(args) -> int:
    model = _load_bundle(args)
    seed = _resolve_seed(args)
    for i in range(args.n):
        print(" ".join(sample(model, args.max_len, seed + i)))
    return 0


def cmd_dump_dynfst(args) -> int:
    model = _load_bundle(args)
    if args.exact:
        model.beam_size = 10 ** 6
        model.beam_delta = math.inf
    session = DynFstSession(model)
    state = session.start_state()
    for symbol in args.sentence.split():
        arc = session.transition(state, symbol)
        if arc is None:
            print(f"dead\t{symbol}", file=sys.stderr)
            return 1
        state = arc[0]
    sys.stdout.write(session.dump())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nfclm",
        description="Factored class language model toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-fst", help="build a class FST from an entity list")
    p.add_argument("--class-label", required=True)
    p.add_argument("--entities", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--text-dump", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_build_fst)

    p = sub.add_parser("train-bglm", help="train the background n-gram")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--discount", type=float, default=0.75)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_train_bglm)

    p = sub.add_parser("train-decider", help="train the class decider")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--classes", required=True)
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--discount", type=float, default=0.75)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_train_decider)

    p = sub.add_parser("expand-cfg", help="expand grammar patterns into sentences")
    p.add_argument("--patterns", required=True)
    p.add_argument("--entity-dir", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--classes", required=True)
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--tagged", action="store_true",
                   help="keep class tokens instead of expanding entities")
    p.add_argument("--out", default="-")
    _add_common(p)
    p.set_defaults(func=cmd_expand_cfg)

    p = sub.add_parser("mix", help="mix background and tagged corpora")
    p.add_argument("--background", required=True)
    p.add_argument("--cfg", required=True)
    p.add_argument("--fraction", type=float, required=True)
    p.add_argument("--size", type=int, default=None)
    p.add_argument("--out", default="-")
    _add_common(p)
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("pack", help="assemble a model bundle directory")
    p.add_argument("--vocab", required=True)
    p.add_argument("--classes", required=True)
    p.add_argument("--bglm", required=True)
    p.add_argument("--decider", required=True)
    p.add_argument("--fst", action="append", metavar="LABEL=PATH")
    p.add_argument("--out-dir", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("score", help="log-probability per sentence")
    p.add_argument("--bundle", required=True)
    p.add_argument("--corpus", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("ppl", help="corpus perplexity")
    p.add_argument("--bundle", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--background-only", action="store_true")
    p.add_argument("--skip-dead", action="store_true",
                   help="exclude zero-probability sentences instead of failing")
    _add_common(p)
    p.set_defaults(func=cmd_ppl)

    p = sub.add_parser("next", help="next-symbol distribution after a history")
    p.add_argument("--bundle", required=True)
    p.add_argument("--history", default="")
    _add_common(p)
    p.set_defaults(func=cmd_next)

    p = sub.add_parser("rescore", help="shallow-fusion n-best rescoring")
    p.add_argument("--bundle", required=True)
    p.add_argument("--nbest", required=True)
    p.add_argument("--references", default=None)
    p.add_argument("--lm-weight", type=float, default=0.0)
    p.add_argument("--ilm-weight", type=float, default=0.0)
    _add_common(p)
    p.set_defaults(func=cmd_rescore)

    p = sub.add_parser("sample", help="draw sentences from the model")
    p.add_argument("--bundle", required=True)
    p.add_argument("-n", type=int, default=1)
    p.add_argument("--max-len", type=int, default=30)
    _add_common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("dump-dynfst", help="expand a sentence and dump the sub-graph")
    p.add_argument("--bundle", required=True)
    p.add_argument("--sentence", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_dump_dynfst)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, DeadHistoryError,
            SerializationError, bundle_mod.BundleError) as exc:
        print(f"nfclm: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
