"""Command-line pipeline driver.

One subcommand per pipeline stage; every command reads and writes only the
documented interchange formats, logs its fully resolved configuration to
stderr, and embeds that configuration in output headers so any two runs
with the same inputs and seed are byte-identical.
"""

import argparse
import dataclasses
import sys

import numpy as np

from . import corpus as corpus_mod
from . import fingerprint as fp
from . import interchange, matcher, sampler, sidechannel, stats
from .config import PipelineConfig, env_overrides, read_config_file, resolve_config
from .errors import NssfpError, UsageError
from .model import load_model, save_model, train_model


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value config file (lowest precedence)")
    p.add_argument("--q", type=float, dest="q")
    p.add_argument("--threshold", type=float, dest="variability_threshold",
                   help="variability threshold for fingerprint eligibility")
    p.add_argument("--window", type=int, dest="similarity_window")
    p.add_argument("--epsilon", type=float, dest="epsilon")
    p.add_argument("--length", type=int, dest="sequence_length")
    p.add_argument("--drop-fraction", type=float, dest="drop_fraction")
    p.add_argument("--cap", type=int, dest="word_cap")
    p.add_argument("--order", type=int, dest="order")
    p.add_argument("--weights", dest="weights",
                   help="comma-separated interpolation weights, unigram first")
    p.add_argument("--seed", type=int, dest="seed")
    p.add_argument("--capture-fraction", type=float, dest="channel.capture_fraction")
    p.add_argument("--cycles-per-iteration", type=float, dest="channel.cycles_per_iteration")
    p.add_argument("--jitter-std", type=float, dest="channel.hit_jitter_std")
    p.add_argument("--outlier-rate", type=float, dest="channel.outlier_rate")
    p.add_argument("--outlier-scale", type=float, dest="channel.outlier_scale")
    p.add_argument("--segment-gap", type=int, dest="channel.segment_gap_cycles")


def _resolve(args) -> PipelineConfig:
    file_values = read_config_file(args.config) if getattr(args, "config", None) else {}
    flags = {}
    for key, value in vars(args).items():
        if key in ("config", "command", "func") or value is None:
            continue
        if key == "weights" and isinstance(value, str):
            value = tuple(float(w) for w in value.split(","))
        if key.startswith("channel.") or key in PipelineConfig.__dataclass_fields__:
            flags[key] = value
    cfg = resolve_config(file_values, env_overrides(), flags)
    # in CLI runs the pipeline seed drives the channel generator
    cfg = dataclasses.replace(cfg, channel=cfg.channel.with_seed(cfg.seed))
    for line in cfg.resolved_lines():
        print(f"# config {line}", file=sys.stderr)
    return cfg


def _load_inputs(args, cfg):
    """Corpus -> (vocab, author sequences) honoring cap/min-word settings."""
    corpus = corpus_mod.load_corpus(args.corpus, format=args.format)
    min_words = args.min_words if args.min_words else 1
    return corpus_mod.aggregate_by_author(corpus, word_cap=cfg.word_cap,
                                          min_words=min_words)


def cmd_synth(args) -> int:
    cfg = _resolve(args)
    corpus = corpus_mod.synthesize_corpus(
        authors=args.authors, seed=cfg.seed, vocab_size=args.vocab_size,
        target_words=args.target_words, lexicon_size=args.lexicon_size,
        chain_fanout=args.chain_fanout,
        post_words_range=((args.mean_post_words, args.mean_post_words)
                          if args.mean_post_words else (3.0, 8.0)))
    corpus_mod.save_corpus(args.out, corpus)
    print(f"wrote {len(corpus.posts)} posts for {args.authors} authors to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve(args)
    vocab, authors = _load_inputs(args, cfg)
    model = train_model([a.sequence for a in authors], order=cfg.order,
                        weights=cfg.weights, vocabulary=vocab)
    save_model(args.out, model)
    if args.save_seqs:
        interchange.write_sequences(args.save_seqs, [a.sequence for a in authors],
                                    vocab_size=len(vocab))
    print(f"trained order-{cfg.order} model over {len(authors)} sequences, "
          f"vocab {len(vocab)}, id {model.model_id}; wrote {args.out}")
    return 0


def cmd_nss(args) -> int:
    cfg = _resolve(args)
    model = load_model(args.model)
    if args.seqs:
        sequences, _ = interchange.read_sequences(args.seqs)
    else:
        if not args.corpus:
            raise UsageError("nss needs --corpus or --seqs")
        _, authors = _load_inputs(args, cfg)
        sequences = [a.sequence for a in authors]
    n = cfg.sequence_length
    sequences = [s.truncated(n) for s in sequences if len(s) >= n] \
        if args.truncate else sequences
    if not sequences:
        raise UsageError(f"no sequence reaches length {n}")
    cache: dict = {}
    series = [fp.generate_nss(model, s, cfg.q, size_cache=cache) for s in sequences]
    interchange.write_nss(args.out, series, header_lines=cfg.resolved_lines())
    print(f"wrote {len(series)} series of lengths "
          f"{sorted({x.length for x in series})} to {args.out}")
    return 0


def cmd_analyze(args) -> int:
    cfg = _resolve(args)
    series, _ = interchange.read_nss(args.nss)
    sequences, _ = interchange.read_sequences(args.seqs)
    by_id = {s.id: s for s in sequences}
    missing = [x.seq_id for x in series if x.seq_id not in by_id]
    if missing:
        raise UsageError(f"sequences missing for {missing[:3]}...")
    n = series[0].length
    seqs = [by_id[x.seq_id].truncated(n) for x in series]
    records, variable_ids = fp.collect_pairwise_distances(
        series, seqs, threshold=cfg.variability_threshold,
        window=cfg.similarity_window)
    interchange.write_distances(args.out, records, length=n,
                                header_lines=cfg.resolved_lines())
    print(f"{len(variable_ids)}/{len(series)} variable sequences, "
          f"{len(records)} pair distances written to {args.out}")
    return 0


def _prepare_pool(traces, drop_fraction):
    slope = sidechannel.estimate_global_slope(traces)
    rescored = sidechannel.rescore_noise(traces, slope)
    kept, dropped = sidechannel.filter_noisy(rescored, drop_fraction)
    return kept, dropped, slope


def cmd_fit(args) -> int:
    cfg = _resolve(args)
    records, n = interchange.read_distances(args.distances)
    sample = stats.PairwiseDistanceSample(
        length=n, distances=np.array([d for _, _, d in records]))
    uniq = stats.uniqueness_radius(sample, eps=cfg.epsilon)
    err = None
    if args.traces:
        if not args.nss:
            raise UsageError("--traces requires --nss for ground truth")
        series, _ = interchange.read_nss(args.nss)
        traces, _ = sidechannel.read_traces(args.traces)
        kept, _, _ = _prepare_pool(traces, cfg.drop_fraction)
        truth = {x.seq_id: x for x in series}
        errors = []
        for t in kept:
            x = truth.get(t.seq_id)
            if x is None or x.length < n or t.step_count < n:
                continue
            d = x.truncated(n).sizes.astype(np.float64) - t.estimated_sizes[:n]
            errors.append(float(np.sqrt(np.sum(d * d))))
        err = stats.error_bound(np.array(errors), uniq)
    header = list(cfg.resolved_lines()) + [f"epsilon={cfg.epsilon!r}"]
    stats.write_fit_report(args.out, [(uniq, err)], header_lines=header)
    tau = err.tau if err else float("nan")
    print(f"N={n} U={uniq.radius!r} d={err.bound if err else float('nan')!r} tau={tau!r}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _resolve(args)
    series, _ = interchange.read_nss(args.nss)
    traces = []
    for x in series:
        raw = sidechannel.simulate_trace(x, args.vocab_size, cfg.channel)
        traces.append(sidechannel.segment_and_reconstruct(raw, cfg.channel, args.vocab_size))
    sidechannel.write_traces(args.out, traces, cfg.channel,
                             header_lines=cfg.resolved_lines())
    print(f"simulated {len(traces)} traces at capture="
          f"{cfg.channel.capture_fraction} to {args.out}")
    return 0


def _models_from_fit(path, n):
    rows = [r for r in stats.read_fit_report(path) if r["N"] == n]
    if not rows:
        raise UsageError(f"fit report {path} has no row for N={n}")
    row = rows[0]
    eps = 0.0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("# epsilon="):
                eps = float(line.split("=", 1)[1])
    uniq = stats.UniquenessModel(length=n, log_mu=row["log_mu"],
                                 log_sigma=row["log_sigma"],
                                 epsilon=eps or 1e-18, radius=row["U"])
    err = stats.ErrorModel(length=n, mean=float("nan"), std=float("nan"),
                           bound=row["d"], tau=row["tau"],
                           matchable=row["tau"] > 0)
    return uniq, err


def cmd_match(args) -> int:
    cfg = _resolve(args)
    series, _ = interchange.read_nss(args.nss)
    traces, _ = sidechannel.read_traces(args.traces)
    kept, _, _ = _prepare_pool(traces, cfg.drop_fraction)
    n = series[0].length
    models = _models_from_fit(args.fit, n)
    targets = [x for x in series if not args.target or x.seq_id == args.target]
    if not targets:
        raise UsageError(f"no series named {args.target!r} in {args.nss}")
    lines = []
    for x in targets:
        r = matcher.match(x, kept, models, cfg.variability_threshold)
        lines.append(f"{x.seq_id}\t{r.verdict}\t{r.trace_id or '-'}\t"
                     f"{r.distance!r}\t{r.threshold_used!r}")
    out = "\n".join(lines)
    print(out)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(out + "\n")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _resolve(args)
    vocab, authors = _load_inputs(args, cfg)
    n = cfg.sequence_length
    sequences = [a.sequence.truncated(n) for a in authors if len(a.sequence) >= n]
    if len(sequences) < 2:
        raise UsageError(f"need >= 2 sequences of length {n}, got {len(sequences)}")
    model = train_model([a.sequence for a in authors], order=cfg.order,
                        weights=cfg.weights, vocabulary=vocab)
    cache: dict = {}
    series = [fp.generate_nss(model, s, cfg.q, size_cache=cache) for s in sequences]
    records, _ = fp.collect_pairwise_distances(
        series, sequences, threshold=cfg.variability_threshold,
        window=cfg.similarity_window)
    sample = stats.PairwiseDistanceSample(
        length=n, distances=np.array([d for _, _, d in records]))
    uniq = stats.uniqueness_radius(sample, eps=cfg.epsilon)

    channel = cfg.channel.with_seed(cfg.seed)
    traces = [sidechannel.segment_and_reconstruct(
        sidechannel.simulate_trace(x, len(vocab), channel), channel, len(vocab))
        for x in series]
    kept, _, _ = _prepare_pool(traces, cfg.drop_fraction)
    truth = {x.seq_id: x for x in series}
    errors = [matcher._window_distance(truth[t.seq_id].sizes.astype(np.float64),
                                       t.estimated_sizes) for t in kept]
    err = stats.error_bound(np.array(errors), uniq)

    report = matcher.evaluate(series, sequences, len(vocab), channel, (uniq, err),
                              rng_seed=cfg.seed, drop_fraction=cfg.drop_fraction,
                              variability_threshold=cfg.variability_threshold,
                              similarity_window=cfg.similarity_window)
    header = list(cfg.resolved_lines()) + [
        f"U={uniq.radius!r}", f"d={err.bound!r}", f"tau={err.tau!r}"]
    matcher.write_evaluation_report(args.out, report, header_lines=header)
    print(f"recall={report.recall!r} false_positives={report.false_positives} "
          f"variable={report.variable_count}/{report.total} "
          f"dropped={report.filtered_noisy}")
    return 0


def cmd_bench(args) -> int:
    cfg = _resolve(args)
    variants = ([sampler.VULNERABLE, sampler.MITIGATED] if args.variant == "both"
                else [args.variant])
    samples = []
    for variant in variants:
        samples.extend(sampler.bench_filter(variant, args.vocab_size, args.trials,
                                            cfg.seed, p=cfg.q))
    summary = sampler.summarize_bench(samples)
    sampler.write_bench_report(args.out, samples, header_lines=cfg.resolved_lines())
    for variant in variants:
        info = summary[variant]
        print(f"{variant}: median_loop_ns={info['median_loop_time_ns']:.0f} "
              f"size_time_corr={info['size_time_correlation']:.4f}")
    if "slowdown" in summary:
        print(f"slowdown={summary['slowdown']:.3f}x")
    return 0


def cmd_report(args) -> int:
    if args.evaluation:
        with open(args.evaluation, encoding="utf-8") as fh:
            for line in fh:
                if line.startswith("# total="):
                    print(line[2:].rstrip())
                elif not line.startswith("#"):
                    print(line.rstrip())
        return 0
    if args.fit:
        for row in stats.read_fit_report(args.fit):
            print(f"N={row['N']} U={row['U']!r} d={row['d']!r} tau={row['tau']!r}")
        return 0
    if args.distances:
        if not args.out:
            raise UsageError("histogram output needs --out")
        records, n = interchange.read_distances(args.distances)
        hist = stats.smoothed_histogram([d for _, _, d in records],
                                        buckets=args.buckets, window=args.hist_window)
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(f"# smoothed histogram of {len(records)} distances, N={n}\n")
            fh.write("bucket_center,smoothed_density\n")
            for center, density in hist:
                fh.write(f"{center!r},{density!r}\n")
        print(f"wrote {args.buckets}-bucket histogram to {args.out}")
        return 0
    if args.bench:
        rows = []
        with open(args.bench, encoding="utf-8") as fh:
            for line in fh:
                if line.startswith("#") or line.startswith("variant,"):
                    continue
                variant, vocab, size, ns = line.rstrip().split(",")
                rows.append(sampler.TimingSample(variant, int(size), int(ns), int(vocab)))
        summary = sampler.summarize_bench(rows)
        for key, value in sorted(summary.items()):
            print(f"{key}: {value}")
        return 0
    raise UsageError("report needs one of --evaluation/--fit/--distances/--bench")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nssfp",
        description="Nucleus-size-series fingerprinting pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=fn)
        _add_config_flags(p)
        return p

    p = command("synth", cmd_synth, "generate a seeded synthetic post corpus")
    p.add_argument("--authors", type=int, required=True)
    p.add_argument("--vocab-size", type=int, default=12000)
    p.add_argument("--target-words", type=int, default=1200)
    p.add_argument("--lexicon-size", type=int, default=60)
    p.add_argument("--chain-fanout", type=int, default=3)
    p.add_argument("--mean-post-words", type=float, default=None, help="override both ends of the post-length range")
    p.add_argument("--out", required=True)

    p = command("train", cmd_train, "train the n-gram model on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--format", default=corpus_mod.TSV_POSTS,
                   choices=[corpus_mod.TSV_POSTS, corpus_mod.PLAIN_DIR])
    p.add_argument("--min-words", type=int, default=0)
    p.add_argument("--save-seqs", help="also persist aggregated sequences (#seq v1)")
    p.add_argument("--out", required=True)

    p = command("nss", cmd_nss, "generate nucleus size series")
    p.add_argument("--corpus")
    p.add_argument("--format", default=corpus_mod.TSV_POSTS,
                   choices=[corpus_mod.TSV_POSTS, corpus_mod.PLAIN_DIR])
    p.add_argument("--seqs", help="read sequences from a #seq v1 file instead")
    p.add_argument("--model", required=True)
    p.add_argument("--min-words", type=int, default=0)
    p.add_argument("--truncate", action="store_true",
                   help="drop shorter sequences and cut the rest to --length")
    p.add_argument("--out", required=True)

    p = command("analyze", cmd_analyze, "pairwise fingerprint distances")
    p.add_argument("--nss", required=True)
    p.add_argument("--seqs", required=True)
    p.add_argument("--out", required=True)

    p = command("fit", cmd_fit, "fit U(N) and optionally d(N)/tau from traces")
    p.add_argument("--distances", required=True)
    p.add_argument("--nss")
    p.add_argument("--traces")
    p.add_argument("--out", required=True)

    p = command("simulate", cmd_simulate, "simulate side-channel traces for an NSS file")
    p.add_argument("--nss", required=True)
    p.add_argument("--vocab-size", type=int, required=True)
    p.add_argument("--out", required=True)

    p = command("match", cmd_match, "match candidate NSS against a trace pool")
    p.add_argument("--nss", required=True)
    p.add_argument("--traces", required=True)
    p.add_argument("--fit", required=True)
    p.add_argument("--target", help="match only this sequence id")
    p.add_argument("--out")

    p = command("evaluate", cmd_evaluate, "full end-to-end attack evaluation")
    p.add_argument("--corpus", required=True)
    p.add_argument("--format", default=corpus_mod.TSV_POSTS,
                   choices=[corpus_mod.TSV_POSTS, corpus_mod.PLAIN_DIR])
    p.add_argument("--min-words", type=int, default=0)
    p.add_argument("--out", required=True)

    p = command("bench", cmd_bench, "time the removal loop of the filter variants")
    p.add_argument("--variant", default="both",
                   choices=["both", sampler.VULNERABLE, sampler.MITIGATED])
    p.add_argument("--vocab-size", type=int, default=50257)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--out", required=True)

    p = command("report", cmd_report, "summarize pipeline artifacts")
    p.add_argument("--evaluation")
    p.add_argument("--fit")
    p.add_argument("--bench")
    p.add_argument("--distances")
    p.add_argument("--buckets", type=int, default=100)
    p.add_argument("--hist-window", type=int, default=11)
    p.add_argument("--out")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    except (NssfpError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
