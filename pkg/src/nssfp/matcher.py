"""Open-world matching of candidate texts against collected traces.

A candidate's NSS matches a trace window when their Euclidean distance is
under tau_N = U(N) - d(N). By the triangle inequality, a trace measured
(within error d) while a non-similar text was typed sits at least tau away
from the candidate's fingerprint, so a match is never a false positive as
long as both fitted bounds hold.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .fingerprint import (DEFAULT_SIMILARITY_WINDOW, DEFAULT_VARIABILITY_THRESHOLD,
                          Nss, similar, variability)
from .model import Sequence
from .sidechannel import (ChannelConfig, Trace, estimate_global_slope, filter_noisy,
                          rescore_noise, segment_and_reconstruct, simulate_trace)
from .stats import ErrorModel, UniquenessModel

MATCHED = "matched"
NO_MATCH = "no_match"
NOT_VARIABLE = "not_variable"


@dataclass(frozen=True)
class MatchResult:
    verdict: str
    trace_id: str | None = None
    offset: int | None = None
    distance: float | None = None
    threshold_used: float = 0.0


@dataclass
class EvaluationReport:
    total: int
    variable_count: int
    filtered_noisy: int
    true_matches: int
    false_positives: int
    recall: float
    details: list[dict] = field(default_factory=list)


def gen_candidate_subtraces(traces: list[Trace], length: int):
    """All contiguous length-N windows, in trace order then offset order.

    Traces shorter than the requested length are dropped entirely.
    """
    if length < 1:
        raise UsageError("window length must be >= 1")
    for trace in traces:
        if trace.step_count < length:
            continue
        for offset in range(trace.step_count - length + 1):
            yield trace.seq_id, offset, trace.estimated_sizes[offset:offset + length]


def _window_distance(sizes: np.ndarray, window: np.ndarray) -> float:
    d = sizes - window
    return float(np.sqrt(np.sum(d * d)))


def match(x_nss: Nss, traces: list[Trace],
          models: tuple[UniquenessModel, ErrorModel],
          variability_threshold: float = DEFAULT_VARIABILITY_THRESHOLD) -> MatchResult:
    """First candidate window within tau of the candidate's NSS.

    Non-variable candidates short-circuit before any distance is computed.
    A non-positive tau (non-matchable configuration) can never match.
    """
    uniq, err = models
    if uniq.length != x_nss.length or err.length != x_nss.length:
        raise UsageError(
            f"models fitted for N={uniq.length}/{err.length}, NSS has N={x_nss.length}")
    tau = err.tau
    if not variability(x_nss, variability_threshold).is_variable:
        return MatchResult(verdict=NOT_VARIABLE, threshold_used=tau)
    if err.matchable:
        sizes = x_nss.sizes.astype(np.float64)
        for trace_id, offset, window in gen_candidate_subtraces(traces, x_nss.length):
            d = _window_distance(sizes, window)
            if d < tau:
                return MatchResult(verdict=MATCHED, trace_id=trace_id, offset=offset,
                                   distance=d, threshold_used=tau)
    return MatchResult(verdict=NO_MATCH, threshold_used=tau)


def match_all(x_nss: Nss, traces: list[Trace],
              models: tuple[UniquenessModel, ErrorModel],
              variability_threshold: float = DEFAULT_VARIABILITY_THRESHOLD) -> list[MatchResult]:
    """Diagnostic exhaustive mode: every sub-threshold window, not just the first.

    Under the fitted bounds at most one text can match, so a multi-element
    result is direct evidence that an assumption was violated.
    """
    uniq, err = models
    if uniq.length != x_nss.length or err.length != x_nss.length:
        raise UsageError(
            f"models fitted for N={uniq.length}/{err.length}, NSS has N={x_nss.length}")
    tau = err.tau
    if not variability(x_nss, variability_threshold).is_variable:
        return [MatchResult(verdict=NOT_VARIABLE, threshold_used=tau)]
    hits = []
    if err.matchable:
        sizes = x_nss.sizes.astype(np.float64)
        for trace_id, offset, window in gen_candidate_subtraces(traces, x_nss.length):
            d = _window_distance(sizes, window)
            if d < tau:
                hits.append(MatchResult(verdict=MATCHED, trace_id=trace_id, offset=offset,
                                        distance=d, threshold_used=tau))
    return hits or [MatchResult(verdict=NO_MATCH, threshold_used=tau)]


def evaluate(corpus_nss: list[Nss], sequences: list[Sequence], vocab_size: int,
             cfg: ChannelConfig, models: tuple[UniquenessModel, ErrorModel],
             rng_seed: int | None = None,
             drop_fraction: float = 0.06,
             variability_threshold: float = DEFAULT_VARIABILITY_THRESHOLD,
             similarity_window: int = DEFAULT_SIMILARITY_WINDOW) -> EvaluationReport:
    """End-to-end attack evaluation over a corpus.

    One trace is simulated per sequence and the noisiest fraction dropped;
    every variable NSS is then matched against the surviving pool. The own
    trace's offset-0 window is ground truth; a match into a non-similar
    sequence's trace is a false positive, and matches between similar
    sequences count as neither. Recall is over variable sequences whose
    own trace survived filtering.
    """
    if len(corpus_nss) < 2:
        raise UsageError("evaluation needs at least 2 sequences")
    if len(corpus_nss) != len(sequences):
        raise UsageError("one sequence per NSS required")
    n = models[0].length
    corpus_nss = [x.truncated(n) for x in corpus_nss]
    sequences = [s.truncated(n) for s in sequences]
    if any(x.length != n for x in corpus_nss):
        raise UsageError(f"all NSS must reach length {n} before evaluation")
    if rng_seed is not None:
        cfg = cfg.with_seed(rng_seed)

    traces = [segment_and_reconstruct(simulate_trace(x, vocab_size, cfg), cfg, vocab_size)
              for x in corpus_nss]
    slope = estimate_global_slope(traces)
    traces = rescore_noise(traces, slope)
    kept, dropped = filter_noisy(traces, drop_fraction)
    kept_ids = {t.seq_id for t in kept}

    by_id = {s.id: i for i, s in enumerate(sequences)}
    report = EvaluationReport(total=len(corpus_nss), variable_count=0,
                              filtered_noisy=len(dropped), true_matches=0,
                              false_positives=0, recall=0.0)
    for idx, x in enumerate(corpus_nss):
        var = variability(x, variability_threshold)
        own = traces[idx]
        error = _window_distance(x.sizes.astype(np.float64), own.estimated_sizes)
        result = match(x, kept, models, variability_threshold)
        own_kept = x.seq_id in kept_ids
        false_positive = False
        if result.verdict == MATCHED and result.trace_id != x.seq_id:
            other = sequences[by_id[result.trace_id]]
            false_positive = not similar(sequences[idx], other, similarity_window)
        if var.is_variable and own_kept:
            report.variable_count += 1
            if result.verdict == MATCHED and result.trace_id == x.seq_id and result.offset == 0:
                report.true_matches += 1
        if false_positive:
            report.false_positives += 1
        matched = result.trace_id if result.verdict == MATCHED else result.verdict
        report.details.append({
            "seq_id": x.seq_id,
            "variability": var.variability,
            "is_variable": var.is_variable,
            "measurement_error": error,
            "matched": matched,
            "own_trace_kept": own_kept,
            "false_positive": false_positive,
        })
    report.recall = (report.true_matches / report.variable_count
                     if report.variable_count else float("nan"))
    return report


def write_evaluation_report(path, report: EvaluationReport, header_lines=()):
    """Per-sequence evaluation records plus summary header comments."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("#evaluation v1\n")
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(f"# total={report.total} variable={report.variable_count} "
                 f"filtered_noisy={report.filtered_noisy} "
                 f"true_matches={report.true_matches} "
                 f"false_positives={report.false_positives} recall={report.recall!r}\n")
        fh.write("seq_id,variability,is_variable,measurement_error,matched\n")
        for row in report.details:
            fh.write(f"{row['seq_id']},{row['variability']!r},{row['is_variable']},"
                     f"{row['measurement_error']!r},{row['matched']}\n")
