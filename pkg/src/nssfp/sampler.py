"""Top-p (nucleus) filtering: the leaking variant, the constant-iteration
mitigation, sampling, and the timing micro-benchmark harness.

The vulnerable filter walks an index list of out-of-nucleus tokens and
assigns -inf one token at a time, so its trip count equals the number of
removed tokens -- an invertible function of the nucleus size. The
mitigated filter touches every vocabulary slot exactly once and encodes
the keep/remove decision in a branch-free arithmetic term, so neither its
trip count nor its memory-access pattern depends on the nucleus size.
"""

import os
import time
from dataclasses import dataclass

import numpy as np

from .errors import InternalError, UsageError, ValidationError
from .model import Distribution, softmax

VULNERABLE = "vulnerable"
MITIGATED = "mitigated"

#: IEEE-754 double max; doubling it overflows to +inf, which is the whole trick.
MAXFLOAT = float(np.finfo(np.float64).max)


def _check_p(p: float):
    if not 0.0 < p <= 1.0:
        raise UsageError(f"p must be in (0, 1], got {p}")


def _cumulative(sorted_probs: np.ndarray) -> np.ndarray:
    """Cumulative sums clamped at 1.

    Normalization drift can push cumulative values a hair above 1 once the
    remaining tail is tiny, which would spuriously remove tokens at p = 1
    and break monotonicity. The exact cumulative never exceeds 1, so the
    clamp only removes float error.
    """
    return np.minimum(np.cumsum(sorted_probs), 1.0)


def nucleus_size(dist: Distribution, p: float) -> int:
    """Number of top-ranked tokens whose cumulative probability is <= p.

    Exactly the complement of the vulnerable filter's removal count:
    ``nucleus_size == vocab - removed_count`` for every input.
    """
    _check_p(p)
    cum = _cumulative(dist.sorted_probs())
    return int(np.searchsorted(cum, p, side="right"))


def nucleus_size_from_probs(probs: np.ndarray, p: float) -> int:
    """Same count computed from a raw probability vector (no id bookkeeping)."""
    _check_p(p)
    cum = _cumulative(np.sort(probs)[::-1])
    return int(np.searchsorted(cum, p, side="right"))


@dataclass(frozen=True)
class FilterOutcome:
    """Instrumentation record for one filter invocation.

    ``kept_ids`` is the nucleus as an ascending id array (set semantics).
    ``removal_loop_iterations`` is the trip count of the removal loop:
    equal to ``removed_count`` for the vulnerable variant and to the
    vocabulary size for the mitigated one.
    """

    kept_ids: np.ndarray
    removed_count: int
    removal_loop_iterations: int
    nucleus_size: int


def _prepare(logits) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1 or logits.size == 0:
        raise ValidationError("logits must be a non-empty 1-d vector")
    if not np.all(np.isfinite(logits)):
        raise ValidationError("logits must be finite")
    probs = softmax(logits)
    order = np.argsort(-probs, kind="stable")
    return logits, probs, order

def top_p_filter_vulnerable(logits, p: float) -> tuple[np.ndarray, FilterOutcome]:
    """Reference top-p filter with the input-dependent removal loop.

    Builds the out-of-nucleus index list, then assigns -inf across it.
    The assignment pass is the leaking loop: it runs once per removed
    token, and that count is what the instrumented trip counter reports.
    """
    _check_p(p)
    logits, probs, order = _prepare(logits)
    cum = _cumulative(probs[order])
    not_in_p = order[cum > p]              # build pass over all ranks
    filtered = logits.copy()
    filtered[not_in_p] = -np.inf           # removal loop: len(not_in_p) trips
    removed = int(not_in_p.size)
    outcome = FilterOutcome(
        kept_ids=np.sort(order[cum <= p]),
        removed_count=removed,
        removal_loop_iterations=removed,
        nucleus_size=logits.size - removed,
    )
    return filtered, outcome


def top_p_filter_mitigated(logits, p: float) -> tuple[np.ndarray, FilterOutcome]:
    """Constant-trip-count top-p filter.

    Every rank is visited exactly once and receives the same arithmetic:
    subtract ``indicator(cum > p) * MAXFLOAT * 2``, which overflows to
    +inf for removed tokens and is 0 for kept ones. ``np.where`` is the
    branch-free selection form of that indicator product; no control flow
    or indexing depends on the comparison outcome.
    """
    _check_p(p)
    logits, probs, order = _prepare(logits)
    sorted_logits = logits[order]
    cum = _cumulative(probs[order])
    filtered = logits.copy()
    z = np.where(cum > p, np.inf, 0.0)     # == indicator * MAXFLOAT * 2 after overflow
    filtered[order] = sorted_logits - z    # vocab-size trips, unconditionally
    removed = int(np.count_nonzero(z))
    outcome = FilterOutcome(
        kept_ids=np.sort(order[z == 0.0]),
        removed_count=removed,
        removal_loop_iterations=int(logits.size),
        nucleus_size=logits.size - removed,
    )
    return filtered, outcome


FILTERS = {VULNERABLE: top_p_filter_vulnerable, MITIGATED: top_p_filter_mitigated}


def multinomial_sample(filtered_logits, rng) -> int:
    """Sample a token id proportionally to softmax over the finite logits."""
    rng = as_generator(rng)
    filtered = np.asarray(filtered_logits, dtype=np.float64)
    finite = np.flatnonzero(np.isfinite(filtered))
    if finite.size == 0:
        raise InternalError("all logits are -inf; nucleus clamp missing upstream")
    probs = softmax(filtered[finite])
    return int(finite[rng.choice(finite.size, p=probs)])


def sample_next(logits, p: float, rng, variant: str = VULNERABLE) -> tuple[int, FilterOutcome]:
    """Filter then sample, clamping an empty nucleus to the top-1 token.

    The recorded nucleus size still follows the literal filter (it may be
    0); only the sampling step receives the clamp.
    """
    filtered, outcome = FILTERS[variant](logits, p)
    if outcome.nucleus_size == 0:
        logits = np.asarray(logits, dtype=np.float64)
        top = int(np.argmax(logits))
        filtered = filtered.copy()
        filtered[top] = logits[top]
    return multinomial_sample(filtered, rng), outcome


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


# --- timing harness ---------------------------------------------------------

@dataclass(frozen=True)
class TimingSample:
    variant: str
    nucleus_size: int
    loop_time_ns: int
    vocab_size: int


def _peaked_logits(rng: np.random.Generator, vocab_size: int) -> np.ndarray:
    """Random peaked distributions in the realistic auto-completion regime.

    Zipf-like tails with a random exponent give nucleus sizes spanning a
    few tokens up to a sizable fraction of the vocabulary, the range over
    which the leak is observable.
    """
    alpha = rng.uniform(0.9, 2.0)
    ranks = np.arange(1, vocab_size + 1, dtype=np.float64)
    logits = -alpha * np.log(ranks) + rng.normal(0.0, 0.3, vocab_size)
    return logits


class _pinned_to_one_core:
    """Pin the process to a single core for the measurement, then restore."""

    def __enter__(self):
        self.saved = None
        try:
            self.saved = os.sched_getaffinity(0)
            os.sched_setaffinity(0, {min(self.saved)})
        except (AttributeError, OSError):
            pass  # unsupported platform; timings just get noisier

    def __exit__(self, *exc):
        if self.saved is not None:
            try:
                os.sched_setaffinity(0, self.saved)
            except OSError:
                pass
        return False


def bench_filter(variant: str, vocab_size: int, trials: int, rng_seed: int,
                 p: float = 0.9, repeats: int = 5) -> list[TimingSample]:
    """Time the removal loop of one filter variant over random inputs.

    Per trial the loop is timed ``repeats`` times on the highest-resolution
    monotonic clock after one discarded warm-up run, and the median is
    recorded. Sorting/cumsum preparation is excluded: only the removal
    loop differs between the variants and only it leaks.
    """
    if trials < 1:
        raise UsageError("trials must be >= 1")
    if variant not in FILTERS:
        raise UsageError(f"unknown variant {variant!r}")
    rng = np.random.default_rng(rng_seed)
    samples = []
    with _pinned_to_one_core():
        for _ in range(trials):
            logits = _peaked_logits(rng, vocab_size)
            probs = softmax(logits)
            order = np.argsort(-probs, kind="stable")
            sorted_logits = logits[order]
            cum = _cumulative(probs[order])
            mask = cum > p
            size = int(vocab_size - np.count_nonzero(mask))
            times = []
            for rep in range(repeats + 1):
                filtered = logits.copy()
                if variant == VULNERABLE:
                    not_in_p = order[mask]
                    t0 = time.perf_counter_ns()
                    filtered[not_in_p] = -np.inf
                    t1 = time.perf_counter_ns()
                else:
                    t0 = time.perf_counter_ns()
                    z = np.where(cum > p, np.inf, 0.0)
                    filtered[order] = sorted_logits - z
                    t1 = time.perf_counter_ns()
                if rep > 0:  # discard warm-up
                    times.append(t1 - t0)
            times.sort()
            loop_time = max(1, int(times[len(times) // 2]))
            samples.append(TimingSample(variant, size, loop_time, vocab_size))
    return samples


def pearson(xs, ys) -> float:
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    sx, sy = xs.std(), ys.std()
    if sx == 0.0 or sy == 0.0:
        return 0.0
    return float(((xs - xs.mean()) * (ys - ys.mean())).mean() / (sx * sy))


def summarize_bench(samples: list[TimingSample]) -> dict:
    """Per-variant size/time correlation plus the mitigation slowdown ratio."""
    out: dict = {}
    for variant in (VULNERABLE, MITIGATED):
        sub = [s for s in samples if s.variant == variant]
        if not sub:
            continue
        times = np.array([s.loop_time_ns for s in sub], dtype=np.float64)
        sizes = [s.nucleus_size for s in sub]
        out[variant] = {
            "trials": len(sub),
            "median_loop_time_ns": float(np.median(times)),
            "size_time_correlation": pearson(sizes, times),
        }
    if VULNERABLE in out and MITIGATED in out:
        out["slowdown"] = (out[MITIGATED]["median_loop_time_ns"]
                           / out[VULNERABLE]["median_loop_time_ns"])
    return out


def write_bench_report(path, samples: list[TimingSample], header_lines=()):
    """Line-delimited records for plotting size-vs-time scatters."""
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("variant,vocab_size,nucleus_size,loop_time_ns\n")
        for s in samples:
            fh.write(f"{s.variant},{s.vocab_size},{s.nucleus_size},{s.loop_time_ns}\n")
