"""Nucleus size series (NSS) generation and fingerprint arithmetic.

An NSS records, for every prefix of a word sequence, how many top-ranked
tokens a top-p filter would keep. Sufficiently variable series act as
fingerprints: any other non-overlapping text of the same length keeps a
large Euclidean distance from them.
"""

from dataclasses import dataclass

import numpy as np

from .errors import UsageError, ValidationError
from .model import NgramModel, Sequence
from .sampler import nucleus_size_from_probs

DEFAULT_VARIABILITY_THRESHOLD = 1450.0
DEFAULT_SIMILARITY_WINDOW = 50


@dataclass(frozen=True)
class Nss:
    """Nucleus size series of one sequence under one model and one q."""

    seq_id: str
    q: float
    model_id: str
    sizes: np.ndarray

    def __post_init__(self):
        sizes = np.asarray(self.sizes, dtype=np.int64)
        object.__setattr__(self, "sizes", sizes)
        if sizes.size == 0:
            raise ValidationError(f"NSS {self.seq_id!r} is empty")
        if np.any(sizes < 0):
            raise ValidationError("nucleus sizes must be non-negative")

    @property
    def length(self) -> int:
        return int(self.sizes.size)

    def truncated(self, length: int) -> "Nss":
        if length >= self.length:
            return self
        return Nss(self.seq_id, self.q, self.model_id, self.sizes[:length])


@dataclass(frozen=True)
class VariabilityReport:
    mean: float
    variability: float
    threshold: float
    is_variable: bool


def generate_nss(model: NgramModel, sequence: Sequence, q: float,
                 size_cache: dict | None = None) -> Nss:
    """Nucleus size for every prefix of the sequence.

    The conditioning context resets at each session boundary, which is what
    produces the characteristic size spikes at post starts. ``size_cache``
    (context tuple + q -> size) can be shared across calls to amortize
    repeated contexts over a whole corpus.
    """
    if sequence.words.max() >= model.vocab_size or sequence.words.min() < 0:
        raise ValidationError(
            f"sequence {sequence.id!r} has token ids outside the model vocabulary")
    if size_cache is None:
        size_cache = {}
    sizes = np.empty(len(sequence), dtype=np.int64)
    for t in range(len(sequence)):
        key = (q, model.context_at(sequence, t))
        size = size_cache.get(key)
        if size is None:
            size = nucleus_size_from_probs(model.context_probs(key[1]), q)
            size_cache[key] = size
        sizes[t] = size
    return Nss(seq_id=sequence.id, q=q, model_id=model.model_id, sizes=sizes)


def variability(nss: Nss, threshold: float = DEFAULT_VARIABILITY_THRESHOLD) -> VariabilityReport:
    """Population RMS deviation of the sizes from their mean.

    A sequence qualifies for fingerprinting only if this exceeds the
    threshold (strictly). The default threshold suits a 50k-vocabulary
    model; it must be retuned per model.
    """
    sizes = nss.sizes.astype(np.float64)
    mu = float(sizes.mean())
    var = float(np.sqrt(np.mean((sizes - mu) ** 2)))
    return VariabilityReport(mean=mu, variability=var, threshold=float(threshold),
                             is_variable=var > threshold)


def similar(x: Sequence, y: Sequence, window: int = DEFAULT_SIMILARITY_WINDOW) -> bool:
    """True iff the sequences share an identical window-length run at the same index."""
    if len(x) != len(y):
        raise UsageError(f"length mismatch: {len(x)} vs {len(y)}")
    if window < 1:
        raise UsageError("window must be >= 1")
    if window > len(x):
        return False
    return _longest_true_run(x.words == y.words) >= window


def _longest_true_run(mask: np.ndarray) -> int:
    padded = np.empty(mask.size + 2, dtype=np.int8)
    padded[0] = padded[-1] = 0
    padded[1:-1] = mask
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    if starts.size == 0:
        return 0
    ends = np.flatnonzero(edges == -1)
    return int((ends - starts).max())


def nss_distance(a: Nss, b: Nss) -> float:
    """Euclidean distance between two equal-length series."""
    if a.length != b.length:
        raise UsageError(f"length mismatch: {a.length} vs {b.length}")
    d = a.sizes.astype(np.float64) - b.sizes.astype(np.float64)
    # np.sum uses pairwise summation, which keeps drift down for long series
    return float(np.sqrt(np.sum(d * d)))


def collect_pairwise_distances(
    nss_list: list[Nss],
    sequences: list[Sequence],
    threshold: float = DEFAULT_VARIABILITY_THRESHOLD,
    window: int = DEFAULT_SIMILARITY_WINDOW,
) -> tuple[list[tuple[str, str, float]], list[str]]:
    """Distances between each variable NSS and every other non-similar NSS.

    Returns (records, variable_ids); each unordered pair with at least one
    variable member appears once. Pairs of similar sequences are excluded,
    which also drops identical texts.
    """
    if len(nss_list) != len(sequences):
        raise UsageError("one sequence per NSS required")
    lengths = {n.length for n in nss_list}
    if len(lengths) > 1:
        raise UsageError(f"mixed NSS lengths: {sorted(lengths)}")
    is_var = [variability(n, threshold).is_variable for n in nss_list]
    variable_ids = [n.seq_id for n, v in zip(nss_list, is_var) if v]
    records = []
    for i in range(len(nss_list)):
        for j in range(i + 1, len(nss_list)):
            if not (is_var[i] or is_var[j]):
                continue
            if similar(sequences[i], sequences[j], window):
                continue
            d = nss_distance(nss_list[i], nss_list[j])
            records.append((nss_list[i].seq_id, nss_list[j].seq_id, d))
    return records, variable_ids
