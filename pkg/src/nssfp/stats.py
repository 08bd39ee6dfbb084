"""Distribution fits behind the matching threshold.

Pairwise fingerprint distances get a log-normal fit whose extreme lower
quantile is the uniqueness radius U(N); measurement errors get a normal
fit whose mean + 10 sigma is the error bound d(N); the matching threshold
is tau_N = U(N) - d(N).
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, UsageError, ValidationError

DEFAULT_EPSILON = 1e-18
ERROR_BOUND_SIGMAS = 10.0
MIN_FIT_SAMPLES = 30


@dataclass(frozen=True)
class PairwiseDistanceSample:
    """Distances between variable fingerprints and all non-similar peers."""

    length: int
    distances: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.distances, dtype=np.float64)
        object.__setattr__(self, "distances", d)
        if d.size == 0:
            raise ValidationError("empty distance sample")
        if np.any(d <= 0):
            raise ValidationError("distances must be positive; exclude similar pairs upstream")


@dataclass(frozen=True)
class UniquenessModel:
    """Log-normal fit of pairwise distances and the derived radius U(N)."""

    length: int
    log_mu: float
    log_sigma: float
    epsilon: float
    radius: float

    def __post_init__(self):
        if self.log_sigma <= 0:
            raise ValidationError(
                "degenerate distance fit (log_sigma == 0); upstream pipeline is broken")


@dataclass(frozen=True)
class ErrorModel:
    """Normal fit of measurement errors, the bound d(N), and tau_N."""

    length: int
    mean: float
    std: float
    bound: float
    tau: float
    matchable: bool


def smoothed_histogram(samples, buckets: int, window: int = 11) -> list[tuple[float, float]]:
    """Equal-width histogram densities averaged over a centered bucket window.

    The window must be odd so the average is centered; at the edges it is
    truncated to the available buckets.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise UsageError("no samples to histogram")
    if window < 1 or window % 2 == 0:
        raise UsageError(f"window must be odd and positive, got {window}")
    if buckets < window:
        raise UsageError(f"need at least window={window} buckets, got {buckets}")
    lo, hi = float(samples.min()), float(samples.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(samples, bins=buckets, range=(lo, hi))
    width = edges[1] - edges[0]
    density = counts / (samples.size * width)
    half = window // 2
    centers = (edges[:-1] + edges[1:]) / 2.0
    smoothed = np.empty(buckets)
    for i in range(buckets):
        a, b = max(0, i - half), min(buckets, i + half + 1)
        smoothed[i] = density[a:b].mean()
    return list(zip(centers.tolist(), smoothed.tolist()))


def fit_lognormal(samples, min_count: int = MIN_FIT_SAMPLES) -> tuple[float, float]:
    """Maximum-likelihood log-normal fit: mean and population std of the logs."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size < min_count:
        raise InsufficientDataError(
            f"need at least {min_count} samples for a log-normal fit, got {samples.size}")
    if np.any(samples <= 0):
        raise ValidationError("log-normal fit requires strictly positive samples")
    logs = np.log(samples)
    return float(logs.mean()), float(logs.std())


# Rational tail approximation for the initial guess (classic Hastings form),
# then Newton on Phi(z) - eps with Phi evaluated through erfc. The ratio
# (Phi - eps) / phi stays well-conditioned arbitrarily deep into the tail.
_C = (2.515517, 0.802853, 0.010328)
_D = (1.432788, 0.189269, 0.001308)
_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


def _phi_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / _SQRT2)


def _phi_pdf(z: float) -> float:
    return math.exp(-0.5 * z * z) / _SQRT2PI


def normal_quantile(eps: float) -> float:
    """z such that the standard normal CDF at z equals eps, for eps in (0, 0.5].

    Accurate to better than 1e-10 relative down to eps = 1e-20, far past
    where table-based approximations give up.
    """
    if not 0.0 < eps <= 0.5:
        raise UsageError(f"eps must be in (0, 0.5], got {eps}")
    if eps == 0.5:
        return 0.0
    t = math.sqrt(-2.0 * math.log(eps))
    num = _C[0] + t * (_C[1] + t * _C[2])
    den = 1.0 + t * (_D[0] + t * (_D[1] + t * _D[2]))
    z = -(t - num / den)
    for _ in range(40):
        step = (_phi_cdf(z) - eps) / _phi_pdf(z)
        z -= step
        if abs(step) <= 1e-14 * abs(z):
            break
    return z


def uniqueness_radius(sample: PairwiseDistanceSample, eps: float = DEFAULT_EPSILON,
                      min_count: int = MIN_FIT_SAMPLES) -> UniquenessModel:
    """Fit the distances and place U(N) at the eps-quantile of the fit.

    With eps at its default of 1e-18, the probability that a non-similar
    fingerprint falls inside the radius is negligible.
    """
    if not 0.0 < eps <= 0.5:
        raise UsageError(f"eps must be in (0, 0.5], got {eps}")
    log_mu, log_sigma = fit_lognormal(sample.distances, min_count=min_count)
    radius = math.exp(log_mu + log_sigma * normal_quantile(eps))
    return UniquenessModel(length=sample.length, log_mu=log_mu, log_sigma=log_sigma,
                           epsilon=eps, radius=radius)


def error_bound(errors, uniqueness: UniquenessModel,
                min_count: int = MIN_FIT_SAMPLES) -> ErrorModel:
    """Normal fit of measurement errors; d(N) = mean + 10 std, tau = U - d.

    A non-positive tau flags the channel/corpus combination as
    non-matchable instead of raising: the caller decides what to do.
    """
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size < min_count:
        raise InsufficientDataError(
            f"need at least {min_count} error samples, got {errors.size}")
    if np.any(errors < 0):
        raise ValidationError("errors are norms and must be non-negative")
    mean = float(errors.mean())
    std = float(errors.std())
    bound = mean + ERROR_BOUND_SIGMAS * std
    tau = uniqueness.radius - bound
    return ErrorModel(length=uniqueness.length, mean=mean, std=std, bound=bound,
                      tau=tau, matchable=tau > 0)


def write_fit_report(path, rows, header_lines=()):
    """Line-delimited fit records: N, log_mu, log_sigma, U, d, tau."""
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("N,log_mu,log_sigma,U,d,tau\n")
        for uniq, err in rows:
            d = repr(err.bound) if err is not None else "nan"
            tau = repr(err.tau) if err is not None else "nan"
            fh.write(f"{uniq.length},{uniq.log_mu!r},{uniq.log_sigma!r},"
                     f"{uniq.radius!r},{d},{tau}\n")


def read_fit_report(path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("N,"):
                continue
            n, log_mu, log_sigma, u, d, tau = line.split(",")
            rows.append({"N": int(n), "log_mu": float(log_mu),
                         "log_sigma": float(log_sigma), "U": float(u),
                         "d": float(d), "tau": float(tau)})
    return rows
