"""Spectral-gap, conductance, and ergodic-average diagnostics.

Direct gap *estimates* are only produced for linear functionals of chains
that are exactly AR(1) per coordinate (pCN with zero log-density); anything
else gets upper *bounds* (conductance routes) or IACT summaries, never a
claimed gap.  Reports carry an is_upper_bound flag so the two are never
conflated, and vacuous bounds (> 1) are clamped to 1 with a flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .kernel import ChainTrace, MHKernel, _propose, log_accept_ratio, run_chain_series
from .measure import norm
from .rng import derive_seed, generator

__all__ = [
    "GapReport",
    "RwmBoundParams",
    "ErgodicSummary",
    "IactResult",
    "CltResult",
    "SllnResult",
    "ergodic_average",
    "iact_and_variance",
    "gap_from_acf_linear",
    "conductance_bounds",
    "halfspace_gap_bound",
    "rwm_acceptance_bound",
    "rwm_acceptance_log_bound",
    "mse_bound",
    "burn_in",
    "clt_test",
    "slln_probe",
]

KS_CRITICAL_01 = 1.6276236115189502  # sqrt(-log(0.005)/2), asymptotic 1% Kolmogorov point

METHODS = (
    "acf_linear_functional",
    "batch_means",
    "conductance_accept_sup",
    "conductance_accept_mean",
    "conductance_half_space",
    "analytic_rwm_bound",
)


@dataclass
class GapReport:
    """A spectral-gap estimate or upper bound with its provenance.

    estimate_or_bound is clamped to [0, 1]; bounds whose raw value exceeded 1
    keep the raw value in params and carry a "vacuous" flag.
    """

    method: str
    estimate_or_bound: float
    is_upper_bound: bool
    m: int | None = None
    ci: tuple[float, float] | None = None
    params: dict = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not 0.0 <= self.estimate_or_bound <= 1.0:
            raise ValueError("gap quantities live in [0, 1]; clamp before reporting")


def _series(trace, f=None, coordinate=None) -> np.ndarray:
    """Extract a 1-d functional series from a ChainTrace or array."""
    if isinstance(trace, ChainTrace):
        data = trace.states
    else:
        data = np.asarray(trace, dtype=float)
    if data.ndim == 1:
        if f is not None:
            raise ValueError("1-d input is already a functional series; drop f")
        return data
    if coordinate is not None:
        return data[:, coordinate]
    if f is None:
        raise ValueError("need a functional or coordinate for 2-d state input")
    return np.asarray(f(data), dtype=float)


@dataclass
class ErgodicSummary:
    """Running averages S_{n, n0} at the requested checkpoints."""

    s_n: np.ndarray
    checkpoints: np.ndarray
    n0: int
    sigma2_hat: float | None = None
    iact: float | None = None


def ergodic_average(trace, f, n0: int, checkpoints=None) -> ErgodicSummary:
    """S_{n,n0}(f) = (1/n) sum_{i=1..n} f(X_{i+n0}), single pass.

    checkpoints is an ascending list of n values; default is the single
    maximal n.  n0 must leave at least one post-burn-in state.
    """
    series = _series(trace, f)
    total = series.size - 1  # steps available after state 0
    if not 0 <= n0 < series.size:
        raise ValueError(f"n0 = {n0} out of range for {series.size} states")
    avail = total - n0
    if avail < 1:
        raise ValueError("burn-in leaves no samples")
    if checkpoints is None:
        checkpoints = [avail]
    checkpoints = np.asarray(sorted(int(c) for c in checkpoints))
    if checkpoints[0] < 1 or checkpoints[-1] > avail:
        raise ValueError(f"checkpoints must lie in [1, {avail}]")
    tail = series[n0 + 1 :]
    out = np.empty(checkpoints.size)
    running = 0.0
    pos = 0
    for idx, n in enumerate(checkpoints):
        running += float(tail[pos:n].sum())
        pos = int(n)
        out[idx] = running / n
    return ErgodicSummary(out, checkpoints, n0)


def _autocovariance(x: np.ndarray, max_lag: int) -> np.ndarray:
    n = x.size
    xc = x - x.mean()
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(xc, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[: max_lag + 1] / n
    return acov


@dataclass
class IactResult:
    """IACT and asymptotic variance by two routes: truncated ACF and batch means."""

    iact_acf: float
    sigma2_acf: float
    iact_batch: float
    sigma2_batch: float
    var0: float
    degenerate: bool = False

    @property
    def iact(self) -> float:
        return self.iact_acf

    @property
    def sigma2_hat(self) -> float:
        return self.sigma2_acf


def iact_and_variance(trace, f=None, min_length: int = 1000) -> IactResult:
    """Integrated autocorrelation time and asymptotic variance of a functional.

    ACF route truncates with the initial-positive-sequence rule: adjacent
    autocovariance pairs are summed until a pair goes nonpositive, a standard
    truncation for reversible chains, chosen here rather than prescribed.
    Batch-means route uses floor(sqrt(n)) batches.  Zero-variance functionals
    come back flagged degenerate with NaN estimates.
    """
    series = _series(trace, f)
    n = series.size
    if n < min_length:
        raise ValueError(f"series too short ({n} < {min_length})")
    var0 = float(np.var(series))
    if var0 <= 0.0:
        nan = float("nan")
        return IactResult(nan, nan, nan, nan, var0, degenerate=True)

    max_lag = n // 2
    acov = _autocovariance(series, max_lag)
    tau_sum = 0.0
    j = 0
    while 2 * j + 1 <= max_lag:
        pair = acov[2 * j] + acov[2 * j + 1]
        if pair <= 0.0:
            break
        tau_sum += pair
        j += 1
    iact_acf = max(-1.0 + 2.0 * tau_sum / acov[0], 1e-12)
    sigma2_acf = float(acov[0] * iact_acf)

    n_batches = int(math.floor(math.sqrt(n)))
    batch = n // n_batches
    means = series[: n_batches * batch].reshape(n_batches, batch).mean(axis=1)
    sigma2_batch = float(batch * np.var(means, ddof=1))
    iact_batch = sigma2_batch / var0
    return IactResult(float(iact_acf), sigma2_acf, iact_batch, sigma2_batch, var0)


def gap_from_acf_linear(trace, coordinate: int = 0, kernel_info: dict | None = None) -> GapReport:
    """Gap estimate 1 - (lag-1 ACF) of one coordinate.

    Exact in expectation only for chains whose coordinates are AR(1), i.e.
    pCN with zero Phi; anything else gets a "heuristic" flag.  The standard
    error uses the AR(1) asymptotic sqrt((1 - rho^2)/n).
    """
    if isinstance(trace, ChainTrace) and kernel_info is None:
        kernel_info = trace.kernel
    series = _series(trace, coordinate=coordinate)
    n = series.size
    xc = series - series.mean()
    denom = float(np.dot(xc, xc))
    if denom <= 0.0:
        raise ValueError("degenerate coordinate series")
    rho1 = float(np.dot(xc[:-1], xc[1:]) / denom)
    est = min(1.0, max(0.0, 1.0 - rho1))
    se = math.sqrt(max(1.0 - rho1 * rho1, 0.0) / n)
    flags = []
    if kernel_info is not None:
        if kernel_info.get("kind") != "pcn" or kernel_info.get("target", {}).get("name") != "zero":
            flags.append("heuristic")
    m = kernel_info.get("spectrum", {}).get("m") if kernel_info else None
    return GapReport(
        "acf_linear_functional",
        est,
        is_upper_bound=False,
        m=m,
        ci=(max(0.0, est - 3 * se), min(1.0, est + 3 * se)),
        params={"lag1_acf": rho1, "se": se, "n": n, "coordinate": coordinate},
        flags=flags,
    )


def _clamped_bound(method, raw, se, m, params, extra_flags=()):
    flags = list(extra_flags)
    value = raw
    if raw > 1.0:
        value = 1.0
        flags.append("vacuous")
    ci = (max(0.0, raw - 3 * se), raw + 3 * se) if se is not None else None
    if ci is not None:
        ci = (min(ci[0], 1.0), min(ci[1], 1.0))
    return GapReport(
        method,
        value,
        is_upper_bound=True,
        m=m,
        ci=ci,
        params={**params, "raw": raw, "se": se},
        flags=flags,
    )


def halfspace_gap_bound(kernel: MHKernel, x1_samples: np.ndarray) -> GapReport:
    """Gap bound 2 * (integral over A of Q(x, A^c) dmu) / mu(A) for A = {x_1 >= 0}.

    Only the first coordinate enters: for Gaussian proposals the inner
    probability Q(x, A^c) = P(y_1 < 0 | x) is a normal CDF in x_1, so the
    Monte Carlo runs over stationary draws of x_1 alone with the inner
    integral exact.
    """
    x1 = np.asarray(x1_samples, dtype=float)
    if x1.ndim == 2:
        x1 = x1[:, 0]
    delta = kernel.params.delta
    lam1 = float(kernel.measure.lambdas[0])
    mean_coef = math.sqrt(1.0 - 2.0 * delta) if kernel.kind == "pcn" else 1.0
    sd = math.sqrt(2.0 * delta) * lam1
    q = stats.norm.cdf(-mean_coef * x1 / sd)
    inside = x1 >= 0.0
    mu_a = float(inside.mean())
    if mu_a <= 0.0:
        raise ValueError("no stationary samples on the half-space")
    flow = inside * q
    flow_mean = float(flow.mean())
    flow_se = float(flow.std(ddof=1) / math.sqrt(x1.size))
    raw = 2.0 * flow_mean / mu_a
    se = 2.0 * flow_se / mu_a  # mu(A) error ignored: symmetric targets pin it near 1/2
    return _clamped_bound(
        "conductance_half_space",
        raw,
        se,
        kernel.dimension,
        {"flow": flow_mean, "mu_A": mu_a, "n": int(x1.size), "delta": delta},
    )


def conductance_bounds(
    kernel: MHKernel,
    stationary_sampler,
    ball_radius: float,
    n: int,
    rng: np.random.Generator,
    sup_points: int = 128,
    proposals_per_point: int = 128,
) -> list[GapReport]:
    """Three upper bounds on the L2 gap via conductance and Cheeger.

    Returns gap bounds 2*sup_{x in B} alpha(x) (B the centered ball of the
    given radius), 2*2*E_mu alpha, and the half-space proposal-flow bound.
    The ball is rejected if its estimated mass exceeds 1/2.
    """
    X = np.asarray(stationary_sampler(rng, n), dtype=float)
    m = kernel.dimension
    in_ball = np.asarray(norm(X)) <= ball_radius
    mu_b = float(in_ball.mean())
    if mu_b > 0.5:
        raise ValueError(f"ball mass estimate {mu_b:.3f} exceeds 1/2; shrink the set")

    # mean acceptance over mu: one proposal per stationary draw
    xi = kernel.measure.sample(rng, n)
    props = _propose(kernel, X, xi)
    alpha = np.exp(np.minimum(0.0, log_accept_ratio(kernel, X, props)))
    mean_alpha = float(alpha.mean())
    mean_se = float(alpha.std(ddof=1) / math.sqrt(n))
    mean_report = _clamped_bound(
        "conductance_accept_mean",
        4.0 * mean_alpha,
        4.0 * mean_se,
        m,
        {"mean_accept": mean_alpha, "n": n, "delta": kernel.params.delta},
    )

    # sup over the ball: per-point mean acceptance, max over points
    candidates = X[in_ball][:sup_points]
    if candidates.shape[0] == 0:
        raise ValueError("no stationary samples landed in the ball")
    best, best_se = -np.inf, 0.0
    for x in candidates:
        Xp = np.tile(x, (proposals_per_point, 1))
        xi = kernel.measure.sample(rng, proposals_per_point)
        props = _propose(kernel, Xp, xi)
        a = np.exp(np.minimum(0.0, log_accept_ratio(kernel, Xp, props)))
        am = float(a.mean())
        if am > best:
            best = am
            best_se = float(a.std(ddof=1) / math.sqrt(proposals_per_point))
    sup_report = _clamped_bound(
        "conductance_accept_sup",
        2.0 * best,
        2.0 * best_se,
        m,
        {
            "sup_accept": best,
            "ball_radius": ball_radius,
            "mu_B": mu_b,
            "points": int(candidates.shape[0]),
            "delta": kernel.params.delta,
        },
    )

    half_report = halfspace_gap_bound(kernel, X[:, 0])
    return [sup_report, mean_report, half_report]


@dataclass(frozen=True)
class RwmBoundParams:
    """Exponents for the analytic RWM acceptance bound under delta_m = s * m**(-a).

    Defaults b = 2(1-a)/3 and sigma = (2+a)/6 balance the two factors; with
    these choices a+2b equals 2-2*sigma exactly (the boundary of the growth
    condition), which still keeps the second factor bounded.
    """

    a: float
    b: float | None = None
    sigma: float | None = None
    r: float = 1.0

    def __post_init__(self):
        if self.a < 0:
            raise ValueError("a must be nonnegative")
        if self.b is None:
            object.__setattr__(self, "b", 2.0 * (1.0 - self.a) / 3.0)
        if self.sigma is None:
            object.__setattr__(self, "sigma", (2.0 + self.a) / 6.0)
        if self.a + self.b >= 1.0 and self.a < 1.0:
            raise ValueError("need a + b < 1 for the first factor to decay")
        if self.a + 2.0 * self.b < 2.0 - 2.0 * self.sigma - 1e-12:
            raise ValueError("need a + 2b >= 2 - 2*sigma to control the second factor")

    def lambda_for(self, m: int) -> float:
        return float(m) ** (-self.b)


def rwm_acceptance_log_bound(m: int, delta: float, lambda_holder: float, r: float, sigma: float) -> float:
    """log of the analytic bound on RWM mean acceptance for the 1/i spectrum.

    Bound: (1 + 2*lambda*delta)**(-m/2) * exp(r * m**(2-2*sigma) * delta * lambda**2
    / (2*delta*lambda + 1)), valid for states with sum_i i**(2*sigma) x_i**2 <= r
    (the squared weighted norm).  Any Hoelder weight lambda in (0, 1] is
    admissible; m**(-b) recovers the scaling analysis.
    """
    if not 0.0 < lambda_holder <= 1.0:
        raise ValueError("lambda_holder must lie in (0, 1]")
    if delta <= 0 or r < 0:
        raise ValueError("need delta > 0 and r >= 0")
    first = -0.5 * m * math.log1p(2.0 * lambda_holder * delta)
    second = r * float(m) ** (2.0 - 2.0 * sigma) * delta * lambda_holder**2 / (
        2.0 * delta * lambda_holder + 1.0
    )
    return first + second


def rwm_acceptance_bound(m: int, delta: float, lambda_holder: float, r: float, sigma: float) -> float:
    return math.exp(rwm_acceptance_log_bound(m, delta, lambda_holder, r, sigma))


def mse_bound(n: int, beta: float, p: float = math.inf) -> float:
    """Non-asymptotic bound 2/(n(1-beta)) + 2/(n(1-beta))**2 on the ergodic-average MSE."""
    if not 0.0 <= beta < 1.0:
        raise ValueError("beta must lie in [0, 1)")
    if not p > 2.0:
        raise ValueError("p must exceed 2")
    if n < 1:
        raise ValueError("n must be positive")
    t = n * (1.0 - beta)
    return 2.0 / t + 2.0 / (t * t)


def burn_in(p: float, beta: float, density_ratio_norm: float) -> int:
    """Smallest burn-in n0 making the MSE bound valid for ||f||_p <= 1 observables.

    Two branches: p in (2, 4) uses p/(2(p-2)) * log(32 p/(p-2)), p >= 4 uses
    log(64); both scale by the density-ratio norm over log(1/beta).
    """
    if not p > 2.0:
        raise ValueError("p must exceed 2")
    if not 0.0 <= beta < 1.0:
        raise ValueError("beta must lie in [0, 1)")
    if density_ratio_norm < 0:
        raise ValueError("density_ratio_norm must be nonnegative")
    if beta == 0.0:
        return 0
    if p < 4.0:
        factor = p / (2.0 * (p - 2.0)) * math.log(32.0 * p / (p - 2.0))
    else:
        factor = math.log(64.0)
    return int(math.ceil(factor * density_ratio_norm / math.log(1.0 / beta)))


@dataclass
class CltResult:
    ks_statistic: float
    ks_critical_01: float
    sigma2_hat: float
    n_replicas: int
    n: int
    passed: bool
    pvalue: float


def clt_test(replica_values: np.ndarray, n0: int = 0) -> CltResult:
    """KS test of standardized ergodic sums against N(0, sigma2_hat).

    replica_values has shape (R, n+1): per-replica functional series.  The
    sums sqrt(n) * (S_n - mean) are compared to a centered normal whose
    variance is estimated from the same sums (slightly conservative for
    passing, as fitted parameters shrink the KS statistic).  Requires at
    least 200 replicas.
    """
    values = np.asarray(replica_values, dtype=float)
    if values.ndim != 2:
        raise ValueError("replica_values must be (R, n+1)")
    R, cols = values.shape
    if R < 200:
        raise ValueError(f"need at least 200 replicas, got {R}")
    n = cols - 1 - n0
    if n < 1:
        raise ValueError("no samples after burn-in")
    sums = values[:, n0 + 1 :].mean(axis=1)
    if float(np.var(sums)) == 0.0:
        raise ValueError("degenerate functional: replica sums have zero variance")
    centered = math.sqrt(n) * (sums - sums.mean())
    sigma2 = float(np.var(centered, ddof=1))
    ks = stats.kstest(centered, stats.norm(loc=0.0, scale=math.sqrt(sigma2)).cdf)
    critical = KS_CRITICAL_01 / math.sqrt(R)
    return CltResult(
        float(ks.statistic), critical, sigma2, R, n, bool(ks.statistic < critical), float(ks.pvalue)
    )


@dataclass
class SllnResult:
    rows: list
    mu_hat: float
    sigma_hat: float
    passed: dict


def slln_probe(
    kernel: MHKernel,
    f,
    x0_list: dict,
    n_grid,
    seed: int,
    reference_steps: int | None = None,
) -> SllnResult:
    """Ergodic-average error |S_n - mu_hat| along a grid of n, per starting point.

    x0_list maps labels to starting states; the reference mean and asymptotic
    scale come from a separate stationary-started run (4x the largest n by
    default).  A start passes when its final error is within 3*sigma_hat/sqrt(n).
    """
    n_grid = sorted(int(n) for n in n_grid)
    if not n_grid:
        raise ValueError("n grid must be nonempty")
    N = n_grid[-1]
    ref_n = reference_steps or 4 * N
    x_ref = kernel.measure.sample(generator(seed, "slln", "ref", "init"))
    ref_series, _ = run_chain_series(
        kernel, x_ref, ref_n, derive_seed(seed, "slln", "ref"), f=lambda x: float(f(x))
    )
    mu_hat = float(ref_series[1:].mean())
    ref_iact = iact_and_variance(ref_series, min_length=min(1000, ref_n))
    sigma_hat = math.sqrt(max(ref_iact.sigma2_acf, 0.0)) if not ref_iact.degenerate else 0.0

    rows = []
    passed = {}
    for label, x0 in x0_list.items():
        series, _ = run_chain_series(
            kernel, x0, N, derive_seed(seed, "slln", label), f=lambda x: float(f(x))
        )
        summary = ergodic_average(series, None, 0, checkpoints=n_grid)
        errors = np.abs(summary.s_n - mu_hat)
        for n, err in zip(n_grid, errors):
            rows.append((label, int(n), float(err)))
        passed[label] = bool(errors[-1] <= 3.0 * sigma_hat / math.sqrt(N) or sigma_hat == 0.0)
    return SllnResult(rows, mu_hat, sigma_hat, passed)
