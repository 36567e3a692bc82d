"""Basic coupling and numerical certification of the weak-Harris premises.

The basic coupling drives two chains with the same proposal noise and the
same acceptance uniform.  Three estimators witness the premises of the
weak-Harris contract: a Lyapunov drift envelope, a distance contraction
factor on near-diagonal pairs, and n-step smallness of the sublevel set
{V <= 4K}.  All are honest Monte Carlo bounds: envelopes dominate upper
confidence limits, contraction ratios max over pairs.

The exact path-infimum distance behind the local regime is never computed;
everything uses its closed-form upper/lower bounds (d_local_bounds), and
the local contraction ratio is certified on the conservative side (upper
bound after the step over lower bound before it).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .kernel import MHKernel, _log_u, _propose, log_accept_ratio
from .measure import norm, uniform_ball
from .rng import generator
from .target import AssumptionProfile  # noqa: F401  (re-export: profiles belong to this layer too)

__all__ = [
    "DistanceParams",
    "AssumptionProfile",
    "CoupledPair",
    "v_eval",
    "d_global",
    "d_local_bounds",
    "d_tilde",
    "coupled_step",
    "run_coupled",
    "near_diagonal_sampler",
    "LyapunovEstimate",
    "ContractionEstimate",
    "SmallnessEstimate",
    "HarrisCertificate",
    "estimate_lyapunov",
    "estimate_contraction",
    "estimate_smallness",
    "smallness_min_steps",
    "harris_certificate",
]

Z99 = 2.5758293035489004  # two-sided 99% normal quantile


@dataclass(frozen=True)
class DistanceParams:
    """Distance scale epsilon, local weight eta (0 = global regime), and the
    weight function V: ||x||**v_param for "power_norm", exp(v_param*||x||)
    for "exp_norm"."""

    epsilon: float
    eta: float = 0.0
    v_kind: str = "power_norm"
    v_param: float = 2.0

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")
        if self.v_kind not in ("power_norm", "exp_norm"):
            raise ValueError(f"unknown V kind {self.v_kind!r}")
        # power exponent 0 gives the constant stub V = 1, useful for tests
        if self.v_param < 0 or (self.v_kind == "exp_norm" and self.v_param <= 0):
            raise ValueError("v_param must be positive (nonnegative for power_norm)")


def v_eval(params: DistanceParams, x: np.ndarray) -> np.ndarray | float:
    """Weight V(x): ||x||**i or exp(v*||x||)."""
    s = np.asarray(norm(x))
    if params.v_kind == "power_norm":
        out = s**params.v_param
    else:
        out = np.exp(params.v_param * s)
    return float(out) if out.ndim == 0 else out


def d_global(x: np.ndarray, y: np.ndarray, params: DistanceParams) -> np.ndarray | float:
    """1 and ||x-y||/epsilon."""
    out = np.minimum(1.0, np.asarray(norm(np.asarray(x) - np.asarray(y))) / params.epsilon)
    return float(out) if out.ndim == 0 else out


def d_local_bounds(x: np.ndarray, y: np.ndarray, params: DistanceParams):
    """Closed-form bounds for the weighted path distance, (lower, upper, valid_regime).

    With s = ||x|| v ||y||:
        upper = ||x-y||/eps * exp(eta*s)
        J     = eps * exp(-eta * (s - eps)+)
        lower = ||x-y||/eps * exp(eta * (s - J)+)
    valid_regime flags upper < 1, the hypothesis under which the lower bound
    is meaningful.  eta = 0 collapses both to the global distance.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s = np.maximum(np.asarray(norm(x)), np.asarray(norm(y)))
    base = np.asarray(norm(x - y)) / params.epsilon
    upper = base * np.exp(params.eta * s)
    J = params.epsilon * np.exp(-params.eta * np.maximum(s - params.epsilon, 0.0))
    lower = base * np.exp(params.eta * np.maximum(s - J, 0.0))
    valid = upper < 1.0
    if np.ndim(upper) == 0:
        return float(lower), float(upper), bool(valid)
    return lower, upper, valid


def d_tilde(d_value, x, y, params: DistanceParams):
    """Weighted distance sqrt(d * (1 + V(x) + V(y)))."""
    d_value = np.asarray(d_value, dtype=float)
    if np.any(d_value < 0) or np.any(d_value > 1):
        raise ValueError("d_value must lie in [0, 1]")
    out = np.sqrt(d_value * (1.0 + np.asarray(v_eval(params, x)) + np.asarray(v_eval(params, y))))
    return float(out) if out.ndim == 0 else out


@dataclass
class CoupledPair:
    """Two chain states advanced with shared noise and shared acceptance uniform."""

    x: np.ndarray
    y: np.ndarray
    case_tag: str | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.shape != self.y.shape:
            raise ValueError("coupled states must share a dimension")


_CASES = {(True, True): "both_accept", (False, False): "both_reject"}


def coupled_step(
    kernel: MHKernel,
    pair: CoupledPair,
    rng: np.random.Generator,
    u_rng: np.random.Generator | None = None,
) -> tuple[CoupledPair, str]:
    """One basic-coupling step: one xi, one uniform, both margins exact mh_step laws."""
    xi = kernel.measure.sample(rng)
    u = (u_rng if u_rng is not None else rng).random()
    log_u = float(_log_u(np.float64(u)))
    px = _propose(kernel, pair.x, xi)
    py = _propose(kernel, pair.y, xi)
    acc_x = log_u < min(0.0, log_accept_ratio(kernel, pair.x, px))
    acc_y = log_u < min(0.0, log_accept_ratio(kernel, pair.y, py))
    case = _CASES.get((acc_x, acc_y), "one_accepts")
    out = CoupledPair(px if acc_x else pair.x, py if acc_y else pair.y, case)
    return out, case


def run_coupled(kernel: MHKernel, x0, y0, n: int, seed: int):
    """Run the basic coupling n steps; returns (distances (n+1,), cases list).

    Stream layout matches run_chain ("noise" + "accept" substreams).
    """
    pair = CoupledPair(np.asarray(x0, dtype=float), np.asarray(y0, dtype=float))
    noise = generator(seed, "noise")
    accept = generator(seed, "accept")
    dists = np.empty(n + 1)
    dists[0] = norm(pair.x - pair.y)
    cases = []
    for k in range(n):
        pair, case = coupled_step(kernel, pair, noise, accept)
        dists[k + 1] = norm(pair.x - pair.y)
        cases.append(case)
    return dists, cases


def _coupled_step_batch(kernel, X, Y, xi, log_u):
    """Vectorized basic-coupling step on (S, m) state blocks."""
    px = _propose(kernel, X, xi)
    py = _propose(kernel, Y, xi)
    acc_x = log_u < np.minimum(0.0, log_accept_ratio(kernel, X, px))
    acc_y = log_u < np.minimum(0.0, log_accept_ratio(kernel, Y, py))
    return (
        np.where(acc_x[:, None], px, X),
        np.where(acc_y[:, None], py, Y),
        acc_x,
        acc_y,
    )


def _d_after(X, Y, params: DistanceParams) -> np.ndarray:
    """Distance after a step: exact in the global regime, upper bound locally."""
    if params.eta == 0.0:
        return np.asarray(d_global(X, Y, params))
    _, upper, _ = d_local_bounds(X, Y, params)
    return np.minimum(1.0, np.asarray(upper))


def near_diagonal_sampler(measure, params: DistanceParams, R: float, where: str = "inside"):
    """Pair sampler: x in or just outside B_R(0), y = x + (epsilon/2) * direction.

    "inside" draws x uniformly from B_R(0); "outside" places x at radius
    R*(1+u), u ~ U(0,1).  Either way ||x-y|| = epsilon/2 so d(x,y) < 1 in
    the global regime.
    """
    if where not in ("inside", "outside"):
        raise ValueError("where must be 'inside' or 'outside'")
    m = measure.dimension

    def sample(rng: np.random.Generator):
        if where == "inside":
            x = uniform_ball(np.zeros(m), R, 1, rng)[0]
        else:
            direction = rng.standard_normal(m)
            direction /= max(norm(direction), 1e-300)
            x = R * (1.0 + rng.random()) * direction
        step_dir = rng.standard_normal(m)
        step_dir /= max(norm(step_dir), 1e-300)
        return x, x + 0.5 * params.epsilon * step_dir

    return sample


@dataclass
class LyapunovEstimate:
    """Affine drift envelope E[V(X_1)|x] <= l_hat * V(x) + K_hat with the fitted table."""

    l_hat: float
    K_hat: float
    l_se: float
    v_values: np.ndarray
    means: np.ndarray
    ses: np.ndarray
    samples_per_point: int

    @property
    def drift_holds(self) -> bool:
        return self.l_hat + Z99 * self.l_se < 1.0


def estimate_lyapunov(
    kernel: MHKernel,
    params: DistanceParams,
    radii,
    samples_per_point: int,
    rng: np.random.Generator,
) -> LyapunovEstimate:
    """One-step drift estimates at one representative state per radius.

    Each representative is radius * (random direction).  The envelope is a
    least-squares affine fit in V(x) whose intercept is then raised until the
    line dominates every point's mean + 3 se: the drift condition is an
    inequality, so an envelope is the faithful object, not a regression.
    """
    radii = np.asarray(list(radii), dtype=float)
    if radii.size == 0:
        raise ValueError("radii grid must be nonempty")
    m = kernel.dimension
    v_values = np.empty(radii.size)
    means = np.empty(radii.size)
    ses = np.empty(radii.size)
    for idx, radius in enumerate(radii):
        direction = rng.standard_normal(m)
        direction /= max(norm(direction), 1e-300)
        x = radius * direction
        X = np.tile(x, (samples_per_point, 1))
        xi = kernel.measure.sample(rng, samples_per_point)
        log_u = _log_u(rng.random(samples_per_point))
        px = _propose(kernel, X, xi)
        acc = log_u < np.minimum(0.0, log_accept_ratio(kernel, X, px))
        X1 = np.where(acc[:, None], px, X)
        v1 = np.asarray(v_eval(params, X1), dtype=float)
        v_values[idx] = v_eval(params, x)
        means[idx] = v1.mean()
        ses[idx] = v1.std(ddof=1) / math.sqrt(samples_per_point)

    spread = v_values - v_values.mean()
    denom = float(np.sum(spread**2))
    if denom < 1e-12 * max(1.0, float(np.max(np.abs(v_values))) ** 2):
        slope, l_se = 0.0, 0.0
    else:
        slope = float(np.sum(spread * means) / denom)
        l_se = math.sqrt(float(np.sum(spread**2 * ses**2)) / denom**2)
    slope = max(slope, 0.0)
    K_hat = float(np.max(means + 3.0 * ses - slope * v_values))
    return LyapunovEstimate(slope, K_hat, l_se, v_values, means, ses, samples_per_point)


@dataclass
class ContractionEstimate:
    """Worst-pair one-step contraction ratio of the coupling; upper bound on the true rate."""

    c_hat: float
    ci: tuple[float, float]
    n_pairs: int
    n_rejected: int
    samples_per_pair: int

    @property
    def contraction_holds(self) -> bool:
        return self.ci[1] < 1.0


def estimate_contraction(
    kernel: MHKernel,
    params: DistanceParams,
    pair_sampler,
    n_pairs: int,
    rng: np.random.Generator,
    samples_per_pair: int = 256,
) -> ContractionEstimate:
    """c_hat = max over sampled pairs of E[d(X_1, Y_1)] / d(x, y) under basic coupling.

    Pairs whose starting distance is 0 or >= 1 (in the local regime: whose
    upper bound is >= 1) are rejected and counted.  In the local regime the
    ratio divides the post-step upper bound by the pre-step lower bound,
    which can only overstate the contraction factor.
    """
    if n_pairs < 1:
        raise ValueError("need at least one pair")
    worst = -np.inf
    worst_se = 0.0
    rejected = 0
    used = 0
    for _ in range(n_pairs):
        x, y = pair_sampler(rng)
        if params.eta == 0.0:
            d0 = d_global(x, y, params)
            ok = d0 < 1.0
        else:
            d0, upper, ok = d_local_bounds(x, y, params)
        if not ok or d0 <= 0.0:
            rejected += 1
            continue
        used += 1
        X = np.tile(np.asarray(x, dtype=float), (samples_per_pair, 1))
        Y = np.tile(np.asarray(y, dtype=float), (samples_per_pair, 1))
        xi = kernel.measure.sample(rng, samples_per_pair)
        log_u = _log_u(rng.random(samples_per_pair))
        X1, Y1, _, _ = _coupled_step_batch(kernel, X, Y, xi, log_u)
        d1 = _d_after(X1, Y1, params)
        mean = float(d1.mean())
        se = float(d1.std(ddof=1) / math.sqrt(samples_per_pair))
        ratio = mean / d0
        if ratio > worst:
            worst, worst_se = ratio, se / d0
    if used == 0:
        raise ValueError(f"pair sampler produced no admissible pairs ({rejected} rejected)")
    ci = (worst - Z99 * worst_se, worst + Z99 * worst_se)
    return ContractionEstimate(worst, ci, used, rejected, samples_per_pair)


def _sublevel_radius(params: DistanceParams, bound: float) -> float:
    """Radius of {V <= bound} for the configured V."""
    if params.v_kind == "power_norm":
        return bound ** (1.0 / params.v_param)
    if bound < 1.0:
        raise ValueError("exp-norm sublevel set is empty below V = 1")
    return math.log(bound) / params.v_param


def smallness_min_steps(kernel: MHKernel, params: DistanceParams, K_hat: float) -> int:
    """Smallest n with the deterministic both-accept contraction below 1/2 on {V <= 4K}."""
    radius = _sublevel_radius(params, 4.0 * K_hat)
    diam = 2.0 * radius
    factor = math.sqrt(1.0 - 2.0 * kernel.params.delta)
    start = diam / params.epsilon
    if params.eta > 0.0:
        start *= math.exp(params.eta * (2.0 * radius + params.epsilon))
    if start <= 0.5:
        return 1
    if factor == 0.0:
        return 1
    return max(1, math.ceil(math.log(0.5 / start) / math.log(factor)))


@dataclass
class SmallnessEstimate:
    """Worst-pair n-step Wasserstein bound over the sublevel set {V <= 4K}."""

    s_hat: float
    n_steps: int
    ci: tuple[float, float]
    n_pairs: int
    samples_per_pair: int

    @property
    def smallness_holds(self) -> bool:
        return self.ci[1] < 1.0


def estimate_smallness(
    kernel: MHKernel,
    params: DistanceParams,
    K_hat: float,
    n_steps: int,
    n_pairs: int,
    rng: np.random.Generator,
    samples_per_pair: int = 64,
) -> SmallnessEstimate:
    """s_hat = max over pairs from S x S of E[d(X_n, Y_n)], S = {V <= 4*K_hat}.

    Rejects n_steps below the deterministic threshold of smallness_min_steps,
    under which even all-accept trajectories cannot push d below 1/2.
    """
    needed = smallness_min_steps(kernel, params, K_hat)
    if n_steps < needed:
        raise ValueError(f"n_steps = {n_steps} below the contraction threshold {needed}")
    radius = _sublevel_radius(params, 4.0 * K_hat)
    m = kernel.dimension
    worst = -np.inf
    worst_se = 0.0
    for _ in range(n_pairs):
        x = uniform_ball(np.zeros(m), radius, 1, rng)[0]
        y = uniform_ball(np.zeros(m), radius, 1, rng)[0]
        X = np.tile(x, (samples_per_pair, 1))
        Y = np.tile(y, (samples_per_pair, 1))
        for _step in range(n_steps):
            xi = kernel.measure.sample(rng, samples_per_pair)
            log_u = _log_u(rng.random(samples_per_pair))
            X, Y, _, _ = _coupled_step_batch(kernel, X, Y, xi, log_u)
        dn = _d_after(X, Y, params)
        mean = float(dn.mean())
        se = float(dn.std(ddof=1) / math.sqrt(samples_per_pair))
        if mean > worst:
            worst, worst_se = mean, se
    ci = (worst - Z99 * worst_se, worst + Z99 * worst_se)
    return SmallnessEstimate(worst, n_steps, ci, n_pairs, samples_per_pair)


@dataclass
class HarrisCertificate:
    """Bundle of the three premise estimates; premises_hold is their conjunction
    at 99% confidence.  The contraction horizon n-tilde is reported nowhere:
    only its premises and constants are exposed."""

    lyapunov: LyapunovEstimate
    contraction: ContractionEstimate
    smallness: SmallnessEstimate
    premises_hold: bool
    seeds: dict | None = None

    def to_dict(self) -> dict:
        return {
            "lyapunov": {
                "l": self.lyapunov.l_hat,
                "K": self.lyapunov.K_hat,
                "ci": [
                    self.lyapunov.l_hat - Z99 * self.lyapunov.l_se,
                    self.lyapunov.l_hat + Z99 * self.lyapunov.l_se,
                ],
            },
            "contraction": {
                "c": self.contraction.c_hat,
                "ci": list(self.contraction.ci),
                "n_pairs": self.contraction.n_pairs,
            },
            "smallness": {
                "s": self.smallness.s_hat,
                "n_steps": self.smallness.n_steps,
                "ci": list(self.smallness.ci),
            },
            "premises_hold": self.premises_hold,
            "seeds": self.seeds,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def harris_certificate(
    lyapunov: LyapunovEstimate,
    contraction: ContractionEstimate,
    smallness: SmallnessEstimate,
    seeds: dict | None = None,
) -> HarrisCertificate:
    """Assemble the certificate; all three estimates are mandatory."""
    if lyapunov is None or contraction is None or smallness is None:
        raise ValueError("certificate needs all of lyapunov, contraction, smallness")
    holds = lyapunov.drift_holds and contraction.contraction_holds and smallness.smallness_holds
    return HarrisCertificate(lyapunov, contraction, smallness, bool(holds), seeds)
