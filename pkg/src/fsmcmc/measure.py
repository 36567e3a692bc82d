"""Truncated Karhunen-Loeve Gaussian reference measures.

A measure here is a mean-zero Gaussian on R^m with independent coordinates
and coordinate i having standard deviation lambda_i.  The spectrum is
either a power law lambda_i = i**(-q) or an explicit sequence.  States are
plain 1-d float arrays; batches stack them along leading axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MCEstimate",
    "SpectrumSpec",
    "GaussianMeasure",
    "norm",
    "sobolev_norm",
    "project",
    "uniform_ball",
    "shared_ball_indicators",
]


@dataclass(frozen=True)
class MCEstimate:
    """A Monte Carlo estimate with its standard error and sample count."""

    value: float
    se: float
    n: int

    def interval(self, z: float = 3.0) -> tuple[float, float]:
        return (self.value - z * self.se, self.value + z * self.se)


def _mc_mean(samples: np.ndarray) -> MCEstimate:
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    value = float(samples.mean())
    se = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    return MCEstimate(value, se, n)


@dataclass(frozen=True, eq=False)
class SpectrumSpec:
    """Eigenvalue sequence of the covariance factor: coordinate i has std lambda_i.

    ``rule`` is "power_law" (lambda_i = i**(-q)) or "explicit".  Explicit
    sequences may contain zeros (the coordinate is then degenerate at 0);
    power-law spectra are strictly positive and nonincreasing.
    """

    rule: str
    dimension: int
    q: float | None = None
    lambdas: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be a positive integer")
        if self.rule == "power_law":
            if self.q is None or self.q <= 0:
                raise ValueError("power_law spectrum needs q > 0")
            lam = np.arange(1, self.dimension + 1, dtype=float) ** (-float(self.q))
        elif self.rule == "explicit":
            lam = np.asarray(self.lambdas, dtype=float)
            if lam.ndim != 1 or lam.size != self.dimension:
                raise ValueError("explicit lambdas must be 1-d of length `dimension`")
            if np.any(lam < 0) or not np.all(np.isfinite(lam)):
                raise ValueError("explicit lambdas must be finite and nonnegative")
        else:
            raise ValueError(f"unknown spectrum rule {self.rule!r}")
        lam.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)

    @classmethod
    def power_law(cls, q: float, m: int) -> "SpectrumSpec":
        return cls(rule="power_law", dimension=m, q=float(q))

    @classmethod
    def explicit(cls, lambdas) -> "SpectrumSpec":
        lam = np.asarray(lambdas, dtype=float)
        return cls(rule="explicit", dimension=lam.size, lambdas=lam)

    def descriptor(self) -> dict:
        if self.rule == "power_law":
            return {"rule": "power_law", "q": self.q, "m": self.dimension}
        return {"rule": "explicit", "lambdas": self.lambdas.tolist()}


def norm(x: np.ndarray) -> np.ndarray | float:
    """Euclidean norm along the last axis."""
    x = np.asarray(x, dtype=float)
    out = np.sqrt(np.sum(x * x, axis=-1))
    return float(out) if out.ndim == 0 else out


def sobolev_norm(x: np.ndarray, sigma: float) -> np.ndarray | float:
    """Weighted norm (sum_i i**(2*sigma) x_i**2)**(1/2); sigma=0 is Euclidean."""
    x = np.asarray(x, dtype=float)
    weights = np.arange(1, x.shape[-1] + 1, dtype=float) ** (2.0 * sigma)
    out = np.sqrt(np.sum(weights * x * x, axis=-1))
    return float(out) if out.ndim == 0 else out


def project(x: np.ndarray, k: int) -> np.ndarray:
    """Keep the first k coordinates, zero the rest.  Idempotent."""
    x = np.asarray(x, dtype=float)
    if not 0 <= k <= x.shape[-1]:
        raise ValueError(f"projection rank {k} out of range [0, {x.shape[-1]}]")
    out = np.zeros_like(x)
    out[..., :k] = x[..., :k]
    return out


def uniform_ball(center: np.ndarray, radius: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draws from the Euclidean ball B_radius(center), shape (size, m).

    Direction from a normalized Gaussian, radius scaled by U**(1/m).
    """
    center = np.asarray(center, dtype=float)
    m = center.shape[-1]
    z = rng.standard_normal((size, m))
    z /= np.maximum(np.sqrt(np.sum(z * z, axis=-1, keepdims=True)), 1e-300)
    r = radius * rng.random(size) ** (1.0 / m)
    return center + r[:, None] * z


@dataclass(frozen=True, eq=False)
class GaussianMeasure:
    """Mean-zero Gaussian on R^m with independent N(0, lambda_i**2) coordinates."""

    spectrum: SpectrumSpec

    @property
    def dimension(self) -> int:
        return self.spectrum.dimension

    @property
    def lambdas(self) -> np.ndarray:
        return self.spectrum.lambdas

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        """Draw from the measure: shape (m,) or (size, m).  Deterministic in rng state."""
        if size is None:
            return self.lambdas * rng.standard_normal(self.dimension)
        return self.lambdas * rng.standard_normal((size, self.dimension))

    def ball_probability(self, R: float, n: int, rng: np.random.Generator) -> MCEstimate:
        """Monte Carlo estimate of P(||xi|| <= R) under the measure."""
        if R < 0:
            raise ValueError("R must be nonnegative")
        if n < 1:
            raise ValueError("need at least one sample")
        draws = self.sample(rng, n)
        inside = norm(draws) <= R
        return _mc_mean(inside.astype(float))

    def fernique_moment(self, beta: float) -> float:
        """Exact exponential moment E exp(beta * ||xi||**2).

        Closed form prod_i (1 - 2*beta*lambda_i**2)**(-1/2), finite only for
        2*beta*max(lambda)**2 < 1.
        """
        lam2 = self.lambdas**2
        factors = 1.0 - 2.0 * beta * lam2
        if np.any(factors <= 0):
            lam_max2 = float(lam2.max())
            raise ValueError(
                f"exponential moment diverges: need beta < {0.5 / lam_max2 if lam_max2 > 0 else math.inf}"
            )
        return float(np.exp(-0.5 * np.sum(np.log(factors))))

    def exponential_tail_bound(self, alpha: float, beta: float, K: float) -> float:
        """Analytic upper bound on the tail integral of exp(alpha*||u||) over ||u|| >= K.

        Bound is C * exp(-beta*K**2 + alpha*K) with C = F_beta * (1 + alpha*sqrt(pi/beta)),
        where F_beta is the exponential square moment; the sqrt(pi/beta) factor
        dominates the Gaussian tail integral that appears after integrating by
        parts.  Valid for K > alpha/(2*beta); only the upper-bound direction is
        contractual.
        """
        if alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if beta <= 0:
            raise ValueError("beta must be positive")
        if K <= alpha / (2.0 * beta):
            raise ValueError(f"K must exceed alpha/(2*beta) = {alpha / (2.0 * beta)}")
        F_beta = self.fernique_moment(beta)
        constant = F_beta * (1.0 + alpha * math.sqrt(math.pi / beta))
        return constant * math.exp(-beta * K * K + alpha * K)

    def descriptor(self) -> dict:
        return self.spectrum.descriptor()


def shared_ball_indicators(
    measure: GaussianMeasure, R: float, dims, n: int, rng: np.random.Generator
) -> dict[int, np.ndarray]:
    """Per-sample ball indicators 1{||P_k xi|| <= R} for each k in dims, shared noise.

    The same n draws from `measure` feed every projection level, so for each
    sample the indicator is nonincreasing in k (the projected norm can only
    grow with k).  Estimates are the column means.
    """
    dims = sorted(set(int(k) for k in dims))
    if any(k < 0 or k > measure.dimension for k in dims):
        raise ValueError("projection levels must lie in [0, dimension]")
    draws = measure.sample(rng, n)
    sq = draws * draws
    cum = np.concatenate([np.zeros((n, 1)), np.cumsum(sq, axis=1)], axis=1)
    return {k: (np.sqrt(cum[:, k]) <= R) for k in dims}
