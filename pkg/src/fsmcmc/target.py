"""Log-density functionals Phi defining targets mu(dx) = M exp(-Phi(x)) gamma(dx).

The normalization M is never computed; Metropolis-Hastings only needs Phi
differences.  Each built-in carries a Lipschitz profile with analytically
derived constants, which the probe routines below check numerically.  Phi
callables are batched: input shape (..., m), output shape (...).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .measure import norm, uniform_ball

__all__ = [
    "PhiProfile",
    "TargetDensity",
    "AssumptionProfile",
    "zero_target",
    "norm_tilt",
    "power_tilt",
    "make_target",
    "phi_eval",
    "local_lipschitz_estimate",
    "acceptance_floor_probe",
]


@dataclass(frozen=True)
class PhiProfile:
    """Lipschitz metadata: kind is "zero", "global_lipschitz" or "local_lipschitz".

    Global profiles carry the constant L; local profiles carry an exponential
    envelope (M_kappa, kappa) dominating the ball-restricted Lipschitz constant.
    """

    kind: str
    L: float = 0.0
    M_kappa: float = 0.0
    kappa: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "global_lipschitz", "local_lipschitz"):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        for name in ("L", "M_kappa", "kappa"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and nonnegative")


@dataclass(frozen=True, eq=False)
class TargetDensity:
    """Named Phi with its profile.  Immutable; phi is pure and batched."""

    name: str
    phi: Callable[[np.ndarray], np.ndarray]
    profile: PhiProfile
    params: dict = None

    def descriptor(self) -> dict:
        return {"name": self.name, **(self.params or {})}


def zero_target() -> TargetDensity:
    """Phi = 0: the target coincides with the reference measure."""

    def phi(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1])

    return TargetDensity("zero", phi, PhiProfile("zero"), {})


def norm_tilt(L: float) -> TargetDensity:
    """Phi(x) = L * ||x||, globally Lipschitz with constant L."""
    if L < 0:
        raise ValueError("L must be nonnegative")

    def phi(x):
        return L * np.asarray(norm(x))

    return TargetDensity("norm_tilt", phi, PhiProfile("global_lipschitz", L=L), {"L": L})


def power_tilt(a: float, kappa: float = 0.5) -> TargetDensity:
    """Phi(x) = a * ||x||**(3/2), locally Lipschitz with constant (3/2) a sqrt(r) on B_r.

    The declared envelope M_kappa * exp(kappa * r) dominates (3/2) a sqrt(r):
    the optimal M is (3/2) a (2 kappa e)**(-1/2), padded by 1e-9 so the
    tangency radius r = 1/(2 kappa) stays strictly inside despite rounding.
    """
    if a < 0 or kappa <= 0:
        raise ValueError("need a >= 0 and kappa > 0")
    M_kappa = 1.5 * a / math.sqrt(2.0 * kappa * math.e) * (1.0 + 1e-9)

    def phi(x):
        return a * np.asarray(norm(x)) ** 1.5

    return TargetDensity(
        "power_tilt",
        phi,
        PhiProfile("local_lipschitz", M_kappa=M_kappa, kappa=kappa),
        {"a": a, "kappa": kappa},
    )


_BUILTINS = {"zero": zero_target, "norm_tilt": norm_tilt, "power_tilt": power_tilt}


def make_target(name: str, **params) -> TargetDensity:
    """Instantiate a built-in target by name, e.g. make_target("norm_tilt", L=2.0)."""
    if name not in _BUILTINS:
        raise ValueError(f"unknown target {name!r}; built-ins: {sorted(_BUILTINS)}")
    return _BUILTINS[name](**params)


def phi_eval(target: TargetDensity, x: np.ndarray) -> float:
    """Evaluate Phi at a single state."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("state must be finite")
    return float(target.phi(x))


def local_lipschitz_estimate(
    target: TargetDensity,
    r: float,
    probes: int,
    rng: np.random.Generator,
    dimension: int = 2,
) -> float:
    """Max difference quotient |Phi(x)-Phi(y)| / ||x-y|| over sampled pairs in B_r(0).

    A lower bound on the ball-restricted Lipschitz constant.  `probes` points
    are drawn uniformly from the ball and all unordered pairs are evaluated.
    """
    if r <= 0:
        raise ValueError("r must be positive")
    if probes < 2:
        raise ValueError("need at least two probe points")
    pts = uniform_ball(np.zeros(dimension), r, probes, rng)
    vals = np.asarray(target.phi(pts), dtype=float)
    i, j = np.triu_indices(probes, k=1)
    dists = norm(pts[i] - pts[j])
    dphi = np.abs(vals[i] - vals[j])
    mask = dists > 0
    if not np.any(mask):
        return 0.0
    return float(np.max(dphi[mask] / dists[mask]))


@dataclass(frozen=True)
class AssumptionProfile:
    """Lower-acceptance-floor hypothesis data: threshold R, floor log-level alpha_l,
    and the ball-radius rule r(s), either constant or r * s**a with a in (1/2, 1).

    At use sites the radius is clamped to (rho/2) * s, which only weakens the
    floor hypothesis and is therefore always safe.
    """

    R: float
    alpha_l: float
    r_kind: str = "constant"
    r: float = 1.0
    a: float = 0.75

    def __post_init__(self):
        if self.R <= 0:
            raise ValueError("R must be positive")
        if self.r_kind not in ("constant", "power"):
            raise ValueError(f"unknown radius rule {self.r_kind!r}")
        if self.r < 0:
            raise ValueError("r must be nonnegative")
        if self.r_kind == "power" and not 0.5 < self.a < 1.0:
            raise ValueError("power radius rule needs exponent a in (1/2, 1)")

    def radius(self, s: float) -> float:
        if self.r_kind == "constant":
            return self.r
        return self.r * s**self.a

    def clamped_radius(self, s: float, rho: float) -> float:
        return min(self.radius(s), 0.5 * rho * s)


def acceptance_floor_probe(
    target: TargetDensity,
    profile: AssumptionProfile,
    x: np.ndarray,
    probes: int,
    rng: np.random.Generator,
    rho: float,
) -> float:
    """Monte Carlo estimate of inf exp(Phi(x) - Phi(z)) over z in the proposal-mean ball.

    The ball is B_{r(||x||)}((1-rho) x) with the radius clamped to (rho/2)||x||.
    Sampling gives an upper bound on the true infimum (the inf over a sampled
    subset); built-ins carry analytic floors the estimate must respect.
    """
    x = np.asarray(x, dtype=float)
    s = float(norm(x))
    if s < profile.R:
        raise ValueError(f"||x|| = {s} below the profile threshold R = {profile.R}")
    if probes < 1:
        raise ValueError("need at least one probe")
    radius = profile.clamped_radius(s, rho)
    zs = uniform_ball((1.0 - rho) * x, radius, probes, rng)
    phi_x = float(target.phi(x))
    phi_z = np.asarray(target.phi(zs), dtype=float)
    return float(np.exp(phi_x - np.max(phi_z)))
