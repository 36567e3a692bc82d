"""Metropolis-Hastings machinery: pCN and RWM proposals, acceptance, chain runs.

Proposals:
    pCN:  y = (1-2*delta)**(1/2) x + (2*delta)**(1/2) xi,   xi ~ gamma_m
    RWM:  y = x + (2*delta)**(1/2) xi,                      xi ~ gamma_m

Acceptance is computed entirely in log space and only exponentiated after
clamping: the RWM ratio contains the quadratic form sum x_i**2 / lambda_i**2
which overflows a naive exp already at moderate dimension.

Chain runners consume two named substreams per chain ("noise", "accept"), so
a run is reproducible from (kernel, x0, n, seed) and block sizes used for
pre-generating noise never change the result.  ``run_replicas`` evolves many
chains at once with per-replica streams and is bit-identical to running each
replica through ``run_chain_series`` on its own.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .measure import GaussianMeasure
from .rng import generator
from .target import TargetDensity

__all__ = [
    "KernelParams",
    "MHKernel",
    "ChainTrace",
    "pcn_propose",
    "rwm_propose",
    "log_accept_ratio",
    "accept_prob",
    "mh_step",
    "run_chain",
    "run_chain_series",
    "run_replicas",
    "coordinate",
    "save_trace",
    "load_trace",
    "export_trace_csv",
]


@dataclass(frozen=True)
class KernelParams:
    """Step size delta; rho = 1 - (1-2*delta)**(1/2) is derived on demand.

    delta must be positive.  The pCN kernel additionally requires
    delta <= 1/2 (checked by MHKernel); RWM accepts any positive delta
    since sweep scalings delta_m = s * m**(-a) start above 1/2 at small m.
    """

    delta: float

    def __post_init__(self):
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ValueError("delta must be positive and finite")

    @property
    def rho(self) -> float:
        if self.delta > 0.5:
            raise ValueError("rho is defined only for delta <= 1/2")
        return 1.0 - math.sqrt(1.0 - 2.0 * self.delta)


@dataclass(frozen=True, eq=False)
class MHKernel:
    """Proposal kind ("pcn" or "rwm") + step size + target Phi + reference measure."""

    kind: str
    params: KernelParams
    target: TargetDensity
    measure: GaussianMeasure

    def __post_init__(self):
        if self.kind not in ("pcn", "rwm"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "pcn" and self.params.delta > 0.5:
            raise ValueError("pCN requires delta in (0, 1/2]")
        if self.kind == "rwm" and np.any(self.measure.lambdas <= 0):
            raise ValueError("RWM needs strictly positive eigenvalues (C inverse appears)")

    @property
    def dimension(self) -> int:
        return self.measure.dimension

    def descriptor(self) -> dict:
        return {
            "kind": self.kind,
            "delta": self.params.delta,
            "target": self.target.descriptor(),
            "spectrum": self.measure.descriptor(),
        }


def _check_dims(x: np.ndarray, xi: np.ndarray) -> None:
    if x.shape[-1] != xi.shape[-1]:
        raise ValueError(f"dimension mismatch: state {x.shape[-1]}, noise {xi.shape[-1]}")


def pcn_propose(x: np.ndarray, xi: np.ndarray, params: KernelParams) -> np.ndarray:
    """(1-2*delta)**(1/2) x + (2*delta)**(1/2) xi.  At delta = 1/2 the state drops out."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    _check_dims(x, xi)
    return math.sqrt(1.0 - 2.0 * params.delta) * x + math.sqrt(2.0 * params.delta) * xi


def rwm_propose(x: np.ndarray, xi: np.ndarray, params: KernelParams) -> np.ndarray:
    """x + (2*delta)**(1/2) xi."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    _check_dims(x, xi)
    return x + math.sqrt(2.0 * params.delta) * xi


def _propose(kernel: MHKernel, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
    if kernel.kind == "pcn":
        return pcn_propose(x, xi, kernel.params)
    return rwm_propose(x, xi, kernel.params)


def _cameron_martin(x: np.ndarray, inv_lambdas: np.ndarray) -> np.ndarray:
    z = x * inv_lambdas
    return 0.5 * np.sum(z * z, axis=-1)


def log_accept_ratio(kernel: MHKernel, x: np.ndarray, y: np.ndarray) -> np.ndarray | float:
    """Log of the unclamped acceptance ratio; batched over leading axes.

    pCN: Phi(x) - Phi(y).  RWM: the same plus the Cameron-Martin difference
    (1/2) sum x_i**2/lambda_i**2 - (1/2) sum y_i**2/lambda_i**2.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lr = np.asarray(kernel.target.phi(x) - kernel.target.phi(y), dtype=float)
    if kernel.kind == "rwm":
        inv = 1.0 / kernel.measure.lambdas
        lr = lr + _cameron_martin(x, inv) - _cameron_martin(y, inv)
    return float(lr) if lr.ndim == 0 else lr


def accept_prob(kernel: MHKernel, x: np.ndarray, y: np.ndarray) -> np.ndarray | float:
    """1 and exp(log ratio): clamp in log space, then exponentiate."""
    lr = np.asarray(log_accept_ratio(kernel, x, y))
    out = np.exp(np.minimum(0.0, lr))
    return float(out) if out.ndim == 0 else out


def _log_u(u: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(u)


def mh_step(
    kernel: MHKernel,
    x: np.ndarray,
    rng: np.random.Generator,
    u_rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, bool, np.ndarray]:
    """One Metropolis-Hastings step; returns (x_next, accepted, proposal).

    Draws xi from the reference measure and u ~ Uniform[0,1); accepts iff
    u < alpha, evaluated as log u < min(0, log ratio).  The proposal is
    returned so couplings can reuse it without re-simulation.
    """
    x = np.asarray(x, dtype=float)
    xi = kernel.measure.sample(rng)
    proposal = _propose(kernel, x, xi)
    lr = log_accept_ratio(kernel, x, proposal)
    u = (u_rng if u_rng is not None else rng).random()
    accepted = bool(_log_u(np.float64(u)) < min(0.0, lr))
    return (proposal if accepted else x), accepted, proposal


@dataclass
class ChainTrace:
    """States (n+1, m), accept flags (n,), the chain seed and kernel descriptor."""

    states: np.ndarray
    accept_flags: np.ndarray
    seed: int
    kernel: dict

    @property
    def n_steps(self) -> int:
        return len(self.accept_flags)

    @property
    def dimension(self) -> int:
        return self.states.shape[1]


def _block_size(m: int, requested: int | None = None) -> int:
    cap = max(1, (1 << 22) // max(1, m))
    return min(requested, cap) if requested else cap


def _chain_loop(kernel, x0, n, noise_gen, u_gen, states=None, f=None, block=None):
    """Shared chain driver.  Noise comes in blocks; values match per-step draws."""
    m = kernel.dimension
    x = np.array(x0, dtype=float)
    if x.shape != (m,):
        raise ValueError(f"x0 must have shape ({m},)")
    lambdas = kernel.measure.lambdas
    rwm = kernel.kind == "rwm"
    inv = 1.0 / lambdas if rwm else None
    phi = kernel.target.phi

    accept = np.zeros(n, dtype=bool)
    series = None
    if f is not None:
        series = np.empty(n + 1, dtype=float)
        series[0] = f(x)
    if states is not None:
        states[0] = x

    lx = float(phi(x))
    cmx = float(_cameron_martin(x, inv)) if rwm else 0.0
    B = _block_size(m, block)
    k = 0
    while k < n:
        b = min(B, n - k)
        xi_block = lambdas * noise_gen.standard_normal((b, m))
        log_u = _log_u(u_gen.random(b))
        for j in range(b):
            y = _propose(kernel, x, xi_block[j])
            ly = float(phi(y))
            lr = lx - ly
            if rwm:
                cmy = float(_cameron_martin(y, inv))
                lr += cmx - cmy
            if log_u[j] < (lr if lr < 0.0 else 0.0):
                x = y
                lx = ly
                if rwm:
                    cmx = cmy
                accept[k + j] = True
            if states is not None:
                states[k + j + 1] = x
            if series is not None:
                series[k + j + 1] = f(x)
        k += b
    return x, accept, series


def run_chain(kernel: MHKernel, x0: np.ndarray, n: int, seed: int) -> ChainTrace:
    """Run n steps from x0; reproducible from (kernel, x0, n, seed)."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    states = np.empty((n + 1, kernel.dimension), dtype=float)
    _, accept, _ = _chain_loop(
        kernel, x0, n, generator(seed, "noise"), generator(seed, "accept"), states=states
    )
    return ChainTrace(states, accept, int(seed), kernel.descriptor())


def run_chain_series(
    kernel: MHKernel, x0: np.ndarray, n: int, seed: int, f=None
) -> tuple[np.ndarray | None, np.ndarray]:
    """Like run_chain but records only f(X_k) per step: (values (n+1,), accept (n,)).

    Constant memory in the dimension; the state path is bit-identical to
    run_chain with the same seed.  With f=None only accept flags are kept.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    _, accept, series = _chain_loop(
        kernel, x0, n, generator(seed, "noise"), generator(seed, "accept"), f=f
    )
    return series, accept


def coordinate(i: int):
    """Batched functional returning coordinate i (0-based)."""

    def f(x):
        return np.asarray(x, dtype=float)[..., i]

    return f


def run_replicas(
    kernel: MHKernel,
    n: int,
    n_replicas: int,
    seed: int,
    f,
    x0="stationary",
) -> tuple[np.ndarray, np.ndarray]:
    """Evolve n_replicas independent chains for n steps, recording f per step.

    f must be batched: (R, m) -> (R,).  Each replica r draws from its own
    named streams (seed, "replica", r, ...), so results do not depend on
    scheduling or on n_replicas.  x0 = "stationary" starts each replica from
    an exact reference-measure draw; otherwise pass a shared (m,) start or a
    (R, m) array.  Returns (values (R, n+1), accept flags (R, n)).
    """
    m = kernel.dimension
    R = n_replicas
    lambdas = kernel.measure.lambdas
    rwm = kernel.kind == "rwm"
    inv = 1.0 / lambdas if rwm else None
    phi = kernel.target.phi
    delta = kernel.params.delta
    cs = math.sqrt(1.0 - 2.0 * delta) if kernel.kind == "pcn" else 1.0
    rs = math.sqrt(2.0 * delta)

    noise_gens = [generator(seed, "replica", r, "noise") for r in range(R)]
    u_gens = [generator(seed, "replica", r, "accept") for r in range(R)]

    if isinstance(x0, str) and x0 == "stationary":
        x = np.stack(
            [kernel.measure.sample(generator(seed, "replica", r, "init")) for r in range(R)]
        )
    else:
        x = np.array(x0, dtype=float)
        if x.ndim == 1:
            x = np.tile(x, (R, 1))
        if x.shape != (R, m):
            raise ValueError(f"x0 must broadcast to ({R}, {m})")

    vals = np.empty((R, n + 1), dtype=float)
    accept = np.zeros((R, n), dtype=bool)
    vals[:, 0] = f(x)
    lx = np.asarray(phi(x), dtype=float)
    cmx = _cameron_martin(x, inv) if rwm else None

    B = max(1, (1 << 22) // max(1, R * m))
    k = 0
    while k < n:
        b = min(B, n - k)
        noise = lambdas * np.stack(
            [g.standard_normal((b, m)) for g in noise_gens], axis=1
        )
        log_u = _log_u(np.stack([g.random(b) for g in u_gens], axis=1))
        for j in range(b):
            y = cs * x + rs * noise[j]
            ly = np.asarray(phi(y), dtype=float)
            lr = lx - ly
            if rwm:
                cmy = _cameron_martin(y, inv)
                lr = lr + (cmx - cmy)
            acc = log_u[j] < np.minimum(0.0, lr)
            x = np.where(acc[:, None], y, x)
            lx = np.where(acc, ly, lx)
            if rwm:
                cmx = np.where(acc, cmy, cmx)
            accept[:, k + j] = acc
            vals[:, k + j + 1] = f(x)
        k += b
    return vals, accept


_MAGIC = b"FSMCMC01"


def save_trace(trace: ChainTrace, path) -> None:
    """Binary column format: magic, JSON header (m, n, seed, kernel), LE float64 states, uint8 flags."""
    header = {
        "m": trace.dimension,
        "n": trace.n_steps,
        "seed": trace.seed,
        "kernel": trace.kernel,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(np.uint64(len(blob)).astype("<u8").tobytes())
        fh.write(blob)
        fh.write(np.ascontiguousarray(trace.states, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(trace.accept_flags, dtype=np.uint8).tobytes())


def load_trace(path) -> ChainTrace:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a trace file")
        (hlen,) = np.frombuffer(fh.read(8), dtype="<u8")
        header = json.loads(fh.read(int(hlen)).decode("utf-8"))
        m, n = header["m"], header["n"]
        states = np.frombuffer(fh.read((n + 1) * m * 8), dtype="<f8").reshape(n + 1, m).copy()
        flags = np.frombuffer(fh.read(n), dtype=np.uint8).astype(bool)
    return ChainTrace(states, flags, header["seed"], header["kernel"])


def export_trace_csv(trace: ChainTrace, path, functional=None, name: str = "f") -> None:
    """CSV export: one row per step with either all coordinates or one functional.

    Columns are step, accept, then x_1..x_m (or `name`).  Step 0 has no
    acceptance decision and gets an empty accept cell.
    """
    m = trace.dimension
    with open(path, "w", newline="") as fh:
        if functional is None:
            fh.write("step,accept," + ",".join(f"x_{i}" for i in range(1, m + 1)) + "\n")
            for k, row in enumerate(trace.states):
                acc = "" if k == 0 else str(int(trace.accept_flags[k - 1]))
                fh.write(f"{k},{acc}," + ",".join(repr(float(v)) for v in row) + "\n")
        else:
            fh.write(f"step,accept,{name}\n")
            for k, row in enumerate(trace.states):
                acc = "" if k == 0 else str(int(trace.accept_flags[k - 1]))
                fh.write(f"{k},{acc},{float(functional(row))!r}\n")
