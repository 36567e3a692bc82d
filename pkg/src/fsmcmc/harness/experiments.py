"""Experiment drivers: dimension sweeps, verdicts, CSV/JSON emission.

Each experiment turns a validated config into SweepRow records (one flat CSV
schema for everything) plus named verdicts.  All randomness flows through
named substreams of the config seed, and any thread-level parallelism is a
static partition over independent cells, so outputs are byte-identical
across runs and across --threads settings.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..coupling import (
    DistanceParams,
    estimate_contraction,
    estimate_lyapunov,
    estimate_smallness,
    harris_certificate,
    near_diagonal_sampler,
    smallness_min_steps,
)
from ..diagnostics import (
    burn_in,
    clt_test,
    gap_from_acf_linear,
    halfspace_gap_bound,
    iact_and_variance,
    mse_bound,
    rwm_acceptance_bound,
    rwm_acceptance_log_bound,
    RwmBoundParams,
    slln_probe,
)
from ..kernel import KernelParams, MHKernel, coordinate, run_chain_series, run_replicas
from ..measure import GaussianMeasure, SpectrumSpec
from ..rng import derive_seed, generator
from ..target import make_target
from .config import ConfigError, ExperimentConfig

__all__ = ["SweepRow", "ExperimentResult", "run_experiment", "CSV_HEADER", "write_rows"]

CSV_HEADER = "m,delta,a,method,value,is_upper_bound,ci_lo,ci_hi,n_samples,seed"


@dataclass
class SweepRow:
    m: int
    delta: float
    a: float | None
    method: str
    value: float
    is_upper_bound: bool
    ci_lo: float | None
    ci_hi: float | None
    n_samples: int
    seed: int

    def cells(self) -> list[str]:
        def num(v):
            if v is None:
                return ""
            v = float(v)
            if math.isnan(v):
                return "degenerate"
            return repr(v)

        return [
            str(self.m),
            num(self.delta),
            num(self.a),
            self.method,
            num(self.value),
            "true" if self.is_upper_bound else "false",
            num(self.ci_lo),
            num(self.ci_hi),
            str(self.n_samples),
            str(self.seed),
        ]


def write_rows(path, rows: list[SweepRow]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(",".join(row.cells()) + "\n")


@dataclass
class ExperimentResult:
    experiment: str
    rows: list[SweepRow]
    verdicts: dict
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())


def _py(obj):
    """Recursively convert numpy scalars/arrays for JSON emission."""
    if isinstance(obj, dict):
        return {k: _py(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_py(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_py(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _pmap(fn, items, threads: int | None):
    if threads and threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _measure(config: ExperimentConfig, m: int) -> GaussianMeasure:
    spec = config.spectrum
    if spec["rule"] == "power_law":
        return GaussianMeasure(SpectrumSpec.power_law(spec["q"], m))
    return GaussianMeasure(SpectrumSpec.explicit(spec["lambdas"][:m]))


def _target(config: ExperimentConfig):
    params = {k: v for k, v in config.target.items() if k != "name"}
    return make_target(config.target["name"], **params)


def _kernel(config: ExperimentConfig, m: int, kind: str) -> MHKernel:
    return MHKernel(kind, KernelParams(config.delta_for(m)), _target(config), _measure(config, m))


# ---------------------------------------------------------------------------
# pcn_uniform_gap


def _pcn_gap_cell(config: ExperimentConfig, m: int):
    kernel = _kernel(config, m, "pcn")
    chain_seed = derive_seed(config.seed, "gap", m)
    x0 = kernel.measure.sample(generator(config.seed, "gap", m, "start"))
    series, _ = run_chain_series(kernel, x0, config.n_steps, chain_seed, f=lambda x: x[0])
    gap = gap_from_acf_linear(series, kernel_info=kernel.descriptor())
    iact = iact_and_variance(series)
    return m, kernel.params.delta, gap, iact, chain_seed


def _run_pcn_uniform_gap(config: ExperimentConfig, threads) -> ExperimentResult:
    cells = _pmap(lambda m: _pcn_gap_cell(config, m), config.m_list, threads)
    rows = []
    gaps = []
    iacts = []
    for m, delta, gap, iact, chain_seed in cells:
        rows.append(
            SweepRow(m, delta, None, "acf_linear_functional", gap.estimate_or_bound, False,
                     gap.ci[0], gap.ci[1], config.n_steps, chain_seed)
        )
        bm_gap = 2.0 / (iact.iact_batch + 1.0)
        rows.append(
            SweepRow(m, delta, None, "batch_means", bm_gap, False, None, None,
                     config.n_steps, chain_seed)
        )
        rows.append(
            SweepRow(m, delta, None, "iact_acf", iact.iact_acf, False, None, None,
                     config.n_steps, chain_seed)
        )
        rows.append(
            SweepRow(m, delta, None, "iact_batch_means", iact.iact_batch, False, None, None,
                     config.n_steps, chain_seed)
        )
        gaps.append((gap.estimate_or_bound, gap.params["se"]))
        iacts.append(iact.iact_acf)

    delta = config.delta
    r = math.sqrt(1.0 - 2.0 * delta)
    rho = 1.0 - r
    iact_truth = (1.0 + r) / (1.0 - r)
    within_rho = all(abs(g - rho) <= 0.10 * rho for g, _ in gaps)
    band = all(
        abs(gaps[i][0] - gaps[j][0]) <= 3.0 * math.hypot(gaps[i][1], gaps[j][1])
        for i in range(len(gaps))
        for j in range(i + 1, len(gaps))
    )
    iact_ok = all(abs(t - iact_truth) <= 0.15 * iact_truth for t in iacts)
    verdicts = {
        "gap_within_10pct_of_rho": bool(within_rho),
        "gap_uniform_3se_band": bool(band),
        "iact_within_15pct_of_ar1": bool(iact_ok),
    }
    details = {"rho": rho, "iact_truth": iact_truth, "gaps": gaps, "iacts": iacts}
    return ExperimentResult("pcn_uniform_gap", rows, verdicts, _py(details))


# ---------------------------------------------------------------------------
# rwm_decay


def _rwm_zero_acceptance(ms, deltas, sigma, radius, n, rng, chunk=20000):
    """Mean stationary RWM acceptance for the zero target, all dimensions at once.

    For Phi = 0 the log ratio reduces per coordinate to -(sqrt(2 delta) g_i z_i
    + delta z_i**2) with g, z standard normal, independent of the spectrum, so
    one (n, max_m) draw serves every m by cumulative sums.  The ball-restricted
    column conditions on sum i**(2 sigma - 2) g_i**2 <= radius (the squared
    weighted norm under the 1/i spectrum).  Shared draws across m keep the
    dimension ordering sharp.
    """
    ms = list(ms)
    max_m = max(ms)
    idx = np.asarray(ms) - 1
    weights = np.arange(1, max_m + 1, dtype=float) ** (2.0 * sigma - 2.0)
    sums = {m: [0.0, 0.0, 0] for m in ms}  # alpha sum, alpha^2 sum, count
    ball = {m: [0.0, 0.0, 0] for m in ms}
    done = 0
    while done < n:
        b = min(chunk, n - done)
        g = rng.standard_normal((b, max_m))
        z = rng.standard_normal((b, max_m))
        ga = np.cumsum(g * z, axis=1)[:, idx]
        zb = np.cumsum(z * z, axis=1)[:, idx]
        w = np.cumsum(weights * g * g, axis=1)[:, idx]
        for j, m in enumerate(ms):
            d = deltas[m]
            la = -math.sqrt(2.0 * d) * ga[:, j] - d * zb[:, j]
            alpha = np.exp(np.minimum(0.0, la))
            sums[m][0] += float(alpha.sum())
            sums[m][1] += float((alpha**2).sum())
            sums[m][2] += b
            mask = w[:, j] <= radius
            k = int(mask.sum())
            if k:
                sel = alpha[mask]
                ball[m][0] += float(sel.sum())
                ball[m][1] += float((sel**2).sum())
                ball[m][2] += k
        done += b

    def finish(acc):
        total, sq, count = acc
        if count < 2:
            return float("nan"), float("nan"), count
        mean = total / count
        var = max(sq / count - mean * mean, 0.0)
        return mean, math.sqrt(var / count), count

    return {m: (finish(sums[m]), finish(ball[m])) for m in ms}


def _run_rwm_decay(config: ExperimentConfig, threads) -> ExperimentResult:
    if config.target.get("name") != "zero":
        raise ConfigError("target.name", "rwm_decay is defined for the zero target")
    if config.spectrum.get("rule") != "power_law" or float(config.spectrum.get("q", 0)) != 1.0:
        raise ConfigError("spectrum", "rwm_decay uses the 1/i counterexample spectrum")
    params = config.params
    n_samples = int(params.get("n_samples", 200_000))
    a = config.scaling_exponent() or 0.0
    bound_params = RwmBoundParams(a=a, r=float(params.get("ball_radius", 6.0)))
    deltas = {m: config.delta_for(m) for m in config.m_list}
    seed = derive_seed(config.seed, "rwm_accept")
    table = _rwm_zero_acceptance(
        config.m_list, deltas, bound_params.sigma, bound_params.r,
        n_samples, generator(config.seed, "rwm_accept"),
    )

    rows = []
    means = []
    ball_means = []
    bounds = []
    for m in config.m_list:
        (mean, se, count), (bmean, bse, bcount) = table[m]
        lam = bound_params.lambda_for(m)
        bound = rwm_acceptance_bound(m, deltas[m], lam, bound_params.r, bound_params.sigma)
        rows.append(SweepRow(m, deltas[m], a, "mean_accept", mean, False,
                             mean - 3 * se, mean + 3 * se, count, seed))
        rows.append(SweepRow(m, deltas[m], a, "mean_accept_ball", bmean, False,
                             bmean - 3 * bse if bcount > 1 else None,
                             bmean + 3 * bse if bcount > 1 else None, bcount, seed))
        rows.append(SweepRow(m, deltas[m], a, "analytic_rwm_bound", min(1.0, bound), True,
                             None, None, 0, seed))
        means.append(mean)
        ball_means.append((bmean, bse, bcount))
        bounds.append(bound)

    # closed-form super-polynomial rate, evaluated where the asymptotics bind
    rate_exponents = params.get("rate_m_log2", list(range(24, 35)))
    rate_ok = {}
    for p in (1, 2, 4):
        logs = []
        for k in rate_exponents:
            m = 2**k
            delta_m = config.delta_for(m)
            lb = rwm_acceptance_log_bound(
                m, delta_m, bound_params.lambda_for(m), bound_params.r, bound_params.sigma
            )
            logs.append(p * k * math.log(2.0) + lb)
        rate_ok[p] = all(logs[i + 1] < logs[i] for i in range(len(logs) - 1))
        for k, lv in zip(rate_exponents, logs):
            rows.append(SweepRow(2**k, config.delta_for(2**k), a,
                                 f"log_mp_bound_p{p}", lv, True, None, None, 0, seed))

    decreasing = all(means[i + 1] < means[i] for i in range(len(means) - 1))
    within = all(
        bm <= bound + 3 * bse
        for (bm, bse, bc), bound in zip(ball_means, bounds)
        if bc > 1
    )
    verdicts = {
        "acceptance_strictly_decreasing": bool(decreasing),
        "acceptance_within_analytic_bound": bool(within),
        "superpolynomial_rate_p1": bool(rate_ok[1]),
        "superpolynomial_rate_p2": bool(rate_ok[2]),
        "superpolynomial_rate_p4": bool(rate_ok[4]),
    }
    details = {"means": means, "bounds": bounds, "deltas": deltas}
    return ExperimentResult("rwm_decay", rows, verdicts, _py(details))


# ---------------------------------------------------------------------------
# harris_verify


def _run_harris_verify(config: ExperimentConfig, threads) -> ExperimentResult:
    params = config.params
    rows = []
    verdicts = {}
    details = {}
    for m in config.m_list:
        kernel = _kernel(config, m, "pcn")
        delta = kernel.params.delta
        scale = math.sqrt(float(np.sum(kernel.measure.lambdas**2)))
        dparams = DistanceParams(
            epsilon=float(params.get("epsilon", 0.1)),
            eta=float(params.get("eta", 0.0)),
            v_kind=params.get("v_kind", "power_norm"),
            v_param=float(params.get("v_param", 2.0)),
        )
        radii = params.get("radii") or list(np.linspace(0.5, 4.0, 10) * scale)
        lyap = estimate_lyapunov(
            kernel, dparams, radii,
            int(params.get("lyapunov_samples", 20_000)),
            generator(config.seed, "lyapunov", m),
        )
        sampler = near_diagonal_sampler(
            kernel.measure, dparams, float(params.get("pair_radius", 2.0 * scale))
        )
        contraction = estimate_contraction(
            kernel, dparams, sampler,
            int(params.get("n_pairs", 1000)),
            generator(config.seed, "contraction", m),
            samples_per_pair=int(params.get("contraction_samples", 256)),
        )
        n_small = int(params.get("smallness_steps", 0)) or smallness_min_steps(
            kernel, dparams, lyap.K_hat
        )
        smallness = estimate_smallness(
            kernel, dparams, lyap.K_hat, n_small,
            int(params.get("smallness_pairs", 200)),
            generator(config.seed, "smallness", m),
            samples_per_pair=int(params.get("smallness_samples", 64)),
        )
        cert = harris_certificate(
            lyap, contraction, smallness,
            seeds={"root": config.seed, "m": m},
        )
        chain_seed = config.seed
        rows.append(SweepRow(m, delta, None, "lyapunov_l", lyap.l_hat, False,
                             lyap.l_hat - 2.576 * lyap.l_se, lyap.l_hat + 2.576 * lyap.l_se,
                             lyap.samples_per_point, chain_seed))
        rows.append(SweepRow(m, delta, None, "lyapunov_K", lyap.K_hat, False, None, None,
                             lyap.samples_per_point, chain_seed))
        rows.append(SweepRow(m, delta, None, "contraction_c", contraction.c_hat, False,
                             contraction.ci[0], contraction.ci[1],
                             contraction.n_pairs, chain_seed))
        rows.append(SweepRow(m, delta, None, "smallness_s", smallness.s_hat, False,
                             smallness.ci[0], smallness.ci[1], smallness.n_pairs, chain_seed))
        verdicts[f"premises_hold_m{m}"] = cert.premises_hold
        details[f"certificate_m{m}"] = cert.to_dict()
    return ExperimentResult("harris_verify", rows, verdicts, _py(details))


# ---------------------------------------------------------------------------
# ergodic_suite


def _run_ergodic_suite(config: ExperimentConfig, threads) -> ExperimentResult:
    params = config.params
    m = config.m_list[0]
    kernel = _kernel(config, m, "pcn")
    delta = kernel.params.delta
    lam1 = float(kernel.measure.lambdas[0])
    beta = math.sqrt(1.0 - 2.0 * delta)
    sigma2_truth = lam1 * lam1 * (1.0 + beta) / (1.0 - beta)
    seed = derive_seed(config.seed, "replicas")

    vals, _ = run_replicas(kernel, config.n_steps, config.n_replicas, seed, coordinate(0))
    clt = clt_test(vals)
    rows = [
        SweepRow(m, delta, None, "clt_sigma2", clt.sigma2_hat, False, None, None,
                 config.n_replicas, seed),
        SweepRow(m, delta, None, "clt_ks_statistic", clt.ks_statistic, False, None,
                 clt.ks_critical_01, config.n_replicas, seed),
    ]

    mse_grid = [int(n) for n in params.get("mse_n_grid", [100, 1000, 10000]) if n <= config.n_steps]
    prefix = np.cumsum(vals[:, 1:] / lam1, axis=1)
    mse_ok = True
    for n in mse_grid:
        s_n = prefix[:, n - 1] / n
        emp = float(np.mean(s_n**2))
        bound = mse_bound(n, beta)
        rows.append(SweepRow(m, delta, None, f"mse_n{n}", emp, False, None, bound,
                             config.n_replicas, seed))
        mse_ok = mse_ok and emp <= bound

    scale = math.sqrt(float(np.sum(kernel.measure.lambdas**2)))
    direction = generator(config.seed, "slln", "dir").standard_normal(m)
    direction /= math.sqrt(float(np.sum(direction**2)))
    starts = {"origin": np.zeros(m), "far": 10.0 * scale * direction}
    n_grid = params.get("slln_n_grid") or [max(10, config.n_steps // 100), config.n_steps]
    slln = slln_probe(kernel, coordinate(0), starts, n_grid, derive_seed(config.seed, "slln"))
    for label, n, err in slln.rows:
        rows.append(SweepRow(m, delta, None, f"slln_{label}_n{n}", err, False, None, None, 1, seed))

    pin = burn_in(4.0, math.exp(-1.0), 1.0)
    verdicts = {
        "clt_ks_pass_at_1pct": clt.passed,
        "clt_sigma2_within_15pct": bool(abs(clt.sigma2_hat - sigma2_truth) <= 0.15 * sigma2_truth),
        "mse_within_bound": bool(mse_ok),
        "slln_all_starts": all(slln.passed.values()),
        "burnin_pin_exact": pin == 5,
    }
    details = {
        "sigma2_truth": sigma2_truth,
        "sigma2_hat": clt.sigma2_hat,
        "beta": beta,
        "burn_in_pin": pin,
        "slln_mu_hat": slln.mu_hat,
    }
    return ExperimentResult("ergodic_suite", rows, verdicts, _py(details))


# ---------------------------------------------------------------------------
# conductance_sweep


def _halfspace_cell(config: ExperimentConfig, a: float, m: int, s: float, n: int):
    delta = s * float(m) ** (-a)
    kernel = MHKernel("rwm", KernelParams(delta), _target(config), _measure(config, m))
    lam1 = float(kernel.measure.lambdas[0])
    x1 = lam1 * generator(config.seed, "half", repr(a), m).standard_normal(n)
    report = halfspace_gap_bound(kernel, x1)
    return delta, report


def _run_conductance_sweep(config: ExperimentConfig, threads) -> ExperimentResult:
    params = config.params
    if config.scaling is None:
        raise ConfigError("scaling", "conductance_sweep needs a step-size scaling")
    s = float(config.scaling["s"])
    a_list = [float(a) for a in params.get("a_list", [config.scaling["a"]])]
    n = int(params.get("n_samples", 200_000))
    seed = config.seed

    rows = []
    verdicts = {}
    details = {}
    for a in a_list:
        cells = _pmap(lambda m: _halfspace_cell(config, a, m, s, n), config.m_list, threads)
        logs = []
        for m, (delta, report) in zip(config.m_list, cells):
            rows.append(SweepRow(m, delta, a, "conductance_half_space",
                                 report.estimate_or_bound, True,
                                 report.ci[0] if report.ci else None,
                                 report.ci[1] if report.ci else None, n, seed))
            logs.append((math.log(m), math.log(report.params["raw"])))
        slope = np.polyfit([x for x, _ in logs], [y for _, y in logs], 1)[0]
        verdicts[f"halfspace_slope_a{a:g}"] = bool(abs(slope + a / 2.0) <= 0.1)
        details[f"slope_a{a:g}"] = float(slope)

    if params.get("orthant_check", True):
        kernel = MHKernel("rwm", KernelParams(0.5), _target(config), _measure(config, 1))
        x1 = float(kernel.measure.lambdas[0]) * generator(seed, "orthant").standard_normal(n)
        report = halfspace_gap_bound(kernel, x1)
        se = report.params["se"]
        rows.append(SweepRow(1, 0.5, None, "conductance_half_space",
                             report.estimate_or_bound, True,
                             report.ci[0] if report.ci else None,
                             report.ci[1] if report.ci else None, n, seed))
        verdicts["orthant_exact_half"] = bool(abs(report.params["raw"] - 0.5) <= 3.0 * se)
        details["orthant_value"] = report.params["raw"]

    return ExperimentResult("conductance_sweep", rows, verdicts, _py(details))


_RUNNERS = {
    "pcn_uniform_gap": _run_pcn_uniform_gap,
    "rwm_decay": _run_rwm_decay,
    "harris_verify": _run_harris_verify,
    "ergodic_suite": _run_ergodic_suite,
    "conductance_sweep": _run_conductance_sweep,
}


def run_experiment(config: ExperimentConfig, threads: int | None = None) -> ExperimentResult:
    """Dispatch on config.experiment; deterministic given (config, seed)."""
    runner = _RUNNERS[config.experiment]
    return runner(config, threads)


def write_result(result: ExperimentResult, outdir) -> dict:
    """Write sweep.csv and result.json into outdir; returns the paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / "sweep.csv"
    write_rows(csv_path, result.rows)
    payload = {
        "experiment": result.experiment,
        "passed": result.passed,
        "verdicts": _py(result.verdicts),
        "details": _py(result.details),
    }
    json_path = outdir / "result.json"
    json_path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return {"csv": csv_path, "json": json_path}
