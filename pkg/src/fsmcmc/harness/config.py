"""Experiment configuration: one JSON or TOML file, validated up front.

Validation failures raise ConfigError carrying the offending field path, so
the CLI can report "scaling.a: ..." style messages and exit with the config
error code.  Seeds are mandatory: there is no wall-clock fallback anywhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib  # py >= 3.11
except ModuleNotFoundError:  # pragma: no cover - py 3.10 fallback
    import tomli as tomllib

EXPERIMENTS = (
    "pcn_uniform_gap",
    "rwm_decay",
    "harris_verify",
    "ergodic_suite",
    "conductance_sweep",
)

# experiments whose statistics come from chain runs; these need real lengths
_CHAIN_EXPERIMENTS = ("pcn_uniform_gap", "ergodic_suite")


class ConfigError(Exception):
    """Invalid configuration; `field` holds the dotted path of the bad entry."""

    def __init__(self, field_path: str, message: str):
        self.field = field_path
        super().__init__(f"{field_path}: {message}")


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    spectrum: dict
    target: dict
    m_list: list[int]
    delta: float | None = None
    scaling: dict | None = None
    n_steps: int = 0
    n_replicas: int = 1
    params: dict = field(default_factory=dict)
    output: str | None = None

    def delta_for(self, m: int) -> float:
        """Step size at dimension m: fixed delta or the scaling s * m**(-a)."""
        if self.delta is not None:
            return float(self.delta)
        return float(self.scaling["s"]) * float(m) ** (-float(self.scaling["a"]))

    def scaling_exponent(self) -> float | None:
        return float(self.scaling["a"]) if self.scaling else None


_TOP_KEYS = {
    "experiment",
    "seed",
    "spectrum",
    "target",
    "m_list",
    "delta",
    "scaling",
    "n_steps",
    "n_replicas",
    "params",
    "output",
}


def _require(cond: bool, field_path: str, message: str) -> None:
    if not cond:
        raise ConfigError(field_path, message)


def validate_config(raw: dict) -> ExperimentConfig:
    """Check a parsed mapping and return the typed config."""
    _require(isinstance(raw, dict), "<root>", "config must be a table/object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")

    exp = raw.get("experiment")
    _require(exp in EXPERIMENTS, "experiment", f"must be one of {EXPERIMENTS}")

    _require("seed" in raw, "seed", "mandatory; no wall-clock default")
    seed = raw["seed"]
    _require(isinstance(seed, int) and not isinstance(seed, bool), "seed", "must be an integer")

    spectrum = raw.get("spectrum")
    _require(isinstance(spectrum, dict), "spectrum", "must be a table")
    rule = spectrum.get("rule")
    _require(rule in ("power_law", "explicit"), "spectrum.rule", "must be power_law or explicit")
    if rule == "power_law":
        q = spectrum.get("q")
        _require(isinstance(q, (int, float)) and q > 0, "spectrum.q", "must be a positive number")
    else:
        lambdas = spectrum.get("lambdas")
        _require(
            isinstance(lambdas, list) and lambdas and all(isinstance(v, (int, float)) for v in lambdas),
            "spectrum.lambdas",
            "must be a nonempty list of numbers",
        )

    target = raw.get("target")
    _require(isinstance(target, dict), "target", "must be a table")
    _require(
        target.get("name") in ("zero", "norm_tilt", "power_tilt"),
        "target.name",
        "must be a built-in target name",
    )

    m_list = raw.get("m_list")
    _require(isinstance(m_list, list) and len(m_list) > 0, "m_list", "must be a nonempty list")
    _require(
        all(isinstance(m, int) and m > 0 for m in m_list),
        "m_list",
        "entries must be positive integers",
    )
    _require(list(m_list) == sorted(m_list), "m_list", "must be ascending")
    if rule == "explicit":
        _require(
            max(m_list) <= len(spectrum["lambdas"]),
            "m_list",
            "cannot exceed the explicit spectrum length",
        )

    delta = raw.get("delta")
    scaling = raw.get("scaling")
    _require(
        (delta is None) != (scaling is None),
        "delta",
        "exactly one of `delta` or `scaling` must be given",
    )
    if delta is not None:
        _require(isinstance(delta, (int, float)) and delta > 0, "delta", "must be positive")
    else:
        _require(isinstance(scaling, dict), "scaling", "must be a table {s, a}")
        _require(
            isinstance(scaling.get("s"), (int, float)) and scaling["s"] > 0,
            "scaling.s",
            "must be positive",
        )
        _require(
            isinstance(scaling.get("a"), (int, float)) and scaling["a"] >= 0,
            "scaling.a",
            "must be nonnegative",
        )

    n_steps = raw.get("n_steps", 0)
    _require(isinstance(n_steps, int) and n_steps >= 0, "n_steps", "must be a nonnegative integer")
    if exp in _CHAIN_EXPERIMENTS:
        _require(n_steps >= 1000, "n_steps", "statistical experiments need n_steps >= 1000")

    n_replicas = raw.get("n_replicas", 1)
    _require(
        isinstance(n_replicas, int) and n_replicas >= 1, "n_replicas", "must be a positive integer"
    )

    params = raw.get("params", {})
    _require(isinstance(params, dict), "params", "must be a table")

    output = raw.get("output")
    if output is not None:
        _require(isinstance(output, str), "output", "must be a string path")

    return ExperimentConfig(
        experiment=exp,
        seed=int(seed),
        spectrum=dict(spectrum),
        target=dict(target),
        m_list=[int(m) for m in m_list],
        delta=float(delta) if delta is not None else None,
        scaling=dict(scaling) if scaling is not None else None,
        n_steps=int(n_steps),
        n_replicas=int(n_replicas),
        params=dict(params),
        output=output,
    )


def load_config(path, seed_override: int | None = None) -> ExperimentConfig:
    """Parse and validate a config file; .toml and .json are both accepted."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    text = path.read_bytes()
    try:
        if path.suffix == ".toml":
            raw = tomllib.loads(text.decode("utf-8"))
        elif path.suffix == ".json":
            raw = json.loads(text.decode("utf-8"))
        else:
            raise ConfigError("<file>", f"unsupported config extension {path.suffix!r}")
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError("<file>", f"parse failure: {exc}") from exc
    if seed_override is not None:
        raw = dict(raw)
        raw["seed"] = int(seed_override)
    return validate_config(raw)
