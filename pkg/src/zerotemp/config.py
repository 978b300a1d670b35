"""Experiment configuration: parsing and validation."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

from .potentials import _BUILTINS


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        where = f"line {line}: " if line else ""
        super().__init__(f"{where}{message}")
        self.line = line


@dataclass
class Tolerances:
    eigen_tol: float = 1e-12
    calib_tol: float = 1e-12
    omega_tol: float | None = None
    peierls_tol: float = 1e-12
    ldp_tol: float = 0.1


@dataclass
class Flags:
    dump_kernel: bool = False
    run_ldp: bool = True
    run_mane: bool = True
    run_graph: bool = True


@dataclass
class ExperimentConfig:
    potential: dict
    perturbation: dict | None = None
    n: int = 201
    betas: list = field(default_factory=lambda: [4.0, 8.0, 16.0, 32.0])
    cylinders: list = field(default_factory=list)
    tolerances: Tolerances = field(default_factory=Tolerances)
    output: str = "out"
    seed: int = 0
    flags: Flags = field(default_factory=Flags)
    k_max: int | None = None
    sample_length: int = 10_000

    def numeric_dict(self) -> dict:
        """Everything that affects numbers; the output location does not."""
        d = asdict(self)
        d.pop("output")
        return d

    def hash(self) -> str:
        blob = json.dumps(self.numeric_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _line_of(text: str, key: str):
    needle = f'"{key}"'
    for no, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return no
    return None


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object", 1)

    def fail(key, msg):
        raise ConfigError(f"{key}: {msg}", _line_of(text, key))

    known = {f for f in ExperimentConfig.__dataclass_fields__}
    for key in raw:
        if key not in known:
            fail(key, "unknown key")
    pot = raw.get("potential")
    if not isinstance(pot, dict) or "name" not in pot:
        fail("potential", 'expected {"name": ..., "params": [...]}')
    if pot["name"] not in _BUILTINS:
        fail("name", f"unknown potential {pot['name']!r}")
    if len(pot.get("params", [])) != _BUILTINS[pot["name"]][1]:
        fail("params", f"{pot['name']} takes {_BUILTINS[pot['name']][1]} parameter(s)")

    pert = raw.get("perturbation")
    if pert is not None:
        poly = pert.get("poly") if isinstance(pert, dict) else None
        if not isinstance(poly, list) or not all(isinstance(c, (int, float)) for c in poly):
            fail("perturbation", 'expected {"poly": [c0, c1, ...]}')

    n = raw.get("n", 201)
    if not isinstance(n, int) or isinstance(n, bool) or n < 2:
        fail("n", f"grid size must be an integer >= 2, got {n!r}")

    betas = raw.get("betas", [4, 8, 16, 32])
    if not isinstance(betas, list) or not betas or not all(isinstance(b, (int, float)) and b > 0 for b in betas):
        fail("betas", "expected a nonempty list of positive numbers")
    if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        fail("betas", "must be strictly increasing")

    cylinders = raw.get("cylinders", [])
    if not isinstance(cylinders, list):
        fail("cylinders", "expected a list of interval lists")
    for cyl in cylinders:
        if not isinstance(cyl, list) or not cyl:
            fail("cylinders", "each cylinder is a nonempty list of [a, b] intervals")
        for iv in cyl:
            if not (isinstance(iv, list) and len(iv) == 2 and 0.0 <= iv[0] < iv[1] <= 1.0):
                fail("cylinders", f"interval {iv!r} must satisfy 0 <= a < b <= 1")

    tol_raw = raw.get("tolerances", {}) or {}
    tol_fields = Tolerances.__dataclass_fields__
    for key, val in tol_raw.items():
        if key not in tol_fields:
            fail(key, "unknown tolerance")
        if val is not None and (not isinstance(val, (int, float)) or val <= 0):
            fail(key, "tolerance must be a positive number")
    flags_raw = raw.get("flags", {}) or {}
    for key, val in flags_raw.items():
        if key not in Flags.__dataclass_fields__:
            fail(key, "unknown flag")
        if not isinstance(val, bool):
            fail(key, "flag must be true or false")

    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        fail("seed", "seed must be a nonnegative integer")
    k_max = raw.get("k_max")
    if k_max is not None and (not isinstance(k_max, int) or k_max < 3):
        fail("k_max", "k_max must be an integer >= 3")
    sample_length = raw.get("sample_length", 10_000)
    if not isinstance(sample_length, int) or sample_length < 1:
        fail("sample_length", "sample_length must be a positive integer")

    return ExperimentConfig(
        potential={"name": pot["name"], "params": [float(p) for p in pot.get("params", [])]},
        perturbation={"poly": [float(c) for c in pert["poly"]]} if pert else None,
        n=n,
        betas=[float(b) for b in betas],
        cylinders=[[[float(a), float(b)] for a, b in cyl] for cyl in cylinders],
        tolerances=Tolerances(**{k: (float(v) if v is not None else None) for k, v in tol_raw.items()}),
        output=str(raw.get("output", "out")),
        seed=seed,
        flags=Flags(**flags_raw),
        k_max=k_max,
        sample_length=sample_length,
    )


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())
