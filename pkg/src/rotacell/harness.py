"""Monte Carlo sweep engine behind the command line front end.

A sweep varies one scenario knob (cap half-angle, power budget,
directivity exponent, or AP count) over a sorted value grid and runs a
set of methods on ``drops`` independent user/scatterer realizations per
grid point.  Drop seeds are a function of the sweep seed and the drop
index only, so every method at every grid point sees identical channel
realizations and comparisons are paired.  Aggregation is
order-independent: per-drop rates land in preallocated slots keyed by
(value, method, drop), so the emitted CSV is byte-identical no matter
how many workers ran the drops.
"""

from __future__ import annotations

import concurrent.futures
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .drivers import Method, run_method
from .scenario import ConfigError, default_config, scenario_from_seed, validate_config

DEFAULT_DROPS = 50

CSV_HEADER = "variable,value,method,mean_min_rate_bpshz,stderr,drops,seed"


class SweepVariable(Enum):
    """Scenario knob swept on the x-axis."""

    THETA_MAX = "ThetaMax"
    P_MAX = "PMax"
    DIRECTIVITY = "Directivity"
    NUM_APS = "NumAps"


# sweep variable -> config key it overrides
_VARIABLE_KEY = {
    SweepVariable.THETA_MAX: "theta_max",
    SweepVariable.P_MAX: "P_max_dBm",
    SweepVariable.DIRECTIVITY: "p",
    SweepVariable.NUM_APS: "B",
}

# declaration order of the Method enum fixes the CSV row order
_METHOD_ORDER = {m: i for i, m in enumerate(Method)}


@dataclass
class SweepSpec:
    """One sweep request: variable, grid, methods, drop count, seed."""

    variable: SweepVariable
    values: list
    methods: list
    config: dict = field(default_factory=default_config)
    drops: int = DEFAULT_DROPS
    seed: int = 0

    def __post_init__(self):
        self.variable = SweepVariable(self.variable)
        self.methods = [Method(m) for m in self.methods]
        if not self.values:
            raise ConfigError("values: must be non-empty")
        vals = [float(v) for v in self.values]
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigError("values: must be strictly increasing")
        self.values = vals
        if not self.methods:
            raise ConfigError("methods: must be non-empty")
        seen = set()
        self.methods = [
            m
            for m in sorted(self.methods, key=_METHOD_ORDER.get)
            if not (m in seen or seen.add(m))
        ]
        if self.drops < 1:
            raise ConfigError("drops: must be >= 1")
        self.seed = int(self.seed)
        self.config = validate_config(self.config)


@dataclass
class SweepCell:
    """Aggregate over the drops of one (value, method) grid cell."""

    value: float
    method: Method
    rates: list  # per-drop min rates, successful drops only
    failures: list  # (drop_seed, error message) pairs
    flags: list  # (drop_seed, diagnostic) for degraded-but-usable runs

    @property
    def mean(self):
        return float(np.mean(self.rates)) if self.rates else math.nan

    @property
    def stderr(self):
        n = len(self.rates)
        if n == 0:
            return math.nan
        if n == 1:
            return 0.0
        return float(np.std(self.rates, ddof=1) / math.sqrt(n))


@dataclass
class SweepResult:
    """All cells of one sweep plus the spec fields needed to replay it."""

    variable: SweepVariable
    values: list
    methods: list
    drops: int
    seed: int
    cells: dict  # (value index, method) -> SweepCell

    def cell(self, value, method):
        vi = self.values.index(float(value))
        return self.cells[(vi, Method(method))]


def drop_seeds(seed, drops):
    """Derive the per-drop scenario seeds for a sweep.

    A function of (sweep seed, drop index) only, so the same drops are
    replayed for every method and every sweep value.
    """
    state = np.random.SeedSequence(int(seed)).generate_state(int(drops))
    return [int(s) for s in state]


def _cell_config(spec: SweepSpec, value):
    cfg = dict(spec.config)
    cfg["heights"] = dict(spec.config["heights"])
    key = _VARIABLE_KEY[spec.variable]
    cfg[key] = int(round(value)) if spec.variable is SweepVariable.NUM_APS else value
    return validate_config(cfg)


def _drop_task(cfg, method_value, drop_seed):
    """One (cell, drop) unit of work; module-level so pools can pickle it."""
    scn = scenario_from_seed(cfg, seed=drop_seed)
    report = run_method(scn, Method(method_value), seed=drop_seed)
    return float(report.min_rate), report.flag


def run_sweep(spec: SweepSpec, jobs=1, progress=None):
    """Run every (value, method, drop) of the sweep and aggregate.

    Parameters
    ----------
    spec : SweepSpec
        Validated sweep request.
    jobs : int
        Worker processes; 1 runs in-process.
    progress : callable or None
        Called as ``progress(done, total)`` after each finished drop.

    Returns
    -------
    SweepResult
        Per-cell rates, failures, and flags.  A drop that raises is
        recorded in the cell's failure list and excluded from the mean;
        it never aborts the sweep.
    """
    seeds = drop_seeds(spec.seed, spec.drops)
    tasks = []
    for vi, value in enumerate(spec.values):
        cfg = _cell_config(spec, value)
        for method in spec.methods:
            for di, dseed in enumerate(seeds):
                tasks.append((vi, method, di, cfg, dseed))

    slots = {}  # (vi, method, di) -> ("ok", rate, flag) | ("err", msg)
    done = 0

    def record(key, outcome):
        nonlocal done
        slots[key] = outcome
        done += 1
        if progress is not None:
            progress(done, len(tasks))

    if jobs <= 1:
        for vi, method, di, cfg, dseed in tasks:
            try:
                rate, flag = _drop_task(cfg, method.value, dseed)
                record((vi, method, di), ("ok", rate, flag))
            except Exception as exc:  # noqa: BLE001 - recorded per cell
                record((vi, method, di), ("err", f"{type(exc).__name__}: {exc}"))
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = {
                pool.submit(_drop_task, cfg, method.value, dseed): (vi, method, di)
                for vi, method, di, cfg, dseed in tasks
            }
            for fut in concurrent.futures.as_completed(futs):
                key = futs[fut]
                try:
                    rate, flag = fut.result()
                    record(key, ("ok", rate, flag))
                except Exception as exc:  # noqa: BLE001 - recorded per cell
                    record(key, ("err", f"{type(exc).__name__}: {exc}"))

    cells = {}
    for vi, value in enumerate(spec.values):
        for method in spec.methods:
            rates, failures, flags = [], [], []
            for di, dseed in enumerate(seeds):
                outcome = slots[(vi, method, di)]
                if outcome[0] == "ok":
                    rates.append(outcome[1])
                    if outcome[2]:
                        flags.append((dseed, outcome[2]))
                else:
                    failures.append((dseed, outcome[1]))
            cells[(vi, method)] = SweepCell(value, method, rates, failures, flags)
    return SweepResult(
        spec.variable, list(spec.values), list(spec.methods), spec.drops, spec.seed, cells
    )


def _fmt(x):
    # 6 significant digits, plain decimal for the magnitudes we emit
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return format(float(x), ".6g")


def emit_csv(result: SweepResult, path):
    """Write the sweep table; rows are value-major, then method order.

    Columns: ``variable,value,method,mean_min_rate_bpshz,stderr,drops,seed``
    with 6 significant digits on the numeric columns.  Identical inputs
    produce identical bytes.
    """
    lines = [CSV_HEADER]
    for vi, value in enumerate(result.values):
        for method in result.methods:
            cell = result.cells[(vi, method)]
            lines.append(
                ",".join(
                    [
                        result.variable.value,
                        _fmt(value),
                        method.value,
                        _fmt(cell.mean),
                        _fmt(cell.stderr),
                        str(len(cell.rates)),
                        str(result.seed),
                    ]
                )
            )
    text = "\n".join(lines) + "\n"
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write sweep CSV to {path}: {exc}") from exc
    return path


def parse_csv(path):
    """Read an ``emit_csv`` table back into row dicts (floats parsed)."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{path}: missing sweep CSV header")
    rows = []
    for ln in lines[1:]:
        var, value, method, mean, stderr, drops, seed = ln.split(",")
        rows.append(
            {
                "variable": var,
                "value": float(value),
                "method": method,
                "mean_min_rate_bpshz": float(mean),
                "stderr": float(stderr),
                "drops": int(drops),
                "seed": int(seed),
            }
        )
    return rows


def sweep_spec_from_dict(raw):
    """Build a SweepSpec from a parsed JSON object.

    The ``config`` entry holds overrides applied on top of the default
    topology config; all other keys mirror the SweepSpec fields.
    """
    if not isinstance(raw, dict):
        raise ConfigError("sweep spec: expected a JSON object")
    known = {"variable", "values", "methods", "config", "drops", "seed"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"sweep spec: unknown keys {sorted(unknown)}")
    for req in ("variable", "values", "methods"):
        if req not in raw:
            raise ConfigError(f"sweep spec: missing required key '{req}'")
    cfg = default_config()
    overrides = raw.get("config") or {}
    if not isinstance(overrides, dict):
        raise ConfigError("sweep spec: 'config' must be an object")
    for key, val in overrides.items():
        if key == "heights":
            cfg["heights"].update(val)
        else:
            cfg[key] = val
    return SweepSpec(
        variable=raw["variable"],
        values=raw["values"],
        methods=raw["methods"],
        config=cfg,
        drops=int(raw.get("drops", DEFAULT_DROPS)),
        seed=int(raw.get("seed", 0)),
    )
