"""Synthetic instance families and the timing harness.

Instances come from a counter-based Philox generator so that the same seed
regenerates a bit-identical panel on any platform.  Timings wrap ``solve``
only: one untimed warm-up, then ``replications`` timed runs per cell.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import ConfigError, DimensionError, MVSKError
from .instance import PreferenceCoefficients, center_panel, crra_coefficients
from .simplex import TangentBasis
from .solver import SolverConfig, preset, solve

CSV_FIELDS = ("instance", "config", "rep", "n", "T", "kappa", "profile",
              "wall_seconds", "kkt", "f_star", "iters", "status")


def philox(seed):
    """Seeded 64-bit counter-based generator."""
    return np.random.Generator(np.random.Philox(int(seed)))


def gen_uniform_instance(n, T, seed):
    """Panel with iid returns uniform on ``[-0.1, 0.4]``."""
    if n < 1 or T < 2:
        raise DimensionError(f"need n >= 1 and T >= 2, got n={n}, T={T}")
    R = philox(seed).uniform(-0.1, 0.4, size=(T, n))
    return center_panel(R)


def stress_profiles():
    """The return-seeking, risk-averse and balanced coefficient profiles."""
    return [
        PreferenceCoefficients(10.0, 1.0, 10.0, 1.0, origin="return-seeking"),
        PreferenceCoefficients(1.0, 10.0, 1.0, 10.0, origin="risk-averse"),
        PreferenceCoefficients(10.0, 10.0, 10.0, 10.0, origin="balanced"),
    ]


def gen_conditioned_instance(n, T, kappa, gamma, seed):
    """Panel whose tangent restriction ``AU`` has condition number ``kappa``.

    ``A = Q diag(s) W'`` with ``Q`` (T x r) orthonormal and orthogonal to the
    ones vector, ``W = U V`` for a random orthonormal ``V`` ((n-1) x r), and
    ``s`` log-uniform on ``[1, kappa]``.  Hence ``1'A = 0``, ``A 1 = 0`` and
    the nonzero singular values of ``AU`` are exactly ``s``.

    Returns
    -------
    panel : ReturnPanel
    coeffs : PreferenceCoefficients
        CRRA coefficients for ``gamma``.
    """
    if kappa < 1:
        raise ConfigError(f"kappa must be >= 1, got {kappa}")
    r = min(n - 1, T - 1)
    if r < 2:
        raise DimensionError(f"rank budget min(n-1, T-1) = {r} is below 2")
    rng = philox(seed)
    G = rng.standard_normal((T, r))
    G -= G.mean(axis=0)
    Q, _ = np.linalg.qr(G)
    V, _ = np.linalg.qr(rng.standard_normal((n - 1, r)))
    W = TangentBasis(n).apply(V)
    s = np.logspace(0.0, np.log10(kappa), r) if r > 1 else np.ones(1)
    A = (Q * s) @ W.T
    mu = rng.uniform(0.1, 0.2, size=n)
    panel = center_panel(A + mu)
    return panel, crra_coefficients(gamma)


@dataclass
class BenchmarkSpec:
    """One sweep: an instance family crossed with profiles or kappa targets.

    For ``family="uniform"`` every ``(instance seed, profile)`` pair is a cell;
    for ``family="conditioned"`` every ``kappa`` target is a cell with CRRA
    ``gamma``.  ``instances`` is the number of independent panels per setting.
    """

    family: str = "uniform"
    n: int = 40
    T: int = 252
    profiles: list = field(default_factory=stress_profiles)
    kappa_targets: list = field(default_factory=lambda: [1.0])
    gamma: float = 6.0
    replications: int = 3
    warmup: int = 1
    seed: int = 0
    instances: int = 1

    def __post_init__(self):
        if self.family not in ("uniform", "conditioned"):
            raise ConfigError(f"unknown family {self.family!r}")
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if self.warmup < 0 or self.instances < 1:
            raise ConfigError("warmup must be >= 0 and instances >= 1")
        if self.n < 1 or self.T < 2:
            raise DimensionError(f"need n >= 1 and T >= 2, got n={self.n}, T={self.T}")
        if self.family == "conditioned":
            if min(self.n - 1, self.T - 1) < 1:
                raise DimensionError("conditioned family needs min(n-1, T-1) >= 1")
            if any(k < 1 for k in self.kappa_targets):
                raise ConfigError("kappa targets must be >= 1")
        self.profiles = [PreferenceCoefficients.coerce(p) for p in self.profiles]

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "profiles" in data:
            data["profiles"] = [PreferenceCoefficients.coerce(p) for p in data["profiles"]]
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def cells(self):
        """Yield ``(instance_id, panel, coeffs, kappa, profile_label)``."""
        for i in range(self.instances):
            seed = self.seed + i
            if self.family == "uniform":
                panel = gen_uniform_instance(self.n, self.T, seed)
                for p in self.profiles:
                    label = p.origin if p.origin != "custom" else ",".join(f"{c:g}" for c in p)
                    yield f"uniform-n{self.n}-T{self.T}-s{seed}-{label}", panel, p, None, label
            else:
                for kappa in self.kappa_targets:
                    panel, coeffs = gen_conditioned_instance(self.n, self.T, kappa, self.gamma, seed)
                    label = f"crra{self.gamma:g}"
                    yield (f"conditioned-n{self.n}-T{self.T}-k{kappa:g}-s{seed}",
                           panel, coeffs, kappa, label)


@dataclass
class BenchRecord:
    instance: str
    config: str
    rep: int
    n: int
    T: int
    kappa: float | None
    profile: str
    wall_seconds: float
    kkt: float
    f_star: float
    iters: int
    status: str
    error: str = ""
    report: object = field(default=None, repr=False, compare=False)

    def row(self):
        d = asdict(self)
        return {k: ("" if d[k] is None else d[k]) for k in CSV_FIELDS}


def _median(values):
    # order statistic for odd lengths, mean of the two middle ones otherwise
    v = sorted(values)
    if not v:
        return float("nan")
    m = len(v) // 2
    return float(v[m]) if len(v) % 2 else 0.5 * (v[m - 1] + v[m])


def _resolve(configs):
    out = {}
    for label, cfg in (configs.items() if isinstance(configs, dict) else
                       ((c, c) for c in configs)):
        out[label] = preset(cfg) if isinstance(cfg, str) else cfg
        if not isinstance(out[label], SolverConfig):
            raise ConfigError(f"config {label!r} is not a SolverConfig")
    return out


def run_benchmark(spec, configs=("small", "large"), keep_reports=False, record_history=False):
    """Time every cell under every config.

    Parameters
    ----------
    spec : BenchmarkSpec
    configs : sequence of preset names or dict label -> SolverConfig
    keep_reports : bool
        Attach the full :class:`SolveReport` to each record.
    record_history : bool
        Record per-iterate objective and feasibility in the timed solves
        (implies ``keep_reports``).

    Returns
    -------
    records : list of BenchRecord
    summary : dict
        ``cells`` maps ``"instance|config"`` to median wall time and KKT;
        ``config_medians`` pools every cell of a config; ``ratios`` holds the
        pooled median runtime ratio for each ordered pair of configs.
    """
    configs = _resolve(configs)
    records = []
    for inst, panel, coeffs, kappa, label in spec.cells():
        for name, cfg in configs.items():
            for _ in range(spec.warmup):
                try:
                    solve(panel, coeffs, config=cfg)
                except MVSKError:
                    break
            for rep in range(spec.replications):
                t0 = time.perf_counter()
                try:
                    rep_ = solve(panel, coeffs, config=cfg, record_history=record_history)
                except MVSKError as exc:
                    records.append(BenchRecord(inst, name, rep, panel.n, panel.T, kappa, label,
                                               time.perf_counter() - t0, float("nan"),
                                               float("nan"), 0, "error", error=str(exc)))
                    continue
                wall = time.perf_counter() - t0
                records.append(BenchRecord(
                    inst, name, rep, panel.n, panel.T, kappa, label, wall,
                    rep_.kkt_residual, rep_.f_star, rep_.iterations, rep_.status,
                    report=rep_ if keep_reports or record_history else None))
    return records, summarize(records)


def summarize(records):
    cells = {}
    for r in records:
        cells.setdefault((r.instance, r.config), []).append(r)
    cell_summary = {}
    pooled = {}
    for (inst, cfg), rs in cells.items():
        ok = [r for r in rs if r.status != "error"]
        med_t = _median([r.wall_seconds for r in ok])
        cell_summary[f"{inst}|{cfg}"] = {
            "instance": inst, "config": cfg, "runs": len(rs), "errors": len(rs) - len(ok),
            "median_wall_seconds": med_t,
            "median_kkt": _median([r.kkt for r in ok]),
            "f_star": ok[0].f_star if ok else float("nan"),
            "statuses": sorted({r.status for r in rs}),
        }
        pooled.setdefault(cfg, []).append(med_t)
    config_medians = {cfg: _median(v) for cfg, v in pooled.items()}
    ratios = {f"{a}/{b}": config_medians[a] / config_medians[b]
              for a in config_medians for b in config_medians
              if a != b and config_medians[b] > 0}
    return {"cells": cell_summary, "config_medians": config_medians, "ratios": ratios}


def write_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        w.writeheader()
        for r in records:
            row = r.row()
            for k in ("wall_seconds", "kkt", "f_star"):
                row[k] = repr(float(row[k]))
            w.writerow(row)


def write_summary(summary, path):
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, default=float)
