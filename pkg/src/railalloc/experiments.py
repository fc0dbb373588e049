"""Configuration loading, parameter sweeps and CSV output."""
from __future__ import annotations

import configparser
import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .allocators import AllocatorResult, dual_oracle, grid_oracle, ip_barrier, pd, pnou
from .errors import ConfigError, InvalidArgumentError, MaxIterationsError
from .geometry import Scenario, make_scenario, sample_blockage_reassociate
from .radio import LinkBudget, RadioParams
from .sqp import SolverConfig, capacity_problem, solve_sqp

log = logging.getLogger(__name__)

METHODS = ("sqp", "pnou", "pd", "ip", "dual")

# section -> key -> parser
_SCHEMA = {
    "layout": {"area_side": float, "rnum": int, "users": int, "bs_offset": float,
               "rail_offset": float, "blockage": str},
    "radio": {"carrier_ghz": float, "pt_mw": float, "path_loss_exp": float, "eta": float,
              "n0_dbm_per_mhz": float, "theta_3db_deg": float, "p_b": float, "beta": float},
    "solver": {"sigma": float, "sigma_kkt": float, "eps1": float, "eps2": float,
               "max_iters": int, "ip_tol_bps": float},
    "sweep": {"bandwidths_mhz": "floats", "bandwidth_mhz": float, "betas": "floats",
              "seeds": "ints", "methods": "names", "compare_methods": "names",
              "groups": int, "master_seed": int},
}


@dataclass
class ExperimentConfig:
    # layout
    area_side: float = 500.0
    rnum: int = 9
    users: int = 200
    bs_offset: float = 50.0
    rail_offset: float = 50.0
    blockage: str = "average"
    # radio, in configuration units
    carrier_ghz: float = 60.0
    pt_mw: float = 1000.0
    path_loss_exp: float = 2.0
    eta: float = 0.5
    n0_dbm_per_mhz: float = -134.0
    theta_3db_deg: float = 30.0
    p_b: float = 0.2
    beta: float = 1e-7
    # solver
    sigma: float = 1e-9
    sigma_kkt: float = 1e-6
    eps1: float = 1e-9
    eps2: float = 1e-8
    max_iters: int = 200
    ip_tol_bps: float = 100.0
    # sweeps
    bandwidths_mhz: list[float] = field(
        default_factory=lambda: [1000.0 + 100.0 * i for i in range(10)])
    bandwidth_mhz: float = 1200.0
    betas: list[float] = field(default_factory=lambda: [10.0 ** e for e in range(-12, -2)])
    seeds: list[int] = field(default_factory=lambda: [0])
    methods: list[str] = field(default_factory=lambda: ["sqp", "pnou", "pd"])
    compare_methods: list[str] = field(default_factory=lambda: ["sqp", "ip"])
    groups: int = 10
    master_seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)
        need(self.area_side > 0, "area_side must be positive")
        need(self.rnum >= 1, "rnum must be >= 1")
        need(self.users >= 1, "users must be >= 1")
        need(0 <= self.bs_offset < self.area_side / 2, "bs_offset out of range")
        need(0 <= self.rail_offset < self.area_side / 2, "rail_offset out of range")
        need(self.blockage in ("average", "resample"), "blockage must be 'average' or 'resample'")
        need(self.groups >= 1, "groups must be >= 1")
        need(all(w > 0 for w in self.bandwidths_mhz) and self.bandwidth_mhz > 0,
             "bandwidths must be positive")
        need(all(b >= 0 for b in self.betas), "betas must be non-negative")
        need(len(self.seeds) >= 1, "at least one seed is required")
        for name in (*self.methods, *self.compare_methods):
            need(name in METHODS, f"unknown method '{name}' (known: {', '.join(METHODS)})")
        need(self.ip_tol_bps > 0, "ip_tol_bps must be positive")
        try:
            self.radio_params()
            self.solver_config()
        except InvalidArgumentError as exc:
            raise ConfigError(str(exc)) from exc

    def radio_params(self, beta: float | None = None) -> RadioParams:
        return RadioParams.from_table(carrier_ghz=self.carrier_ghz, pt_mw=self.pt_mw,
                                      path_loss_exp=self.path_loss_exp, eta=self.eta,
                                      n0_dbm_per_mhz=self.n0_dbm_per_mhz,
                                      theta_3db_deg=self.theta_3db_deg, p_b=self.p_b,
                                      beta=self.beta if beta is None else beta)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(sigma=self.sigma, sigma_kkt=self.sigma_kkt, eps1=self.eps1,
                            eps2=self.eps2, max_iters=self.max_iters)

    def scenario(self, seed: int) -> Scenario:
        sc = make_scenario(self.area_side, self.rnum, self.users, seed,
                           self.bs_offset, self.rail_offset)
        if self.blockage == "resample":
            sc = sample_blockage_reassociate(sc, self.p_b, derive_seed(seed, 1))
        return sc


def _parse_value(kind, raw: str, key: str):
    try:
        if kind == "floats":
            return [float(v) for v in raw.split(",") if v.strip()]
        if kind == "ints":
            return [int(v) for v in raw.split(",") if v.strip()]
        if kind == "names":
            return [v.strip().lower() for v in raw.split(",") if v.strip()]
        return kind(raw.strip())
    except ValueError as exc:
        raise ConfigError(f"key '{key}': cannot parse {raw!r}") from exc


def load_config(path: str | Path | None = None, text: str | None = None) -> ExperimentConfig:
    """Parse an INI-style ``key = value`` file with [layout], [radio], [solver]
    and [sweep] sections. Unknown sections or keys are rejected."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        if path is not None:
            with open(path) as fh:
                parser.read_file(fh)
        elif text is not None:
            parser.read_string(text)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    values = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section '{section}'")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")
            values[key] = _parse_value(_SCHEMA[section][key], raw, key)
    return ExperimentConfig(**values)


def derive_seed(master: int, index: int) -> int:
    """Independent, reproducible seed for cell ``index`` of a run seeded by ``master``."""
    return int(np.random.SeedSequence([master, index]).generate_state(1, dtype=np.uint64)[0])


@dataclass
class SweepRow:
    sweep_var: str
    value: float
    method: str
    capacity_bps: float
    alpha: np.ndarray
    iterations: float
    wall_time_s: float
    seed: int
    certified: bool = True


def run_method(method: str, scenario: Scenario, w_hz: float, params: RadioParams,
               config: ExperimentConfig) -> tuple[AllocatorResult, bool]:
    """Run one allocator; returns the result and whether it is certified."""
    budget = LinkBudget(scenario, w_hz, params)
    if method in ("pnou", "pd"):
        t0 = time.perf_counter()
        alpha = pnou(scenario) if method == "pnou" else pd(scenario)
        return AllocatorResult(alpha, budget.capacity(alpha), method,
                               time.perf_counter() - t0), True
    problem = capacity_problem(budget)
    if method == "sqp":
        try:
            rep = solve_sqp(problem, config.solver_config())
        except MaxIterationsError as exc:
            rep = exc.result
        return AllocatorResult(rep.alpha, rep.objective_bps, "sqp", rep.wall_time,
                               rep.iterations, rep.kkt.mu), rep.certified
    if method == "ip":
        return ip_barrier(problem, tol=config.ip_tol_bps), True
    if method == "dual":
        return dual_oracle(problem), True
    raise ConfigError(f"unknown method '{method}'")


def _row(var, value, res: AllocatorResult, seed, certified) -> SweepRow:
    return SweepRow(var, value, res.method, res.objective, np.asarray(res.alpha),
                    res.iterations, res.wall_time, seed, certified)


def run_bandwidth_sweep(config: ExperimentConfig) -> list[SweepRow]:
    if not config.bandwidths_mhz:
        raise ConfigError("bandwidth list is empty")
    params = config.radio_params()
    rows = []
    for seed in config.seeds:
        scenario = config.scenario(seed)
        for w in config.bandwidths_mhz:
            for method in config.methods:
                res, ok = run_method(method, scenario, w * 1e6, params, config)
                rows.append(_row("bandwidth_mhz", w, res, seed, ok))
    return rows


def run_beta_sweep(config: ExperimentConfig) -> list[SweepRow]:
    if not config.betas:
        raise ConfigError("beta list is empty")
    rows = []
    for seed in config.seeds:
        scenario = config.scenario(seed)
        for beta in config.betas:
            params = config.radio_params(beta)
            for method in config.methods:
                res, ok = run_method(method, scenario, config.bandwidth_mhz * 1e6, params, config)
                rows.append(_row("beta", beta, res, seed, ok))
    return rows


def run_solver_comparison(config: ExperimentConfig) -> list[SweepRow]:
    """One fresh scenario per group; a final ``group_mean`` row per method
    carries the averages over the groups."""
    methods = config.compare_methods
    if len(methods) < 2:
        raise ConfigError("solver comparison needs at least two methods")
    params = config.radio_params()
    rows = []
    for g in range(1, config.groups + 1):
        seed = derive_seed(config.master_seed, g)
        scenario = config.scenario(seed)
        for method in methods:
            res, ok = run_method(method, scenario, config.bandwidth_mhz * 1e6, params, config)
            rows.append(_row("group", g, res, seed, ok))
    for method in methods:
        mine = [r for r in rows if r.method == method]
        rows.append(SweepRow("group_mean", config.groups + 1, method,
                             float(np.mean([r.capacity_bps for r in mine])),
                             np.mean([r.alpha for r in mine], axis=0),
                             float(np.mean([r.iterations for r in mine])),
                             float(np.mean([r.wall_time_s for r in mine])),
                             config.master_seed, all(r.certified for r in mine)))
    return rows


CSV_HEADER = ["sweep_var", "value", "method", "capacity_bps", "iterations", "wall_time_s",
              "seed", "alpha_json"]


def _g15(v) -> str:
    return format(float(v), ".15g")


def emit_csv(rows: list[SweepRow], path: str | Path) -> None:
    if not rows:
        raise InvalidArgumentError("no rows to write")
    ordered = sorted(rows, key=lambda r: (r.value, r.method, r.seed))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in ordered:
            alpha = "[" + ",".join(_g15(a) for a in r.alpha) + "]"
            w.writerow([r.sweep_var, _g15(r.value), r.method, _g15(r.capacity_bps),
                        _g15(r.iterations), _g15(r.wall_time_s), r.seed, alpha])


def read_csv(path: str | Path) -> list[dict]:
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rec = dict(rec)
            for key in ("value", "capacity_bps", "iterations", "wall_time_s"):
                rec[key] = float(rec[key])
            rec["seed"] = int(rec["seed"])
            rec["alpha"] = np.array(json.loads(rec.pop("alpha_json")), dtype=float)
            out.append(rec)
    return out


@dataclass
class CertifyRecord:
    instance: int
    seed: int
    sqp_bps: float
    dual_bps: float
    grid_bps: float | None
    rel_sqp_dual: float
    grid_gap_bps: float | None
    grid_bound_bps: float | None
    kkt_residual: float
    certified: bool

    @property
    def passed(self) -> bool:
        ok = self.certified and self.rel_sqp_dual <= 1e-6
        if self.grid_gap_bps is not None:
            ok = ok and -1e-9 * abs(self.dual_bps) <= self.grid_gap_bps <= self.grid_bound_bps
        return ok


def random_instance(devices: int, seed: int) -> tuple[Scenario, float, RadioParams]:
    """Small random instance with self-interference weak enough that relays compete."""
    rng = np.random.default_rng(seed)
    m = int(rng.integers(max(devices, 10), 61))
    scenario = make_scenario(500.0, devices - 1, m, int(rng.integers(2 ** 63)))
    beta = 0.0 if rng.random() < 0.2 else float(10 ** rng.uniform(-16, -12))
    w_hz = float(rng.uniform(500, 2000)) * 1e6
    return scenario, w_hz, RadioParams.from_table(beta=beta)


def certify(devices: int = 3, instances: int = 50, seed: int = 0,
            step: float = 1e-3) -> list[CertifyRecord]:
    """Cross-check SQP against the dual oracle and, for <= 4 devices, the grid oracle."""
    records = []
    for i in range(instances):
        inst_seed = derive_seed(seed, i)
        scenario, w_hz, params = random_instance(devices, inst_seed)
        problem = capacity_problem(LinkBudget(scenario, w_hz, params))
        try:
            rep = solve_sqp(problem)
        except MaxIterationsError as exc:
            rep = exc.result
        dual = dual_oracle(problem)
        rel = abs(rep.objective_bps - dual.objective) / abs(dual.objective)
        grid_bps = gap = bound = None
        if problem.n <= 4:
            grid = grid_oracle(problem, step)
            grid_bps = grid.objective
            gap = dual.objective - grid.objective
            x_dual = dual.alpha[problem.devices]
            x_grid = grid.alpha[problem.devices]
            lip = max(np.abs(problem.gradient(np.maximum(x, problem.alpha_floor))).max()
                      for x in (x_dual, x_grid))
            bound = lip * problem.n * step
        records.append(CertifyRecord(i, inst_seed, rep.objective_bps, dual.objective, grid_bps,
                                     rel, gap, bound, rep.kkt.residuals.max, rep.certified))
    return records
