"""Run configuration, single runs and m-sweeps."""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    BlowupSuspected,
    ConfigError,
    GridSpec,
    InitialConditionSpec,
    KsflowError,
    NegativityError,
    NonFiniteError,
    Params,
    cfl_dt,
    init_state,
)
from .monitors import (
    VerdictConfig,
    Verdict,
    check_mass_invariant,
    record,
    verdict,
    write_series,
)
from .stokes import PoissonSolver, SolverError, max_divergence, step_velocity
from .transport import step_density, step_signal

REPORT_SCHEMA = "ksflow-report v1"
OUTPUT_DIR_ENV = "KSFLOW_OUTPUT_DIR"


class SimulationError(KsflowError):
    """A solver failure, tagged with the step at which it happened."""

    def __init__(self, step: int, cause: Exception):
        super().__init__(f"step {step}: {cause}")
        self.step = step
        self.cause = cause


@dataclass(frozen=True)
class PotentialSpec:
    """The potential: ``zero``, ``linear`` (constant ``gradient``) or
    ``cosine`` (``amplitude * cos(2 pi k x_axis / L_axis)``)."""

    kind: str = "zero"
    gradient: tuple = ()
    amplitude: float = 0.0
    axis: int = -1
    wavenumber: int = 1

    def __post_init__(self):
        if self.kind not in ("zero", "linear", "cosine"):
            raise ConfigError(f"unknown potential kind {self.kind!r}")
        object.__setattr__(self, "gradient", tuple(float(g) for g in self.gradient))

    def apply(self, params: Params, grid: GridSpec) -> Params:
        if self.kind == "zero":
            return replace(params, phi=None)
        if self.kind == "linear":
            if len(self.gradient) != grid.dim:
                raise ConfigError("linear potential needs one gradient entry per axis")
            return replace(params, phi=None, phi_slope=self.gradient)
        axis = self.axis % grid.dim
        x = grid.mesh()[axis]
        phi = self.amplitude * np.cos(2 * np.pi * self.wavenumber * x / float(grid.extent[axis]))
        return replace(params, phi=phi, phi_slope=())

    def to_dict(self) -> dict:
        return {"kind": self.kind, "gradient": list(self.gradient), "amplitude": self.amplitude,
                "axis": self.axis, "wavenumber": self.wavenumber}


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec
    params: Params
    ic: InitialConditionSpec
    potential: PotentialSpec = PotentialSpec()
    monitor_p_list: tuple = (2.0, 4.0)
    verdict: VerdictConfig = VerdictConfig()
    solver: PoissonSolver | None = None
    output_dir: str = "ksflow-out"
    record_every: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.record_every < 1:
            raise ConfigError("record_every must be at least 1")
        object.__setattr__(self, "monitor_p_list", tuple(float(p) for p in self.monitor_p_list))
        if any(not p >= 1 for p in self.monitor_p_list):
            raise ConfigError("monitored exponents must be >= 1")
        if self.solver is None:
            object.__setattr__(self, "solver", PoissonSolver("fft" if self.grid.periodic else "cg"))
        if self.solver.method == "fft" and not self.grid.periodic:
            raise ConfigError("the FFT Poisson solver needs a periodic grid")

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "params": self.params.scalars(),
            "potential": self.potential.to_dict(),
            "ic": self.ic.to_dict(),
            "monitor_p_list": list(self.monitor_p_list),
            "verdict": self.verdict.to_dict(),
            "solver": self.solver.to_dict(),
            "output_dir": self.output_dir,
            "record_every": self.record_every,
            "seed": self.seed,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {"grid", "params", "potential", "ic", "monitor_p_list", "verdict", "solver",
                 "output_dir", "record_every", "seed"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            grid = GridSpec.from_dict(d["grid"])
            params = Params(**d.get("params", {}))
            potential = PotentialSpec(**d.get("potential", {}))
            ic = InitialConditionSpec.from_dict(d["ic"])
            vd = dict(d.get("verdict", {}))
            verdict_cfg = VerdictConfig(**vd)
            solver = PoissonSolver(**d["solver"]) if "solver" in d else None
        except KeyError as exc:
            raise ConfigError(f"missing config section {exc}") from exc
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        return cls(grid=grid, params=params, ic=ic, potential=potential,
                   monitor_p_list=tuple(d.get("monitor_p_list", (2.0, 4.0))),
                   verdict=verdict_cfg, solver=solver,
                   output_dir=str(d.get("output_dir", "ksflow-out")),
                   record_every=int(d.get("record_every", 10)), seed=int(d.get("seed", 0)))


def parse_config(text: str, fmt: str = "json") -> RunConfig:
    if fmt == "toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib

        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML: {exc}") from exc
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    return RunConfig.from_dict(data)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, "toml" if path.suffix.lower() == ".toml" else "json")


@dataclass
class RunReport:
    config: RunConfig
    series: list
    verdict: Verdict
    wall_time: float
    step_count: int
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "config": self.config.to_dict(),
            "verdict": self.verdict.to_dict(),
            "wall_time": self.wall_time,
            "step_count": self.step_count,
            "metadata": self.metadata,
            "final": asdict(self.series[-1]) if self.series else None,
        }


def _output_dir(config: RunConfig, override=None) -> Path:
    return Path(override or os.environ.get(OUTPUT_DIR_ENV) or config.output_dir)


def run_single(config: RunConfig, out_dir=None, write: bool = True, plots: bool = True,
               keep_state: bool = False) -> RunReport:
    """Integrate from ``t = 0`` to ``t_end`` or until blow-up is suspected.

    Writes ``series.csv``, ``report.json`` and (optionally) ``series.png``.
    """
    started = time.perf_counter()
    grid = config.grid
    params = config.potential.apply(config.params, grid)
    params.grad_phi(grid)
    vcfg = replace(config.verdict, t_end=params.t_end, dt_floor=params.dt_floor)
    p_list = config.monitor_p_list
    state = init_state(grid, config.ic, seed=config.seed)

    series = [record(state, params, p_list)]
    cap = vcfg.cap_for(series)
    steps = 0
    clipped = 0
    min_dt = math.inf
    worst_div_ratio = 0.0
    stop_reason = "t_end"
    while state.t < params.t_end:
        try:
            dt = cfl_dt(state, params)
        except BlowupSuspected as exc:
            series.append(record(state, params, p_list, dt=exc.dt, clipped_cells=clipped))
            stop_reason = "dt_floor"
            break
        try:
            n_new, k_n = step_density(state, dt, params)
            c_new, k_c = step_signal(state, dt, params)
            if params.fluid:
                u_new, p_new = step_velocity(state, dt, params, config.solver)
            else:
                u_new, p_new = state.u, state.p
        except (NegativityError, NonFiniteError, SolverError) as exc:
            raise SimulationError(steps + 1, exc) from exc
        remaining = params.t_end - state.t
        t_new = params.t_end if dt >= remaining else state.t + dt
        state = state.evolve(n=n_new, c=c_new, u=u_new, p=p_new, t=t_new)
        steps += 1
        clipped += k_n + k_c
        min_dt = min(min_dt, dt)
        sup_u = max(float(np.max(np.abs(v))) for v in state.u)
        worst_div_ratio = max(worst_div_ratio, max_divergence(state.u, grid) / max(1.0, sup_u))
        final = state.t >= params.t_end
        over_cap = float(np.max(state.n)) > cap
        if steps % config.record_every == 0 or final or over_cap:
            series.append(record(state, params, p_list, dt=dt, clipped_cells=clipped))
            clipped = 0
        if over_cap:
            stop_reason = "hard_cap"
            break

    result = verdict(series, vcfg)
    mass = check_mass_invariant(series)
    metadata = {
        "version": __version__,
        "scheme": "explicit Euler, donor-cell fluxes, MAC Chorin projection",
        "poisson": config.solver.to_dict(),
        "stop_reason": stop_reason,
        "min_dt": min_dt if steps else None,
        "max_divergence_ratio": worst_div_ratio,
        "mass_check": asdict(mass),
        "clip_relative": 1e-14,
    }
    report = RunReport(config, series, result, time.perf_counter() - started, steps, metadata)
    if keep_state:
        report.final_state = state
    if write:
        out = _output_dir(config, out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_series(out / "series.csv", series, p_list)
        (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2))
        if plots:
            from .plotting import plot_series

            plot_series(series, out / "series.png",
                        title=f"m={params.m:g}, {grid.dim}D {'x'.join(map(str, grid.cells))}")
    return report


SWEEP_COLUMNS = ("m", "verdict", "final_sup_n", "min_dt", "error")


def _sweep_row(args) -> dict:
    config, m, out_dir, plots = args
    row = {"m": m, "verdict": None, "final_sup_n": None, "min_dt": None, "error": ""}
    try:
        sub = replace(config, params=replace(config.params, m=m))
        report = run_single(sub, out_dir=out_dir, write=out_dir is not None, plots=plots)
    except (KsflowError, ValueError) as exc:
        row["error"] = str(exc)
        return row
    row.update(verdict=report.verdict.kind, final_sup_n=report.series[-1].sup_n,
               min_dt=report.metadata["min_dt"])
    return row


def sweep_m(config: RunConfig, m_values, threads: int = 1, out_dir=None, write: bool = True,
            plots: bool = True) -> list:
    """Run one simulation per ``m``; each row is independent and failures are
    recorded per row.  Rows come back sorted by ``m``."""
    m_values = sorted(float(m) for m in m_values)
    bad = [m for m in m_values if not m > 1]
    if bad:
        raise ConfigError(f"sweep needs m > 1, got {bad}")
    root = _output_dir(config, out_dir) if write else None
    jobs = [(config, m, (root / f"m_{m:g}") if root else None, plots) for m in m_values]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(job) for job in jobs]
    if root is not None:
        root.mkdir(parents=True, exist_ok=True)
        (root / "sweep.csv").write_text(format_sweep_csv(rows))
        if plots and rows:
            from .plotting import plot_sweep

            plot_sweep(rows, root / "sweep.png")
    return rows


def format_sweep_csv(rows) -> str:
    lines = [",".join(SWEEP_COLUMNS)]
    for r in rows:
        vals = []
        for col in SWEEP_COLUMNS:
            v = r[col]
            if v is None:
                vals.append("")
            elif isinstance(v, float):
                vals.append(repr(v))
            else:
                vals.append(str(v).replace(",", ";").replace("\n", " "))
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"
