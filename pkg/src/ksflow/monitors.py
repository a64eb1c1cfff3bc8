"""Discrete functionals recorded along a run, the CSV series format, and the
boundedness verdict.

The W^{1,inf} quantities are proxies: maxima of face differences divided by
the spacing, not continuum norms.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import Params, State, face_gradient

SERIES_MAGIC = "# ksflow-series v1"
BASE_COLUMNS = ("t", "dt", "mass_n", "mass_c", "sup_n", "sup_c", "sup_grad_c",
                "sup_u", "sup_grad_u", "energy")

BOUNDED = "Bounded"
GROWING = "Growing"
BLOWUP = "BlowupSuspected"
INCONCLUSIVE = "Inconclusive"


@dataclass
class MonitorRecord:
    t: float
    dt: float
    mass_n: float
    mass_c: float
    sup_n: float
    sup_c: float
    sup_grad_c: float
    sup_u: float
    sup_grad_u: float
    energy: float
    lp_n: dict = field(default_factory=dict)
    clipped_cells: int = 0


def lp_norm(q: np.ndarray, p: float, cell_volume: float) -> float:
    peak = float(np.max(np.abs(q)))
    if math.isinf(p) or peak == 0.0:
        return peak
    # scale by the peak so |q|^p neither underflows nor overflows
    return peak * float((np.sum((np.abs(q) / peak) ** p) * cell_volume) ** (1.0 / p))


def _velocity_gradient_sup(u: tuple, grid) -> float:
    worst = 0.0
    for ua in u:
        for b in range(grid.dim):
            d = np.roll(ua, -1, axis=b) - ua if grid.periodic else np.diff(ua, axis=b)
            if d.size:
                worst = max(worst, float(np.max(np.abs(d))) / grid.h[b])
    return worst


def energy(state: State, params: Params) -> float:
    """``sum (n+eps)^(m-1) + sum c^2 + sum |u|^2``, each weighted by ``h^N``."""
    vol = state.grid.cell_volume
    e = np.sum((state.n + params.eps) ** (params.m - 1)) + np.sum(state.c ** 2)
    e += sum(np.sum(ua ** 2) for ua in state.u)
    return float(e * vol)


def record(state: State, params: Params, p_list: Sequence[float] = (),
           dt: float = 0.0, clipped_cells: int = 0) -> MonitorRecord:
    grid = state.grid
    vol = grid.cell_volume
    grad_c = max(float(np.max(np.abs(face_gradient(state.c, a, grid)))) for a in range(grid.dim))
    return MonitorRecord(
        t=float(state.t),
        dt=float(dt),
        mass_n=float(np.sum(state.n) * vol),
        mass_c=float(np.sum(state.c) * vol),
        sup_n=float(np.max(np.abs(state.n))),
        sup_c=float(np.max(np.abs(state.c))),
        sup_grad_c=grad_c,
        sup_u=max(float(np.max(np.abs(ua))) for ua in state.u),
        sup_grad_u=_velocity_gradient_sup(state.u, grid),
        energy=energy(state, params),
        lp_n={float(p): lp_norm(state.n, float(p), vol) for p in p_list},
        clipped_cells=int(clipped_cells),
    )


# ---------------------------------------------------------------------------
# CSV series


def _p_label(p: float) -> str:
    return f"lp_n:{p:g}"


def series_columns(p_list: Iterable[float]) -> list:
    return list(BASE_COLUMNS) + [_p_label(float(p)) for p in p_list] + ["clipped_cells"]


def series_to_csv(series: Sequence[MonitorRecord], p_list: Sequence[float] | None = None) -> str:
    """Serialise records; floats use ``repr`` so the text round-trips exactly."""
    if p_list is None:
        p_list = list(series[0].lp_n) if series else []
    p_list = [float(p) for p in p_list]
    buf = io.StringIO()
    buf.write(SERIES_MAGIC + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(series_columns(p_list))
    for rec in series:
        row = [repr(float(getattr(rec, name))) for name in BASE_COLUMNS]
        row += [repr(rec.lp_n[p]) for p in p_list]
        row.append(str(rec.clipped_cells))
        writer.writerow(row)
    return buf.getvalue()


def write_series(path, series: Sequence[MonitorRecord], p_list=None) -> None:
    Path(path).write_text(series_to_csv(series, p_list))


def parse_series(text: str) -> list:
    lines = text.splitlines()
    if not lines or lines[0].strip() != SERIES_MAGIC:
        raise ValueError("not a ksflow series file")
    reader = csv.reader(lines[1:])
    header = next(reader)
    if tuple(header[:len(BASE_COLUMNS)]) != BASE_COLUMNS or header[-1] != "clipped_cells":
        raise ValueError(f"unexpected columns {header}")
    p_cols = [float(h.split(":", 1)[1]) for h in header[len(BASE_COLUMNS):-1]]
    out = []
    for row in reader:
        if not row:
            continue
        base = {name: float(v) for name, v in zip(BASE_COLUMNS, row)}
        lp = {p: float(v) for p, v in zip(p_cols, row[len(BASE_COLUMNS):-1])}
        out.append(MonitorRecord(**base, lp_n=lp, clipped_cells=int(row[-1])))
    return out


def read_series(path) -> list:
    return parse_series(Path(path).read_text())


# ---------------------------------------------------------------------------
# Verdicts and invariant checks


@dataclass(frozen=True)
class VerdictConfig:
    """Decision thresholds.  ``hard_cap`` defaults to ``hard_cap_factor``
    times the initial ``sup_n``; ``t_end``/``dt_floor`` of ``None`` skip the
    horizon and time-step checks."""

    growth_tol: float = 0.05
    hard_cap: float | None = None
    hard_cap_factor: float = 1e3
    window_cap_factor: float = 10.0
    t_end: float | None = None
    dt_floor: float | None = None

    def to_dict(self) -> dict:
        return {"growth_tol": self.growth_tol, "hard_cap": self.hard_cap,
                "hard_cap_factor": self.hard_cap_factor,
                "window_cap_factor": self.window_cap_factor}

    def cap_for(self, series: Sequence[MonitorRecord]) -> float:
        if self.hard_cap is not None:
            return self.hard_cap
        return self.hard_cap_factor * max(series[0].sup_n, 1e-300)


@dataclass(frozen=True)
class Verdict:
    kind: str
    evidence: str

    def to_dict(self) -> dict:
        return {"kind": self.kind, "evidence": self.evidence}


def log_growth_rate(series: Sequence[MonitorRecord]) -> float:
    """Least-squares slope of ``log sup_n`` against ``t`` over the trailing half."""
    t = np.array([r.t for r in series])
    half = t[0] + 0.5 * (t[-1] - t[0])
    tail = [r for r in series if r.t >= half]
    if len(tail) < 2:
        return 0.0
    tt = np.array([r.t for r in tail])
    y = np.log(np.maximum([r.sup_n for r in tail], 1e-300))
    if np.ptp(tt) == 0:
        return 0.0
    return float(np.polyfit(tt, y, 1)[0])


def verdict(series: Sequence[MonitorRecord], config: VerdictConfig = VerdictConfig()) -> Verdict:
    if not series:
        raise ValueError("verdict needs at least one record")
    cap = config.cap_for(series)
    if config.dt_floor is not None:
        for r in series:
            if 0 < r.dt < config.dt_floor:
                return Verdict(BLOWUP, f"dt={r.dt:.3e} below dt_floor={config.dt_floor:.3e} at t={r.t:.6g}")
    peak = max(series, key=lambda r: r.sup_n)
    if peak.sup_n > cap:
        return Verdict(BLOWUP, f"sup_n={peak.sup_n:.6g} exceeds hard cap {cap:.6g} at t={peak.t:.6g}")
    slope = log_growth_rate(series)
    if slope > config.growth_tol:
        return Verdict(GROWING, f"log sup_n slope {slope:.4g} > {config.growth_tol:g}")
    reached = config.t_end is None or series[-1].t >= config.t_end * (1 - 1e-12)
    t0, t1 = series[0].t, series[-1].t
    mid = t0 + 0.5 * (t1 - t0)
    first = max(r.sup_n for r in series if r.t <= mid)
    late = max(r.sup_n for r in series if r.t >= mid)
    window_cap = config.window_cap_factor * first
    if reached and late <= window_cap:
        return Verdict(BOUNDED, f"slope {slope:.4g} <= {config.growth_tol:g}; "
                                f"late sup_n {late:.6g} <= {window_cap:.6g}")
    why = "horizon not reached" if not reached else f"late sup_n {late:.6g} > {window_cap:.6g}"
    return Verdict(INCONCLUSIVE, why)


@dataclass(frozen=True)
class MassCheck:
    passed: bool
    max_drift: float
    max_signal_excess: float


def check_mass_invariant(series: Sequence[MonitorRecord], drift_tol: float = 1e-8,
                         signal_tol: float = 1e-6) -> MassCheck:
    """Constancy of ``mass_n`` and the bound ``mass_c <= max(mass_c(0), mass_n(0))``."""
    if not series:
        return MassCheck(True, 0.0, 0.0)
    m0 = series[0].mass_n
    bound = max(series[0].mass_c, m0)
    drift = max(abs(r.mass_n - m0) for r in series) / m0 if m0 > 0 else 0.0
    excess = max((r.mass_c - bound) / bound if bound > 0 else r.mass_c for r in series)
    excess = max(excess, 0.0)
    return MassCheck(drift <= drift_tol and excess <= signal_tol, drift, excess)
