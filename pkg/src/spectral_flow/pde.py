"""Monotone explicit scheme for  d_t F + (d_x F)_+ (L[F] + B) = 0.

The update at interior nodes is

    F_i <- F_i - dt [ D^-F_i psi_+(v_i) - D^+F_i psi_-(v_i) ],   v = L[F] + B,

with smoothed positive/negative parts psi_pm.  End nodes keep their pinned
tail values.

Since v_i depends on F_j with weight -W_ij <= 0 the update is nondecreasing
in every off-diagonal node (on nondecreasing data).  It is nondecreasing in
F_i as long as

    dt [ (|v_i| + eps) / h + (F_{i+1} - F_{i-1}) / h * rowsum_i ] <= 1,

where rowsum_i = dv_i/dF_i.  Step sizes are chosen from this bound.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import DriftField, GridCDF, InteractionKernel, UniformGrid
from .errors import DomainError, StiffnessError
from .operators import FieldOperator, PvQuadratureParams, wishart_velocity_values


def smoothed_pos(v, eps=1e-3):
    """(v + sqrt(v^2 + eps^2)) / 2: smooth, >= 0, slope in [0, 1], -> v_+."""
    if not eps > 0:
        raise DomainError("eps must be positive")
    v = np.asarray(v, float)
    # written to avoid cancellation for v << 0
    r = np.sqrt(v * v + eps * eps)
    out = np.where(v >= 0, 0.5 * (v + r), 0.5 * eps * eps / np.maximum(r - v, 1e-300))
    return float(out) if out.ndim == 0 else out


def smoothed_neg(v, eps=1e-3):
    """smoothed_pos(-v); smoothed_pos(v) - smoothed_neg(v) = v."""
    return smoothed_pos(-np.asarray(v, float), eps)


@dataclass(frozen=True)
class SchemeParams:
    """Discretization knobs of the monotone scheme.

    Parameters
    ----------
    h : float
        Grid spacing; the finite-difference offset of the scheme is the same h.
    dt : float
        Largest allowed time step; the CFL bound may reduce it.
    kernel : InteractionKernel
    eps_smooth : float
        Width of psi_pm.
    eps_kernel : float or None
        Kernel mollification width, default h/2.
    cfl_safety : float
        Fraction of the monotonicity bound actually used.
    drift : DriftField or None
        External force B(x).
    quad : PvQuadratureParams
    eps_floor : float
        Added to the CFL denominator.
    """

    h: float
    dt: float
    kernel: InteractionKernel = field(default_factory=InteractionKernel.dyson)
    eps_smooth: float = 1e-3
    eps_kernel: Optional[float] = None
    cfl_safety: float = 0.9
    drift: Optional[DriftField] = None
    quad: PvQuadratureParams = field(default_factory=PvQuadratureParams)
    eps_floor: float = 1e-12
    max_halvings: int = 30

    def __post_init__(self):
        if not (self.h > 0 and self.dt > 0):
            raise DomainError("h and dt must be positive")
        if not (0 < self.cfl_safety < 1):
            raise DomainError("cfl_safety must lie in (0, 1)")
        if not self.eps_smooth > 0:
            raise DomainError("eps_smooth must be positive")

    @property
    def kernel_width(self):
        return self.h / 2 if self.eps_kernel is None else self.eps_kernel


@dataclass
class SolveReport:
    """Final state plus one trace row per accepted step."""

    final: GridCDF
    times: list = field(default_factory=list)
    max_dxF: list = field(default_factory=list)
    dt_used: list = field(default_factory=list)
    repairs: list = field(default_factory=list)

    @property
    def steps(self):
        return len(self.times)

    @property
    def total_repairs(self):
        return int(sum(self.repairs))

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("t,max_dxF,dt_used,repairs\n")
            for row in zip(self.times, self.max_dxF, self.dt_used, self.repairs):
                fh.write(f"{row[0]!r},{row[1]!r},{row[2]!r},{int(row[3])}\n")


def max_slope(values, h):
    """max forward difference quotient."""
    return float(np.max(np.diff(values)) / h)


class MonotoneScheme:
    """Velocity evaluation and single steps on a fixed grid."""

    def __init__(self, grid: UniformGrid, p: SchemeParams):
        if abs(grid.h - p.h) > 1e-12 * p.h:
            raise DomainError(f"grid spacing {grid.h} differs from scheme h = {p.h}")
        self.grid, self.p = grid, p
        k = p.kernel
        q = PvQuadratureParams(delta=p.quad.delta, far_cut=p.quad.far_cut,
                               eps_kernel=p.kernel_width, tail_cut=p.quad.tail_cut)
        if k.kind == "wishart" and abs(grid.lo) > 1e-12:
            raise DomainError("the Wishart scheme lives on a grid starting at 0")
        self.op = FieldOperator(grid, k, q, taylor=False)
        self.rowsum = self.op.rowsum + (2.0 if k.kind == "wishart" else 0.0)
        self.B = p.drift(grid.x) if p.drift is not None else np.zeros(grid.size)

    def velocity(self, v):
        k = self.p.kernel
        if k.kind == "wishart":
            out = wishart_velocity_values(v, k.c, self.op)
        else:
            out = self.op.apply(v)
        return out + self.B

    def cfl_dt(self, v, vel=None):
        """Largest step keeping the update monotone (before the safety factor)."""
        p = self.p
        vel = self.velocity(v) if vel is None else vel
        spread = np.zeros_like(v)
        spread[1:-1] = v[2:] - v[:-2]
        denom = (np.sqrt(vel**2 + p.eps_smooth**2) + spread * self.rowsum)[1:-1]
        return p.h / (float(np.max(denom)) + p.eps_floor)

    def raw_step(self, v, dt, vel=None):
        p = self.p
        vel = self.velocity(v) if vel is None else vel
        dm = (v[1:-1] - v[:-2]) / p.h
        dp = (v[2:] - v[1:-1]) / p.h
        w = vel[1:-1]
        out = v.copy()
        out[1:-1] = v[1:-1] - dt * (dm * smoothed_pos(w, p.eps_smooth)
                                    - dp * smoothed_neg(w, p.eps_smooth))
        np.clip(out, v[0], v[-1], out=out)
        out[0], out[-1] = v[0], v[-1]
        return out

    def step(self, v, dt):
        """One accepted step: returns (values, dt_used, repairs)."""
        vel = self.velocity(v)
        dt = min(dt, self.p.cfl_safety * self.cfl_dt(v, vel))
        repairs = 0
        while True:
            out = self.raw_step(v, dt, vel)
            if np.all(np.diff(out) >= -1e-14):
                return out, dt, repairs
            repairs += 1
            dt *= 0.5
            if repairs > self.p.max_halvings:
                raise StiffnessError("monotonicity repair failed: time step underflow")


def step_monotone(F: GridCDF, p: SchemeParams) -> GridCDF:
    """One explicit monotone step of size min(p.dt, CFL)."""
    sch = MonotoneScheme(F.grid, p)
    out, _, _ = sch.step(np.array(F.values), p.dt)
    return F.with_values(out)


def solve(F0: GridCDF, t_end, p: SchemeParams, record_times=None, t0=0.0):
    """Integrate from t0 to t_end, landing exactly on each record time.

    Returns
    -------
    snapshots : list of GridCDF, one per record time (default: [t_end])
    report : SolveReport
    """
    if not t_end > t0:
        raise DomainError("t_end must exceed the start time")
    rec = [t_end] if record_times is None else sorted(float(r) for r in record_times)
    if rec and (rec[0] < t0 - 1e-15 or rec[-1] > t_end + 1e-12):
        raise DomainError("record times must lie in [t0, t_end]")
    sch = MonotoneScheme(F0.grid, p)
    v = np.array(F0.values)
    t = t0
    snaps = []
    report = SolveReport(final=F0)
    targets = rec + ([t_end] if not rec or rec[-1] < t_end else [])
    for target in targets:
        while target - t > 1e-14 * max(1.0, target):
            dt = min(p.dt, target - t)
            v, used, rep = sch.step(v, dt)
            t = target if used >= target - t else t + used
            report.times.append(t)
            report.max_dxF.append(max_slope(v, p.h))
            report.dt_used.append(used)
            report.repairs.append(rep)
        if target in rec:
            snaps.append(F0.with_values(v))
    report.final = F0.with_values(v)
    return snaps, report


def step_initial_cdf(grid: UniformGrid, x0=0.0) -> GridCDF:
    """One-node jump at the grid node nearest x0: F = 1{x >= x0}."""
    k = grid.index_of(x0)
    v = np.zeros(grid.size)
    v[k:] = 1.0
    return GridCDF.on_grid(grid, v)


def dirac_selection_test(p: SchemeParams, t_probe, half_width=None):
    """Solve from a one-node step at 0 and return F(t_probe).

    The grid is [-L, L] with L = max(2, 2.5 sqrt(t_probe)) + 1 unless given.
    """
    if p.kernel.kind != "dyson":
        raise DomainError("the selection test uses the Dyson kernel")
    L = half_width if half_width is not None else max(2.0, 2.5 * np.sqrt(t_probe)) + 1.0
    L = np.ceil(L / p.h) * p.h
    grid = UniformGrid(-L, L, p.h)
    F0 = step_initial_cdf(grid)
    snaps, _ = solve(F0, t_probe, p)
    return snaps[-1]
