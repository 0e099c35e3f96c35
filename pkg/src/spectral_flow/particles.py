"""Interacting particle SDEs with collision-safe explicit stepping.

    d lambda_i = (1/N) sum_{j != i} f(lambda_i, lambda_j) / (lambda_i - lambda_j) dt
                 + B(lambda_i) dt + s(lambda_i) dW_i

Dyson: f = 1, s = noise_scale.  Wishart: f = x + y plus the constant c,
s = noise_scale sqrt(lambda).  General: any f, s = noise_scale.

Time stepping
-------------
Each base interval of length cfg.dt receives one Gaussian increment from a
stream that depends only on the seed and the interval index.  The interval
is integrated by explicit Euler-Maruyama.  The step is halved, with the
increment split along a Brownian bridge, whenever

* the step exceeds an adaptive cap (a blast cap on the drift and a cap on the
  noise relative to the median gap), or
* the result violates strict ordering (or positivity for Wishart).

Bridge splitting uses a second random stream, so refining the base step or
adding caps never changes the underlying Brownian path.  Two coupled
systems are stepped on the same increments and the same subdivision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numba
import numpy as np

from .core import DriftField, InteractionKernel, OrderedSpectrum, dominates
from .errors import CollisionError, DomainError, StiffnessError

# ---------------------------------------------------------------------------
# drift kernels
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _dyson_drift(x):
    n = x.size
    out = np.zeros(n)
    for i in range(n):
        xi = x[i]
        s = 0.0
        for j in range(i + 1, n):
            r = 1.0 / (xi - x[j])
            s += r
            out[j] -= r
        out[i] += s
    return out / n


@numba.njit(cache=True)
def _wishart_drift(x, c):
    n = x.size
    out = np.zeros(n)
    for i in range(n):
        xi = x[i]
        s = 0.0
        for j in range(i + 1, n):
            r = (xi + x[j]) / (xi - x[j])
            s += r
            out[j] -= r
        out[i] += s
    return c + out / n


@numba.njit(cache=True)
def _blast_cap(x, d, nearest):
    # min_i gap_i / |d_i|: gap ahead of the motion, or the nearest gap
    n = x.size
    best = np.inf
    for i in range(n):
        a = abs(d[i])
        if a == 0.0:
            continue
        up = x[i + 1] - x[i] if i < n - 1 else np.inf
        dn = x[i] - x[i - 1] if i > 0 else np.inf
        if nearest:
            g = min(up, dn)
        else:
            g = up if d[i] > 0.0 else dn
        best = min(best, g / a)
    return best


@numba.njit(cache=True)
def _ordered(y, positive):
    if positive and not y[0] > 0.0:
        return False
    for i in range(y.size):
        if not np.isfinite(y[i]):
            return False
    for i in range(y.size - 1):
        if not y[i + 1] > y[i]:
            return False
    return True


def _general_drift(x, f):
    X = x[:, None]
    Y = x[None, :]
    D = X - Y
    np.fill_diagonal(D, 1.0)
    M = np.asarray(f(X, Y), float) / D
    np.fill_diagonal(M, 0.0)
    return M.sum(axis=1) / x.size


def drift_vector(x, kernel: InteractionKernel):
    """Interaction drift of every particle."""
    x = np.ascontiguousarray(x, dtype=float)
    if kernel.kind == "dyson":
        return _dyson_drift(x)
    if kernel.kind == "wishart":
        return _wishart_drift(x, kernel.c)
    if kernel.f is None:
        raise DomainError("general kernel without f cannot drive particles")
    return _general_drift(x, kernel.f)


def _checked(s: OrderedSpectrum, i):
    x = s.positions
    if not 0 <= i < x.size:
        raise DomainError(f"index {i} out of range")
    if np.any(np.diff(x) <= 0):
        raise CollisionError("positions are not strictly ordered")
    return x


def drift_dyson(s: OrderedSpectrum, i):
    """(1/N) sum_{j != i} 1/(lambda_i - lambda_j)."""
    x = _checked(s, i)
    d = x[i] - np.delete(x, i)
    return float(np.sum(1.0 / d) / x.size)


def drift_wishart(s: OrderedSpectrum, i, c):
    """c + (1/N) sum_{j != i} (lambda_i + lambda_j)/(lambda_i - lambda_j)."""
    x = _checked(s, i)
    if x[0] <= 0:
        raise DomainError("Wishart positions must be positive")
    o = np.delete(x, i)
    return float(c + np.sum((x[i] + o) / (x[i] - o)) / x.size)


def drift_general(s: OrderedSpectrum, i, kernel: InteractionKernel):
    """(1/N) sum_{j != i} f(lambda_i, lambda_j)/(lambda_i - lambda_j)."""
    x = _checked(s, i)
    o = np.delete(x, i)
    fx = kernel.f_at(np.full_like(o, x[i]), o)
    return float(np.sum(fx / (x[i] - o)) / x.size)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def dyson_noise(N, beta=0.5):
    """Noise coefficient sqrt(2/(beta N)); beta = 1/2 gives 2/sqrt(N), beta = 1 the GOE value."""
    return math.sqrt(2.0 / (beta * N))


@dataclass(frozen=True)
class SdeConfig:
    """Parameters of one particle simulation.

    Parameters
    ----------
    kernel : InteractionKernel
    N : int
        Number of particles.
    dt : float
        Base time step; local steps are dt / 2^k.
    t_end : float
    noise_scale : float or None
        Coefficient of dW.  Default 2/sqrt(N) for Dyson, 2/N (times sqrt(lambda))
        for Wishart and epsilon_N for general kernels.
    drift : DriftField or None
    seed : int
    epsilon_N : float or None
        Noise of the general system, default N^-1/2.
    initial : OrderedSpectrum or None
        Starting positions; default a cluster of width eta at 0 (at eta for Wishart).
    eta : float
        Width of the default cluster.
    kappa_blast : float or None
        Cap dt <= kappa_blast * min_i gap_i / |drift_i|; None disables.
    blast_gap : {"ahead", "nearest"}
        gap_i is the gap in the direction of the drift ("ahead") or the
        smaller neighbouring gap ("nearest").  "nearest" also bounds the
        overshoot of a separating close pair; use it for pathwise comparisons.
    kappa_gap : float or None
        Cap dt <= (kappa_gap * median gap / noise)^2; None disables.
    max_rejections : int
        Rejection halvings allowed below a cap-admissible step (2^-20 by default).
    """

    kernel: InteractionKernel
    N: int
    dt: float
    t_end: float
    noise_scale: Optional[float] = None
    drift: Optional[DriftField] = None
    seed: int = 0
    epsilon_N: Optional[float] = None
    initial: Optional[OrderedSpectrum] = None
    eta: float = 1e-6
    kappa_blast: Optional[float] = 0.5
    kappa_gap: Optional[float] = 0.2
    blast_gap: str = "ahead"
    max_rejections: int = 20

    def __post_init__(self):
        if self.blast_gap not in ("ahead", "nearest"):
            raise DomainError("blast_gap must be 'ahead' or 'nearest'")
        if self.N < 2:
            raise DomainError("N must be at least 2")
        if not (self.dt > 0 and self.t_end > 0):
            raise DomainError("dt and t_end must be positive")
        if self.noise_scale is not None and self.noise_scale < 0:
            raise DomainError("noise_scale must be nonnegative")
        if self.kernel.kind == "general" and self.kernel.f is None:
            raise DomainError("general kernel needs the pair interaction f")
        if self.kernel.kind == "wishart" and not self.kernel.c >= 1:
            raise DomainError("Wishart needs c = m/n >= 1")
        x0 = self.initial_positions()
        if x0.size != self.N:
            raise DomainError("initial spectrum has the wrong count")
        if np.any(np.diff(x0) <= 0):
            raise CollisionError("initial positions must be distinct")
        if self.kernel.kind == "wishart" and x0[0] <= 0:
            raise DomainError("Wishart initial positions must be positive")

    @property
    def noise(self):
        if self.noise_scale is not None:
            return float(self.noise_scale)
        if self.kernel.kind == "dyson":
            return 2.0 / math.sqrt(self.N)
        if self.kernel.kind == "wishart":
            return 2.0 / self.N
        return self.eps_N

    @property
    def eps_N(self):
        return self.N ** -0.5 if self.epsilon_N is None else float(self.epsilon_N)

    def initial_positions(self):
        if self.initial is not None:
            return np.array(self.initial.positions)
        base = self.eta * np.arange(self.N) / self.N
        if self.kernel.kind == "wishart":
            return self.eta + base
        return base

    def with_seed(self, seed):
        return replace(self, seed=int(seed))

    def describe(self):
        """key=value pairs for sidecar files."""
        d = {
            "kernel": self.kernel.label or self.kernel.kind,
            "N": self.N,
            "dt": repr(self.dt),
            "t_end": repr(self.t_end),
            "noise_scale": repr(self.noise),
            "seed": self.seed,
            "eta": repr(self.eta),
            "kappa_blast": self.kappa_blast,
            "kappa_gap": self.kappa_gap,
            "blast_gap": self.blast_gap,
            "max_rejections": self.max_rejections,
            "drift": self.drift.label if self.drift is not None else "none",
        }
        if self.kernel.kind == "wishart":
            d["c"] = repr(self.kernel.c)
        if self.kernel.kind == "general":
            d["epsilon_N"] = repr(self.eps_N)
        return d


def replica_seed(seed, r):
    """Per-replica seed, seed XOR replica index."""
    return (int(seed) ^ int(r)) & 0xFFFFFFFFFFFFFFFF


@dataclass
class Trajectory:
    """Snapshots at the recorded times."""

    times: list
    snapshots: list
    config: SdeConfig
    steps: int = 0
    rejections: int = 0

    def at(self, t):
        for tt, s in zip(self.times, self.snapshots):
            if abs(tt - t) <= 1e-12 * max(1.0, abs(t)):
                return s
        raise KeyError(t)

    @property
    def final(self):
        return self.snapshots[-1]

    def write_csv(self, path, meta_path=None):
        with open(path, "w") as fh:
            fh.write("t,i,lambda\n")
            for t, s in zip(self.times, self.snapshots):
                for i, v in enumerate(s.positions):
                    fh.write(f"{t!r},{i},{float(v)!r}\n")
        meta_path = meta_path or str(path) + ".meta"
        with open(meta_path, "w") as fh:
            for k, v in self.config.describe().items():
                fh.write(f"{k}={v}\n")
            fh.write(f"steps={self.steps}\nrejections={self.rejections}\n")


# ---------------------------------------------------------------------------
# integrator
# ---------------------------------------------------------------------------


class _System:
    """Mutable state of one particle system during integration."""

    def __init__(self, cfg: SdeConfig, x):
        self.cfg = cfg
        self.kernel = cfg.kernel
        self.x = np.array(x, dtype=float)
        self.sig = cfg.noise
        self.wishart = cfg.kernel.kind == "wishart"
        self.B = cfg.drift

    def drift(self, x):
        d = drift_vector(x, self.kernel)
        if self.B is not None:
            d = d + self.B(x)
        return d

    def noise_coeff(self, x):
        if self.wishart:
            return self.sig * np.sqrt(np.maximum(x, 0.0))
        return self.sig

    def propose(self, dW, tau, d=None):
        x = self.x
        d = self.drift(x) if d is None else d
        return x + d * tau + self.noise_coeff(x) * dW

    def valid(self, y):
        return bool(_ordered(y, self.wishart))

    def cap(self, d):
        cfg, x = self.cfg, self.x
        c = np.inf
        if cfg.kappa_blast is not None:
            # no particle may drift across more than a fraction of the gap ahead
            c = cfg.kappa_blast * _blast_cap(x, d, cfg.blast_gap == "nearest")
        if cfg.kappa_gap is not None and self.sig > 0:
            s = self.sig * (math.sqrt(max(x[-1], 0.0)) if self.wishart else 1.0)
            if s > 0:
                gap = float(np.median(np.diff(x)))
                c = min(c, (cfg.kappa_gap * gap / s) ** 2)
        return c


class _Integrator:
    def __init__(self, systems, bridge_rng, floor_levels):
        self.systems = systems
        self.rng = bridge_rng
        self.floor = floor_levels
        self.steps = 0
        self.rejections = 0
        self.t = 0.0

    def _split(self, dW, tau):
        z = self.rng.standard_normal(dW.shape)
        dW1 = 0.5 * dW + 0.5 * math.sqrt(tau) * z
        return dW1, dW - dW1

    def advance(self, dW, tau, level=0, pre=None):
        """Integrate all systems over an interval of length tau with increment dW.

        `pre` holds (drifts, cap) already evaluated at the current state.
        """
        if pre is None:
            ds = [s.drift(s.x) for s in self.systems]
            pre = (ds, min(s.cap(d) for s, d in zip(self.systems, ds)))
        ds, cap = pre
        if tau > cap:
            # cap-driven split: the rejection budget restarts below the cap
            a, b = self._split(dW, tau)
            self.advance(a, tau / 2, 0, pre)
            self.advance(b, tau / 2, 0)
            return
        ys = [s.propose(dW, tau, d) for s, d in zip(self.systems, ds)]
        if all(s.valid(y) for s, y in zip(self.systems, ys)):
            for s, y in zip(self.systems, ys):
                s.x = y
            self.steps += 1
            self.t += tau
            return
        self.rejections += 1
        if level >= self.floor:
            bad = next(i for i, (s, y) in enumerate(zip(self.systems, ys)) if not s.valid(y))
            x = self.systems[bad].x
            k = int(np.argmin(np.diff(x)))
            raise StiffnessError(
                f"step underflow at t={self.t:.6g}: particles {k},{k + 1} "
                f"at {x[k]:.6g}, {x[k + 1]:.6g}", pair=(k, k + 1), time=self.t)
        a, b = self._split(dW, tau)
        self.advance(a, tau / 2, level + 1, pre)
        self.advance(b, tau / 2, level + 1)


def _streams(seed):
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)
    base, bridge = ss.spawn(2)
    return np.random.default_rng(base), np.random.default_rng(bridge)


def _record_grid(record_times, t_end):
    rec = sorted(float(t) for t in record_times)
    if any(t < 0 or t > t_end * (1 + 1e-12) for t in rec):
        raise DomainError("record times must lie in [0, t_end]")
    if any(b <= a for a, b in zip(rec, rec[1:])):
        raise DomainError("record times must be strictly increasing")
    return rec


def _run(cfgs, starts, record_times, substeps=1):
    """Integrate systems sharing noise; returns per-system snapshot lists."""
    cfg = cfgs[0]
    rec = _record_grid(record_times, cfg.t_end)
    base_rng, bridge_rng = _streams(cfg.seed)
    systems = [_System(c, x) for c, x in zip(cfgs, starts)]
    integ = _Integrator(systems, bridge_rng, cfg.max_rejections)
    snaps = [[] for _ in systems]
    N, dt = cfg.N, cfg.dt
    tol = 1e-12 * max(1.0, cfg.t_end)
    j = 0
    while j < len(rec) and rec[j] <= tol:
        _snap(snaps, systems)
        j += 1
    k = 0
    while j < len(rec):
        a, b = k * dt, (k + 1) * dt
        W = math.sqrt(dt) * base_rng.standard_normal(N)
        t = a
        # record times inside the base interval cut it along the bridge
        while j < len(rec) and rec[j] <= b + tol:
            r = min(rec[j], b)
            if r - t > tol:
                w = (r - t) / (b - t)
                if w < 1 - 1e-12:
                    dWa = w * W + math.sqrt(w * (1 - w) * (b - t)) * bridge_rng.standard_normal(N)
                else:
                    dWa = W
                _advance_sub(integ, dWa, r - t, substeps)
                W = W - dWa
                t = r
            _snap(snaps, systems)
            j += 1
        if j < len(rec) and b - t > tol:
            _advance_sub(integ, W, b - t, substeps)
        k += 1
    return snaps, integ


def _snap(snaps, systems):
    for lst, s in zip(snaps, systems):
        lst.append(OrderedSpectrum(s.x.copy()))


def _advance_sub(integ, dW, tau, substeps):
    if substeps == 1:
        integ.advance(dW, tau)
        return
    a, b = integ._split(dW, tau)
    _advance_sub(integ, a, tau / 2, substeps // 2)
    _advance_sub(integ, b, tau / 2, substeps // 2)


def simulate(cfg: SdeConfig, record_times: Sequence[float] | None = None,
             substeps: int = 1) -> Trajectory:
    """Integrate one system and record snapshots at the given times.

    `substeps` (a power of two) subdivides every base interval along the
    Brownian bridge; the underlying path is unchanged.
    """
    rec = [cfg.t_end] if record_times is None else list(record_times)
    _check_substeps(substeps)
    snaps, integ = _run([cfg], [cfg.initial_positions()], rec, substeps)
    return Trajectory(sorted(float(t) for t in rec), snaps[0], cfg, integ.steps, integ.rejections)


def _check_substeps(m):
    if m < 1 or (m & (m - 1)):
        raise DomainError("substeps must be a power of two")


@dataclass
class ViolationReport:
    """Dominance violations lambda_i(1) > lambda_i(2) + tol."""

    tol: float
    violations: list = field(default_factory=list)
    worst_excursion: float = -np.inf

    @property
    def count(self):
        return len(self.violations)

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(f"tol={self.tol!r}\nviolations={self.count}\n"
                     f"worst_excursion={self.worst_excursion!r}\n")
            for t, i, e in self.violations:
                fh.write(f"violation t={t!r} i={i} excess={e!r}\n")


def coupled_dominance_run(cfg: SdeConfig, s1: OrderedSpectrum, s2: OrderedSpectrum,
                          record_times: Sequence[float] | None = None, K=10.0, substeps=1):
    """Two systems driven by identical Brownian increments and step subdivision.

    The worst excursion is max over records and indices of lambda_i(1) - lambda_i(2).
    """
    if s1.count != s2.count or s1.count != cfg.N:
        raise DomainError("coupled runs need equal counts matching cfg.N")
    if not dominates(s1, s2):
        raise DomainError("initial spectra are not ordered: s1 must be dominated by s2")
    _check_substeps(substeps)
    rec = [cfg.t_end] if record_times is None else list(record_times)
    c1 = replace(cfg, initial=s1)
    c2 = replace(cfg, initial=s2)
    snaps, integ = _run([c1, c2], [s1.positions, s2.positions], rec, substeps)
    times = sorted(float(t) for t in rec)
    tr1 = Trajectory(times, snaps[0], c1, integ.steps, integ.rejections)
    tr2 = Trajectory(times, snaps[1], c2, integ.steps, integ.rejections)
    rep = ViolationReport(tol=K * cfg.dt)
    for t, a, b in zip(times, snaps[0], snaps[1]):
        d = a.positions - b.positions
        rep.worst_excursion = max(rep.worst_excursion, float(d.max()))
        for i in np.nonzero(d > rep.tol)[0]:
            rep.violations.append((t, int(i), float(d[i])))
    return tr1, tr2, rep


def simulate_ensemble(cfg: SdeConfig, replicas, record_times=None, workers=1):
    """Independent replicas with seeds replica_seed(cfg.seed, r)."""
    cfgs = [cfg.with_seed(replica_seed(cfg.seed, r)) for r in range(replicas)]
    if workers <= 1:
        return [simulate(c, record_times) for c in cfgs]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(simulate, cfgs, [record_times] * replicas))


def step(s: OrderedSpectrum, cfg: SdeConfig, gaussians, dt_local, rng=None) -> OrderedSpectrum:
    """One Euler-Maruyama step of length dt_local driven by N standard normals.

    Rejected proposals are retried on halves of the same Brownian increment
    (bridge split) until ordering holds; fails below dt_local * 2^-max_rejections.
    """
    if dt_local > cfg.dt * (1 + 1e-12):
        raise DomainError("dt_local exceeds cfg.dt")
    g = np.asarray(gaussians, float)
    if g.size != cfg.N or s.count != cfg.N:
        raise DomainError("gaussians and spectrum must have length N")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    sysm = _System(replace(cfg, kappa_blast=None, kappa_gap=None), s.positions)
    integ = _Integrator([sysm], rng, cfg.max_rejections)
    integ.advance(math.sqrt(dt_local) * g, dt_local)
    return OrderedSpectrum(sysm.x, strict=True)


def deterministic_flow(x0, kernel: InteractionKernel, t_end, dt, drift=None):
    """Zero-noise flow T_t x by explicit Euler with the same safeguards."""
    x0 = np.asarray(x0, float)
    cfg = SdeConfig(kernel, x0.size, dt, t_end, noise_scale=0.0, drift=drift,
                    initial=OrderedSpectrum(x0, strict=True), kappa_gap=None)
    return simulate(cfg).final.positions


def deterministic_flow_pair(x0, y0, kernel, t_end, dt):
    """Zero-noise flows of two configurations on a shared step sequence."""
    x0, y0 = np.asarray(x0, float), np.asarray(y0, float)
    cfg = SdeConfig(kernel, x0.size, dt, t_end, noise_scale=0.0,
                    initial=OrderedSpectrum(x0, strict=True), kappa_gap=None)
    c2 = replace(cfg, initial=OrderedSpectrum(y0, strict=True))
    snaps, _ = _run([cfg, c2], [x0, y0], [t_end])
    return snaps[0][-1].positions, snaps[1][-1].positions
