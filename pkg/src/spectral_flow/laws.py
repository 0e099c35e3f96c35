"""Reference laws (semicircle, Marchenko-Pastur), calibration and metrics."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate

from .core import GridCDF, GridFunction, OrderedSpectrum, UniformGrid, quantile
from .errors import CoverageError, DomainError, MassMismatchError

#: radius coefficient of the semicircle of the nominal law, R = sqrt(t)
NOMINAL_RADIUS_COEFF = 1.0
#: edge coefficient of the MP law of the nominal law, lambda = sigma^2 (1 +- c^-1/2)^2
NOMINAL_EDGE_COEFF = 1.0


@dataclass(frozen=True)
class AnalyticLaw:
    """Semicircle or Marchenko-Pastur law.

    Semicircle: density 2/(pi R^2) sqrt(R^2 - (x-center)^2), R = radius_coeff sqrt(t).

    Marchenko-Pastur (c >= 1): edges lambda_pm = edge_coeff sigma^2 (1 +- c^-1/2)^2 and
    density c sqrt((lambda_+ - x)(x - lambda_-)) / (2 pi s2 x) with
    s2 = edge_coeff sigma^2, the value that makes the density integrate to one.
    """

    family: str
    t: float = 1.0
    radius_coeff: float = 2.0
    center: float = 0.0
    sigma: float = 1.0
    c: float = 1.0
    edge_coeff: float = 1.0
    calibrated: bool = False

    def __post_init__(self):
        if self.family not in ("semicircle", "marchenko-pastur"):
            raise DomainError(f"unknown law family {self.family!r}")
        if self.family == "semicircle":
            if not (self.t > 0 and self.radius_coeff > 0):
                raise DomainError("semicircle needs t > 0 and radius_coeff > 0")
        else:
            if not self.c >= 1:
                raise DomainError("only c >= 1 Marchenko-Pastur laws are supported")
            if not (self.sigma > 0 and self.edge_coeff > 0):
                raise DomainError("MP law needs sigma > 0 and edge_coeff > 0")

    @classmethod
    def semicircle(cls, t=1.0, radius_coeff=2.0, center=0.0, calibrated=False):
        return cls("semicircle", t=float(t), radius_coeff=float(radius_coeff),
                   center=float(center), calibrated=calibrated)

    @classmethod
    def marchenko_pastur(cls, sigma=1.0, c=2.0, edge_coeff=1.0, calibrated=False):
        return cls("marchenko-pastur", sigma=float(sigma), c=float(c),
                   edge_coeff=float(edge_coeff), calibrated=calibrated)

    def at_time(self, t):
        """Same law family at another time (semicircle R ~ sqrt(t), MP sigma^2 = t)."""
        if self.family == "semicircle":
            return replace(self, t=float(t))
        return replace(self, sigma=float(np.sqrt(t)))

    @property
    def radius(self):
        return self.radius_coeff * np.sqrt(self.t)

    @property
    def s2(self):
        return self.edge_coeff * self.sigma**2

    def support(self):
        if self.family == "semicircle":
            return self.center - self.radius, self.center + self.radius
        r = np.sqrt(1.0 / self.c)
        return self.s2 * (1 - r) ** 2, self.s2 * (1 + r) ** 2

    def density(self, x):
        x = np.asarray(x, float)
        a, b = self.support()
        inside = (x > a) & (x < b)
        out = np.zeros_like(x)
        if self.family == "semicircle":
            R = self.radius
            u = x[inside] - self.center
            out[inside] = 2.0 / (np.pi * R**2) * np.sqrt(R**2 - u**2)
        else:
            xi = x[inside]
            out[inside] = self.c * np.sqrt((b - xi) * (xi - a)) / (2 * np.pi * self.s2 * xi)
        return out

    def _theta_integrand(self):
        # y = mid + half sin(theta) makes the square-root edge behaviour smooth
        a, b = self.support()
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        if self.family == "semicircle":
            return lambda th: (2 / np.pi) * np.cos(th) ** 2, mid, half
        k = self.c * half**2 / (2 * np.pi * self.s2)
        return lambda th: k * np.cos(th) ** 2 / (mid + half * np.sin(th)), mid, half

    def cdf(self, x, epsabs=1e-13, epsrel=1e-12):
        """CDF at points x by adaptive quadrature of the density."""
        x = np.atleast_1d(np.asarray(x, float))
        a, b = self.support()
        fn, mid, half = self._theta_integrand()
        th = np.arcsin(np.clip((x - mid) / half, -1, 1))
        order = np.argsort(th)
        out = np.empty_like(x)
        acc, prev = 0.0, -np.pi / 2
        for j in order:
            if th[j] > prev:
                acc += integrate.quad(fn, prev, th[j], epsabs=epsabs, epsrel=epsrel, limit=200)[0]
                prev = th[j]
            out[j] = acc
        out[x <= a] = 0.0
        out[x >= b] = 1.0
        return out

    def moments(self):
        """(mean, variance)."""
        if self.family == "semicircle":
            return self.center, self.radius**2 / 4
        return self.s2, self.s2**2 / self.c


def law_cdf(law: AnalyticLaw, grid: UniformGrid) -> GridCDF:
    """Law CDF sampled on a grid that contains the support."""
    a, b = law.support()
    if grid.lo > a + 1e-12 or grid.hi < b - 1e-12:
        raise CoverageError(f"grid [{grid.lo}, {grid.hi}] does not cover the support [{a}, {b}]")
    vals = np.clip(law.cdf(grid.x), 0.0, 1.0)
    vals = np.maximum.accumulate(vals)
    return GridCDF.on_grid(grid, vals)


# ---------------------------------------------------------------------------
# calibration
# ---------------------------------------------------------------------------

def _pool(ensemble):
    if isinstance(ensemble, OrderedSpectrum):
        ensemble = [ensemble]
    arrs = [np.asarray(s.positions if isinstance(s, OrderedSpectrum) else s, float)
            for s in ensemble]
    if not arrs:
        raise DomainError("empty ensemble")
    return arrs


def calibrate_semicircle(ensemble, t=1.0) -> AnalyticLaw:
    """Fit the radius coefficient from the ensemble second moment (m2 = R^2/4).

    The centre is taken from the pooled mean; the variance is averaged over
    replicas so that replica-to-replica centre jitter does not inflate it.
    """
    arrs = _pool(ensemble)
    center = float(np.mean(np.concatenate(arrs)))
    m2 = float(np.mean([np.var(a) for a in arrs]))
    spread = max(float(np.ptp(np.concatenate(arrs))), 0.0)
    if not m2 > 1e-14 * max(1.0, center**2) or spread == 0.0:
        raise DomainError("degenerate ensemble: zero spread")
    R = 2.0 * np.sqrt(m2)
    return AnalyticLaw.semicircle(t=t, radius_coeff=R / np.sqrt(t), center=center,
                                  calibrated=True)


def calibrate_marchenko_pastur(ensemble, c, sigma=1.0) -> AnalyticLaw:
    """Fit edge_coeff from the ensemble mean (MP mean = edge_coeff sigma^2)."""
    arrs = _pool(ensemble)
    mean = float(np.mean(np.concatenate(arrs)))
    if not mean > 0:
        raise DomainError("degenerate ensemble: nonpositive mean")
    return AnalyticLaw.marchenko_pastur(sigma=sigma, c=c, edge_coeff=mean / sigma**2,
                                        calibrated=True)


def calibration_report(law: AnalyticLaw) -> dict:
    """Both the coefficient of the nominal law and the fitted one."""
    if law.family == "semicircle":
        return {
            "family": "semicircle",
            "t": law.t,
            "nominal_radius_coeff": NOMINAL_RADIUS_COEFF,
            "fitted_radius_coeff": float(law.radius_coeff),
            "ito_radius_coeff": 2.0,
            "center": float(law.center),
            "radius": float(law.radius),
        }
    lo, hi = law.support()
    return {
        "family": "marchenko-pastur",
        "sigma": law.sigma,
        "c": law.c,
        "nominal_edge_coeff": NOMINAL_EDGE_COEFF,
        "fitted_edge_coeff": float(law.edge_coeff),
        "lambda_minus": float(lo),
        "lambda_plus": float(hi),
    }


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def ks_distance(F: GridFunction, G: GridFunction) -> float:
    """Max nodewise |F - G|."""
    F.require_same_grid(G)
    return float(np.max(np.abs(F.values - G.values)))


def wasserstein_p(F: GridCDF, G: GridCDF, p=1.0, levels=10_000) -> float:
    """W_p as the L^p distance between quantile functions.

    Quantiles are evaluated at the midpoints (k + 1/2)/levels.  p may be inf.
    """
    F.require_same_grid(G)
    for H in (F, G):
        if abs(H.values[-1] - H.values[0] - 1.0) > 1e-9:
            raise MassMismatchError("W_p needs probability CDFs")
    if not (p >= 1):
        raise DomainError("p must be >= 1")
    u = (np.arange(levels) + 0.5) / levels
    d = np.abs(quantile(F, u) - quantile(G, u))
    if np.isinf(p):
        return float(d.max())
    return float(np.mean(d**p) ** (1.0 / p))


def lp_distance(x, y, p=2.0) -> float:
    """Normalized vector distance (N^-1 sum |x_i - y_i|^p)^(1/p); the W_p of the empirical measures."""
    a = np.asarray(getattr(x, "positions", x), float)
    b = np.asarray(getattr(y, "positions", y), float)
    d = np.abs(a - b)
    if np.isinf(p):
        return float(d.max())
    return float(np.mean(d**p) ** (1.0 / p))
