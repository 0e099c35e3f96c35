"""Core domain types: ordered spectra, grid CDFs, interaction kernels, drifts.

Everything here is immutable after construction.  Arrays are stored as
read-only copies so that objects can be shared freely between workers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    CollisionError,
    ContractError,
    CoverageError,
    DomainError,
    GridMismatchError,
)

PIN_TOL = 1e-9
MONO_TOL = 1e-12

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------

class OrderedSpectrum:
    """Sorted particle or eigenvalue positions at one instant.

    Parameters
    ----------
    positions : array_like
        Coordinates, nondecreasing.
    strict : bool
        Require strictly increasing positions (SDE initial data).
    """

    __slots__ = ("_x",)

    def __init__(self, positions, strict=False):
        x = np.asarray(positions, dtype=float).ravel()
        if x.size == 0:
            raise DomainError("spectrum must contain at least one position")
        if not np.all(np.isfinite(x)):
            raise DomainError("spectrum positions must be finite")
        d = np.diff(x)
        if np.any(d < 0):
            raise DomainError("positions must be sorted nondecreasing")
        if strict and np.any(d <= 0):
            k = int(np.argmin(d))
            raise CollisionError(f"positions {k} and {k + 1} coincide at {x[k]!r}")
        self._x = _frozen(x)

    @classmethod
    def from_unsorted(cls, values, strict=False):
        return cls(np.sort(np.asarray(values, dtype=float)), strict=strict)

    @classmethod
    def cluster(cls, x0, N, eta=1e-6):
        """N particles at x0 + (i/N)*eta, i = 0..N-1: a jittered point mass."""
        if N < 1:
            raise DomainError("N must be positive")
        return cls(x0 + eta * np.arange(N) / N, strict=N > 1)

    @property
    def positions(self):
        return self._x

    @property
    def count(self):
        return self._x.size

    def __len__(self):
        return self._x.size

    def __repr__(self):
        return f"OrderedSpectrum(N={self.count}, range=[{self._x[0]:.4g}, {self._x[-1]:.4g}])"

    def __eq__(self, other):
        return isinstance(other, OrderedSpectrum) and np.array_equal(self._x, other._x)

    def __hash__(self):
        return hash(self._x.tobytes())


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UniformGrid:
    """Nodes lo, lo+h, ..., hi."""

    lo: float
    hi: float
    h: float

    def __post_init__(self):
        if not (self.h > 0):
            raise DomainError("grid spacing must be positive")
        if not (self.hi > self.lo):
            raise DomainError("grid_hi must exceed grid_lo")
        n = (self.hi - self.lo) / self.h
        if abs(n - round(n)) > 1e-6:
            raise DomainError(f"(hi - lo)/h = {n} is not an integer")

    @classmethod
    def from_step(cls, lo, h, n_nodes):
        return cls(float(lo), float(lo + h * (n_nodes - 1)), float(h))

    @property
    def size(self):
        return int(round((self.hi - self.lo) / self.h)) + 1

    @property
    def x(self):
        return self.lo + self.h * np.arange(self.size)

    def index_of(self, x):
        """Nearest node index to x."""
        k = int(round((x - self.lo) / self.h))
        if k < 0 or k >= self.size:
            raise DomainError(f"x = {x} lies outside the grid")
        return k


class GridFunction:
    """Real values on a uniform grid; constant extension outside.

    The operators accept any grid function, not only distribution
    functions (ellipticity tests use functions with interior maxima).
    """

    def __init__(self, grid_lo, h, values):
        v = np.asarray(values, dtype=float).ravel()
        if v.size < 2:
            raise DomainError("a grid function needs at least two nodes")
        self.grid = UniformGrid.from_step(grid_lo, h, v.size)
        self._v = _frozen(v)

    @property
    def values(self):
        return self._v

    @property
    def grid_lo(self):
        return self.grid.lo

    @property
    def grid_hi(self):
        return self.grid.hi

    @property
    def h(self):
        return self.grid.h

    @property
    def x(self):
        return self.grid.x

    @property
    def size(self):
        return self._v.size

    def same_grid(self, other, rtol=1e-12):
        a, b = self.grid, other.grid
        scale = max(1.0, abs(a.lo), abs(a.hi))
        return (a.size == b.size and abs(a.lo - b.lo) <= rtol * scale
                and abs(a.h - b.h) <= rtol * a.h)

    def require_same_grid(self, other):
        if not self.same_grid(other):
            raise GridMismatchError("grid functions live on different grids")

    def with_values(self, values):
        return GridFunction(self.grid_lo, self.h, values)


class GridCDF(GridFunction):
    """Nondecreasing grid function with pinned tail values 0 and `mass`.

    Parameters
    ----------
    grid_lo, grid_hi, h : float
        Grid bounds and spacing; grid_hi - grid_lo must equal h*(len-1).
    values : array_like
        Nodal values in [0, 1], nondecreasing.
    mass : float
        Total mass, in (0, 1].
    pinned : bool
        Enforce values[0] = 0 and values[-1] = mass to within 1e-9.
        Unpinned CDFs are used for constant functions and operator tests.
    """

    def __init__(self, grid_lo, grid_hi, h, values, mass=1.0, pinned=True):
        super().__init__(grid_lo, h, values)
        span = h * (self.size - 1)
        if abs((grid_hi - grid_lo) - span) > 1e-9 * max(1.0, abs(span)):
            raise DomainError("grid_hi - grid_lo must equal h*(len(values)-1)")
        v = self.values
        if np.any(np.diff(v) < -MONO_TOL):
            raise DomainError("CDF values must be nondecreasing")
        if v.min() < -PIN_TOL or v.max() > 1.0 + PIN_TOL:
            raise DomainError("CDF values must lie in [0, 1]")
        if pinned:
            if not (0.0 < mass <= 1.0 + PIN_TOL):
                raise DomainError("mass must lie in (0, 1]")
            if abs(v[0]) > PIN_TOL or abs(v[-1] - mass) > PIN_TOL:
                raise CoverageError(
                    f"tails not pinned: F[0]={v[0]:.3e}, F[-1]={v[-1]:.6f}, mass={mass}")
        self.mass = float(mass)
        self.pinned = bool(pinned)

    @classmethod
    def on_grid(cls, grid: UniformGrid, values, mass=1.0, pinned=True):
        return cls(grid.lo, grid.hi, grid.h, values, mass=mass, pinned=pinned)

    @classmethod
    def from_function(cls, grid: UniformGrid, fn, mass=1.0, pinned=True):
        return cls.on_grid(grid, fn(grid.x), mass=mass, pinned=pinned)

    def with_values(self, values, pinned=None):
        return GridCDF(self.grid_lo, self.grid_hi, self.h, values, mass=self.mass,
                       pinned=self.pinned if pinned is None else pinned)

    def __repr__(self):
        return (f"GridCDF([{self.grid_lo:.4g}, {self.grid_hi:.4g}], h={self.h:.4g}, "
                f"nodes={self.size}, mass={self.mass:g})")


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

def _sample_box(box, n):
    s = np.linspace(box[0], box[1], n)
    X, Y = np.meshgrid(s, s, indexing="ij")
    return X.ravel(), Y.ravel()


@dataclass(frozen=True)
class InteractionKernel:
    """Pair interaction f(x, y) and operator kernel g(x, z).

    The particle drift is (1/N) sum_j f(x_i, x_j)/(x_i - x_j); the mean-field
    operator is L[F](x) = int g(x, z) (F(x) - F(x+z)) / z^2 dz, where
    g(x, y - x) = (x - y) d_y f(x, y) + f(x, y).

    Use the constructors :meth:`dyson`, :meth:`wishart` and :meth:`general`.
    """

    kind: str
    f: Optional[Callable] = field(repr=False)
    g: Callable = field(repr=False)
    lipschitz_C: float = 1.0
    alpha0: float = 1.0
    c: float = 0.0
    box: tuple = (-1.0, 1.0)
    even_at_origin: bool = True
    label: str = ""
    half_line: bool = False

    # --- constructors -----------------------------------------------------

    @classmethod
    def dyson(cls):
        one = lambda x, y: np.ones(np.broadcast(x, y).shape)
        return cls("dyson", one, one, 1.0, np.inf, label="dyson")

    @classmethod
    def wishart(cls, c):
        if not c >= 1.0:
            raise DomainError(f"Wishart aspect ratio c = m/n must be >= 1, got {c}")
        f = lambda x, y: np.asarray(x, float) + np.asarray(y, float)

        def g(x, z):
            x = np.asarray(x, float)
            z = np.asarray(z, float)
            return np.where(z >= -x, 2.0 * x, 0.0) + 0.0 * z
        return cls("wishart", f, g, 2.0, np.inf, c=float(c), box=(0.0, 1.0),
                   label=f"wishart(c={c:g})")

    @classmethod
    def general(cls, f=None, g=None, box=(-1.0, 1.0), alpha0=0.5, lipschitz_C=None,
                n_sample=41, gf_tol=1e-5, label="general", half_line=False):
        """Build and validate a general kernel.

        If only f is given, g is derived from the f-g relation with a central
        difference for d_y f.  If only g is given the kernel is usable by the
        operators but not by particle systems.  Regularity conditions are
        checked by dense sampling on `box` (points x, x+z in the box) and on
        the strip x in box, |z| < alpha0.  `half_line` declares g = 0 for
        x + z < 0, so that cells are clipped at y = 0 before quadrature.
        """
        if f is None and g is None:
            raise ContractError("general kernel needs f or g")
        if g is None:
            g = _g_from_f(f)
        kern = cls("general", f, g, 1.0, float(alpha0), box=tuple(map(float, box)),
                   label=label, half_line=half_line)
        C, even = kern._validate(lipschitz_C, n_sample, gf_tol)
        return cls("general", f, g, C, float(alpha0), box=kern.box,
                   even_at_origin=even, label=label, half_line=half_line)

    @classmethod
    def null(cls):
        """g = 0: the operator vanishes (pure transport tests)."""
        zero = lambda x, z: np.zeros(np.broadcast(x, z).shape)
        return cls("general", None, zero, 1.0, 1.0, box=(-1.0, 1.0), label="null")

    @classmethod
    def pair_interaction(cls, f, label="pair"):
        """Particle-only kernel: f is used as given and the operator contract is not checked.

        For interactions such as sigma^2(x) sigma^2(y) whose operator kernel g
        changes sign outside a small box.  Operators reject such kernels.
        """
        return cls("general", f, _g_from_f(f), np.inf, 0.0, box=(0.0, 0.0),
                   even_at_origin=False, label=label)

    @property
    def validated(self):
        return self.kind != "general" or np.isfinite(self.lipschitz_C)

    # --- evaluation -------------------------------------------------------

    @property
    def has_f(self):
        return self.f is not None

    def g_at(self, x, z):
        return np.asarray(self.g(x, z), dtype=float) * np.ones(np.broadcast(x, z).shape)

    def f_at(self, x, y):
        if self.f is None:
            raise ContractError("kernel has no pair interaction f")
        return np.asarray(self.f(x, y), dtype=float) * np.ones(np.broadcast(x, y).shape)

    def dz_g0(self, x, dz=1e-5):
        """Central-difference d_z g(x, 0)."""
        return (self.g_at(x, dz) - self.g_at(x, -dz)) / (2 * dz)

    def cell_integral(self, x, za, zb):
        """int_{za}^{zb} g(x, z) / z^2 dz on intervals not containing 0.

        Endpoints may be infinite.  Closed form for Dyson and Wishart,
        8-point Gauss-Legendre in u = 1/z otherwise.
        """
        x, za, zb = np.broadcast_arrays(np.asarray(x, float), np.asarray(za, float),
                                        np.asarray(zb, float))
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kind == "dyson":
                return 1.0 / za - 1.0 / zb
            if self.kind == "wishart":
                lo = np.maximum(za, -x)
                out = np.where(zb > lo, 2.0 * x * (1.0 / lo - 1.0 / zb), 0.0)
                return np.where(np.isfinite(out), out, 0.0)
            if self.half_line:
                za = np.maximum(za, -x)
                empty = zb <= za
                za = np.where(empty, zb, za)
            ua = 1.0 / zb
            ub = 1.0 / za
        mid = 0.5 * (ua + ub)
        half = 0.5 * (ub - ua)
        u = mid[..., None] + half[..., None] * _GL_NODES
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = self.g_at(x[..., None], 1.0 / u)
            out = half * np.sum(vals * _GL_WEIGHTS, axis=-1)
        if self.half_line:
            out = np.where(empty, 0.0, out)
        return np.where(np.isfinite(out), out, 0.0)

    # --- validation -------------------------------------------------------

    def _validate(self, C_given, n, gf_tol):
        X, Y = _sample_box(self.box, n)
        Z = Y - X
        G = self.g_at(X, Z)
        if not np.all(np.isfinite(G)):
            raise ContractError("g is not finite on the validation box")
        # derived g carries central-difference rounding of order 1e-10
        if G.min() < -1e-8 * max(1.0, float(np.max(np.abs(G)))):
            k = int(np.argmin(G))
            raise ContractError(
                f"g must be nonnegative: g({X[k]:.3g}, {Z[k]:.3g}) = {G[k]:.3g}")
        # Lipschitz in x at fixed z
        dx = (self.box[1] - self.box[0]) / (n - 1)
        Gs = self.g_at(X + dx, Z)
        inside = (X + dx <= self.box[1] + 1e-12)
        lip = np.max(np.abs(Gs - G)[inside]) / dx if np.any(inside) else 0.0
        # bounds on the strip |z| < alpha0
        xs = np.linspace(self.box[0], self.box[1], n)
        zs = np.linspace(-self.alpha0, self.alpha0, n)[1:-1]
        XS, ZS = np.meshgrid(xs, zs, indexing="ij")
        GS = self.g_at(XS, ZS)
        if GS.min() <= 0:
            raise ContractError("g must be bounded below by a positive constant near z = 0")
        bound = max(GS.max(), 1.0 / GS.min())
        # log-derivative condition
        e = 1e-5
        lg = lambda xx, zz: (self.g_at(xx + e, zz) - self.g_at(xx - e, zz)) / (2 * e) / self.g_at(xx, zz)
        lg0 = lg(XS, np.zeros_like(ZS))
        nz = np.abs(ZS) > 1e-12
        ratio = np.max(np.abs(lg(XS, ZS) - lg0)[nz] / np.abs(ZS[nz])) if np.any(nz) else 0.0
        needed = max(lip, bound, ratio)
        if C_given is None:
            C = 1.05 * needed + 1e-12
        else:
            C = float(C_given)
            if needed > C * (1 + 1e-9):
                raise ContractError(
                    f"regularity constant {C} too small: sampled value {needed:.4g}")
        # f-g compatibility
        if self.f is not None:
            ghat = _g_from_f(self.f)(X, Z)
            err = np.max(np.abs(ghat - G) / np.maximum(1.0, np.abs(G)))
            if err > gf_tol:
                raise ContractError(f"f and g violate the compatibility relation (max err {err:.3g})")
        even = bool(np.max(np.abs(self.dz_g0(xs))) < 1e-7 * max(1.0, bound))
        return C, even


def _g_from_f(f, dy=1e-5):
    def g(x, z):
        x = np.asarray(x, float)
        y = x + np.asarray(z, float)
        dfy = (np.asarray(f(x, y + dy), float) - np.asarray(f(x, y - dy), float)) / (2 * dy)
        return (x - y) * dfy + np.asarray(f(x, y), float) * np.ones(np.broadcast(x, y).shape)
    return g


# ---------------------------------------------------------------------------
# drift
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DriftField:
    """External force B with one-sided Lipschitz constant c0.

    B(x) - B(y) >= -c0 (x - y) is checked on sampled pairs x >= y in `box`.
    """

    B: Callable = field(repr=False)
    c0: float = 0.0
    box: tuple = (-5.0, 5.0)
    label: str = ""

    def __post_init__(self):
        if self.c0 < 0:
            raise ContractError("c0 must be nonnegative")
        s = np.linspace(self.box[0], self.box[1], 201)
        b = self(s)
        if not np.all(np.isfinite(b)):
            raise ContractError("B is not finite on the sampling box")
        X, Y = np.meshgrid(s, s, indexing="ij")
        bx, by = np.meshgrid(b, b, indexing="ij")
        m = X > Y
        slack = (bx - by + self.c0 * (X - Y))[m]
        if slack.min() < -1e-10:
            raise ContractError("drift violates the one-sided Lipschitz bound")

    def __call__(self, x):
        x = np.asarray(x, float)
        return np.asarray(self.B(x), float) * np.ones_like(x)

    @classmethod
    def constant(cls, b):
        return cls(lambda x: np.full(np.shape(x), float(b)), 0.0, label=f"B={b:g}")

    @classmethod
    def linear(cls, a):
        """B(x) = -a x (confining for a > 0); c0 = max(a, 0)."""
        return cls(lambda x: -a * np.asarray(x, float), max(float(a), 0.0), label=f"B=-{a:g}x")


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def empirical_cdf(s: OrderedSpectrum, grid: UniformGrid) -> GridCDF:
    """Counting function N^{-1} #{i : lambda_i <= x} sampled on `grid`."""
    x = s.positions
    if grid.lo > x[0] - grid.h * (1 - 1e-9) or grid.hi < x[-1] + grid.h * (1 - 1e-9):
        raise CoverageError(
            f"grid [{grid.lo}, {grid.hi}] does not cover spectrum [{x[0]}, {x[-1]}] with margin h")
    vals = np.searchsorted(x, grid.x, side="right") / x.size
    return GridCDF.on_grid(grid, vals)


def dominates(s1: OrderedSpectrum, s2: OrderedSpectrum) -> bool:
    """Spectral dominance s1 <= s2.

    Equal counts: lambda_i(s1) <= lambda_i(s2) for every i.  Unequal counts:
    #{s1 <= x} >= #{s2 <= x} for all real x (raw counts), checked at every jump.
    """
    a, b = s1.positions, s2.positions
    if a.size == b.size:
        return bool(np.all(a <= b))
    pts = np.concatenate([a, b])
    ca = np.searchsorted(a, pts, side="right")
    cb = np.searchsorted(b, pts, side="right")
    return bool(np.all(ca >= cb))


def cdf_dominates(F1: GridFunction, F2: GridFunction, tol=0.0) -> bool:
    """True iff F1 >= F2 - tol at every node (F1's measure lies to the left)."""
    F1.require_same_grid(F2)
    return bool(np.all(F1.values >= F2.values - tol))


def quantile(F: GridFunction, p):
    """Generalized inverse inf{x : F(x) >= p}, linear between bracketing nodes.

    `p` may be a scalar or an array of levels in (0, 1).
    """
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr <= 0) or np.any(p_arr >= 1):
        raise DomainError("quantile levels must lie in (0, 1)")
    v = np.maximum.accumulate(F.values)
    k = np.searchsorted(v, p_arr, side="left")
    if np.any(k >= v.size):
        raise DomainError("level exceeds the total mass of F")
    x = F.grid_lo + F.h * k
    km = np.maximum(k - 1, 0)
    lo_v = v[km]
    hi_v = v[k]
    jump = hi_v - lo_v
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(jump > 0, (p_arr - lo_v) / jump, 1.0)
    out = np.where(k > 0, x - F.h + F.h * frac, x)
    return float(out) if np.ndim(p) == 0 else out


# ---------------------------------------------------------------------------
# CSV io
# ---------------------------------------------------------------------------

def _fmt(v):
    return repr(float(v))


def write_grid_cdf(path, F: GridFunction):
    with open(path, "w") as fh:
        fh.write("x,F\n")
        for xv, fv in zip(F.x, F.values):
            fh.write(f"{_fmt(xv)},{_fmt(fv)}\n")


def read_grid_cdf(path, mass=1.0, pinned=True) -> GridCDF:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    x, v = data[:, 0], data[:, 1]
    h = (x[-1] - x[0]) / (x.size - 1)
    return GridCDF(x[0], x[-1], h, v, mass=mass, pinned=pinned)


def write_spectrum(path, s: OrderedSpectrum):
    with open(path, "w") as fh:
        fh.write("lambda\n")
        for v in s.positions:
            fh.write(_fmt(v) + "\n")


def read_spectrum(path) -> OrderedSpectrum:
    return OrderedSpectrum(np.loadtxt(path, skiprows=1, ndmin=1))


def write_field(path, x, values):
    with open(path, "w") as fh:
        fh.write("x,value\n")
        for xv, fv in zip(x, values):
            fh.write(f"{_fmt(xv)},{_fmt(fv)}\n")
