"""Singular nonlocal operators on grid functions.

    L[F](x) = PV int g(x, z) (F(x) - F(x+z)) / z^2 dz

with g = 1 for the half-Laplacian type operator H~ and g = 2x 1{z >= -x}
for the integral part of the Wishart operator K~.

Discretization
--------------
F is treated as constant on node cells [x_j - h/2, x_j + h/2] and on the two
tails beyond the grid, where it takes its end values.  The weight of node j
seen from node i is the exact cell integral of g(x_i, z)/z^2; the tails get
the exact semi-infinite integral.  Every weight is nonnegative when g is, so
the discrete operator inherits the maximum principle: at a global max each
term W_ij (F_i - F_j) is >= 0.

The own cell |z| < h/2 is dropped.  For smooth F and even g this is exact
to second order: the midpoint errors of the neighbouring cells cancel the
missing -F''h/2.  If d_z g(x, 0) != 0 the own cell also carries an odd part
-d_z g(x, 0) F' h, and the node cells k, -k leave an odd residue of the same
form; together they give -ln(2) d_z g(x, 0) (F_{i+1} - F_{i-1})/2.  That
term has no sign, so it is only added when `taylor=True` and never by the
monotone PDE scheme.

With eps_kernel > 0 the weight 1/z^2 is replaced by min(1/z^2, 1/eps^2).
Cells have |z| >= h/2, so widths up to h/2 change nothing.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GridFunction, InteractionKernel, UniformGrid
from .errors import ContractError, DomainError

_DYSON = InteractionKernel.dyson()


@dataclass(frozen=True)
class PvQuadratureParams:
    """Quadrature knobs.

    Parameters
    ----------
    delta : float or None
        Inner radius of the I1/I2 split; default 10h.
    far_cut : float or None
        Nodes farther than this are replaced by the tail values; default is
        the full grid width (no folding).
    eps_kernel : float
        Mollification width: 1/z^2 becomes min(1/z^2, 1/eps^2).  0 keeps
        the exact kernel.
    tail_cut : float
        Outer radius of integration, |z| <= tail_cut (inf by default).
        Finite values are only needed for kernels with g growing like |z|
        or faster, whose integral over the real line diverges.
    """

    delta: float | None = None
    far_cut: float | None = None
    eps_kernel: float = 0.0
    tail_cut: float = np.inf

    def resolve(self, grid: UniformGrid):
        h = grid.h
        width = grid.hi - grid.lo
        delta = 10 * h if self.delta is None else float(self.delta)
        far = width if self.far_cut is None else float(self.far_cut)
        if not (h <= delta * (1 + 1e-12)):
            raise DomainError(f"delta = {delta} must be at least h = {h}")
        if not (delta < far * (1 + 1e-12) or far >= width):
            raise DomainError(f"delta = {delta} must be below far_cut = {far}")
        if self.eps_kernel < 0:
            raise DomainError("eps_kernel must be nonnegative")
        return delta, far


_GL_Z, _GL_ZW = np.polynomial.legendre.leggauss(8)


def mollified_cell_integral(kernel, x, za, zb, eps):
    """int_{za}^{zb} g(x, z) min(1/z^2, 1/eps^2) dz for intervals avoiding 0."""
    base = kernel.cell_integral(x, za, zb)
    if eps <= 0:
        return base
    x, za, zb = np.broadcast_arrays(np.asarray(x, float), np.asarray(za, float),
                                    np.asarray(zb, float))
    pos = za > 0
    # clipped inner piece [a, b] with |z| < eps
    a = np.where(pos, za, np.maximum(za, -eps))
    b = np.where(pos, np.minimum(zb, eps), zb)
    if kernel.half_line:
        a = np.maximum(a, -x)
    hit = b > a
    if not np.any(hit):
        return base
    a = np.where(hit, a, 1.0)
    b = np.where(hit, b, 2.0)
    exact = kernel.cell_integral(x, a, b)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    z = mid[..., None] + half[..., None] * _GL_Z
    flat = half * np.sum(kernel.g_at(x[..., None], z) * _GL_ZW, axis=-1) / eps**2
    return np.where(hit, base - exact + flat, base)


# ---------------------------------------------------------------------------
# row / matrix assembly
# ---------------------------------------------------------------------------

@dataclass
class OperatorRows:
    """Weights of L at a set of evaluation nodes.

    L_i = sum_j W_ij (F_i - F_j) + t_lo_i (F_i - F_0) + t_hi_i (F_i - F_last)
          - tay_i (F_{i+1} - F_{i-1}) / 2
    """

    nodes: np.ndarray
    W: np.ndarray
    t_lo: np.ndarray
    t_hi: np.ndarray
    tay: np.ndarray
    offsets: np.ndarray  # |k| h of each W entry, for the delta split

    def _extended(self, v):
        ve = np.concatenate([[v[0]], v, [v[-1]]])
        i = self.nodes + 1
        return ve[i], ve[i + 1], ve[i - 1]

    def parts(self, values, delta=None):
        """(inner, outer) contributions split at |z| <= delta."""
        v = np.asarray(values, float)
        Fi, Fp, Fm = self._extended(v)
        diff = Fi[:, None] - v[None, :]
        contrib = self.W * diff
        own = -0.5 * self.tay * (Fp - Fm)
        tails = self.t_lo * (Fi - v[0]) + self.t_hi * (Fi - v[-1])
        if delta is None:
            return own + contrib.sum(axis=1), tails
        inner = self.offsets <= delta * (1 + 1e-12)
        i1 = own + np.where(inner, contrib, 0.0).sum(axis=1)
        i2 = np.where(inner, 0.0, contrib).sum(axis=1) + tails
        return i1, i2

    def apply(self, values):
        a, b = self.parts(values)
        return a + b


def assemble_rows(grid: UniformGrid, kernel: InteractionKernel, q: PvQuadratureParams,
                  nodes=None, taylor=True) -> OperatorRows:
    """Dense weights of the discrete operator at `nodes` (default: all)."""
    if not kernel.validated:
        raise ContractError("kernel was built without the operator contract (pair_interaction)")
    delta, far = q.resolve(grid)
    h, n = grid.h, grid.size
    nodes = np.arange(n) if nodes is None else np.atleast_1d(np.asarray(nodes, int))
    xi = grid.lo + h * nodes
    k = np.arange(n)[None, :] - nodes[:, None]
    K = int(np.floor(far / h + 1e-9))
    tc = q.tail_cut
    za = np.maximum((k - 0.5) * h, -tc)
    zb = np.minimum((k + 0.5) * h, tc)
    keep = (k != 0) & (np.abs(k) <= K) & (zb > za)
    za = np.where(keep, za, 1.0)
    zb = np.where(keep, zb, 2.0)
    X = np.broadcast_to(xi[:, None], k.shape)
    W = np.where(keep, mollified_cell_integral(kernel, X, za, zb, q.eps_kernel), 0.0)
    # tails start where the last kept cell ends
    r_edge = (np.minimum(n - 1 - nodes, K) + 0.5) * h
    l_edge = (np.minimum(nodes, K) + 0.5) * h
    t_hi = kernel.cell_integral(xi, r_edge, np.maximum(tc, r_edge))
    t_lo = kernel.cell_integral(xi, -np.maximum(tc, l_edge), -l_edge)
    if taylor and not kernel.even_at_origin:
        # own cell gives -g_z F' h; the cell pairs k, -k add
        # 2 sum_k (k ln((2k+1)/(2k-1)) - 1) times that, and 1 + 2 sum = ln 2
        tay = kernel.dz_g0(xi) * np.log(2.0)
    else:
        tay = np.zeros_like(xi)
    if kernel.kind == "general" and np.any(W < 0):
        raise ContractError("negative cell weight: g is not nonnegative on the grid")
    return OperatorRows(nodes, W, t_lo, t_hi, tay, np.abs(k) * h)


class DysonOperator:
    """Fast H~ on a whole grid using Toeplitz structure and FFT convolution."""

    def __init__(self, grid: UniformGrid, eps_kernel=0.0):
        h, n = grid.h, grid.size
        self.grid = grid
        kk = np.arange(1, n)
        w = np.concatenate([[0.0], mollified_cell_integral(
            _DYSON, 0.0, (kk - 0.5) * h, (kk + 0.5) * h, eps_kernel)])
        self.w = w
        idx = np.arange(n)
        csum = np.concatenate([[0.0], np.cumsum(w[1:])])
        self.rowsum = csum[idx] + csum[n - 1 - idx]
        self.t_hi = 1.0 / ((n - 1 - idx + 0.5) * h)
        self.t_lo = 1.0 / ((idx + 0.5) * h)
        m = 1
        while m < 2 * n:
            m *= 2
        self._m = m
        kern = np.zeros(m)
        kern[:n] = w
        kern[m - n + 1:] = w[1:][::-1]
        self._kf = np.fft.rfft(kern)

    def conv(self, v):
        vf = np.fft.rfft(v, self._m)
        return np.fft.irfft(vf * self._kf, self._m)[: v.size]

    def apply(self, values):
        v = np.asarray(values, float)
        out = self.rowsum * v - self.conv(v)
        out += self.t_lo * (v - v[0]) + self.t_hi * (v - v[-1])
        return out


class FieldOperator:
    """L evaluated at every node of a grid, for repeated use by the PDE solver.

    Parameters
    ----------
    grid : UniformGrid
    kernel : InteractionKernel
    q : PvQuadratureParams
    taylor : bool
        Include the sign-indefinite odd own-cell correction (not monotone).
    method : {"auto", "dense", "fft"}
        FFT is available for the Dyson kernel without far-field folding.
    """

    def __init__(self, grid, kernel, q=None, taylor=False, method="auto"):
        q = PvQuadratureParams() if q is None else q
        self.grid, self.kernel, self.q = grid, kernel, q
        _, far = q.resolve(grid)
        fft_ok = (kernel.kind == "dyson" and far >= grid.hi - grid.lo
                  and not np.isfinite(q.tail_cut))
        if method == "auto":
            method = "fft" if (fft_ok and grid.size > 1500) else "dense"
        if method == "fft" and not fft_ok:
            raise DomainError("FFT evaluation needs the Dyson kernel without folding")
        self.method = method
        if method == "fft":
            self._op = DysonOperator(grid, q.eps_kernel)
            self.rowsum = self._op.rowsum + self._op.t_lo + self._op.t_hi
        else:
            self._op = assemble_rows(grid, kernel, q, taylor=taylor)
            r = self._op
            self.rowsum = r.W.sum(axis=1) + r.t_lo + r.t_hi

    def apply(self, values):
        return self._op.apply(values)


# ---------------------------------------------------------------------------
# pointwise API
# ---------------------------------------------------------------------------

def _node(F: GridFunction, x, interior=True):
    k = F.grid.index_of(x)
    if abs(F.grid_lo + k * F.h - x) > 1e-9 * max(1.0, F.h):
        raise DomainError(f"x = {x} is not a grid node")
    if interior and (k < 1 or k > F.size - 2):
        raise DomainError(f"x = {x} is too close to the grid boundary")
    return k


def l_apply(F: GridFunction, x, kernel: InteractionKernel, q: PvQuadratureParams | None = None,
            taylor=True):
    """L[F](x) for a general kernel at an interior node x."""
    q = PvQuadratureParams() if q is None else q
    k = _node(F, x)
    rows = assemble_rows(F.grid, kernel, q, nodes=[k], taylor=taylor)
    return float(rows.apply(F.values)[0])


def split_apply(F: GridFunction, x, kernel: InteractionKernel, delta,
                q: PvQuadratureParams | None = None, taylor=True):
    """(I1, I2): contributions of |z| <= delta and |z| > delta (tails in I2)."""
    q = PvQuadratureParams() if q is None else q
    k = _node(F, x)
    rows = assemble_rows(F.grid, kernel, q, nodes=[k], taylor=taylor)
    i1, i2 = rows.parts(F.values, delta)
    return float(i1[0]), float(i2[0])


def htilde(F: GridFunction, x, q: PvQuadratureParams | None = None):
    """H~[F](x) = int (F(x) - F(y)) / (x - y)^2 dy at an interior node."""
    return l_apply(F, x, _DYSON, q)


def ktilde(F: GridFunction, x, c, q: PvQuadratureParams | None = None):
    """c - F(+inf) - F(0) + 2x PV int_0^inf (F(x) - F(y)) / (x - y)^2 dy.

    F must live on a grid starting at 0; at x = 0 the integral term is 0.
    """
    if x < 0:
        raise DomainError("ktilde is defined for x >= 0")
    if abs(F.grid_lo) > 1e-12:
        raise DomainError("ktilde needs a half-line grid starting at 0")
    q = PvQuadratureParams() if q is None else q
    v = F.values
    const = c - v[-1] - v[0]
    k = _node(F, x, interior=False)
    if k == 0:
        return float(const)
    if k == F.size - 1:
        raise DomainError("x is the last grid node")
    rows = assemble_rows(F.grid, InteractionKernel.wishart(max(c, 1.0)), q, nodes=[k])
    return float(const + rows.apply(v)[0])


def ktilde_reduced_accuracy(x, h):
    """True for nodes within 2h of the origin, where one-sided cells dominate."""
    return 0 < x < 2 * h * (1 + 1e-12)


def operator_field(F: GridFunction, kernel: InteractionKernel, q: PvQuadratureParams | None = None,
                   taylor=True):
    """(x, L[F](x)) at every node; boundary values use the tail extension."""
    op = FieldOperator(F.grid, kernel, q, taylor=taylor)
    return F.x, op.apply(F.values)


def wishart_velocity(F: GridFunction, c, op: FieldOperator | None = None):
    """Mean-field Wishart velocity c + PV int (x+y)/(x-y) dF(y) at every node.

    Equals ktilde + 2 (F(x) - F(0)); the second term restores the local
    part of the drift lost when integrating by parts on the half-line.
    """
    if op is None:
        op = FieldOperator(F.grid, InteractionKernel.wishart(c))
    return wishart_velocity_values(F.values, c, op)


def wishart_velocity_values(v, c, op: FieldOperator):
    integral = op.apply(v)
    integral[0] = 0.0
    return c - v[-1] - v[0] + integral + 2 * (v - v[0])
