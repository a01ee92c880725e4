"""Spectral grids, quadrature, derivative matrices, and surface states.

Sphere grids use Gauss-Legendre nodes in cos(theta) (poles excluded) times a
uniform periodic phi grid; the theta derivative runs through a per-azimuthal-
mode associated-Legendre transform so band-limited states differentiate
exactly.  Cylinder and ring grids are uniform periodic with Fourier
differentiation in each coordinate.

Every grid also carries an orthonormal spectral basis (spherical harmonics,
or products of Fourier modes) sampled on the nodes, together with the exact
nodal tangential derivatives of each basis function.  The operators module
assembles its matrices against this basis, which is what keeps weighted
Hermiticity at roundoff level.
"""

from __future__ import annotations

import numpy as np

from . import expr as ex
from .geometry import Chart, geometric_potential, mean_curvature

__all__ = [
    "Grid", "SurfaceState", "GridError", "GridMismatchError",
    "build_grid", "inner_product", "mult_op", "deriv_op",
]


class GridError(ValueError):
    pass


class GridMismatchError(GridError):
    pass


# ---------------------------------------------------------------------------
# associated Legendre tables (orthonormal on [-1, 1])
# ---------------------------------------------------------------------------

def _alp_table(m, lmax, x):
    """Rows l = m..lmax of the orthonormal associated Legendre P_l^m(x)."""
    nx = len(x)
    nl = lmax - m + 1
    if nl <= 0:
        return np.zeros((0, nx))
    P = np.zeros((nl, nx))
    sint = np.sqrt((1.0 - x) * (1.0 + x))
    pmm = np.full(nx, 1.0 / np.sqrt(2.0))
    for i in range(m):
        pmm = pmm * sint * np.sqrt((2.0 * i + 3.0) / (2.0 * i + 2.0))
    P[0] = pmm
    if nl > 1:
        P[1] = np.sqrt(2.0 * m + 3.0) * x * pmm
    for l in range(m + 2, lmax + 1):
        a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
        b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
        P[l - m] = a * (x * P[l - m - 1] - b * P[l - m - 2])
    return P


def _alp_dtheta(m, lmax, x, P):
    """d/dtheta of the rows of an _alp_table, x = cos(theta)."""
    sint = np.sqrt((1.0 - x) * (1.0 + x))
    D = np.zeros_like(P)
    for i, l in enumerate(range(m, lmax + 1)):
        t = l * x * P[i]
        if l > m:
            t = t - np.sqrt((l * l - m * m) * (2.0 * l + 1.0) / (2.0 * l - 1.0)) * P[i - 1]
        D[i] = t / sint
    return D


def _fourier_deriv(n, length):
    """Dense spectral differentiation matrix for a uniform periodic grid."""
    x = length * np.arange(n) / n
    m = np.fft.fftfreq(n, 1.0 / n).astype(int)
    k = (2.0 * np.pi / length) * m.astype(float)
    if n % 2 == 0:
        k[n // 2] = 0.0  # Nyquist mode has no odd-derivative meaning
    F = np.exp(-1j * np.outer(m, x) * (2.0 * np.pi / length)) / n
    Fi = np.exp(1j * np.outer(x, m) * (2.0 * np.pi / length))
    return (Fi * (1j * k)[None, :]) @ F


def _lagrange_deriv(x):
    """Polynomial collocation differentiation matrix on arbitrary nodes."""
    n = len(x)
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1.0)
    c = np.prod(dx, axis=1)
    D = c[:, None] / (c[None, :] * dx)
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


# ---------------------------------------------------------------------------
# spectral bases
# ---------------------------------------------------------------------------

class SpectralBasis:
    """Orthonormal mode functions sampled on a grid.

    S:  (N, K) nodal values of each basis function
    A:  (K, N) quadrature analysis, A @ S = identity
    T1: (N, K) nodal values of (1/h1) d/dq1 of each basis function
    T2: (N, K) nodal values of (1/h2) d/dq2 of each basis function

    T1/T2 are evaluated from analytic derivative tables (never by applying a
    derivative matrix), so they are exact at the nodes for every mode.
    """

    def __init__(self, S, A, T1, T2, modes, inner_mask):
        self.S = S
        self.A = A
        self.T1 = T1
        self.T2 = T2
        self.modes = modes
        self.inner_mask = inner_mask
        self.K = S.shape[1]

    def project(self, values):
        return self.A @ values

    def synthesize(self, coef):
        return self.S @ coef


def _sphere_basis(grid):
    N1, N2, R = grid.N1, grid.N2, grid.chart.a
    x = grid.gl_nodes
    lmax = N1 - 1
    mmax = min(lmax, N2 // 2 - 1)
    phi = grid.q2
    sint = np.sqrt((1.0 - x) * (1.0 + x))
    cols, dth, dph_os, modes = [], [], [], []
    for m in range(-mmax, mmax + 1):
        ma = abs(m)
        P = _alp_table(ma, lmax, x)
        dP = _alp_dtheta(ma, lmax, x, P)
        phase = np.exp(1j * m * phi) / np.sqrt(2.0 * np.pi)
        for i, l in enumerate(range(ma, lmax + 1)):
            cols.append(np.kron(P[i], phase))
            dth.append(np.kron(dP[i], phase))
            # (1/sin) d/dphi = i m P/sin; P/sin is finite off the poles
            dph_os.append(1j * m * np.kron(P[i] / sint, phase))
            modes.append((l, m))
    order = np.lexsort(([m for (_, m) in modes], [l for (l, _) in modes]))
    S = np.asarray(cols, dtype=complex).T[:, order] / R
    T1 = np.asarray(dth, dtype=complex).T[:, order] / (R * R)
    T2 = np.asarray(dph_os, dtype=complex).T[:, order] / (R * R)
    modes = [modes[i] for i in order]
    A = (S.conj() * grid.w[:, None]).T
    inner = np.array([l <= N1 // 2 for (l, _) in modes])
    return SpectralBasis(S, A, T1, T2, modes, inner)


def _fourier_basis(grid):
    """Cylinder/ring basis: products of Fourier modes, quadrature-orthonormal."""
    N1, N2 = grid.N1, grid.N2
    L1 = grid.chart.domains[0].length
    L2 = grid.chart.domains[1].length
    n_max = N1 // 2 - 1
    k_max = N2 // 2 - 1 if N2 > 1 else 0
    area = float(np.sum(grid.w))
    cols, t1, t2, modes = [], [], [], []
    h1 = grid.chart.a  # h1 = r on the surface; h2 = 1
    for n in range(-n_max, n_max + 1):
        e1 = np.exp(1j * n * (2.0 * np.pi / L1) * grid.q1)
        for k in range(-k_max, k_max + 1):
            e2 = np.exp(1j * k * (2.0 * np.pi / L2) * grid.q2)
            col = np.kron(e1, e2) / np.sqrt(area)
            cols.append(col)
            t1.append(1j * n * (2.0 * np.pi / L1) / h1 * col)
            t2.append(1j * k * (2.0 * np.pi / L2) * col)
            modes.append((n, k))
    order = np.lexsort(([k for (_, k) in modes], [n for (n, _) in modes]))
    S = np.asarray(cols, dtype=complex).T[:, order]
    T1 = np.asarray(t1, dtype=complex).T[:, order]
    T2 = np.asarray(t2, dtype=complex).T[:, order]
    modes = [modes[i] for i in order]
    A = (S.conj() * grid.w[:, None]).T
    inner = np.array(
        [abs(n) <= N1 // 4 and abs(k) <= max(N2 // 4, 0) for (n, k) in modes]
    )
    return SpectralBasis(S, A, T1, T2, modes, inner)


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------

class Grid:
    """Discretized surface: nodes, weights, and derivative matrices.

    Nodes are row-major over (q1, q2): node index = i1 * N2 + i2.  Weights
    include the h1 h2 measure, so sum(w) is the surface area.
    """

    def __init__(self, chart, N1, N2):
        self.chart = chart
        self.kind = chart.kind
        self.N1 = N1
        self.N2 = N2
        self.N = N1 * N2
        self._build_nodes()
        self._D1 = None
        self._D2 = None
        self._basis = None
        self._graded_D1 = None

    def _build_nodes(self):
        chart, N1, N2 = self.chart, self.N1, self.N2
        if chart.kind == "sphere":
            x, wgl = np.polynomial.legendre.leggauss(N1)
            order = np.argsort(-x)  # increasing theta
            self.gl_nodes = x[order]
            self.gl_weights = wgl[order]
            self.q1 = np.arccos(self.gl_nodes)
            self.q2 = 2.0 * np.pi * np.arange(N2) / N2
            cell2 = 2.0 * np.pi / N2
            # measure h1 h2 dq1 dq2 = h1 h2 / sin(theta) dx dphi
            hh = self._surface_h1h2()
            self.w = np.repeat(self.gl_weights / np.sin(self.q1), N2) * cell2 * hh
        elif chart.kind in ("cylinder", "ring"):
            L1 = chart.domains[0].length
            L2 = chart.domains[1].length
            self.q1 = L1 * np.arange(N1) / N1
            self.q2 = L2 * np.arange(N2) / N2
            hh = self._surface_h1h2()
            self.w = np.full(self.N, (L1 / N1) * (L2 / N2)) * hh
        else:
            raise GridError(f"grids support built-in charts only, not '{chart.kind}'")
        Q1, Q2 = np.meshgrid(self.q1, self.q2, indexing="ij")
        self.nodes_q1 = Q1.ravel()
        self.nodes_q2 = Q2.ravel()

    def _surface_h1h2(self):
        chart = self.chart
        Q1, Q2 = np.meshgrid(self.q1, self.q2, indexing="ij")
        b = chart.bindings(Q1.ravel(), Q2.ravel())
        h1 = np.broadcast_to(np.asarray(ex.evaluate(chart.h[0], b), dtype=float), (self.N,))
        h2 = np.broadcast_to(np.asarray(ex.evaluate(chart.h[1], b), dtype=float), (self.N,))
        return h1 * h2

    # -- derivative matrices ------------------------------------------------

    @property
    def D1(self):
        if self._D1 is None:
            if self.kind == "sphere":
                self._D1 = self._sphere_dtheta()
            else:
                L1 = self.chart.domains[0].length
                self._D1 = np.kron(_fourier_deriv(self.N1, L1), np.eye(self.N2))
        return self._D1

    @property
    def D2(self):
        if self._D2 is None:
            if self.kind == "sphere":
                self._D2 = np.kron(np.eye(self.N1), _fourier_deriv(self.N2, 2.0 * np.pi))
            elif self.N2 == 1:
                self._D2 = np.zeros((self.N, self.N), dtype=complex)
            else:
                L2 = self.chart.domains[1].length
                self._D2 = np.kron(np.eye(self.N1), _fourier_deriv(self.N2, L2))
        return self._D2

    def _phi_transforms(self):
        N2 = self.N2
        mvals = np.fft.fftfreq(N2, 1.0 / N2).astype(int)
        phi = self.q2
        F = np.exp(-1j * np.outer(mvals, phi)) / N2
        Fi = np.exp(1j * np.outer(phi, mvals))
        return mvals, F, Fi

    def _assemble_theta_blocks(self, blocks, mvals, F, Fi):
        B = np.stack([blocks[m] for m in mvals]).astype(complex)
        M = np.einsum("jm,mab,mk->ajbk", Fi, B, F, optimize=True)
        return M.reshape(self.N, self.N)

    def _sphere_dtheta(self):
        """Theta derivative via the per-m associated Legendre transform.

        Exact on sampled combinations of P_l^m(cos theta) e^{i m phi} with
        l <= N1 - 1 and |m| <= N2/2 - 1.
        """
        N1 = self.N1
        x = self.gl_nodes
        mvals, F, Fi = self._phi_transforms()
        blocks = {}
        for m in mvals:
            ma = abs(int(m))
            if ma > N1 - 1:
                blocks[m] = np.zeros((N1, N1))
                continue
            P = _alp_table(ma, N1 - 1, x)
            dP = _alp_dtheta(ma, N1 - 1, x, P)
            blocks[m] = dP.T @ (P * self.gl_weights[None, :])
        return self._assemble_theta_blocks(blocks, mvals, F, Fi)

    def graded_dtheta(self):
        """Defect-tolerant theta derivative for the sphere.

        Per azimuthal channel m this differentiates in the shifted basis
        (1-x^2)^(kappa/2) x^p with kappa in {-1, 0} chosen by parity, so it
        stays exact on intermediates whose sin-theta power has been knocked
        one off its natural class (products with the non-smooth theta-frame
        components do exactly that).  Used only inside the tangential
        contraction assembly.
        """
        if self.kind != "sphere":
            raise GridError("graded theta derivative is sphere-specific")
        if self._graded_D1 is not None:
            return self._graded_D1
        N1 = self.N1
        x = self.gl_nodes
        sint = np.sqrt((1.0 - x) * (1.0 + x))
        Dx = _lagrange_deriv(x)
        mvals, F, Fi = self._phi_transforms()
        blocks = {}
        for m in mvals:
            ma = abs(int(m))
            kap = -1 if ma % 2 == 0 else 0
            # f = sint^kap g with polynomial g:
            # d/dtheta f = -sint^(kap+1) g' + kap x sint^(kap-1) g
            T = -np.diag(sint ** (kap + 1)) @ Dx
            if kap != 0:
                T = T + kap * np.diag(x * sint ** (kap - 1))
            blocks[m] = T @ np.diag(sint ** (-kap))
        self._graded_D1 = self._assemble_theta_blocks(blocks, mvals, F, Fi)
        return self._graded_D1

    # -- frame fields ---------------------------------------------------------

    def frame(self):
        """Cartesian components of (q1-hat, q2-hat, q3-hat) at the nodes."""
        if self.kind == "sphere":
            st, ct = np.sin(self.nodes_q1), np.cos(self.nodes_q1)
            sp, cp = np.sin(self.nodes_q2), np.cos(self.nodes_q2)
            e1 = np.array([ct * cp, ct * sp, -st])
            e2 = np.array([-sp, cp, np.zeros(self.N)])
            e3 = np.array([st * cp, st * sp, ct])
            return e1, e2, e3
        st, ct = np.sin(self.nodes_q1), np.cos(self.nodes_q1)
        zero = np.zeros(self.N)
        e1 = np.array([-st, ct, zero])
        one = np.ones(self.N) if self.kind == "cylinder" else zero
        e2 = np.array([zero, zero, one])
        e3 = np.array([ct, st, zero])
        return e1, e2, e3

    def positions(self):
        """Cartesian coordinates of the surface nodes."""
        R = self.chart.a
        _, _, e3 = self.frame()
        pos = R * e3
        if self.kind == "cylinder":
            pos = pos.copy()
            pos[2] = self.nodes_q2
        return pos

    # -- norms and basis -------------------------------------------------------

    @property
    def basis(self):
        if self._basis is None:
            self._basis = _sphere_basis(self) if self.kind == "sphere" else _fourier_basis(self)
        return self._basis

    def norm(self, values):
        return float(np.sqrt(np.real(np.sum(self.w * np.abs(values) ** 2))))

    def scalar_field(self, f):
        """Evaluate an Expr or callable of (q1, q2) at the nodes."""
        if isinstance(f, ex.Expr):
            b = self.chart.bindings(self.nodes_q1, self.nodes_q2)
            vals = ex.evaluate(f, b)
        elif callable(f):
            vals = f(self.nodes_q1, self.nodes_q2)
        else:
            vals = f
        vals = np.broadcast_to(np.asarray(vals), (self.N,)).astype(complex)
        if not np.all(np.isfinite(vals)):
            raise GridError("field is not finite at all grid nodes")
        return vals

    def mean_curvature_values(self):
        return np.real(self.scalar_field(mean_curvature(self.chart)))

    def geometric_potential_values(self):
        return np.real(self.scalar_field(geometric_potential(self.chart)))

    def random_band_limited(self, rng, count=1):
        """States drawn on the inner spectral band (the test-state family)."""
        mask = self.basis.inner_mask
        out = []
        for _ in range(count):
            c = np.zeros(self.basis.K, dtype=complex)
            c[mask] = rng.standard_normal(int(mask.sum())) + 1j * rng.standard_normal(int(mask.sum()))
            c /= np.linalg.norm(c)
            out.append(SurfaceState(self.basis.synthesize(c), self))
        return out


class SurfaceState:
    """Complex coefficient vector over grid nodes."""

    def __init__(self, values, grid):
        values = np.asarray(values, dtype=complex)
        if values.shape != (grid.N,):
            raise GridMismatchError(f"state shape {values.shape} does not match grid N={grid.N}")
        self.values = values
        self.grid = grid

    def norm(self):
        return self.grid.norm(self.values)

    def normalize(self):
        n = self.norm()
        if n == 0:
            raise GridError("cannot normalize the zero state")
        return SurfaceState(self.values / n, self.grid)


def build_grid(chart, N1, N2):
    """Build the spectral grid for a built-in chart.

    Sphere: N1 Gauss-Legendre theta nodes (>= 8), N2 uniform phi nodes
    (>= 8, even).  Cylinder: N1 x N2 uniform periodic, both even and >= 8.
    Ring: N1 uniform periodic (even, >= 8) and N2 = 1.
    """
    if not isinstance(chart, Chart):
        raise GridError("build_grid needs a Chart")
    if chart.kind == "sphere":
        if N1 < 8 or N2 < 8:
            raise GridError("sphere grid needs N1 >= 8 and N2 >= 8")
        if N2 % 2:
            raise GridError("sphere grid needs even N2 (Fourier phi direction)")
    elif chart.kind == "cylinder":
        if N1 < 8 or N2 < 8:
            raise GridError("cylinder grid needs N1 >= 8 and N2 >= 8")
        if N1 % 2 or N2 % 2:
            raise GridError("cylinder grid needs even N1 and N2")
    elif chart.kind == "ring":
        if N1 < 8 or N1 % 2:
            raise GridError("ring grid needs even N1 >= 8")
        if N2 != 1:
            raise GridError("ring grid has N2 = 1")
    else:
        raise GridError(f"grids support built-in charts only, not '{chart.kind}'")
    return Grid(chart, N1, N2)


def inner_product(grid, a, b):
    """Quadrature inner product sum(w conj(a) b); conjugate-symmetric."""
    av = a.values if isinstance(a, SurfaceState) else np.asarray(a)
    bv = b.values if isinstance(b, SurfaceState) else np.asarray(b)
    for s in (a, b):
        if isinstance(s, SurfaceState) and s.grid is not grid:
            raise GridMismatchError("state belongs to a different grid")
    if av.shape != (grid.N,) or bv.shape != (grid.N,):
        raise GridMismatchError("vector length does not match grid")
    return complex(np.sum(grid.w * np.conj(av) * bv))


def mult_op(grid, f):
    """Diagonal multiplication operator for a field on the surface."""
    from .operators import ScalarOp
    vals = grid.scalar_field(f)
    return ScalarOp(grid, nodal=np.diag(vals), label="mult")


def deriv_op(grid, coord):
    """Spectral derivative matrix for q1 or q2 as a ScalarOp."""
    from .operators import ScalarOp
    if coord in ("q1", 1, grid.chart.coords[0]):
        return ScalarOp(grid, nodal=np.asarray(grid.D1, dtype=complex), label="d/dq1")
    if coord in ("q2", 2, grid.chart.coords[1]):
        return ScalarOp(grid, nodal=np.asarray(grid.D2, dtype=complex), label="d/dq2")
    raise GridError(f"unknown coordinate {coord!r}")
