"""Operator assembly: momentum, Hamiltonian, force, torque, contractions.

Matrices are assembled against the grid's orthonormal spectral basis
(band-projected, "Galerkin" form): an operator is stored as its exact matrix
elements between basis functions and realized on the nodes as S @ C @ A.
On band-limited states this action coincides with the continuum operator,
and weighted Hermiticity holds at roundoff, which raw products of derivative
and multiplication matrices do not achieve (their matrix adjoints pick up
slowly-converging quadrature tails from the 1/sin(theta) factors).

The one place band projection is wrong is the symmetrized tangential
contraction: there the tangent frame components multiply states out of their
spectral class, so the second half of the contraction is assembled from
nodal matrices with a defect-tolerant theta derivative (see
Grid.graded_dtheta).
"""

from __future__ import annotations

import struct

import numpy as np

from . import expr as ex
from .geometry import gaussian_curvature, mean_curvature
from .grids import Grid, GridMismatchError, SurfaceState

__all__ = [
    "ScalarOp", "VectorOp", "dot", "cross", "symmetrized_cross",
    "surface_gradient", "surface_momentum", "hamiltonian", "velocity_squared",
    "angular_momentum", "position_op", "force_closed_form", "force_heisenberg",
    "torque", "symmetrized_tangential_contraction",
    "write_operator", "read_operator",
]


class ScalarOp:
    """Dense complex operator on surface wavefunctions.

    Backed by a nodal N x N matrix, a K x K spectral-basis block, or both;
    `matrix` materializes (and caches) the nodal form on demand.
    """

    def __init__(self, grid, nodal=None, coef=None, label="", hermitian=False):
        if nodal is None and coef is None:
            raise ValueError("ScalarOp needs a nodal or coefficient matrix")
        self.grid = grid
        self.label = label
        self.hermitian = hermitian
        self._nodal = None if nodal is None else np.asarray(nodal, dtype=complex)
        self._coef = None if coef is None else np.asarray(coef, dtype=complex)

    @property
    def matrix(self):
        if self._nodal is None:
            b = self.grid.basis
            self._nodal = b.S @ self._coef @ b.A
        return self._nodal

    @property
    def coef(self):
        """Spectral-basis block; for nodal-backed operators this is the band
        projection A @ M @ S."""
        if self._coef is None:
            b = self.grid.basis
            self._coef = b.A @ self._nodal @ b.S
        return self._coef

    @property
    def is_coef_backed(self):
        return self._coef is not None

    def apply(self, state):
        values = state.values if isinstance(state, SurfaceState) else np.asarray(state)
        if self._coef is not None:
            b = self.grid.basis
            out = b.S @ (self._coef @ (b.A @ values))
        else:
            out = self._nodal @ values
        if isinstance(state, SurfaceState):
            return SurfaceState(out, self.grid)
        return out

    def adjoint(self):
        """Adjoint with respect to the quadrature inner product."""
        if self._coef is not None:
            return ScalarOp(self.grid, coef=self._coef.conj().T, label=f"{self.label}^+")
        w = self.grid.w
        adj = (self._nodal.conj().T * w[None, :]) / w[:, None]
        return ScalarOp(self.grid, nodal=adj, label=f"{self.label}^+")

    def hermiticity_residual(self, states):
        """max over states of ||(A - A^+) psi|| / ||psi|| in the weighted norm."""
        defect = self - self.adjoint()
        out = 0.0
        for s in states:
            v = s.values if isinstance(s, SurfaceState) else s
            out = max(out, self.grid.norm(defect.apply(v)) / self.grid.norm(v))
        return out

    # -- algebra ------------------------------------------------------------

    def _check(self, other):
        if self.grid is not other.grid:
            raise GridMismatchError("operators live on different grids")

    def __add__(self, other):
        self._check(other)
        if self._coef is not None and other._coef is not None:
            return ScalarOp(self.grid, coef=self._coef + other._coef,
                            label=f"{self.label}+{other.label}")
        return ScalarOp(self.grid, nodal=self.matrix + other.matrix,
                        label=f"{self.label}+{other.label}")

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, scalar):
        if self._coef is not None:
            return ScalarOp(self.grid, coef=scalar * self._coef, label=self.label)
        return ScalarOp(self.grid, nodal=scalar * self._nodal, label=self.label)

    __rmul__ = __mul__

    def __neg__(self):
        return (-1.0) * self

    def __matmul__(self, other):
        self._check(other)
        if self._coef is not None and other._coef is not None:
            return ScalarOp(self.grid, coef=self._coef @ other._coef,
                            label=f"{self.label}@{other.label}")
        return ScalarOp(self.grid, nodal=self.matrix @ other.matrix,
                        label=f"{self.label}@{other.label}")

    def commutator(self, other):
        return self @ other - other @ self

    def eigh(self):
        """Eigenvalues and quadrature-orthonormal eigenvectors (coefficient
        space, ascending)."""
        C = self.coef
        C = 0.5 * (C + C.conj().T)
        vals, vecs = np.linalg.eigh(C)
        return vals, vecs


class VectorOp:
    """Triple of ScalarOp giving Cartesian components of a vector operator."""

    def __init__(self, components, label="", graded=None):
        cs = tuple(components)
        if len(cs) != 3:
            raise ValueError("VectorOp needs exactly three components")
        if not (cs[0].grid is cs[1].grid is cs[2].grid):
            raise GridMismatchError("VectorOp component grids differ")
        self.components = cs
        self.grid = cs[0].grid
        self.label = label
        # optional twin assembled with defect-tolerant derivatives; used by
        # the tangential contraction on the sphere
        self.graded = graded

    def __getitem__(self, i):
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    def __add__(self, other):
        g = None
        if self.graded is not None and other.graded is not None:
            g = self.graded + other.graded
        return VectorOp([a + b for a, b in zip(self, other)],
                        label=f"{self.label}+{other.label}", graded=g)

    def __mul__(self, scalar):
        g = None if self.graded is None else self.graded * scalar
        return VectorOp([scalar * c for c in self], label=self.label, graded=g)

    __rmul__ = __mul__

    def apply(self, state):
        return tuple(c.apply(state) for c in self)

    def hermiticity_residual(self, states):
        return max(c.hermiticity_residual(states) for c in self)


def dot(a, b):
    """Componentwise contraction sum_c a_c b_c (operator product)."""
    out = a[0] @ b[0]
    for c in (1, 2):
        out = out + a[c] @ b[c]
    out.label = f"{a.label}.{b.label}"
    return out


_EPS = ((0, 1, 2, 1.0), (1, 2, 0, 1.0), (2, 0, 1, 1.0),
        (0, 2, 1, -1.0), (2, 1, 0, -1.0), (1, 0, 2, -1.0))


def cross(a, b):
    """Componentwise cross product (a ^ b)_c = eps_cab a_a b_b."""
    comps = [None, None, None]
    for (i, j, k, s) in _EPS:
        term = s * (a[i] @ b[j])
        comps[k] = term if comps[k] is None else comps[k] + term
    return VectorOp(comps, label=f"{a.label}^{b.label}")


def symmetrized_cross(a, b):
    """(a ^ b - b ^ a) / 2, the operator-ordering-safe cross product."""
    ab, ba = cross(a, b), cross(b, a)
    return VectorOp([0.5 * (x - y) for x, y in zip(ab, ba)],
                    label=f"sym({a.label}^{b.label})")


# ---------------------------------------------------------------------------
# assembly helpers
# ---------------------------------------------------------------------------

def _coef_mult(grid, values, label="mult", hermitian=None):
    b = grid.basis
    vals = np.asarray(values, dtype=complex)
    C = b.A @ (vals[:, None] * b.S)
    if hermitian is None:
        hermitian = bool(np.all(np.abs(vals.imag) == 0.0))
    return ScalarOp(grid, coef=C, label=label, hermitian=hermitian)


def _coef_gradient_components(grid, ring_only=False):
    """Exact spectral blocks of the tangential gradient components.

    T1/T2 hold exact nodal values of (1/h1) d1 and (1/h2) d2 of each basis
    function, so A @ (frame_c * T) has exact matrix elements (the quadrature
    integrands stay inside the exactness degree of the grid).
    """
    b = grid.basis
    e1, e2, _ = grid.frame()
    out = []
    for c in range(3):
        M = b.A @ (e1[c][:, None] * b.T1)
        if not ring_only:
            M = M + b.A @ (e2[c][:, None] * b.T2)
        out.append(M)
    return out


def _nodal_gradient(grid, graded=False):
    """Nodal-product gradient components; `graded` swaps in the
    defect-tolerant theta derivative (sphere only)."""
    e1, e2, e3 = grid.frame()
    if grid.kind == "sphere":
        D1 = grid.graded_dtheta() if graded else grid.D1
    else:
        D1 = grid.D1
    D2 = grid.D2
    chart = grid.chart
    b = chart.bindings(grid.nodes_q1, grid.nodes_q2)
    h1 = np.broadcast_to(np.asarray(ex.evaluate(chart.h[0], b), dtype=float), (grid.N,))
    h2 = np.broadcast_to(np.asarray(ex.evaluate(chart.h[1], b), dtype=float), (grid.N,))
    out = []
    for c in range(3):
        M = (e1[c] / h1)[:, None] * D1 + (e2[c] / h2)[:, None] * D2
        out.append(ScalarOp(grid, nodal=M, label=f"grad_{'xyz'[c]}"))
    return VectorOp(out, label="grad(nodal)")


def surface_gradient(chart, grid):
    """Tangential gradient as a Cartesian VectorOp."""
    _require(chart, grid)
    comps = _coef_gradient_components(grid)
    return VectorOp(
        [ScalarOp(grid, coef=comps[c], label=f"grad_{'xyz'[c]}") for c in range(3)],
        label="grad",
    )


def _require(chart, grid):
    if grid.chart is not chart:
        raise GridMismatchError("grid was not built from this chart")


def _mean_curv_values(grid):
    return np.real(grid.scalar_field(mean_curvature(grid.chart)))


def surface_momentum(chart, grid):
    """Hermitian surface momentum -i hbar (grad + n-hat M)."""
    _require(chart, grid)
    hbar = chart.params.hbar
    grad = _coef_gradient_components(grid)
    _, _, e3 = grid.frame()
    Mv = _mean_curv_values(grid)
    comps = []
    for c in range(3):
        curv = _coef_mult(grid, Mv * e3[c]).coef
        comps.append(ScalarOp(grid, coef=-1j * hbar * (grad[c] + curv),
                              label=f"p_{'xyz'[c]}", hermitian=True))
    return VectorOp(comps, label="p_s")


def _laplacian_coef(grid, ring_only=False):
    G = _coef_gradient_components(grid, ring_only=ring_only)
    return sum(g @ g for g in G)


def hamiltonian(chart, grid):
    """H = -(hbar^2/2m) grad.grad + Vgeo."""
    _require(chart, grid)
    hbar, mass = chart.params.hbar, chart.params.mass
    lap = _laplacian_coef(grid)
    V = _coef_mult(grid, grid.geometric_potential_values()).coef
    C = -(hbar ** 2) / (2.0 * mass) * lap + V
    return ScalarOp(grid, coef=C, label="H", hermitian=True)


def velocity_squared(chart, grid, ring_only=False):
    """v^2 = -(hbar^2/m^2) grad.grad + (hbar^2/m^2) M^2.

    With ring_only=True on a cylinder grid this is the ring velocity squared
    (axial derivative dropped), the combination that actually appears in the
    confining force.
    """
    _require(chart, grid)
    hbar, mass = chart.params.hbar, chart.params.mass
    lap = _laplacian_coef(grid, ring_only=ring_only)
    Mv = _mean_curv_values(grid)
    m2 = _coef_mult(grid, Mv * Mv).coef
    C = -(hbar ** 2) / mass ** 2 * lap + (hbar ** 2) / mass ** 2 * m2
    return ScalarOp(grid, coef=C, label="v_R^2" if ring_only else "v^2", hermitian=True)


def position_op(chart, grid):
    """Cartesian position as diagonal multiplication operators."""
    _require(chart, grid)
    pos = grid.positions()
    comps = []
    for c in range(3):
        op = ScalarOp(grid, nodal=np.diag(pos[c].astype(complex)),
                      coef=_coef_mult(grid, pos[c]).coef,
                      label=f"R_{'xyz'[c]}", hermitian=True)
        comps.append(op)
    return VectorOp(comps, label="R")


def angular_momentum(chart, grid):
    """L = R ^ p (equal to the symmetrized form since R ^ p = -p ^ R)."""
    if chart.kind not in ("sphere", "cylinder", "ring"):
        raise ValueError(f"angular momentum needs a built-in chart, not '{chart.kind}'")
    R = position_op(chart, grid)
    p = surface_momentum(chart, grid)
    L = cross(R, p)
    for c, comp in enumerate(L.components):
        comp.label = f"L_{'xyz'[c]}"
        comp.hermitian = True
    L.label = "L"
    return L


def _op_sum(terms):
    out = None
    for t in terms:
        out = t if out is None else out + t
    return out


def _force_pieces(chart, grid, graded=False):
    """Nodal (optionally graded) force pieces; sphere contraction internals."""
    hbar, mass = chart.params.hbar, chart.params.mass
    R = chart.a
    comps1, comps2 = [], []
    e1, _, e3 = grid.frame()
    Mv = _mean_curv_values(grid)
    if chart.kind == "cylinder":
        ringG = [ScalarOp(grid, nodal=(e1[c] / R)[:, None] * np.asarray(grid.D1),
                          label="gr") for c in range(3)]
        lap = _op_sum(g @ g for g in ringG)
        grad2 = VectorOp(ringG, label="grad_ring")
    else:
        grad = _nodal_gradient(grid, graded=graded)
        lap = _op_sum(g @ g for g in grad)
        grad2 = grad
    v2 = -(hbar ** 2) / mass ** 2 * lap + (hbar ** 2 / mass ** 2) * ScalarOp(
        grid, nodal=np.diag((Mv * Mv).astype(complex)), label="M^2")
    for c in range(3):
        rdiag = ScalarOp(grid, nodal=np.diag(e3[c].astype(complex)), label="rhat")
        comps1.append(-(mass / R) * (rdiag @ v2))
        comps2.append((hbar ** 2) / (mass * R ** 2) * grad2[c])
    F1 = VectorOp(comps1, label="F1")
    F2 = VectorOp(comps2, label="F2")
    return F1 + F2, F1, F2


def force_closed_form(chart, grid):
    """The closed-form force (F, F1, F2) per surface kind.

    F1 = -(m/R) rhat . v^2 with rhat composed on the left (this ordering is
    what the Heisenberg commutator actually produces, and it is deliberately
    not symmetrized).  On the cylinder v^2 is the ring velocity squared and
    the gradient piece is the ring gradient (theta only): the axial momentum
    is conserved, so the force has no axial part.
    """
    if chart.kind not in ("sphere", "cylinder", "ring"):
        raise ValueError(f"force needs a built-in chart, not '{chart.kind}'")
    _require(chart, grid)
    hbar, mass = chart.params.hbar, chart.params.mass
    R = chart.a
    ring_only = chart.kind == "cylinder"
    vv = velocity_squared(chart, grid, ring_only=ring_only)
    _, _, e3 = grid.frame()
    comps1 = []
    for c in range(3):
        rmult = _coef_mult(grid, e3[c], label="rhat")
        comps1.append(-(mass / R) * (rmult @ vv))
        comps1[-1].label = f"F1_{'xyz'[c]}"
    grad = _coef_gradient_components(grid, ring_only=ring_only)
    comps2 = [ScalarOp(grid, coef=(hbar ** 2) / (mass * R ** 2) * grad[c],
                       label=f"F2_{'xyz'[c]}") for c in range(3)]
    F1 = VectorOp(comps1, label="F1")
    F2 = VectorOp(comps2, label="F2")
    F = F1 + F2
    F.label = "F"
    for c in range(3):
        F[c].hermitian = True
    if chart.kind == "sphere":
        Fg, F1g, F2g = _force_pieces(chart, grid, graded=True)
        F.graded, F1.graded, F2.graded = Fg, F1g, F2g
    else:
        Fn, F1n, F2n = _force_pieces(chart, grid, graded=False)
        F.graded, F1.graded, F2.graded = Fn, F1n, F2n
    return F, F1, F2


def force_heisenberg(chart, grid):
    """F = (m / i hbar) [v, H] componentwise, v = p/m."""
    _require(chart, grid)
    hbar, mass = chart.params.hbar, chart.params.mass
    H = hamiltonian(chart, grid)
    p = surface_momentum(chart, grid)
    comps = []
    for c in range(3):
        comm = p[c].commutator(H)
        comps.append((1.0 / (1j * hbar)) * comm)
        comps[-1].label = f"F_heis_{'xyz'[c]}"
    return VectorOp(comps, label="F_heis")


def torque(Rop, F):
    """tau = (R ^ F - F ^ R) / 2, assembled by matrix products."""
    t = symmetrized_cross(Rop, F)
    t.label = "tau"
    return t


def symmetrized_tangential_contraction(t, F):
    """(1/2) sum_c (t_c F_c + F_c t_c) for a tangent field t.

    t is two coefficient functions (f1, f2) on (q1, q2) multiplying the
    tangential frame vectors q1-hat and q2-hat, or three Cartesian component
    functions (validated to be pointwise orthogonal to the surface normal).
    The second half uses the defect-tolerant twin of F when one is attached
    (sphere), because t_c psi leaves the spectral class the band-projected
    matrices are exact on.
    """
    grid = F.grid
    e1, e2, e3 = grid.frame()
    if len(t) == 3:
        tc = [np.real(grid.scalar_field(t[c])) for c in range(3)]
        f1 = sum(tc[c] * e1[c] for c in range(3))
        f2 = sum(tc[c] * e2[c] for c in range(3))
    else:
        f1 = np.real(grid.scalar_field(t[0]))
        f2 = np.real(grid.scalar_field(t[1]))
        tc = [f1 * e1[c] + f2 * e2[c] for c in range(3)]
    normal_part = np.max(np.abs(sum(tc[c] * e3[c] for c in range(3))))
    scale = max(float(np.max(np.abs(f1))), float(np.max(np.abs(f2))), 1.0)
    if normal_part > 1e-10 * scale:
        raise ValueError("field is not tangential to the surface")
    Fg = F.graded if F.graded is not None else F
    N = grid.N
    out = np.zeros((N, N), dtype=complex)
    for c in range(3):
        out += 0.5 * (tc[c][:, None] * F[c].matrix)
        out += 0.5 * (Fg[c].matrix @ np.diag((f1 * e1[c]).astype(complex)))
        out += 0.5 * (F[c].matrix @ np.diag((f2 * e2[c]).astype(complex)))
    return ScalarOp(grid, nodal=out, label="sym(dr.F)")


# ---------------------------------------------------------------------------
# binary export: 16-byte header (magic "CQOP", u32 N, u32 reserved, 4 bytes
# zero padding), then row-major complex128, little-endian
# ---------------------------------------------------------------------------

def write_operator(op, path):
    M = np.ascontiguousarray(op.matrix, dtype="<c16")
    n = M.shape[0]
    with open(path, "wb") as f:
        f.write(b"CQOP")
        f.write(struct.pack("<III", n, 0, 0))
        f.write(M.tobytes())


def read_operator(path):
    with open(path, "rb") as f:
        header = f.read(16)
        if header[:4] != b"CQOP":
            raise ValueError(f"bad magic {header[:4]!r}")
        n, _reserved, _pad = struct.unpack("<III", header[4:])
        data = np.frombuffer(f.read(), dtype="<c16")
    if data.size != n * n:
        raise ValueError("truncated operator file")
    return data.reshape(n, n).astype(complex)
