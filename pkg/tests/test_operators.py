import math

import numpy as np
import pytest

import cqop
from cqop import dynamics as dyn
from cqop import operators as ops
from cqop.grids import SurfaceState, inner_product


def state_norm(grid, values):
    return grid.norm(values)


def mode_state(grid, mode):
    return dyn.stationary_state(grid, mode)


@pytest.fixture(scope="module")
def sphere_ops(sphere):
    chart, grid = sphere
    F, F1, F2 = ops.force_closed_form(chart, grid)
    return {
        "chart": chart, "grid": grid,
        "grad": ops.surface_gradient(chart, grid),
        "p": ops.surface_momentum(chart, grid),
        "H": ops.hamiltonian(chart, grid),
        "v2": ops.velocity_squared(chart, grid),
        "L": ops.angular_momentum(chart, grid),
        "R": ops.position_op(chart, grid),
        "F": F, "F1": F1, "F2": F2,
        "Fh": ops.force_heisenberg(chart, grid),
    }


@pytest.fixture(scope="module")
def cylinder_ops(cylinder):
    chart, grid = cylinder
    F, F1, F2 = ops.force_closed_form(chart, grid)
    return {
        "chart": chart, "grid": grid,
        "grad": ops.surface_gradient(chart, grid),
        "p": ops.surface_momentum(chart, grid),
        "H": ops.hamiltonian(chart, grid),
        "v2": ops.velocity_squared(chart, grid),
        "vR2": ops.velocity_squared(chart, grid, ring_only=True),
        "L": ops.angular_momentum(chart, grid),
        "R": ops.position_op(chart, grid),
        "F": F, "F1": F1, "F2": F2,
        "Fh": ops.force_heisenberg(chart, grid),
    }


# -- gradient ----------------------------------------------------------------

def test_gradient_kills_constants(sphere_ops):
    grid = sphere_ops["grid"]
    y00 = mode_state(grid, (0, 0))
    for comp in sphere_ops["grad"]:
        assert state_norm(grid, comp.apply(y00).values) <= 1e-12


def test_gradient_frame_divergence_is_2_over_R(sphere_ops):
    # dot(grad, rhat-field) - dot(rhat-field, grad) = div(rhat) = 2/R
    chart, grid = sphere_ops["chart"], sphere_ops["grid"]
    rhat = ops.VectorOp([ops._coef_mult(grid, grid.frame()[2][c]) for c in range(3)])
    comm = ops.dot(sphere_ops["grad"], rhat) - ops.dot(rhat, sphere_ops["grad"])
    psi = mode_state(grid, (3, 1))
    out = comm.apply(psi).values - 2.0 * psi.values
    assert state_norm(grid, out) <= 1e-12


def test_gradient_cylinder_azimuthal_mode(cylinder_ops):
    chart, grid = cylinder_ops["chart"], cylinder_ops["grid"]
    R = chart.a
    f = np.exp(1j * grid.nodes_q1)
    e1, _, _ = grid.frame()
    for c in range(3):
        out = cylinder_ops["grad"][c].apply(f)
        expect = (1j / R) * e1[c] * f
        assert state_norm(grid, out - expect) <= 1e-11


# -- momentum ----------------------------------------------------------------

def test_momentum_hermitian(sphere_ops, rng):
    grid = sphere_ops["grid"]
    states = grid.random_band_limited(rng, 8)
    assert sphere_ops["p"].hermiticity_residual(states) <= 1e-10


def test_bare_gradient_defect_is_2hbarM(sphere_ops, rng):
    grid = sphere_ops["grid"]
    bare = [(-1j) * g for g in sphere_ops["grad"]]
    defects = [b - b.adjoint() for b in bare]
    for s in grid.random_band_limited(rng, 4):
        d = math.sqrt(sum(state_norm(grid, defects[c].apply(s).values) ** 2 for c in range(3)))
        assert d == pytest.approx(2.0, rel=1e-10)  # 2 hbar |M|, R = 1


def test_ring_momentum_on_azimuthal_mode():
    chart = cqop.builtin_chart("ring", 1.0)
    grid = cqop.build_grid(chart, 64, 1)
    p = ops.surface_momentum(chart, grid)
    f = np.exp(1j * grid.nodes_q1) / math.sqrt(2 * math.pi)
    e1, _, e3 = grid.frame()
    # p e^{i theta} = hbar theta-hat e^{i theta} + (i hbar / 2R) rhat e^{i theta}
    for c in range(3):
        out = p[c].apply(f)
        expect = e1[c] * f + 0.5j * e3[c] * f
        assert state_norm(grid, out - expect) <= 1e-12


# -- Hamiltonian and spectra ---------------------------------------------------

def test_sphere_low_spectrum(sphere_ops):
    vals, _ = sphere_ops["H"].eigh()
    vals = np.sort(vals)
    assert abs(vals[0]) <= 1e-11
    np.testing.assert_allclose(vals[1:4], 1.0, atol=1e-11)
    np.testing.assert_allclose(vals[4:9], 3.0, atol=1e-11)


def test_sphere_l5_eigenvalue_multiplicity(sphere_ops):
    vals, _ = sphere_ops["H"].eigh()
    count = int(np.sum(np.abs(vals - 15.0) < 1e-9))
    assert count == 11


def test_cylinder_ground_energy(cylinder_ops):
    vals, _ = cylinder_ops["H"].eigh()
    assert np.min(vals) == pytest.approx(-0.125, abs=1e-12)


def test_hamiltonian_hermitian(cylinder_ops, rng):
    grid = cylinder_ops["grid"]
    states = grid.random_band_limited(rng, 8)
    assert cylinder_ops["H"].hermiticity_residual(states) <= 1e-10


# -- velocity squared -----------------------------------------------------------

def test_v2_on_constant_sphere(sphere_ops):
    grid = sphere_ops["grid"]
    y00 = mode_state(grid, (0, 0))
    out = sphere_ops["v2"].apply(y00).values
    assert state_norm(grid, out - y00.values) <= 1e-10


def test_ring_v2_eigenvalue():
    chart = cqop.builtin_chart("ring", 1.0)
    grid = cqop.build_grid(chart, 64, 1)
    v2 = ops.velocity_squared(chart, grid)
    psi = mode_state(grid, (1, 0))
    out = v2.apply(psi).values
    assert state_norm(grid, out - 1.25 * psi.values) <= 1e-10


def test_v2_equals_p_dot_p(sphere_ops, rng):
    grid = sphere_ops["grid"]
    pp = ops.dot(sphere_ops["p"], sphere_ops["p"])
    delta = sphere_ops["v2"] - pp
    for s in grid.random_band_limited(rng, 6):
        assert state_norm(grid, delta.apply(s).values) <= 1e-9


def test_cylinder_f1_uses_ring_v2(cylinder_ops):
    grid = cylinder_ops["grid"]
    psi = mode_state(grid, (1, 0))
    # v_R^2 eigenvalue on e^{i theta} is 1 + 1/4, not the full v_cy^2 value
    out = cylinder_ops["vR2"].apply(psi).values
    assert state_norm(grid, out - 1.25 * psi.values) <= 1e-12
    e3 = grid.frame()[2]
    f1 = np.stack([c.apply(psi).values for c in cylinder_ops["F1"]])
    expect = -1.25 * e3 * psi.values[None, :]
    assert max(state_norm(grid, f1[c] - expect[c]) for c in range(3)) <= 1e-11


# -- angular momentum -----------------------------------------------------------

def test_Lz_eigenstate(sphere_ops):
    grid = sphere_ops["grid"]
    y31 = mode_state(grid, (3, 1))
    out = sphere_ops["L"][2].apply(y31).values
    assert state_norm(grid, out - 1.0 * y31.values) <= 1e-11


def test_L_squared_by_eigendecomposition(sphere_ops):
    grid = sphere_ops["grid"]
    LL = ops.dot(sphere_ops["L"], sphere_ops["L"])
    vals, _ = LL.eigh()
    count6 = int(np.sum(np.abs(vals - 6.0) < 1e-8))
    assert count6 == 5  # l = 2 multiplet
    y2m = mode_state(grid, (2, -1))
    assert state_norm(grid, LL.apply(y2m).values - 6.0 * y2m.values) <= 1e-10


def test_cylinder_Lz(cylinder_ops):
    grid = cylinder_ops["grid"]
    psi = mode_state(grid, (2, 0))
    out = cylinder_ops["L"][2].apply(psi).values
    assert state_norm(grid, out - 2.0 * psi.values) <= 1e-11


def test_angular_momentum_rejects_custom_chart():
    flat = cqop.load_chart({
        "coords": ["u", "v", "w"], "h": ["1", "1", "1"], "a": 0.0,
        "domains": [{"min": 0.0, "max": 1.0, "periodic": True},
                    {"min": 0.0, "max": 1.0, "periodic": True}]})
    with pytest.raises(ValueError):
        ops.angular_momentum(flat, None)


# -- position ---------------------------------------------------------------------

def test_position_sphere_unit_norm(sphere_ops):
    grid = sphere_ops["grid"]
    RR = sum(np.abs(grid.positions()[c]) ** 2 for c in range(3))
    np.testing.assert_allclose(RR, 1.0, atol=1e-14)
    mats = [sphere_ops["R"][c].matrix for c in range(3)]
    total = sum(m @ m for m in mats)
    assert np.max(np.abs(total - np.eye(grid.N))) <= 1e-12


def test_position_cylinder_radius():
    chart = cqop.builtin_chart("cylinder", 2.0, Lz=10.0)
    grid = cqop.build_grid(chart, 16, 16)
    R = ops.position_op(chart, grid)
    xy = R[0].matrix @ R[0].matrix + R[1].matrix @ R[1].matrix
    assert np.max(np.abs(xy - 4.0 * np.eye(grid.N))) <= 1e-12


def test_position_components_hermitian(sphere_ops, rng):
    grid = sphere_ops["grid"]
    states = grid.random_band_limited(rng, 4)
    assert sphere_ops["R"].hermiticity_residual(states) <= 1e-12


# -- force ---------------------------------------------------------------------

def test_force_on_constant_is_inward_radial(sphere_ops):
    grid = sphere_ops["grid"]
    y00 = mode_state(grid, (0, 0))
    e3 = grid.frame()[2]
    for c in range(3):
        out = sphere_ops["F"][c].apply(y00).values
        assert state_norm(grid, out + e3[c] * y00.values) <= 1e-11


def test_force_expectation_vanishes_by_parity(sphere_ops):
    grid = sphere_ops["grid"]
    y00 = mode_state(grid, (0, 0))
    for c in range(3):
        val = inner_product(grid, y00, sphere_ops["F"][c].apply(y00))
        assert abs(val) <= 1e-12


def test_force_heisenberg_matches_closed_form(sphere_ops):
    grid = sphere_ops["grid"]
    psi = mode_state(grid, (3, 1))
    for c in range(3):
        diff = sphere_ops["Fh"][c] - sphere_ops["F"][c]
        assert state_norm(grid, diff.apply(psi).values) <= 1e-8


def test_force_heisenberg_matches_closed_form_cylinder(cylinder_ops, rng):
    grid = cylinder_ops["grid"]
    for s in grid.random_band_limited(rng, 6):
        for c in range(3):
            diff = cylinder_ops["Fh"][c] - cylinder_ops["F"][c]
            assert state_norm(grid, diff.apply(s).values) <= 1e-8


def test_velocity_identity(sphere_ops, rng):
    chart, grid = sphere_ops["chart"], sphere_ops["grid"]
    for s in grid.random_band_limited(rng, 4):
        for c in range(3):
            comm = sphere_ops["R"][c].commutator(sphere_ops["H"])
            out = (1.0 / 1j) * comm.apply(s).values - sphere_ops["p"][c].apply(s).values
            assert state_norm(grid, out) <= 1e-9


def test_conservation_of_L(sphere_ops, rng):
    grid = sphere_ops["grid"]
    for s in grid.random_band_limited(rng, 4):
        out = sphere_ops["L"][2].commutator(sphere_ops["H"]).apply(s).values
        assert state_norm(grid, out) <= 1e-10


def test_force_total_hermitian(sphere_ops, cylinder_ops, rng):
    for bundle in (sphere_ops, cylinder_ops):
        grid = bundle["grid"]
        states = grid.random_band_limited(rng, 6)
        assert bundle["F"].hermiticity_residual(states) <= 1e-10


# -- torque ----------------------------------------------------------------------

def test_torque_pieces_corrected_coefficient(sphere_ops):
    """tau(1,2) = -+ i hbar L / (m R^2); the printed coefficient 2 is a typo
    (the cylinder analog is printed with coefficient 1 and matches)."""
    grid = sphere_ops["grid"]
    t1 = ops.torque(sphere_ops["R"], sphere_ops["F1"])
    t2 = ops.torque(sphere_ops["R"], sphere_ops["F2"])
    y11 = mode_state(grid, (1, 1))
    for c in range(3):
        lval = sphere_ops["L"][c].apply(y11).values
        assert state_norm(grid, t1[c].apply(y11).values + 1j * lval) <= 1e-10
        assert state_norm(grid, t2[c].apply(y11).values - 1j * lval) <= 1e-10


def test_net_torque_vanishes(sphere_ops, rng):
    grid = sphere_ops["grid"]
    tau = ops.torque(sphere_ops["R"], sphere_ops["F"])
    for s in grid.random_band_limited(rng, 6):
        for c in range(3):
            assert state_norm(grid, tau[c].apply(s).values) <= 1e-9


def test_r_cross_p_antisymmetry(sphere_ops, rng):
    # R ^ p = -p ^ R, the identity behind the symmetrized torque definition
    grid = sphere_ops["grid"]
    anti = ops.cross(sphere_ops["R"], sphere_ops["p"]) + ops.cross(sphere_ops["p"], sphere_ops["R"])
    for s in grid.random_band_limited(rng, 4):
        for c in range(3):
            assert state_norm(grid, anti[c].apply(s).values) <= 1e-10


def test_torque_grid_mismatch(sphere_ops, ring):
    from cqop.grids import GridMismatchError
    _, gring = ring
    Rr = ops.position_op(gring.chart, gring)
    with pytest.raises(GridMismatchError):
        ops.torque(Rr, sphere_ops["F"])


# -- tangential contraction -------------------------------------------------------

def test_sphere_contraction_equals_cot_anomaly(sphere_ops, rng):
    """The corrected radiality identity: the symmetrized contraction equals
    -(hbar^2/2mR^3) cot(theta), not zero as printed."""
    grid = sphere_ops["grid"]
    t = (1.0, lambda q1, q2: np.sin(q1))
    C = ops.symmetrized_tangential_contraction(t, sphere_ops["F"])
    cot = np.cos(grid.nodes_q1) / np.sin(grid.nodes_q1)
    for s in grid.random_band_limited(rng, 6):
        out = C.apply(s).values + 0.5 * cot * s.values
        assert state_norm(grid, out) <= 1e-8


def test_cylinder_contraction_vanishes(cylinder_ops, rng):
    grid = cylinder_ops["grid"]
    C = ops.symmetrized_tangential_contraction((1.0, 1.0), cylinder_ops["F"])
    for s in grid.random_band_limited(rng, 6):
        assert state_norm(grid, C.apply(s).values) <= 1e-8


def test_contraction_rejects_non_tangential_field(sphere_ops):
    grid = sphere_ops["grid"]
    e3 = grid.frame()[2]
    with pytest.raises(ValueError, match="tangential"):
        ops.symmetrized_tangential_contraction(tuple(e3), sphere_ops["F"])


def test_contraction_accepts_cartesian_tangent_field(sphere_ops, rng):
    grid = sphere_ops["grid"]
    e1, e2, _ = grid.frame()
    tc = tuple(e1[c] + np.sin(grid.nodes_q1) * e2[c] for c in range(3))
    C_cart = ops.symmetrized_tangential_contraction(tc, sphere_ops["F"])
    C_frame = ops.symmetrized_tangential_contraction(
        (1.0, lambda q1, q2: np.sin(q1)), sphere_ops["F"])
    (s,) = grid.random_band_limited(rng, 1)
    diff = C_cart.apply(s).values - C_frame.apply(s).values
    assert state_norm(grid, diff) <= 1e-12


def test_export_round_trip(tmp_path, sphere_ops):
    path = tmp_path / "op.cqop"
    ops.write_operator(sphere_ops["H"], path)
    raw = path.read_bytes()
    assert raw[:4] == b"CQOP"
    n = int.from_bytes(raw[4:8], "little")
    assert n == sphere_ops["grid"].N
    assert len(raw) == 16 + n * n * 16  # 16-byte header + payload
    M = ops.read_operator(path)
    assert np.array_equal(M, sphere_ops["H"].matrix)


def test_read_operator_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.cqop"
    p.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ValueError):
        ops.read_operator(p)
