import numpy as np
import pytest

from cocyclic.config import Tolerances
from cocyclic.errors import DegreeCapExceeded, InputError, NotInModelSpace
from cocyclic.inner import clark_inner, phi_coeffs, taylor
from cocyclic.measures import make_system
from cocyclic.modelspace import (
    clark_embedding,
    lower_toeplitz,
    model_tail,
    project_model,
)
from cocyclic.operators import (
    Basis,
    DifferenceBuilder,
    TruncatedOperator,
    bilateral_shift,
    build_multi_V,
    build_V,
    build_Vtilde,
    calculus_V,
    calculus_Vtilde,
    cocycle_residual,
    cocycle_W,
    cocycle_W_negative,
    defect_floor,
    defect_Q,
    get_builder,
    identity,
    mult_by,
    multi_block_check,
    semigroup_residual,
    shift,
    truncation_floor,
    wold_check,
)


def unit(size, k):
    e = np.zeros(size, dtype=complex)
    e[k] = 1
    return e


@pytest.fixture
def delta_frame(delta, minus_z):
    return clark_embedding(delta, minus_z, 32)


@pytest.fixture
def pair_frame(pair, minus_z2):
    return clark_embedding(pair, minus_z2, 32)


def test_shifts():
    np.testing.assert_array_equal(shift(2) @ unit(3, 0), unit(3, 1))
    # e_{−1} sits at position 1 of the window −2..2
    np.testing.assert_array_equal(bilateral_shift(2) @ unit(5, 1), unit(5, 2))
    assert shift(8).isometry_residual() == 0
    with pytest.raises(InputError):
        shift(0)


def test_mult_by(minus_z):
    np.testing.assert_array_equal(mult_by([1, 0, 0, 0]).matrix, np.eye(4))
    np.testing.assert_allclose(mult_by(taylor(minus_z, 5)).matrix, -shift(5).matrix)
    M = mult_by(phi_coeffs(0.5, 128).coeffs)
    assert M.interior_norm() <= 1 + 1e-8
    with pytest.raises(InputError):
        mult_by([1, 0], Basis.BILATERAL)


def test_build_V_single_atom(minus_z):
    V = build_V(minus_z, 8)
    np.testing.assert_allclose(V @ unit(9, 0), -unit(9, 0), atol=1e-15)
    for n in range(1, 8):
        np.testing.assert_allclose(V @ unit(9, n), unit(9, n + 1), atol=1e-15)


def test_build_V_pair(minus_z2):
    V = build_V(minus_z2, 8)
    np.testing.assert_allclose(V @ unit(9, 1), -unit(9, 0), atol=1e-15)
    np.testing.assert_allclose(V @ unit(9, 0), unit(9, 1), atol=1e-15)


def test_build_V_isometry(three_theta):
    assert build_V(three_theta, 256).isometry_residual() <= 1e-7


def test_build_Vtilde_single_atom(minus_z):
    N = 8
    Vt = build_Vtilde(minus_z, N)
    size = 2 * N + 1
    np.testing.assert_allclose(Vt @ unit(size, N - 1), unit(size, N + 1), atol=1e-15)
    np.testing.assert_allclose(Vt @ unit(size, N - 2), unit(size, N - 1), atol=1e-15)
    np.testing.assert_allclose(Vt.H @ unit(size, N - 1), unit(size, N - 2), atol=1e-15)
    np.testing.assert_allclose(Vt.matrix[N:, N:], build_V(minus_z, N).matrix)


def test_build_Vtilde_unitary(three_theta):
    Vt = build_Vtilde(three_theta, 256)
    assert Vt.isometry_residual() <= 1e-7
    assert Vt.coisometry_residual() <= 1e-7
    N = Vt.N
    back = Vt.H.matrix[:, 1:N] - np.eye(2 * N + 1, k=1)[:, 1:N]
    assert np.max(np.abs(back)) <= 1e-10


def test_multi_V_single_measure_matches_dilation(three, three_theta):
    system = make_system([three], 4.0, 1.0)
    assert system.components[0] is three
    np.testing.assert_allclose(
        build_multi_V(system, 64).matrix, build_Vtilde(three_theta, 64).matrix, atol=1e-14
    )


def test_multi_V_double_atom(delta):
    system = make_system([delta, delta], 4.0, 10.0)
    N = 16
    Vhat = build_multi_V(system, N)
    size = 2 * N + 1
    np.testing.assert_allclose(Vhat @ unit(size, N), -unit(size, N), atol=1e-14)
    np.testing.assert_allclose(Vhat @ unit(size, N + 1), -unit(size, N + 1), atol=1e-14)
    np.testing.assert_allclose(Vhat @ unit(size, N - 1), unit(size, N + 2), atol=1e-14)
    res = multi_block_check(system, N)
    assert res["unitarity"] <= 1e-6
    assert res["block"] <= 1e-6
    assert res["cross"] <= 1e-6


def test_multi_V_degree_cap(delta):
    system = make_system([delta, delta], 4.0, 10.0)
    with pytest.raises(DegreeCapExceeded):
        build_multi_V(system, 16, degree_cap=1)


def test_calculus_at_zero_is_identity(minus_z, delta_frame):
    np.testing.assert_array_equal(calculus_V(minus_z, delta_frame, 0.0, 32).matrix, np.eye(33))
    np.testing.assert_array_equal(
        calculus_Vtilde(minus_z, delta_frame, 0.0, 32).matrix, np.eye(65)
    )
    np.testing.assert_array_equal(cocycle_W(minus_z, delta_frame, 0.0, 32).matrix, np.eye(65))
    np.testing.assert_array_equal(
        cocycle_W_negative(minus_z, delta_frame, 0.0, 32).matrix, np.eye(65)
    )


def test_calculus_V_single_atom(minus_z, delta_frame):
    N, t = 32, 0.5
    A = calculus_V(minus_z, delta_frame, t, N)
    # φ_t(−1) = 1 on the unitary part span{1}
    np.testing.assert_allclose(A @ unit(N + 1, 0), unit(N + 1, 0), atol=1e-14)
    # on z·H² the calculus is z·φ_t
    c = phi_coeffs(t, N).coeffs
    np.testing.assert_allclose(A @ unit(N + 1, 1), np.concatenate([[0], c[:N]]), atol=1e-14)


def test_dilation_restricts_to_calculus(three, three_theta):
    frame = clark_embedding(three, three_theta, 128)
    A = calculus_V(three_theta, frame, 0.5, 128)
    At = calculus_Vtilde(three_theta, frame, 0.5, 128)
    np.testing.assert_array_equal(At.matrix[128:, 128:], A.matrix)


@pytest.mark.parametrize("theta_name", ["minus_z", "minus_z2"])
def test_semigroup_law_V(request, theta_name):
    theta = request.getfixturevalue(theta_name)
    mu = request.getfixturevalue("delta" if theta_name == "minus_z" else "pair")
    frame = clark_embedding(mu, theta, 64)
    for t, s in [(0.25, 0.5), (0.5, 1.0)]:
        assert semigroup_residual("V", theta, frame, t, s, 64) <= 1e-9


def test_cocycle_single_atom_closed_form(minus_z, delta_frame):
    N, t = 32, 0.5
    W = cocycle_W(minus_z, delta_frame, t, N)
    np.testing.assert_array_equal(W.matrix[:, :N], np.eye(2 * N + 1)[:, :N])
    c = phi_coeffs(t, N).coeffs
    one_minus_phi = -c
    one_minus_phi[0] += 1
    for k in range(N + 1):
        Pz = project_model(c, unit(N + 1, k))
        expected = np.conj(c[k]) * one_minus_phi - (Pz - np.concatenate([[0], Pz[:-1]]))
        np.testing.assert_allclose(
            W.matrix[N:, N + k] - unit(N + 1, k), expected, atol=1e-12
        )


def test_cocycle_trivial_pairs(minus_z2, pair_frame):
    assert cocycle_residual(minus_z2, pair_frame, 0.5, 0.0, 32) <= 1e-12
    assert cocycle_residual(minus_z2, pair_frame, 0.0, 0.5, 32) <= 1e-12


def test_wold_split_single_atom(minus_z, delta_frame):
    report = wold_check(build_V(minus_z, 32), minus_z, delta_frame)
    assert report.unitary_dim == 1
    assert report.passed


def test_wold_split_pair(minus_z2, pair_frame):
    report = wold_check(build_V(minus_z2, 32), minus_z2, pair_frame)
    assert report.unitary_dim == 2
    assert report.passed


def test_wold_pure_shift():
    report = wold_check(shift(32), None, None)
    assert report.unitary_dim == 0
    assert report.passed
    with pytest.raises(InputError):
        wold_check(bilateral_shift(4), None, None)


def test_defect(minus_z, delta_frame):
    N = 32
    assert defect_Q(minus_z, 0.5, N, np.zeros(N + 1), frame=delta_frame) == 0.0
    with pytest.raises(NotInModelSpace):
        defect_Q(minus_z, 0.5, N, unit(N + 1, 1), frame=delta_frame)
    with pytest.raises(InputError):
        defect_Q(minus_z, 0.5, N, np.zeros(N), frame=delta_frame)


def test_builders_registry(minus_z, delta_frame):
    assert set(DifferenceBuilder.builders) == {"V-vs-S", "Vtilde-vs-Stilde", "W-vs-I"}
    for name in DifferenceBuilder.builders:
        D = get_builder(name).build(minus_z, delta_frame, 0.0, 32)
        assert D.interior_norm() == 0
    with pytest.raises(InputError):
        get_builder("nothing")


def test_operator_windows_must_match():
    with pytest.raises(InputError):
        identity(4) @ identity(5)
    with pytest.raises(InputError):
        identity(4) - identity(4, Basis.BILATERAL)


def test_multi_V_three_rescaled_copies(delta):
    system = make_system([delta] * 3, 4.0, 1.0)
    masses = [mu.total_mass for mu in system.components]
    assert masses[0] > masses[1] > masses[2] > 0.04
    for mu in system.components:
        assert abs(clark_inner(mu).at_zero) > 0.1
    res = multi_block_check(system, 256)
    assert res["unitarity"] <= 1e-6
    assert res["block"] <= 1e-6
    assert res["cross"] <= 1e-6


@pytest.mark.parametrize(
    ("theta_name", "mu_name"), [("minus_z", "delta"), ("minus_z2", "pair")]
)
@pytest.mark.parametrize("t", [0.5, 1.0])
def test_defect_on_model_space_vectors(request, theta_name, mu_name, t):
    theta = request.getfixturevalue(theta_name)
    N = 64
    frame = clark_embedding(request.getfixturevalue(mu_name), theta, N)
    flow = phi_coeffs(t, N)
    for h in range(4):
        e = unit(N + 1, h)
        v = project_model(flow.coeffs, e)
        assert np.linalg.norm(v) > 0.05
        res = defect_Q(theta, t, N, v, frame=frame, tail=model_tail(flow.coeffs, e))
        assert res <= defect_floor(t, N, v) + 1e-10


def test_defect_tail_widens_model_space_test(minus_z, delta_frame):
    N, t = 32, 0.5
    v = unit(N + 1, 1)
    # distance of z from K_{φ_t} is ‖P_+(φ̄_t z)‖ = (|c_0|² + |c_1|²)^{1/2}
    c = phi_coeffs(t, 1).coeffs
    distance = float(np.linalg.norm(c))
    with pytest.raises(NotInModelSpace):
        defect_Q(minus_z, t, N, v, frame=delta_frame, tail=distance - 1e-3)
    res = defect_Q(minus_z, t, N, v, frame=delta_frame, tail=distance + 1e-3)
    assert res <= defect_floor(t, N, v) + 1e-10
    tol = Tolerances(model_space=1.0)
    assert defect_Q(minus_z, t, N, v, frame=delta_frame, tail=0.0, tol=tol) >= 0


def test_defect_floor():
    N = 32
    assert defect_floor(0.5, N, np.zeros(N + 1)) == 0.0
    # for v = 1 the window holds all of φ̄_t v up to the tail of φ_t
    floor = defect_floor(0.5, N, unit(N + 1, 0))
    assert floor == pytest.approx(4 * np.exp(-0.5) + 2 * truncation_floor((0.5,), N))
    with pytest.raises(InputError):
        defect_floor(0.5, N, np.zeros(N))


def test_cocycle_nontrivial_times(delta, minus_z):
    N = 64
    frame = clark_embedding(delta, minus_z, N)
    for t, s in [(0.25, 0.5), (0.5, 0.5)]:
        res = cocycle_residual(minus_z, frame, t, s, N)
        assert res <= Tolerances().cocycle + truncation_floor((t, s, t + s), N)


def test_semigroup_law_Vtilde_single_atom(delta, minus_z):
    N = 64
    frame = clark_embedding(delta, minus_z, N)
    for t, s in [(0.25, 0.5), (0.5, 1.0)]:
        assert semigroup_residual("Vtilde", minus_z, frame, t, s, N) <= 1e-9


@pytest.mark.parametrize("t", [0.5, 2.0])
def test_calculus_Vtilde_single_atom_is_chain_multiplication(delta, minus_z, t):
    # Ṽ is the shift along ... e_{−1} → e_1 → e_2 ... plus −1 on e_0, so φ_t(Ṽ)
    # is multiplication by φ_t along the chain and 1 on e_0
    N = 32
    frame = clark_embedding(delta, minus_z, N)
    M = calculus_Vtilde(minus_z, frame, t, N).matrix
    chain = [k for k in range(2 * N + 1) if k != N]
    expected = lower_toeplitz(phi_coeffs(t, 2 * N).coeffs, 2 * N)
    np.testing.assert_allclose(M[np.ix_(chain, chain)], expected, atol=1e-12)
    np.testing.assert_allclose(M[:, N], unit(2 * N + 1, N), atol=1e-14)
    np.testing.assert_allclose(M[N, :], unit(2 * N + 1, N), atol=1e-14)
    assert np.linalg.norm(M, 2) <= 1 + 1e-12


def test_clark_frame_intertwines_three_atom(three, three_theta):
    N = 128
    frame = clark_embedding(three, three_theta, N)
    V = build_V(three_theta, N)
    inter = frame.omega * three.points[None, :] - V.matrix @ frame.omega
    assert np.linalg.norm(inter, 2) <= 1e-7


def test_matrix_table_round_trip(minus_z):
    Vt = build_Vtilde(minus_z, 3)
    table = Vt.to_frame()
    assert list(table.columns) == ["row", "col", "re", "im"]
    assert len(table) == 49
    assert table["row"].min() == -3
    back = TruncatedOperator.from_frame(table, Basis.BILATERAL, 3)
    np.testing.assert_array_equal(back.matrix, Vt.matrix)
    nonzero = table[(table["re"] != 0) | (table["im"] != 0)]
    sparse = TruncatedOperator.from_frame(nonzero, Basis.BILATERAL, 3)
    np.testing.assert_array_equal(sparse.matrix, Vt.matrix)
    with pytest.raises(InputError):
        TruncatedOperator.from_frame(table, Basis.ANALYTIC, 3)
