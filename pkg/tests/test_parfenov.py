import math

import numpy as np
import pytest

from cocyclic.errors import BasisDeficient, InputError
from cocyclic.inner import RationalInner
from cocyclic.modelspace import lower_toeplitz
from cocyclic.parfenov import (
    Verdict,
    boundary_moment,
    embedding_operator,
    halfplane_eval,
    model_space_basis,
    nonconstancy_probe,
    parfenov_sum,
    parfenov_weight,
    tail_constant,
    weight_at,
    weight_from_ratio,
    weight_l2_identity,
)

TS = np.linspace(-50, 50, 1001)


def test_halfplane_eval(minus_z, three_theta):
    assert halfplane_eval(minus_z, 0.0) == pytest.approx(1)
    assert halfplane_eval(minus_z, 1e8) == pytest.approx(-1, abs=1e-7)
    t = np.random.default_rng(0).standard_normal(100) * 10
    np.testing.assert_allclose(np.abs(halfplane_eval(three_theta, t)), 1, atol=1e-10)


def test_weight_closed_forms(minus_z, minus_z2):
    np.testing.assert_allclose(weight_at(minus_z, TS), 4 / (1 + TS**2), rtol=1e-10)
    np.testing.assert_allclose(
        weight_at(minus_z2, TS), 16 * TS**2 / (1 + TS**2) ** 2, atol=1e-12
    )
    assert weight_at(minus_z, 0.0) == pytest.approx(4)
    assert weight_at(minus_z2, 0.0) == pytest.approx(0, abs=1e-15)


@pytest.mark.parametrize("name", ["minus_z", "minus_z2", "three_theta"])
def test_weight_two_routes_agree(request, name):
    theta = request.getfixturevalue(name)
    w = weight_at(theta, TS)
    np.testing.assert_allclose(weight_from_ratio(theta, TS), w, atol=1e-10)
    assert np.all(w <= 4 + 1e-12)
    assert weight_at(theta, 1e6) < 1e-9


def test_tail_constant(minus_z, three_theta):
    assert tail_constant(minus_z, 64) == pytest.approx(4)
    ts = np.linspace(64, 2000, 500)
    C = tail_constant(three_theta, 64)
    assert np.all(weight_at(three_theta, ts) <= C / ts**2 * (1 + 1e-6))


def test_parfenov_weight_intervals(minus_z):
    weight = parfenov_weight(minus_z, 16)
    assert len(weight.interval_integrals) == 33
    assert weight.integral(0) == pytest.approx(math.pi, rel=1e-10)
    assert np.all(weight.interval_integrals >= 0)
    assert np.all(weight.interval_integrals <= 4)
    np.testing.assert_array_equal(weight.restrict(2), weight.interval_integrals[14:19])
    with pytest.raises(InputError):
        parfenov_weight(minus_z, 16, nodes=2)


def test_parfenov_sum_p2_single_atom(minus_z):
    res = parfenov_sum(minus_z, 2.0, K=512)
    assert res.verdict is Verdict.FINITE
    assert res.total == pytest.approx(4 * math.pi, rel=0.01)
    assert res.partial <= 4 * math.pi <= res.total


def test_parfenov_sum_p2_pair(minus_z2):
    res = parfenov_sum(minus_z2, 2.0, K=512)
    assert res.total == pytest.approx(8 * math.pi, rel=0.01)
    assert res.partial <= 8 * math.pi <= res.total


@pytest.mark.parametrize("name", ["minus_z", "minus_z2", "three_theta"])
def test_parfenov_sum_p1_diverges(request, name):
    res = parfenov_sum(request.getfixturevalue(name), 1.0, K=64)
    assert res.verdict is Verdict.DIVERGENT_TREND
    assert math.isinf(res.total)


def test_parfenov_sum_constant_theta():
    theta = RationalInner.constant(1.0)
    for p in (1.0, 2.0):
        res = parfenov_sum(theta, p, K=16)
        assert res.verdict is Verdict.FINITE
        assert res.total == 0


def test_parfenov_sum_rejects_bad_input(minus_z):
    with pytest.raises(InputError):
        parfenov_sum(minus_z, 0.0)
    with pytest.raises(InputError):
        parfenov_sum(minus_z, 2.0, K=4)


def test_boundary_moment(minus_z, three_theta):
    assert boundary_moment(minus_z, 4) == pytest.approx(1, abs=1e-6)
    value = boundary_moment(three_theta, 4)
    assert math.isfinite(value)
    assert value > 0
    with pytest.raises(InputError):
        boundary_moment(minus_z, 3)


@pytest.mark.parametrize(
    ("mu", "theta"),
    [("delta", "minus_z"), ("pair", "minus_z2"), ("three", "three_theta")],
)
def test_weight_l2_identity(request, mu, theta):
    lhs, rhs = weight_l2_identity(
        request.getfixturevalue(mu), request.getfixturevalue(theta)
    )
    assert lhs == pytest.approx(rhs, rel=1e-6)


def test_nonconstancy_probe(three_theta):
    probe = nonconstancy_probe(three_theta, K=16, samples=801)
    assert probe["min_real_part"] >= -1e-12
    assert probe["integral"] > 0


def test_model_space_basis():
    basis = model_space_basis(0.5, 64)
    np.testing.assert_allclose(basis.conj().T @ basis, np.eye(basis.shape[1]), atol=1e-10)
    with pytest.raises(BasisDeficient):
        model_space_basis(0.0, 16)


def test_embedding_constant_theta():
    report = embedding_operator(RationalInner.constant(1.0), 0.5, 32, ps=(2.0,), K=16)
    np.testing.assert_array_equal(report.values, 0)
    assert report.within()


def test_embedding_single_atom(minus_z):
    report = embedding_operator(minus_z, 1.0, 128, ps=(2.0, 3.0), K=128)
    assert report.within(1.1)
    small = embedding_operator(minus_z, 0.5, 128, ps=(2.0,), K=128)
    assert np.sum(small.values**2) < np.sum(report.values**2)


def test_embedding_drops_edge_rows(minus_z):
    N = 64
    report = embedding_operator(minus_z, 1.0, N, ps=(2.0,), K=64)
    assert report.matrix.shape[0] == N + 1 - 16
    basis = model_space_basis(1.0, N)
    # (1 − z) on the whole window
    symbol = np.zeros(N + 1, dtype=complex)
    symbol[:2] = [1, -1]
    full = np.linalg.svd(lower_toeplitz(symbol, N + 1) @ basis, compute_uv=False)
    assert np.all(report.values <= full[: len(report.values)] + 1e-12)
