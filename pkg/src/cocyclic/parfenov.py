"""Half-plane weight of a rational inner function and its Parfenov sums.

The disc is mapped to the upper half-plane by ξ(t) = (t − i)/(t + i), so that
t → ±∞ corresponds to ξ → 1 and Θ(∞) = θ(1).
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
import warnings
from collections.abc import Callable, Sequence

import numpy as np
import numpy.polynomial.legendre
import numpy.polynomial.polynomial as P
import numpy.typing as npt
import scipy.integrate
import scipy.linalg

from cocyclic.config import Tolerances
from cocyclic.errors import BasisDeficient, InputError, QuadratureNotConverged
from cocyclic.inner import RationalInner, boundary_value_at_one, phi_coeffs, taylor
from cocyclic.measures import AtomicMeasure, nu_mass
from cocyclic.modelspace import lower_toeplitz, project_model

log = logging.getLogger("cocyclic.parfenov")

#: Intervals inside |t| ≤ ADAPTIVE_RADIUS are refined by bisection.
ADAPTIVE_RADIUS: float = 2.0


class Verdict(enum.StrEnum):
    FINITE = "FINITE"
    DIVERGENT_TREND = "DIVERGENT-TREND"
    INCONCLUSIVE = "INCONCLUSIVE"


def xi_of_t(t):
    t = np.asarray(t, dtype=np.float64)
    return (t - 1j) / (t + 1j)


def halfplane_eval(theta: RationalInner, t):
    """Θ(t) = θ((t − i)/(t + i)) on the real line."""
    return theta(xi_of_t(t))


def weight_at(theta: RationalInner, t):
    """w(t) = |1 − conj(Θ(∞)) Θ(t)|²."""
    a = boundary_value_at_one(theta)
    return np.abs(1 - np.conj(a) * halfplane_eval(theta, t)) ** 2


def _quotient(theta: RationalInner) -> npt.NDArray[np.complex128]:
    """Polynomial Q with (1 − conj(θ(1)) θ) = (1 − z) Q / denom."""
    a = boundary_value_at_one(theta)
    size = max(len(theta.numer), len(theta.denom))
    numer = np.zeros(size, complex)
    denom = np.zeros(size, complex)
    numer[: len(theta.numer)] = theta.numer
    denom[: len(theta.denom)] = theta.denom
    quo, _ = P.polydiv(denom - np.conj(a) * numer, np.array([1.0, -1.0]))
    return quo


def boundary_ratio(theta: RationalInner, xi):
    """R(ξ) = |(1 − conj(θ(1)) θ(ξ)) / (1 − ξ)|², evaluated without cancellation."""
    quo = _quotient(theta)
    return np.abs(P.polyval(xi, quo) / P.polyval(xi, theta.denom)) ** 2


def weight_from_ratio(theta: RationalInner, t):
    """Second route to w(t): R(ξ(t))·|1 − ξ(t)|² with |1 − ξ(t)|² = 4/(1 + t²)."""
    t = np.asarray(t, dtype=np.float64)
    return boundary_ratio(theta, xi_of_t(t)) * 4 / (1 + t**2)


def tail_constant(theta: RationalInner, K: float) -> float:
    """C_w such that w(t) ≤ C_w / t² for |t| ≥ K.

    Since |1 − ξ(t)|² ≤ 4/t², C_w = 4·max R over the arc |arg ξ| ≤ 2·arctan(1/K)
    that the rays |t| ≥ K are mapped onto.
    """
    half = 2 * math.atan(1 / K)
    arc = np.exp(1j * np.linspace(-half, half, 257))
    return float(4 * np.max(boundary_ratio(theta, arc)))


def _gauss(f: Callable, a: float, b: float, x, w) -> float:
    mid, half = (a + b) / 2, (b - a) / 2
    return float(half * np.sum(w * f(mid + half * x)))


def _adaptive(f: Callable, a: float, b: float, x, w, depth: int = 0) -> float:
    mid = (a + b) / 2
    whole = _gauss(f, a, b, x, w)
    halves = _gauss(f, a, mid, x, w) + _gauss(f, mid, b, x, w)
    if abs(whole - halves) <= 1e-13 * max(1.0, abs(halves)) or depth >= 16:
        return halves
    return _adaptive(f, a, mid, x, w, depth + 1) + _adaptive(f, mid, b, x, w, depth + 1)


@dataclasses.dataclass(frozen=True, eq=False)
class ParfenovWeight:
    """Unit-interval integrals of w over [k, k + 1] for −K ≤ k ≤ K."""

    theta: RationalInner
    theta_at_one: complex
    ks: npt.NDArray[np.int64]
    interval_integrals: npt.NDArray[np.float64]
    K: int
    nodes: int

    def integral(self, k: int) -> float:
        return float(self.interval_integrals[k + self.K])

    def restrict(self, K: int) -> npt.NDArray[np.float64]:
        return self.interval_integrals[self.K - K : self.K + K + 1]


def parfenov_weight(theta: RationalInner, K: int, nodes: int = 16) -> ParfenovWeight:
    """Integrate w over the unit intervals [k, k + 1] for |k| ≤ K.

    Gauss–Legendre with `nodes` points on each interval, refined by bisection
    for intervals inside |t| ≤ 2.
    """
    if nodes < 4:
        raise InputError(f"At least 4 quadrature nodes needed, got {nodes}.")
    x, w = numpy.polynomial.legendre.leggauss(nodes)
    ks = np.arange(-K, K + 1)
    grid = ks[:, None] + (x[None, :] + 1) / 2
    integrals = weight_at(theta, grid) @ (w / 2)

    def f(t):
        return weight_at(theta, t)

    for i, k in enumerate(ks):
        if -ADAPTIVE_RADIUS <= k < ADAPTIVE_RADIUS:
            integrals[i] = _adaptive(f, float(k), float(k + 1), x, w)
    return ParfenovWeight(
        theta=theta,
        theta_at_one=boundary_value_at_one(theta),
        ks=ks,
        interval_integrals=np.maximum(integrals, 0.0),
        K=K,
        nodes=nodes,
    )


@dataclasses.dataclass(frozen=True)
class ParfenovSum:
    p: float
    K: int
    partial: float
    tail_bound: float
    verdict: Verdict
    increments: tuple[float, float] | None = None

    @property
    def total(self) -> float:
        return self.partial + self.tail_bound


def _power_sum(integrals: npt.NDArray, p: float) -> float:
    return float(np.sum(integrals ** (p / 2)))


def parfenov_sum(
    theta: RationalInner, p: float, K: int = 512, nodes: int = 16
) -> ParfenovSum:
    r"""Partial Parfenov sum over |k| ≤ K with a bound on the rest.

    .. math::

        \mathfrak{N}_p(w) = \sum_k \Bigl(\int_k^{k+1} w\Bigr)^{p/2}

    For p > 1 the tail is bounded through w(t) ≤ C_w/t²; for p ≤ 1 it is
    infinite, and the verdict compares the increments of the partial sums at
    K, 2K and 4K. A near-constant or growing increment is the logarithmic (or
    faster) signature of divergence.
    """
    if p <= 0:
        raise InputError(f"Exponent p must be positive, got {p}.")
    if K < 8:
        raise InputError(f"Window K must be at least 8, got {K}.")
    C = tail_constant(theta, K)
    if p > 1 or C == 0:
        weight = parfenov_weight(theta, K, nodes)
        partial = _power_sum(weight.interval_integrals, p)
        tail = C ** (p / 2) * (2 * K**-p + 2 * K ** (1 - p) / (p - 1)) if C else 0.0
        return ParfenovSum(p, K, partial, tail, Verdict.FINITE)

    weight = parfenov_weight(theta, 4 * K, nodes)
    sums = [_power_sum(weight.restrict(m), p) for m in (K, 2 * K, 4 * K)]
    d1, d2 = sums[1] - sums[0], sums[2] - sums[1]
    if d1 > 0 and d2 >= 0.75 * d1:
        verdict = Verdict.DIVERGENT_TREND
    elif sums[0] == 0:
        verdict = Verdict.FINITE
    else:
        verdict = Verdict.INCONCLUSIVE
    log.debug(f"Parfenov p={p}: partial sums {sums}, verdict {verdict}")
    return ParfenovSum(p, K, sums[0], math.inf, verdict, (d1, d2))


def _circle_mean(f: Callable, what: str) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.integrate.IntegrationWarning)
        try:
            value, err = scipy.integrate.quad(
                f,
                -math.pi,
                math.pi,
                points=[0.0],
                limit=400,
                epsabs=1e-10,
                epsrel=1e-10,
            )
        except scipy.integrate.IntegrationWarning as e:
            raise QuadratureNotConverged(f"Quadrature of {what} stalled: {e}") from e
    if err > 1e-8 * max(1.0, abs(value)):
        raise QuadratureNotConverged(f"Quadrature of {what} has error {err:.2e}.")
    return value / (2 * math.pi)


def boundary_moment(theta: RationalInner, q: float) -> float:
    """∫ |(1 − conj(θ(1))θ(ξ))/(1 − ξ)|^{2q} dm(ξ) over the circle."""
    if not q > 3:
        raise InputError(f"Moment exponent q must exceed 3, got {q}.")
    return _circle_mean(
        lambda a: boundary_ratio(theta, np.exp(1j * a)) ** q, "the boundary moment"
    )


def weight_l2_identity(mu: AtomicMeasure, theta: RationalInner) -> tuple[float, float]:
    """Both sides of ∫_ℝ w = |1 − Θ(∞)|²·ν(ℝ).

    The left side is integrated on the circle, where ∫_ℝ w dt = 4π ∫ R dm; the
    right side comes from the atoms.
    """
    lhs = 4 * math.pi * _circle_mean(
        lambda a: boundary_ratio(theta, np.exp(1j * a)), "the weight"
    )
    rhs = abs(1 - boundary_value_at_one(theta)) ** 2 * nu_mass(mu)
    return lhs, rhs


def nonconstancy_probe(
    theta: RationalInner, K: int = 64, samples: int = 4001
) -> dict[str, float]:
    """Minimum and integral of Re(1 − conj(Θ(∞))Θ) over the real line.

    Since |Θ| = 1, Re(1 − conj(Θ(∞))Θ) = w/2 ≥ 0. The integral is strictly
    positive unless θ is a unimodular constant.
    """
    ts = np.linspace(-K, K, samples)
    real = np.real(1 - np.conj(boundary_value_at_one(theta)) * halfplane_eval(theta, ts))
    integral = 0.5 * float(np.sum(parfenov_weight(theta, K).interval_integrals))
    return {"min_real_part": float(np.min(real)), "integral": integral}


@dataclasses.dataclass(frozen=True, eq=False)
class EmbeddingReport:
    matrix: npt.NDArray[np.complex128]
    values: npt.NDArray[np.float64]
    comparisons: dict[float, tuple[float, float]]

    def within(self, factor: float = 1.1) -> bool:
        return all(op <= factor * pv for op, pv in self.comparisons.values())


def model_space_basis(t: float, N: int) -> npt.NDArray[np.complex128]:
    """Orthonormal vectors spanning the truncated K_{φ_t}.

    Eigenvectors of the truncated projection I − T(φ_t)T(φ_t)* whose eigenvalue
    is at least 1/2.

    Raises
    ------
    BasisDeficient
        If no eigenvalue reaches 1/2.

    """
    flow = phi_coeffs(t, N)
    proj = project_model(flow.coeffs, np.eye(N + 1, dtype=np.complex128))
    evals, evecs = scipy.linalg.eigh(proj)
    keep = evals >= 0.5
    if not np.any(keep):
        raise BasisDeficient(f"Model space of φ_{t} is empty at N={N}.")
    return evecs[:, keep]


def embedding_operator(
    theta: RationalInner,
    t: float,
    N: int,
    ps: Sequence[float] = (1.5, 2.0, 3.0),
    *,
    K: int = 512,
    nodes: int = 16,
) -> EmbeddingReport:
    """Multiplication by 1 − conj(θ(1))θ restricted to K_{φ_t}.

    Only the rows of the image away from the truncation edge are kept, the same
    ⌈N/4⌉ margin the operator norms use. For each p the report holds the pair
    (Σσ^p, 𝔑_p partial + tail).
    """
    basis = model_space_basis(t, N)
    a = np.conj(boundary_value_at_one(theta))
    symbol = -a * taylor(theta, N)
    symbol[0] += 1
    interior = N + 1 - math.ceil(N / 4)
    matrix = (lower_toeplitz(symbol, N + 1) @ basis)[:interior]
    values = np.linalg.svd(matrix, compute_uv=False)
    comparisons = {}
    for p in ps:
        bound = parfenov_sum(theta, p, K, nodes).total
        comparisons[float(p)] = (float(np.sum(values**p)), bound)
    log.info(f"Embedding of K_φ (t={t}, N={N}, dim {basis.shape[1]}): {comparisons}")
    return EmbeddingReport(matrix, values, comparisons)
