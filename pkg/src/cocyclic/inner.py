"""Rational and singular inner functions on the unit disc.

Polynomials are stored as ascending coefficient arrays in the convention of
`numpy.polynomial.polynomial`.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from collections.abc import Sequence

import numpy as np
import numpy.polynomial.polynomial as P
import numpy.typing as npt
import scipy.signal

from cocyclic.config import Tolerances
from cocyclic.errors import (
    DegenerateAtOne,
    DegreeCapExceeded,
    DomainError,
    IllConditionedClark,
    InputError,
    NumericalError,
)
from cocyclic.measures import AtomicMeasure

log = logging.getLogger("cocyclic.inner")

ComplexArray = npt.NDArray[np.complex128]

BOUNDARY_SAMPLES: int = 256
INTERIOR_RADIUS: float = 0.99


def _trim(c: npt.ArrayLike) -> ComplexArray:
    c = np.asarray(c, dtype=np.complex128)
    scale = np.max(np.abs(c)) if c.size else 0.0
    return P.polytrim(c, tol=1e-14 * scale) if scale > 0 else np.zeros(1, complex)


@dataclasses.dataclass(frozen=True, eq=False)
class RationalInner:
    """Finite Blaschke product θ = numer/denom with denom[0] = 1.

    Products keep their factors so that partial products can be recovered.
    """

    numer: ComplexArray
    denom: ComplexArray
    factors: tuple[RationalInner, ...] = ()

    @property
    def degree(self) -> int:
        return max(len(self.numer), len(self.denom)) - 1

    @classmethod
    def from_polynomials(cls, numer, denom, factors=()) -> RationalInner:
        numer, denom = _trim(numer), _trim(denom)
        if abs(denom[0]) < 1e-300:
            raise NumericalError("Denominator vanishes at the origin.")
        return cls(numer / denom[0], denom / denom[0], tuple(factors))

    @classmethod
    def constant(cls, c: complex) -> RationalInner:
        if abs(abs(c) - 1) > 1e-12:
            raise InputError(f"Constant inner function must be unimodular, got {c}.")
        return cls(np.array([c], dtype=np.complex128), np.ones(1, np.complex128))

    def __call__(self, z):
        return P.polyval(z, self.numer) / P.polyval(z, self.denom)

    @property
    def at_zero(self) -> complex:
        return complex(self.numer[0])

    def partial(self, n: int) -> RationalInner:
        """Return the product of the first `n` factors (1 when n = 0)."""
        factors = self.factors or (self,)
        if not 0 <= n <= len(factors):
            raise IndexError(f"Product has {len(factors)} factors, asked for {n}.")
        if n == 0:
            return RationalInner.constant(1.0)
        if n == 1:
            return factors[0]
        return _multiply(factors[:n])

    def check(self, tol: Tolerances | None = None) -> dict[str, float]:
        """Return boundary and interior residuals of the inner-function invariants."""
        tol = tol or Tolerances()
        circle = np.exp(2j * np.pi * np.arange(BOUNDARY_SAMPLES) / BOUNDARY_SAMPLES)
        boundary = float(np.max(np.abs(np.abs(self(circle)) - 1)))
        grid = INTERIOR_RADIUS * circle
        grid = np.concatenate([grid, 0.5 * grid, [0.0]])
        disc = float(max(np.max(np.abs(self(grid))) - 1, 0.0))
        return {"boundary": boundary, "disc": disc}


def _clark_polynomials(mu: AtomicMeasure) -> tuple[ComplexArray, ComplexArray]:
    """Return (N, D) with D = Π(ξ_j − z) and N = Σ μ_j (ξ_j + z) Π_{l≠j}(ξ_l − z)."""
    xi = mu.points
    n = mu.size
    sign = (-1) ** n
    D = sign * P.polyfromroots(xi)
    N = np.zeros(n + 1, dtype=np.complex128)
    for j in range(n):
        others = sign * -1 * P.polyfromroots(np.delete(xi, j))
        N += mu.masses[j] * P.polymul([xi[j], 1.0], others)
    return N, D


def herglotz(mu: AtomicMeasure, z) -> ComplexArray:
    xi = mu.points[:, None]
    z = np.atleast_1d(np.asarray(z, dtype=np.complex128))[None, :]
    return np.sum(mu.masses[:, None] * (xi + z) / (xi - z), axis=0)


def herglotz_sample_points() -> ComplexArray:
    angles = 2 * np.pi * np.arange(32) / 32
    return np.concatenate([0.25 * np.exp(1j * angles), 0.5 * np.exp(1j * angles)])


def herglotz_residual(theta: RationalInner, mu: AtomicMeasure) -> float:
    """Max of |(1+θ)/(1−θ) − H_μ| over 64 interior points."""
    z = herglotz_sample_points()
    num = P.polyval(z, theta.numer)
    den = P.polyval(z, theta.denom)
    return float(np.max(np.abs((den + num) / (den - num) - herglotz(mu, z))))


def clark_inner(mu: AtomicMeasure, tol: Tolerances | None = None) -> RationalInner:
    """Return the inner function whose Clark measure is `mu`.

    θ = (N − D)/(N + D), where N/D is the Herglotz transform of `mu`. The
    denominator does not vanish at 0 since N(0) + D(0) = (1 + μ(𝕋))·Πξ_j.

    Raises
    ------
    IllConditionedClark
        If the constructed function fails one of the inner-function checks.

    """
    tol = tol or Tolerances()
    N, D = _clark_polynomials(mu)
    theta = RationalInner.from_polynomials(N - D, N + D)

    res = theta.check(tol)
    res["herglotz"] = herglotz_residual(theta, mu)
    res["atom_value"] = float(np.max(np.abs(theta(mu.points) - 1)))
    failed = {k: v for k, v in res.items() if v > getattr(tol, k)}
    if theta.degree != mu.size:
        failed["degree"] = theta.degree
    if failed:
        raise IllConditionedClark(f"Clark inner function failed checks: {failed}")
    log.debug(f"Clark inner function of degree {theta.degree}, residuals {res}")
    return theta


def eval_inner(theta: RationalInner, z: complex) -> complex:
    if abs(z) > 1 + 1e-12:
        raise DomainError(f"Point {z} lies outside the closed unit disc.")
    return complex(theta(z))


def boundary_value_at_one(theta: RationalInner) -> complex:
    den = P.polyval(1.0, theta.denom)
    if abs(den) < 1e-12:
        raise DegenerateAtOne("Denominator of θ vanishes at 1.")
    return complex(P.polyval(1.0, theta.numer) / den)


def taylor(theta: RationalInner, N: int) -> ComplexArray:
    """Maclaurin coefficients of θ up to degree N.

    The long division numer/denom runs as an IIR filter on a unit impulse; the
    poles of θ lie outside the closed disc, so the recursion is stable.
    """
    if N < 0:
        raise InputError(f"Degree must be nonnegative, got {N}.")
    impulse = np.zeros(N + 1, dtype=np.complex128)
    impulse[0] = 1.0
    return scipy.signal.lfilter(theta.numer, theta.denom, impulse)


def series(numer: npt.ArrayLike, denom: npt.ArrayLike, N: int) -> ComplexArray:
    """Maclaurin coefficients of an arbitrary rational function (denom[0] ≠ 0)."""
    impulse = np.zeros(N + 1, dtype=np.complex128)
    impulse[0] = 1.0
    return scipy.signal.lfilter(
        np.asarray(numer, complex), np.asarray(denom, complex), impulse
    )


def _multiply(thetas: Sequence[RationalInner]) -> RationalInner:
    numer = np.ones(1, dtype=np.complex128)
    denom = np.ones(1, dtype=np.complex128)
    for th in thetas:
        numer = P.polymul(numer, th.numer)
        denom = P.polymul(denom, th.denom)
    return RationalInner.from_polynomials(numer, denom, factors=tuple(thetas))


def product_inner(
    thetas: Sequence[RationalInner],
    degree_cap: int = 64,
    tol: Tolerances | None = None,
) -> RationalInner:
    """Multiply finitely many rational inner functions.

    Raises
    ------
    DegreeCapExceeded
        If the total degree exceeds `degree_cap`.

    """
    if not thetas:
        raise InputError("product_inner needs at least one factor.")
    total = sum(th.degree for th in thetas)
    if total > degree_cap:
        raise DegreeCapExceeded(
            f"Total degree {total} exceeds the configured cap {degree_cap}."
        )
    if len(thetas) == 1:
        return thetas[0]
    tol = tol or Tolerances()
    theta = _multiply(thetas)
    res = theta.check(tol)
    if res["boundary"] > tol.boundary or res["disc"] > tol.disc:
        raise NumericalError(f"Product of inner functions failed checks: {res}")
    return theta


# singular inner functions exp(t (z+1)/(z-1))


def phi(t: float, z):
    """Evaluate φ_t(z) = exp(t(z+1)/(z−1)) away from z = 1."""
    z = np.asarray(z, dtype=np.complex128)
    return np.exp(t * (z + 1) / (z - 1))


@dataclasses.dataclass(frozen=True, eq=False)
class SingularInnerFlow:
    t: float
    coeffs: ComplexArray

    @property
    def N(self) -> int:
        return len(self.coeffs) - 1

    def partial_sums(self) -> ComplexArray:
        return np.cumsum(self.coeffs)

    @property
    def parseval_deficit(self) -> float:
        """1 − Σ|c_n|², the energy left outside the truncation."""
        return float(1 - np.sum(np.abs(self.coeffs) ** 2))

    def truncation_floor(self, m: int | None = None) -> float:
        """ℓ²-norm of the coefficients beyond index `m` (default: all kept)."""
        m = self.N if m is None else min(m, self.N)
        return math.sqrt(max(1 - np.sum(np.abs(self.coeffs[: m + 1]) ** 2), 0.0))


def phi_coeffs(t: float, N: int) -> SingularInnerFlow:
    r"""Taylor coefficients of φ_t up to degree N.

    From the Laguerre generating function,

    .. math::

        \varphi_t(z) = e^{-t} \sum_n L_n(2t) z^n (1 - z),

    so :math:`c_0 = e^{-t}` and :math:`c_n = e^{-t}(L_n(2t) - L_{n-1}(2t))`.
    """
    if t < 0:
        raise InputError(f"Time must be nonnegative, got {t}.")
    if N < 0:
        raise InputError(f"Degree must be nonnegative, got {N}.")
    x = 2.0 * t
    lag = np.empty(N + 1)
    lag[0] = 1.0
    if N >= 1:
        lag[1] = 1.0 - x
    for n in range(1, N):
        lag[n + 1] = ((2 * n + 1 - x) * lag[n] - n * lag[n - 1]) / (n + 1)
    c = np.empty(N + 1, dtype=np.complex128)
    c[0] = 1.0
    c[1:] = np.diff(lag)
    c *= math.exp(-t)
    return SingularInnerFlow(float(t), c)
