"""Clark embedding and projections in truncated Fourier coordinates.

Analytic vectors hold the coefficients of indices 0..N. Laurent vectors hold the
indices −N..N, so index k sits at position k + N.
"""

from __future__ import annotations

import dataclasses
import logging

import numpy as np
import numpy.polynomial.polynomial as P
import numpy.typing as npt
import scipy.linalg

from cocyclic.config import Tolerances
from cocyclic.errors import IllConditionedClark, InputError, ThetaZeroIsOne
from cocyclic.inner import (
    RationalInner,
    _clark_polynomials,
    herglotz_residual,
    series,
    taylor,
)
from cocyclic.measures import AtomicMeasure

log = logging.getLogger("cocyclic.modelspace")

ComplexArray = npt.NDArray[np.complex128]


def lower_toeplitz(coeffs: npt.ArrayLike, size: int) -> ComplexArray:
    """Matrix of multiplication by an analytic symbol on `size` coordinates."""
    col = np.zeros(size, dtype=np.complex128)
    coeffs = np.asarray(coeffs, dtype=np.complex128)[:size]
    col[: len(coeffs)] = coeffs
    row = np.zeros(size, dtype=np.complex128)
    row[0] = col[0]
    return scipy.linalg.toeplitz(col, row)


def reproducing_g(theta: RationalInner, N: int) -> ComplexArray:
    """Coefficients of g = (θ − θ(0)) / (z(1 − θ(0))) up to degree N."""
    theta0 = theta.at_zero
    if abs(1 - theta0) < 1e-12:
        raise ThetaZeroIsOne(f"θ(0) = {theta0} is too close to 1.")
    return taylor(theta, N + 1)[1:] / (1 - theta0)


@dataclasses.dataclass(frozen=True, eq=False)
class ClarkFrame:
    """Truncated Clark embedding of L²(μ) onto K_θ.

    Column j of `omega` is the image of the normalized indicator of the j-th atom,
    and `clark_unitary` is multiplication by the atoms read through the Gram
    matrix of those columns.
    """

    mu: AtomicMeasure
    theta: RationalInner
    g: ComplexArray
    omega: ComplexArray
    clark_unitary: ComplexArray
    N: int

    @property
    def gram_deviation(self) -> float:
        gram = self.omega.conj().T @ self.omega
        return float(np.linalg.norm(gram - np.eye(self.mu.size), 2))

    def eigenvalues(self) -> ComplexArray:
        return scipy.linalg.eigvals(self.clark_unitary)

    def atom_mismatch(self) -> float:
        """Largest distance between an eigenvalue and its nearest atom, both ways."""
        ev, xi = self.eigenvalues(), self.mu.points
        dist = np.abs(ev[:, None] - xi[None, :])
        return float(max(dist.min(axis=0).max(), dist.min(axis=1).max()))

    def spectrum_gap(self) -> float:
        return float(np.min(np.abs(self.eigenvalues() - 1)))


def _compress(omega, theta_coeffs, g) -> ComplexArray:
    # omega* (S omega + (1 − θ) (omega, g))
    shifted = np.zeros_like(omega)
    shifted[1:] = omega[:-1]
    one_minus = -theta_coeffs
    one_minus[0] += 1
    image = shifted + np.outer(one_minus, g.conj() @ omega)
    return omega.conj().T @ image


def clark_embedding(
    mu: AtomicMeasure, theta: RationalInner, N: int, tol: Tolerances | None = None
) -> ClarkFrame:
    """Build the truncated Clark frame of `mu`.

    Parameters
    ----------
    mu
        Atomic measure with n atoms.
    theta
        Its Clark inner function, as returned by `clark_inner`.
    N
        Truncation degree of the analytic window.
    tol
        Thresholds; the Gram deviation may not exceed 100 times ``tol.gram``.

    Raises
    ------
    IllConditionedClark
        If `theta` does not match `mu` or the truncated columns are far from
        orthonormal.

    """
    tol = tol or Tolerances()
    if herglotz_residual(theta, mu) > tol.herglotz:
        raise IllConditionedClark("θ is not the Clark inner function of μ.")
    numer, denom = _clark_polynomials(mu)
    denom = numer + denom
    xi = mu.points
    n = mu.size
    sign = (-1) ** (n - 1)

    omega = np.empty((N + 1, n), dtype=np.complex128)
    for j in range(n):
        cancelled = sign * P.polyfromroots(np.delete(xi, j))
        cancelled = 2 * xi[j] * np.sqrt(mu.masses[j]) * cancelled
        omega[:, j] = series(cancelled, denom, N)

    g = reproducing_g(theta, N)
    frame = ClarkFrame(
        mu=mu,
        theta=theta,
        g=g,
        omega=omega,
        clark_unitary=(omega.conj().T @ omega) * xi[None, :],
        N=N,
    )
    deviation = frame.gram_deviation
    log.debug(f"Clark frame at N={N}: Gram deviation {deviation:.3e}")
    if deviation > 100 * tol.gram:
        raise IllConditionedClark(
            f"Gram deviation {deviation:.3e} at N={N} exceeds {100 * tol.gram:.1e}."
        )
    return frame


def clark_unitary_direct(frame: ClarkFrame) -> ComplexArray:
    """Compress f ↦ zf + (f, g)(1 − θ) to the atom basis through omega.

    ``frame.clark_unitary`` comes from the atoms instead, so the two agree only
    as far as omega intertwines V with multiplication by ξ.
    """
    return _compress(frame.omega, taylor(frame.theta, frame.N), frame.g)


def _window(f: npt.ArrayLike) -> tuple[ComplexArray, int]:
    f = np.asarray(f, dtype=np.complex128)
    if f.ndim != 1 or len(f) % 2 == 0:
        raise InputError("Laurent vectors must have odd length 2N + 1.")
    return f, (len(f) - 1) // 2


def project_plus(f: npt.ArrayLike) -> ComplexArray:
    """Zero the coefficients of negative index."""
    f, N = _window(f)
    out = f.copy()
    out[:N] = 0
    return out


def project_minus(f: npt.ArrayLike) -> ComplexArray:
    """Zero the coefficients of nonnegative index."""
    f, N = _window(f)
    out = f.copy()
    out[N:] = 0
    return out


def analytic_part(f: npt.ArrayLike) -> ComplexArray:
    f, N = _window(f)
    return f[N:].copy()


def embed_analytic(h: npt.ArrayLike) -> ComplexArray:
    """Place analytic coefficients 0..N into a Laurent vector over −N..N."""
    h = np.asarray(h, dtype=np.complex128)
    return np.concatenate([np.zeros(len(h) - 1, dtype=np.complex128), h])


def project_model(inner: npt.ArrayLike, f: npt.ArrayLike) -> ComplexArray:
    """Apply P_{K_u} f = f − u·P_+(ū f) on the analytic window of `f`.

    `inner` holds Taylor coefficients of u to at least the degree of `f`.
    """
    f = np.asarray(f, dtype=np.complex128)
    size = len(f)
    if len(inner) < size:
        raise InputError(f"Inner function known to degree {len(inner) - 1} only.")
    T = lower_toeplitz(inner, size)
    return f - T @ (T.conj().T @ f)


def model_tail(inner: npt.ArrayLike, h: npt.ArrayLike) -> float:
    """Norm of P_{K_u} h beyond the window of `h`.

    For a polynomial h the window part of P_{K_u} h is `project_model(inner, h)`
    and the full projection has norm² ‖h‖² − ‖P_+(ū h)‖², which is exact on the
    window. The difference of the two squared norms is returned as a norm.
    """
    h = np.asarray(h, dtype=np.complex128)
    size = len(h)
    if len(inner) < size:
        raise InputError(f"Inner function known to degree {len(inner) - 1} only.")
    T = lower_toeplitz(inner, size)
    coanalytic = T.conj().T @ h
    window = h - T @ coanalytic
    excess = np.vdot(h, h).real - np.vdot(coanalytic, coanalytic).real
    return float(np.sqrt(max(excess - np.vdot(window, window).real, 0.0)))
