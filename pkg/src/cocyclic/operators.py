"""Truncated matrices of the shift, its perturbations and their functional calculus.

Analytic operators act on the coefficients 0..N. Bilateral operators act on
−N..N with index k at position k + N; there the analytic block is the lower
right (N+1)×(N+1) corner and the coanalytic block the upper left N×N corner.
Residuals are measured on the interior, which drops ⌈N/4⌉ indices at every
truncation edge. Index 0 of the analytic window is a true boundary of H² and
is kept.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
from collections.abc import Sequence

import numpy as np
import numpy.typing as npt
import pandas as pd
import scipy.linalg

from cocyclic.config import Tolerances
from cocyclic.errors import InputError, NotInModelSpace, SpectrumAtOne
from cocyclic.inner import (
    RationalInner,
    boundary_value_at_one,
    clark_inner,
    phi,
    phi_coeffs,
    product_inner,
    taylor,
)
from cocyclic.measures import MultiMeasureSystem
from cocyclic.modelspace import (
    ClarkFrame,
    clark_embedding,
    embed_analytic,
    lower_toeplitz,
    reproducing_g,
)

log = logging.getLogger("cocyclic.operators")

ComplexArray = npt.NDArray[np.complex128]


class Basis(enum.Enum):
    ANALYTIC = "analytic-Fourier"
    BILATERAL = "bilateral-Fourier"


@dataclasses.dataclass(frozen=True, eq=False)
class TruncatedOperator:
    matrix: ComplexArray
    basis: Basis
    N: int

    def __post_init__(self):
        if self.matrix.shape != (self.size, self.size):
            raise InputError(
                f"Matrix of shape {self.matrix.shape} does not fit a "
                f"{self.basis.value} window of degree {self.N}."
            )

    @property
    def size(self) -> int:
        return self.N + 1 if self.basis is Basis.ANALYTIC else 2 * self.N + 1

    @property
    def margin(self) -> int:
        return math.ceil(self.N / 4)

    @property
    def interior(self) -> slice:
        if self.basis is Basis.ANALYTIC:
            return slice(0, self.N + 1 - self.margin)
        return slice(self.margin, 2 * self.N + 1 - self.margin)

    def position(self, k: int) -> int:
        """Row/column position of Fourier index `k`."""
        return k if self.basis is Basis.ANALYTIC else k + self.N

    def interior_block(self) -> ComplexArray:
        s = self.interior
        return self.matrix[s, s]

    def interior_norm(self) -> float:
        block = self.interior_block()
        return float(np.linalg.norm(block, 2)) if block.size else 0.0

    def _like(self, matrix) -> TruncatedOperator:
        return TruncatedOperator(np.asarray(matrix, np.complex128), self.basis, self.N)

    def _check(self, other: TruncatedOperator):
        if other.basis is not self.basis or other.N != self.N:
            raise InputError("Operators live on different windows.")

    def __matmul__(self, other):
        if isinstance(other, TruncatedOperator):
            self._check(other)
            return self._like(self.matrix @ other.matrix)
        return self.matrix @ np.asarray(other)

    def __add__(self, other: TruncatedOperator) -> TruncatedOperator:
        self._check(other)
        return self._like(self.matrix + other.matrix)

    def __sub__(self, other: TruncatedOperator) -> TruncatedOperator:
        self._check(other)
        return self._like(self.matrix - other.matrix)

    @property
    def H(self) -> TruncatedOperator:
        return self._like(self.matrix.conj().T)

    def identity(self) -> TruncatedOperator:
        return self._like(np.eye(self.size))

    def isometry_residual(self) -> float:
        return (self.H @ self - self.identity()).interior_norm()

    def coisometry_residual(self) -> float:
        return (self @ self.H - self.identity()).interior_norm()

    def distance(self, other: TruncatedOperator) -> float:
        return (self - other).interior_norm()

    def indices(self) -> npt.NDArray[np.int64]:
        """Fourier index of every row and column position."""
        return np.arange(self.size) - (0 if self.basis is Basis.ANALYTIC else self.N)

    def to_frame(self) -> pd.DataFrame:
        """Long table of the entries with columns (row, col, re, im).

        Rows and columns are labelled by Fourier index.
        """
        k = self.indices()
        rows, cols = np.meshgrid(k, k, indexing="ij")
        return pd.DataFrame(
            {
                "row": rows.ravel(),
                "col": cols.ravel(),
                "re": self.matrix.real.ravel(),
                "im": self.matrix.imag.ravel(),
            }
        )

    @classmethod
    def from_frame(cls, table: pd.DataFrame, basis: Basis, N: int) -> TruncatedOperator:
        """Rebuild an operator from the output of `to_frame`.

        Entries missing from `table` are zero.
        """
        op = identity(N, basis)
        matrix = np.zeros_like(op.matrix)
        rows = table["row"].to_numpy() + (0 if basis is Basis.ANALYTIC else N)
        cols = table["col"].to_numpy() + (0 if basis is Basis.ANALYTIC else N)
        if rows.size and (
            min(rows.min(), cols.min()) < 0 or max(rows.max(), cols.max()) >= op.size
        ):
            raise InputError(f"Matrix entries fall outside the window of degree {N}.")
        matrix[rows, cols] = table["re"].to_numpy() + 1j * table["im"].to_numpy()
        return cls(matrix, basis, N)


def identity(N: int, basis: Basis = Basis.ANALYTIC) -> TruncatedOperator:
    size = N + 1 if basis is Basis.ANALYTIC else 2 * N + 1
    return TruncatedOperator(np.eye(size, dtype=np.complex128), basis, N)


def shift(N: int) -> TruncatedOperator:
    if N < 1:
        raise InputError(f"Window degree must be at least 1, got {N}.")
    return TruncatedOperator(np.eye(N + 1, k=-1, dtype=np.complex128), Basis.ANALYTIC, N)


def bilateral_shift(N: int) -> TruncatedOperator:
    if N < 1:
        raise InputError(f"Window degree must be at least 1, got {N}.")
    return TruncatedOperator(
        np.eye(2 * N + 1, k=-1, dtype=np.complex128), Basis.BILATERAL, N
    )


def mult_by(
    symbol: npt.ArrayLike, basis: Basis = Basis.ANALYTIC, N: int | None = None
) -> TruncatedOperator:
    """Multiplication by an analytic symbol, entry (j, k) = symbol[j − k].

    Without `N` the window is the analytic one matching the symbol length.
    """
    symbol = np.asarray(symbol, dtype=np.complex128)
    if N is None:
        if basis is not Basis.ANALYTIC:
            raise InputError("Bilateral multiplication needs an explicit N.")
        N = len(symbol) - 1
    size = N + 1 if basis is Basis.ANALYTIC else 2 * N + 1
    return TruncatedOperator(lower_toeplitz(symbol, size), basis, N)


def _one_minus(coeffs: ComplexArray) -> ComplexArray:
    out = -np.asarray(coeffs, dtype=np.complex128)
    out[0] += 1
    return out


def _defect_symbol(theta: RationalInner, N: int) -> ComplexArray:
    """Coefficients of 1 − conj(θ(1))θ."""
    return _one_minus(np.conj(boundary_value_at_one(theta)) * taylor(theta, N))


def build_V(theta: RationalInner, N: int) -> TruncatedOperator:
    """Matrix of f ↦ zf + (f, g)(1 − θ) on the analytic window."""
    g = reproducing_g(theta, N)
    V = shift(N).matrix + np.outer(_one_minus(taylor(theta, N)), g.conj())
    return TruncatedOperator(V, Basis.ANALYTIC, N)


def build_Vtilde(theta: RationalInner, N: int) -> TruncatedOperator:
    """Unitary dilation f ↦ zf + (f, g)(1 − θ) − (f, z̄)(1 − conj(θ(1))θ)."""
    M = bilateral_shift(N).matrix
    M[N:, N:] = build_V(theta, N).matrix
    M[N:, N - 1] -= _defect_symbol(theta, N)
    return TruncatedOperator(M, Basis.BILATERAL, N)


def build_multi_V(
    system: MultiMeasureSystem,
    N: int,
    degree_cap: int = 64,
    tol: Tolerances | None = None,
) -> TruncatedOperator:
    """Cogenerator built from a system of measures.

    Each factor θ_n = clark_inner(μ_n) contributes the rank-one term
    (·, θ̂_n g_n) θ̂_n (1 − θ_n) with θ̂_n the product of the factors before it.
    """
    thetas = [clark_inner(mu, tol) for mu in system.components]
    theta = product_inner(thetas, degree_cap, tol)
    M = bilateral_shift(N).matrix
    for n, theta_n in enumerate(thetas):
        hat = taylor(theta.partial(n), N)
        a = np.convolve(hat, reproducing_g(theta_n, N))[: N + 1]
        b = np.convolve(hat, _one_minus(taylor(theta_n, N)))[: N + 1]
        M[N:, N:] += np.outer(b, a.conj())
    M[N:, N - 1] -= _defect_symbol(theta, N)
    return TruncatedOperator(M, Basis.BILATERAL, N)


def multi_block_check(
    system: MultiMeasureSystem,
    N: int,
    degree_cap: int = 64,
    tol: Tolerances | None = None,
) -> dict[str, float]:
    """Check the block structure of the system cogenerator.

    Returns the interior unitarity residual, the largest deviation of a diagonal
    block from the Clark unitary of its measure, and the largest cross-block norm
    (including the blocks against the shift part θH²).
    """
    thetas = [clark_inner(mu, tol) for mu in system.components]
    theta = product_inner(thetas, degree_cap, tol)
    Vhat = build_multi_V(system, N, degree_cap, tol)
    A = Vhat.matrix[N:, N:]

    bases, unitaries = [], []
    for n, (mu, theta_n) in enumerate(zip(system.components, thetas, strict=True)):
        frame = clark_embedding(mu, theta_n, N, tol)
        lift = lower_toeplitz(taylor(theta.partial(n), N), N + 1)
        bases.append(lift @ frame.omega)
        unitaries.append(frame.clark_unitary)
    interior = N + 1 - math.ceil(N / 4)
    shift_cols = lower_toeplitz(taylor(theta, N), N + 1)[:, : interior - theta.degree]

    block, cross = 0.0, 0.0
    for m, Bm in enumerate(bases):
        for n, Bn in enumerate(bases):
            C = Bm.conj().T @ A @ Bn
            if m == n:
                block = max(block, float(np.linalg.norm(C - unitaries[n], 2)))
            else:
                cross = max(cross, float(np.linalg.norm(C, 2)))
        C = Bm.conj().T @ A @ shift_cols
        cross = max(cross, float(np.linalg.norm(C, 2)))
    unitarity = max(Vhat.isometry_residual(), Vhat.coisometry_residual())
    return {"unitarity": unitarity, "block": block, "cross": cross}


def _check_frame(frame: ClarkFrame, N: int):
    if frame.N != N:
        raise InputError(f"Frame was built at N={frame.N}, requested N={N}.")


def _phi_of_unitary(U: ComplexArray, t: float) -> ComplexArray:
    lam, Q = scipy.linalg.eig(U)
    # X = Q diag(φ(λ)) Q⁻¹, solved as Qᵀ Xᵀ = (Q diag)ᵀ
    return scipy.linalg.solve(Q.T, (Q * phi(t, lam)).T).T


def calculus_V(
    theta: RationalInner,
    frame: ClarkFrame,
    t: float,
    N: int,
    tol: Tolerances | None = None,
) -> TruncatedOperator:
    """φ_t(V) assembled from the unitary part on K_θ and the shift on θH².

    Raises
    ------
    SpectrumAtOne
        If the Clark unitary has an eigenvalue within ``tol.spectrum_gap`` of 1.

    """
    tol = tol or Tolerances()
    _check_frame(frame, N)
    if t == 0:
        return identity(N)
    gap = frame.spectrum_gap()
    if gap < tol.spectrum_gap:
        raise SpectrumAtOne(f"Clark unitary has an eigenvalue {gap:.2e} from 1.")
    omega = frame.omega
    unitary_part = omega @ _phi_of_unitary(frame.clark_unitary, t) @ omega.conj().T
    Tt = lower_toeplitz(taylor(theta, N), N + 1)
    Tp = lower_toeplitz(phi_coeffs(t, N).coeffs, N + 1)
    shift_part = Tt @ Tp @ Tt.conj().T
    return TruncatedOperator(unitary_part + shift_part, Basis.ANALYTIC, N)


def calculus_Vtilde(
    theta: RationalInner,
    frame: ClarkFrame,
    t: float,
    N: int,
    tol: Tolerances | None = None,
) -> TruncatedOperator:
    """φ_t(Ṽ) on the bilateral window.

    On H² this is φ_t(V). A coanalytic u is sent to
    P_−(φ_t u) + conj(θ(1))·θ·P_+(φ_t u).
    """
    V_part = calculus_V(theta, frame, t, N, tol)
    L = lower_toeplitz(phi_coeffs(t, 2 * N).coeffs, 2 * N + 1)
    Tt = lower_toeplitz(taylor(theta, N), N + 1)
    M = L.copy()
    M[N:, :N] = np.conj(boundary_value_at_one(theta)) * (Tt @ L[N:, :N])
    M[N:, N:] = V_part.matrix
    return TruncatedOperator(M, Basis.BILATERAL, N)


def cocycle_W(
    theta: RationalInner,
    frame: ClarkFrame,
    t: float,
    N: int,
    tol: Tolerances | None = None,
) -> TruncatedOperator:
    """The cocycle W_t = φ_t(Ṽ) S̃_t* with exact window entries.

    W_t is the identity on H²₋. For f in H², φ̄_t f splits into
    h = P_+(φ̄_t f) and a coanalytic part whose image is conj(θ(1))·θ·P_{K_φ} f,
    so W_t f = φ_t(V) T(φ_t)* f + conj(θ(1)) θ (I − T(φ_t) T(φ_t)*) f.
    """
    A = calculus_V(theta, frame, t, N, tol).matrix
    W = np.eye(2 * N + 1, dtype=np.complex128)
    if t == 0:
        return TruncatedOperator(W, Basis.BILATERAL, N)
    Tp = lower_toeplitz(phi_coeffs(t, N).coeffs, N + 1)
    Tt = lower_toeplitz(taylor(theta, N), N + 1)
    model = np.eye(N + 1) - Tp @ Tp.conj().T
    W[N:, N:] = A @ Tp.conj().T + np.conj(boundary_value_at_one(theta)) * (
        Tt @ model
    )
    return TruncatedOperator(W, Basis.BILATERAL, N)


def cocycle_W_negative(
    theta: RationalInner,
    frame: ClarkFrame,
    t: float,
    N: int,
    tol: Tolerances | None = None,
) -> TruncatedOperator:
    """Extension to negative times, W_{−t} = S̃_{−t} W_t* S̃_t."""
    W = cocycle_W(theta, frame, t, N, tol)
    L = mult_by(phi_coeffs(t, 2 * N).coeffs, Basis.BILATERAL, N)
    return W.identity() + L.H @ (W.H - W.identity()) @ L


def truncation_floor(ts: Sequence[float], N: int) -> float:
    """Largest ℓ²-tail of φ_t beyond the window over the given times."""
    return max((phi_coeffs(t, N).truncation_floor() for t in ts), default=0.0)


def semigroup_residual(
    kind: str,
    theta: RationalInner,
    frame: ClarkFrame,
    t: float,
    s: float,
    N: int,
    tol: Tolerances | None = None,
) -> float:
    """‖φ_t(X) φ_s(X) − φ_{t+s}(X)‖ on the interior for X = V or Ṽ."""
    build = {"V": calculus_V, "Vtilde": calculus_Vtilde}[kind]
    At = build(theta, frame, t, N, tol)
    As = build(theta, frame, s, N, tol)
    return (At @ As).distance(build(theta, frame, t + s, N, tol))


def cocycle_residual(
    theta: RationalInner,
    frame: ClarkFrame,
    t: float,
    s: float,
    N: int,
    tol: Tolerances | None = None,
) -> float:
    """Residual of W_{t+s} = W_t S̃_t W_s S̃_{−t} on the interior.

    The conjugated factor is assembled as I + S̃_t (W_s − I) S̃_t*, whose window
    entries are exact because W_s − I lives on H².
    """
    Wt = cocycle_W(theta, frame, t, N, tol)
    Ws = cocycle_W(theta, frame, s, N, tol)
    L = mult_by(phi_coeffs(t, 2 * N).coeffs, Basis.BILATERAL, N)
    conjugated = Ws.identity() + L @ (Ws - Ws.identity()) @ L.H
    return cocycle_W(theta, frame, t + s, N, tol).distance(Wt @ conjugated)


@dataclasses.dataclass(frozen=True)
class WoldReport:
    unitary_dim: int
    expected_dim: int
    subspace_angle: float
    shift_residual: float
    angle_ok: bool
    shift_ok: bool

    @property
    def passed(self) -> bool:
        return self.angle_ok and self.shift_ok


def wold_check(
    V: TruncatedOperator,
    theta: RationalInner | None,
    frame: ClarkFrame | None,
    tol: Tolerances | None = None,
) -> WoldReport:
    """Compare the numerically found unitary part of `V` with the Clark frame.

    The unitary part is the range of V^k for the first power of two k ≥ N + 1,
    where every shift component has left the window. Pass ``theta=None`` and
    ``frame=None`` for a completely nonunitary `V`.
    """
    tol = tol or Tolerances()
    if V.basis is not Basis.ANALYTIC:
        raise InputError("wold_check needs an operator on the analytic window.")
    power, k = V.matrix.copy(), 1
    while k < V.N + 1:
        power = power @ power
        k *= 2
    basis = scipy.linalg.orth(power, rcond=tol.rank)
    dim = basis.shape[1]

    if frame is None:
        expected = 0
        angle = 0.0 if dim == 0 else math.pi / 2
    else:
        expected = frame.omega.shape[1]
        if dim != expected:
            angle = math.pi / 2
        else:
            angle = float(np.max(scipy.linalg.subspace_angles(basis, frame.omega)))

    if theta is None:
        shift_res = (V - shift(V.N)).interior_norm()
    else:
        Tt = lower_toeplitz(taylor(theta, V.N), V.N + 1)
        S = shift(V.N).matrix
        cols = V.interior.stop - theta.degree
        diff = (V.matrix @ Tt - Tt @ S)[V.interior, :cols]
        shift_res = float(np.linalg.norm(diff, 2)) if diff.size else 0.0

    log.debug(f"Wold split: unitary dim {dim} (expected {expected}), angle {angle:.2e}")
    return WoldReport(
        unitary_dim=dim,
        expected_dim=expected,
        subspace_angle=angle,
        shift_residual=shift_res,
        angle_ok=angle <= tol.wold_angle,
        shift_ok=shift_res <= tol.wold_shift,
    )


def _conjugate_by_flow(
    t: float, N: int, v: npt.ArrayLike
) -> tuple[TruncatedOperator, ComplexArray, ComplexArray]:
    v = np.asarray(v, dtype=np.complex128)
    if len(v) != N + 1:
        raise InputError(f"Expected {N + 1} analytic coefficients, got {len(v)}.")
    L = mult_by(phi_coeffs(t, 2 * N).coeffs, Basis.BILATERAL, N)
    # window entries of φ̄_t v are exact since v has no coefficients beyond N
    return L, v, L.H @ embed_analytic(v)


def defect_floor(t: float, N: int, v: npt.ArrayLike) -> float:
    """Bound on `defect_Q` caused by the truncation alone.

    Write u = φ̄_t v. Its nonnegative part b is the component of v in φ_t H²,
    and ‖u‖ = ‖v‖ because φ_t is unimodular, so the part of u below the window
    has norm (‖v‖² − ‖u_window‖²)^{1/2}. The relative defect on the window is at
    most (4‖b‖ + 2‖u below the window‖)/‖v‖.
    """
    _, v, u = _conjugate_by_flow(t, N, v)
    norm_v = float(np.linalg.norm(v))
    if norm_v == 0:
        return 0.0
    below = math.sqrt(max(norm_v**2 - float(np.linalg.norm(u)) ** 2, 0.0))
    return (4 * float(np.linalg.norm(u[N:])) + 2 * below) / norm_v


def defect_Q(
    theta: RationalInner,
    t: float,
    N: int,
    v: npt.ArrayLike,
    *,
    frame: ClarkFrame,
    tail: float | None = None,
    tol: Tolerances | None = None,
) -> float:
    """Relative residual of (φ_t(Ṽ) − φ_t(S̃))(φ̄_t v) = −(1 − conj(θ(1))θ) v.

    Parameters
    ----------
    v
        Analytic coefficients 0..N of an element of K_{φ_t}.
    tail
        Norm of the part of v's model-space preimage that lies beyond the
        window, see `model_tail`. It bounds how far a window truncation may sit
        from K_{φ_t}. Defaults to ‖v‖ times the truncation floor of φ_t.

    Raises
    ------
    NotInModelSpace
        If the distance from `v` to K_{φ_t} exceeds ``tol.model_space``·‖v‖
        plus `tail`.

    """
    tol = tol or Tolerances()
    L, v, u = _conjugate_by_flow(t, N, v)
    norm_v = float(np.linalg.norm(v))
    if norm_v == 0:
        return 0.0
    if tail is None:
        tail = norm_v * truncation_floor((t,), N)
    # ‖P_{φH²} v‖ = ‖P_+(φ̄ v)‖
    distance = float(np.linalg.norm(u[N:]))
    if distance > tol.model_space * norm_v + tail:
        raise NotInModelSpace(
            f"Vector is {distance / norm_v:.2e} (relative) away from the model "
            f"space, allowed {tol.model_space + tail / norm_v:.2e}."
        )

    D = calculus_Vtilde(theta, frame, t, N, tol) - L
    total = D @ u
    total[N:] += lower_toeplitz(_defect_symbol(theta, N), N + 1) @ v
    return float(np.linalg.norm(total[D.interior])) / norm_v


class DifferenceBuilder:
    """Base class for the operator differences scanned in Schatten norm.

    Subclasses set `name` and implement `build`; they register themselves in
    `DifferenceBuilder.builders` on definition.
    """

    name: str = ""

    def build(
        self,
        theta: RationalInner,
        frame: ClarkFrame,
        t: float,
        N: int,
        tol: Tolerances | None = None,
    ) -> TruncatedOperator:
        raise NotImplementedError

    builders: dict[str, type[DifferenceBuilder]] = {}  #: not to be overloaded

    def __init_subclass__(cls, **kwargs):
        super().__init_subclass__(**kwargs)
        if cls.name:
            cls.builders[cls.name] = cls


class VvsS(DifferenceBuilder):
    name = "V-vs-S"

    def build(self, theta, frame, t, N, tol=None):
        return calculus_V(theta, frame, t, N, tol) - mult_by(
            phi_coeffs(t, N).coeffs, Basis.ANALYTIC, N
        )


class VtildeVsStilde(DifferenceBuilder):
    name = "Vtilde-vs-Stilde"

    def build(self, theta, frame, t, N, tol=None):
        return calculus_Vtilde(theta, frame, t, N, tol) - mult_by(
            phi_coeffs(t, 2 * N).coeffs, Basis.BILATERAL, N
        )


class WvsI(DifferenceBuilder):
    name = "W-vs-I"

    def build(self, theta, frame, t, N, tol=None):
        W = cocycle_W(theta, frame, t, N, tol)
        return W - W.identity()


def get_builder(name: str) -> DifferenceBuilder:
    try:
        return DifferenceBuilder.builders[name]()
    except KeyError as e:
        known = ", ".join(DifferenceBuilder.builders)
        raise InputError(f"Unknown difference '{name}', expected one of {known}.") from e
