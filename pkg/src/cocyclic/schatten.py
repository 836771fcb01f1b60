"""Singular values, Schatten norms and truncation scans."""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
from collections.abc import Sequence

import numpy as np
import numpy.typing as npt
import pandas as pd

from cocyclic.config import Tolerances
from cocyclic.errors import DecompositionFailed, InputError
from cocyclic.inner import RationalInner
from cocyclic.modelspace import ClarkFrame, clark_embedding
from cocyclic.operators import DifferenceBuilder, TruncatedOperator, get_builder

log = logging.getLogger("cocyclic.schatten")

SCAN_COLUMNS = ["builder", "theta_id", "t", "p", "N", "norm", "flag"]


class Trend(enum.StrEnum):
    CONVERGED = "CONVERGED"
    DIVERGING = "DIVERGING"
    UNDETERMINED = "UNDETERMINED"


@dataclasses.dataclass(frozen=True)
class SchattenReport:
    p: float
    values: npt.NDArray[np.float64]
    norm_p: float
    N: int
    tail_estimate: float

    def __post_init__(self):
        if np.any(self.values < 0) or np.any(np.diff(self.values) > 0):
            raise InputError("Singular values must be nonnegative and descending.")


def _block(T: TruncatedOperator | npt.ArrayLike) -> npt.NDArray:
    if isinstance(T, TruncatedOperator):
        return T.interior_block()
    return np.asarray(T)


def singular_values(T: TruncatedOperator | npt.ArrayLike) -> npt.NDArray[np.float64]:
    """Descending singular values of the interior block (plain arrays as is)."""
    block = _block(T)
    if block.size == 0:
        return np.zeros(0)
    try:
        return np.linalg.svd(block, compute_uv=False)
    except np.linalg.LinAlgError as e:
        raise DecompositionFailed(f"SVD did not converge: {e}") from e


def _power_sum(values, p: float) -> float:
    return float(np.sum(values**p)) ** (1 / p) if len(values) else 0.0


def schatten_norm(T: TruncatedOperator | npt.ArrayLike, p: float) -> float:
    if p <= 0:
        raise InputError(f"Schatten exponent must be positive, got {p}.")
    return _power_sum(singular_values(T), p)


def schatten_report(T: TruncatedOperator | npt.ArrayLike, p: float) -> SchattenReport:
    """Singular values and p-norm, with a bound for values below the noise floor.

    Values under machine epsilon times the largest one are treated as
    unresolved; `tail_estimate` bounds their joint contribution by counting each
    at the cutoff.
    """
    values = singular_values(T)
    N = T.N if isinstance(T, TruncatedOperator) else len(values)
    cutoff = np.finfo(float).eps * (values[0] if len(values) else 0.0)
    below = int(np.sum(values < cutoff))
    tail = (below * cutoff**p) ** (1 / p) if below else 0.0
    return SchattenReport(p, values, schatten_norm(T, p), N, float(tail))


def _relative_change(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(b - a) / scale


def _log_increments(norms: list[float], Ns: Sequence[int] | None) -> list[float]:
    steps = [b - a for a, b in zip(norms[:-1], norms[1:], strict=True)]
    if Ns is None:
        return steps
    return [
        d / math.log2(m / n) for d, n, m in zip(steps, Ns[:-1], Ns[1:], strict=True)
    ]


def classify_trend(
    norms: Sequence[float],
    converged: float = 0.02,
    diverging: float = 0.10,
    Ns: Sequence[int] | None = None,
) -> Trend:
    """Label a sequence of norms taken at increasing truncation degrees.

    Parameters
    ----------
    norms
        Norms in the order of ascending truncation degree.
    converged
        CONVERGED when the last two norms differ by less than this (relative).
    diverging
        DIVERGING when each of the last three norms grows by more than this
        (relative), or when the growth per doubling of N stays above
        `converged` relative to the norm without slowing down by more than a
        quarter. The second rule catches logarithmic growth.
    Ns
        Truncation degrees of `norms`. Increments are taken per doubling of N;
        without `Ns` the degrees are assumed to double.

    """
    norms = list(norms)
    if Ns is not None and len(Ns) != len(norms):
        raise InputError(f"Got {len(norms)} norms for {len(Ns)} truncation degrees.")
    if len(norms) >= 3 and all(
        b > a * (1 + diverging) for a, b in zip(norms[-3:-1], norms[-2:], strict=True)
    ):
        return Trend.DIVERGING
    if len(norms) >= 2 and _relative_change(norms[-2], norms[-1]) < converged:
        return Trend.CONVERGED
    if len(norms) >= 3:
        d1, d2 = _log_increments(norms, Ns)[-2:]
        if d1 > 0 and d2 >= 0.75 * d1 and d2 > converged * norms[-1]:
            return Trend.DIVERGING
    return Trend.UNDETERMINED


@dataclasses.dataclass(frozen=True)
class ScanResult:
    table: pd.DataFrame
    flag: str


def convergence_scan(
    builder: str | DifferenceBuilder,
    theta: RationalInner,
    frame: ClarkFrame,
    t: float,
    p: float,
    Ns: Sequence[int],
    *,
    theta_id: str = "",
    tol: Tolerances | None = None,
) -> ScanResult:
    """Schatten p-norm of a named difference at each truncation degree in `Ns`.

    The Clark frame is rebuilt from ``frame.mu`` at every degree.
    """
    tol = tol or Tolerances()
    Ns = list(Ns)
    if not Ns or any(b <= a for a, b in zip(Ns, Ns[1:], strict=False)):
        raise InputError(f"Truncation degrees must be strictly ascending: {Ns}")
    if isinstance(builder, str):
        builder = get_builder(builder)
    norms = []
    for N in Ns:
        frame_N = frame if frame.N == N else clark_embedding(frame.mu, theta, N, tol)
        norms.append(schatten_norm(builder.build(theta, frame_N, t, N, tol), p))
        log.debug(f"{builder.name} t={t} p={p} N={N}: {norms[-1]:.6g}")
    flag = classify_trend(norms, tol.converged, tol.diverging, Ns=Ns)
    table = pd.DataFrame(
        {
            "builder": builder.name,
            "theta_id": theta_id,
            "t": float(t),
            "p": float(p),
            "N": Ns,
            "norm": norms,
            "flag": flag.value,
        },
        columns=SCAN_COLUMNS,
    )
    return ScanResult(table, flag.value)


def sqrt_t_probe(
    theta: RationalInner,
    frame: ClarkFrame,
    ts: Sequence[float],
    N: int,
    p: float = 1.0,
    *,
    tol: Tolerances | None = None,
) -> ScanResult:
    """Trace-norm of φ_t(V) − φ_t(S) divided by √t over the given times.

    Flag PASS when the ratio column varies by at most ``tol.probe_spread``.
    """
    tol = tol or Tolerances()
    ts = list(ts)
    if not ts or any(t <= 0 for t in ts) or ts != sorted(ts):
        raise InputError(f"Times must be positive and ascending: {ts}")
    builder = get_builder("V-vs-S")
    norms = [schatten_norm(builder.build(theta, frame, t, N, tol), p) for t in ts]
    ratios = [n / math.sqrt(t) for n, t in zip(norms, ts, strict=True)]
    spread = max(ratios) / min(ratios) if min(ratios) > 0 else math.inf
    flag = "PASS" if spread <= tol.probe_spread else "FAIL"
    table = pd.DataFrame({"t": ts, "norm": norms, "ratio": ratios})
    log.info(f"√t probe at N={N}: ratio spread {spread:.3g} ({flag})")
    return ScanResult(table, flag)
