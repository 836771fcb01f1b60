"""Command line front end: ``cocyclic {inner,verify,scan,parfenov,matrix}``.

Exit status is 0 when every check passes, 1 when a check fails or a
construction raises, and 2 for configuration or I/O errors.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import datetime
import io
import itertools
import json
import logging
import math
import os
import sys
import time
from collections.abc import Callable, Iterable, Sequence

import humanize
import numpy as np
import pandas as pd
import scipy.stats

from cocyclic.config import (
    ExperimentConfig,
    load_experiment,
    parse_tol_overrides,
)
from cocyclic.errors import CocyclicError, ConfigError, InputError
from cocyclic.inner import (
    RationalInner,
    boundary_value_at_one,
    clark_inner,
    herglotz_residual,
    phi_coeffs,
    taylor,
)
from cocyclic.measures import FIXTURES, load_measure, make_system
from cocyclic.modelspace import (
    clark_embedding,
    clark_unitary_direct,
    model_tail,
    project_model,
)
from cocyclic.operators import (
    DifferenceBuilder,
    TruncatedOperator,
    build_multi_V,
    build_V,
    build_Vtilde,
    calculus_V,
    calculus_Vtilde,
    cocycle_residual,
    cocycle_W,
    defect_floor,
    defect_Q,
    get_builder,
    multi_block_check,
    semigroup_residual,
    truncation_floor,
    wold_check,
)
from cocyclic.parfenov import (
    boundary_moment,
    embedding_operator,
    parfenov_sum,
    parfenov_weight,
    weight_l2_identity,
)
from cocyclic.schatten import SCAN_COLUMNS, convergence_scan, schatten_norm, sqrt_t_probe

logging.addLevelName(5, "TRACE")
logging.TRACE = 5

log = logging.getLogger("cocyclic")

#: Measure name understood by ``parfenov`` as a unimodular constant θ ≡ 1.
CONSTANT = "constant"


def _setup_logging(verbosity: int) -> None:
    if not log.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(
            logging.Formatter("%(asctime)s | %(name)s | %(levelname)s - %(message)s")
        )
        log.addHandler(handler)
    log.setLevel(
        {0: logging.WARNING, 1: logging.INFO, 2: logging.DEBUG}.get(
            verbosity, logging.TRACE
        )
    )


# Log all uncaught exceptions
def handle_exception(exc_type, exc_value, exc_traceback):
    if issubclass(exc_type, KeyboardInterrupt):
        sys.__excepthook__(exc_type, exc_value, exc_traceback)
        return

    log.error("Uncaught exception", exc_info=(exc_type, exc_value, exc_traceback))


@dataclasses.dataclass
class Report:
    data: dict
    table: pd.DataFrame | None = None
    passed: bool = True


def theta_id(source: str) -> str:
    if source in FIXTURES or source == CONSTANT:
        return source
    return os.path.splitext(os.path.basename(source))[0]


def _cplx(z: complex) -> list[float]:
    return [float(np.real(z)), float(np.imag(z))]


def _finite(x: float) -> float | None:
    return float(x) if math.isfinite(x) else None


def _run_cells(fn: Callable, cells: Sequence, jobs: int) -> list:
    if jobs == 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, cells))


# inner


def cmd_inner(config: ExperimentConfig) -> Report:
    """Clark inner function, its Taylor coefficients and sanity residuals."""
    N = config.N_list[-1]
    data, rows = {}, []
    for source in config.measures:
        mu = load_measure(source)
        theta = clark_inner(mu, config.tolerances)
        coeffs = taylor(theta, N)
        name = theta_id(source)
        data[name] = {
            "degree": theta.degree,
            "numer": [_cplx(c) for c in theta.numer],
            "denom": [_cplx(c) for c in theta.denom],
            "theta_taylor": [_cplx(c) for c in coeffs],
            "theta_at_zero": _cplx(theta.at_zero),
            "theta_at_one": _cplx(boundary_value_at_one(theta)),
            "herglotz_residual": herglotz_residual(theta, mu),
            "parseval_deficit": float(1 - np.sum(np.abs(coeffs) ** 2)),
        }
        rows.extend(
            {"theta_id": name, "n": n, "re": c.real, "im": c.imag}
            for n, c in enumerate(coeffs)
        )
    return Report(data, pd.DataFrame(rows, columns=["theta_id", "n", "re", "im"]))


# verify


def _check(
    name: str,
    residual: float,
    tolerance: float,
    *,
    floor: float = 0.0,
    at_least: bool = False,
    **labels,
) -> dict:
    if at_least:
        passed = residual >= tolerance
    else:
        passed = residual <= tolerance + floor
    return {
        **labels,
        "check": name,
        "residual": float(residual),
        "tolerance": float(tolerance),
        "floor": float(floor),
        "passed": bool(passed),
    }


def _guarded(name: str, labels: dict, fn: Callable[[], Iterable[dict]]) -> list[dict]:
    try:
        return list(fn())
    except CocyclicError as e:
        log.warning(f"{name} failed for {labels}: {e}")
        return [{**labels, "check": name, "error": str(e), "passed": False}]


def _verify_case(cell: tuple[str, int, ExperimentConfig]) -> list[dict]:
    source, N, config = cell
    tol = config.tolerances
    labels = {"theta_id": theta_id(source), "N": N}
    start = time.perf_counter()

    mu = load_measure(source)
    try:
        theta = clark_inner(mu, tol)
        frame = clark_embedding(mu, theta, N, tol)
    except CocyclicError as e:
        log.warning(f"Construction failed for {labels}: {e}")
        return [{**labels, "check": "construction", "error": str(e), "passed": False}]

    V = build_V(theta, N)
    Vt = build_Vtilde(theta, N)

    def structure():
        yield _check("gram", frame.gram_deviation, tol.gram, **labels)
        yield _check("clark_eigenvalues", frame.atom_mismatch(), tol.eigen, **labels)
        yield _check(
            "spectrum_gap", frame.spectrum_gap(), tol.spectrum_gap, at_least=True, **labels
        )
        inter = frame.omega * mu.points[None, :] - V.matrix @ frame.omega
        yield _check("intertwining", np.linalg.norm(inter, 2), tol.intertwining, **labels)
        direct = np.linalg.norm(clark_unitary_direct(frame) - frame.clark_unitary, 2)
        yield _check("clark_direct", direct, tol.intertwining, **labels)
        W0 = cocycle_W(theta, frame, 0.0, N, tol).matrix
        W0_res = np.max(np.abs(W0 - np.eye(2 * N + 1)))
        yield _check("cocycle_at_zero", W0_res, tol.isometry, **labels)
        yield _check("V_isometry", V.isometry_residual(), tol.isometry, **labels)
        yield _check("Vtilde_isometry", Vt.isometry_residual(), tol.isometry, **labels)
        yield _check("Vtilde_coisometry", Vt.coisometry_residual(), tol.isometry, **labels)
        back = Vt.matrix.conj().T[:, 1:N] - np.eye(2 * N + 1, k=1)[:, 1:N]
        yield _check("backward_action", np.max(np.abs(back)), tol.backward, **labels)
        restricted = np.linalg.norm(Vt.matrix[N:, N:] - V.matrix, 2)
        yield _check("Vtilde_restriction", restricted, tol.dilation, **labels)
        wold = wold_check(V, theta, frame, tol)
        yield _check("wold_angle", wold.subspace_angle, tol.wold_angle, **labels)
        yield _check("wold_shift", wold.shift_residual, tol.wold_shift, **labels)

    def calculus(t):
        labels_t = {**labels, "t": t}
        A = calculus_V(theta, frame, t, N, tol)
        comm = (A @ V - V @ A).interior_norm()
        yield _check("commutation", comm, tol.commutation, **labels_t)
        At = calculus_Vtilde(theta, frame, t, N, tol)
        dil = float(np.linalg.norm(At.matrix[N:, N:] - A.matrix, 2))
        yield _check("dilation", dil, tol.dilation, **labels_t)
        if t == 0:
            return
        flow = phi_coeffs(t, N)
        for h in range(5):
            e = np.zeros(N + 1, dtype=np.complex128)
            e[h] = 1
            v = project_model(flow.coeffs, e)
            tail = model_tail(flow.coeffs, e)
            res = defect_Q(theta, t, N, v, frame=frame, tail=tail, tol=tol)
            yield _check(
                "defect",
                res,
                tol.defect,
                floor=defect_floor(t, N, v),
                **labels_t,
                monomial=h,
            )

    def pairs(t, s):
        labels_ts = {**labels, "t": t, "s": s}
        for kind, limit in (("V", tol.semigroup_V), ("Vtilde", tol.semigroup_Vtilde)):
            res = semigroup_residual(kind, theta, frame, t, s, N, tol)
            yield _check(f"semigroup_{kind}", res, limit, **labels_ts)
        res = cocycle_residual(theta, frame, t, s, N, tol)
        floor = truncation_floor((t, s, t + s), N)
        yield _check("cocycle", res, tol.cocycle, floor=floor, **labels_ts)

    def invariance():
        t = max(config.t_list)
        block = get_builder("V-vs-S").build(theta, frame, t, N, tol).interior_block()
        if len(block) < 2:
            return
        rng = np.random.default_rng(config.seed)
        U = scipy.stats.unitary_group.rvs(len(block), random_state=rng)
        W = scipy.stats.unitary_group.rvs(len(block), random_state=rng)
        for p in config.p_list:
            a, b = schatten_norm(block, p), schatten_norm(U @ block @ W.conj().T, p)
            yield _check(
                "unitary_invariance", abs(a - b), 1e-9 * max(1.0, a), **labels, p=p
            )

    results = _guarded("structure", labels, structure)
    for t in config.t_list:
        results += _guarded("calculus", {**labels, "t": t}, lambda t=t: calculus(t))
    for t, s in itertools.combinations_with_replacement(sorted(config.t_list), 2):
        results += _guarded(
            "pairs", {**labels, "t": t, "s": s}, lambda t=t, s=s: pairs(t, s)
        )
    results += _guarded("invariance", labels, invariance)
    elapsed = datetime.timedelta(seconds=time.perf_counter() - start)
    log.log(
        logging.TRACE,
        f"verify {labels} done in {humanize.precisedelta(elapsed, minimum_unit='milliseconds')}",
    )
    return results


def _verify_system(cell: tuple[int, ExperimentConfig]) -> list[dict]:
    """Block checks of the cogenerator built from all measures at once."""
    N, config = cell
    tol = config.tolerances
    labels = {"theta_id": "+".join(theta_id(m) for m in config.measures), "N": N}

    def system():
        measures = [load_measure(m) for m in config.measures]
        built = make_system(measures, config.q, config.budget)
        res = multi_block_check(built, N, config.degree_cap, tol)
        yield _check("multi_unitarity", res["unitarity"], tol.multi_unitarity, **labels)
        yield _check("multi_block", res["block"], tol.multi_block, **labels)
        yield _check("multi_cross", res["cross"], tol.multi_block, **labels)

    return _guarded("system", labels, system)


def cmd_verify(config: ExperimentConfig) -> Report:
    """Run the invariant battery for every measure and truncation degree.

    The measures are also combined into one system, rescaled to the moment
    budget, and its cogenerator is checked at every degree.
    """
    cells = [(m, N, config) for m in config.measures for N in config.N_list]
    results = list(itertools.chain.from_iterable(_run_cells(_verify_case, cells, config.jobs)))
    systems = _run_cells(_verify_system, [(N, config) for N in config.N_list], config.jobs)
    results += list(itertools.chain.from_iterable(systems))
    passed = all(r["passed"] for r in results)
    failed = [r["check"] for r in results if not r["passed"]]
    if failed:
        log.warning(f"{len(failed)} check(s) failed: {sorted(set(failed))}")
    table = pd.DataFrame(results)
    return Report({"passed": passed, "checks": results}, table, passed)


# scan


def _scan_cell(cell) -> pd.DataFrame:
    builder, source, t, p, config = cell
    mu = load_measure(source)
    theta = clark_inner(mu, config.tolerances)
    frame = clark_embedding(mu, theta, config.N_list[0], config.tolerances)
    start = time.perf_counter()
    result = convergence_scan(
        builder,
        theta,
        frame,
        t,
        p,
        config.N_list,
        theta_id=theta_id(source),
        tol=config.tolerances,
    )
    elapsed = datetime.timedelta(seconds=time.perf_counter() - start)
    log.log(
        logging.TRACE,
        f"cell {builder} {source} t={t} p={p} done in "
        f"{humanize.precisedelta(elapsed, minimum_unit='milliseconds')}",
    )
    return result.table


def _probe_cell(cell) -> pd.DataFrame:
    source, config = cell
    N = config.N_list[-1]
    mu = load_measure(source)
    theta = clark_inner(mu, config.tolerances)
    frame = clark_embedding(mu, theta, N, config.tolerances)
    result = sqrt_t_probe(theta, frame, sorted(config.t_list), N, tol=config.tolerances)
    table = result.table
    return pd.DataFrame(
        {
            "builder": "sqrt-t-probe",
            "theta_id": theta_id(source),
            "t": table["t"],
            "p": 1.0,
            "N": N,
            "norm": table["norm"],
            "flag": result.flag,
        },
        columns=SCAN_COLUMNS,
    )


def cmd_scan(
    config: ExperimentConfig,
    builders: Sequence[str] | None = None,
    probe: bool = False,
) -> Report:
    """Schatten norms over the grid (builder, measure, t, p) at every N."""
    builders = list(builders or DifferenceBuilder.builders)
    for name in builders:
        get_builder(name)
    cells = [
        (b, m, t, p, config)
        for b, m, t, p in itertools.product(
            builders, config.measures, config.t_list, config.p_list
        )
    ]
    tables = _run_cells(_scan_cell, cells, config.jobs)
    if probe:
        tables += _run_cells(_probe_cell, [(m, config) for m in config.measures], config.jobs)
    table = (
        pd.concat(tables, ignore_index=True)
        .sort_values(["builder", "theta_id", "t", "p", "N"], kind="stable")
        .reset_index(drop=True)
    )
    return Report({"rows": table.to_dict(orient="records")}, table)


# matrix

MATRIX_COLUMNS = ["theta_id", "operator", "t", "N", "row", "col", "re", "im"]

_STATIC = {"V": build_V, "Vtilde": build_Vtilde}
_TIMED = {"calculus_V": calculus_V, "calculus_Vtilde": calculus_Vtilde, "W": cocycle_W}
MATRICES = [*_STATIC, *_TIMED, "multi_V", *DifferenceBuilder.builders]


def _matrices_of(source: str, operator: str, N: int, config: ExperimentConfig):
    tol = config.tolerances
    mu = load_measure(source)
    theta = clark_inner(mu, tol)
    if operator in _STATIC:
        yield None, _STATIC[operator](theta, N)
        return
    frame = clark_embedding(mu, theta, N, tol)
    for t in config.t_list:
        if operator in _TIMED:
            yield t, _TIMED[operator](theta, frame, t, N, tol)
        else:
            yield t, get_builder(operator).build(theta, frame, t, N, tol)


def _entries(T: TruncatedOperator, **labels) -> pd.DataFrame:
    table = T.to_frame()
    for key, value in labels.items():
        table[key] = value
    return table[MATRIX_COLUMNS]


def cmd_matrix(config: ExperimentConfig, operator: str = "V") -> Report:
    """Entries of one named operator at the largest truncation degree."""
    if operator not in MATRICES:
        raise InputError(f"Unknown operator '{operator}', expected one of {MATRICES}.")
    N = config.N_list[-1]
    tables = []
    if operator == "multi_V":
        measures = [load_measure(m) for m in config.measures]
        system = make_system(measures, config.q, config.budget)
        name = "+".join(theta_id(m) for m in config.measures)
        T = build_multi_V(system, N, config.degree_cap, config.tolerances)
        tables.append(_entries(T, theta_id=name, operator=operator, t=math.nan, N=N))
    else:
        for source in config.measures:
            for t, T in _matrices_of(source, operator, N, config):
                tables.append(
                    _entries(
                        T,
                        theta_id=theta_id(source),
                        operator=operator,
                        t=math.nan if t is None else t,
                        N=N,
                    )
                )
    table = pd.concat(tables, ignore_index=True)
    log.info(f"Exported {len(tables)} matrix(es) of {operator} at N={N}")
    data = {
        "operator": operator,
        "N": N,
        "rows": [
            {**row, "t": _finite(row["t"])} for row in table.to_dict(orient="records")
        ],
    }
    return Report(data, table)


# parfenov


def _parfenov_theta(source: str, config: ExperimentConfig):
    if source == CONSTANT:
        return None, RationalInner.constant(1.0)
    mu = load_measure(source)
    return mu, clark_inner(mu, config.tolerances)


def cmd_parfenov(config: ExperimentConfig) -> Report:
    """Parfenov sums, the boundary moment and the embedding comparison."""
    N = config.N_list[-1]
    data, tables = {}, []
    for source in config.measures:
        mu, theta = _parfenov_theta(source, config)
        name = theta_id(source)
        sums = []
        for p in config.p_list:
            res = parfenov_sum(theta, p, config.K, config.nodes)
            sums.append(
                {
                    "p": p,
                    "partial": res.partial,
                    "tail": _finite(res.tail_bound),
                    "total": _finite(res.total),
                    "verdict": res.verdict.value,
                }
            )
        entry = {
            "theta_at_one": _cplx(boundary_value_at_one(theta)),
            "sums": sums,
            "boundary_moment": {"q": config.q, "value": boundary_moment(theta, config.q)},
        }
        if mu is not None:
            lhs, rhs = weight_l2_identity(mu, theta)
            entry["weight_l2"] = {"quadrature": lhs, "atoms": rhs}
        embeddings = []
        for t in config.t_list:
            if t == 0:
                continue
            report = embedding_operator(
                theta, t, N, config.p_list, K=config.K, nodes=config.nodes
            )
            embeddings.extend(
                {
                    "t": t,
                    "p": p,
                    "operator": op,
                    "parfenov": _finite(bound),
                    "max_singular_value": float(report.values[0]),
                }
                for p, (op, bound) in report.comparisons.items()
            )
        entry["embedding"] = embeddings
        data[name] = entry

        weight = parfenov_weight(theta, config.K, config.nodes)
        tables.append(
            pd.DataFrame(
                {"theta_id": name, "k": weight.ks, "integral": weight.interval_integrals}
            )
        )
    return Report(data, pd.concat(tables, ignore_index=True))


COMMANDS: dict[str, Callable[..., Report]] = {
    "inner": cmd_inner,
    "verify": cmd_verify,
    "scan": cmd_scan,
    "parfenov": cmd_parfenov,
    "matrix": cmd_matrix,
}


# argument handling


def _list_of(kind: type) -> Callable[[str], tuple]:
    def parse(text: str) -> tuple:
        try:
            return tuple(kind(s) for s in text.replace(" ", ",").split(",") if s)
        except ValueError as e:
            raise argparse.ArgumentTypeError(f"invalid list '{text}'") from e

    return parse


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Experiment TOML file")
    common.add_argument(
        "--measure",
        action="append",
        help=f"Measure JSON file or fixture name ({', '.join(FIXTURES)}); repeatable",
    )
    common.add_argument("--q", type=float, help="Moment exponent (> 3)")
    common.add_argument("--t", dest="t_list", type=_list_of(float), help="Times")
    common.add_argument("--p", dest="p_list", type=_list_of(float), help="Exponents")
    common.add_argument(
        "--dim", dest="N_list", type=_list_of(int), help="Truncation degrees"
    )
    common.add_argument("--window", dest="K", type=int, help="Parfenov window K")
    common.add_argument("--nodes", type=int, help="Gauss nodes per unit interval")
    common.add_argument("--tol", default="", help="Overrides, e.g. gram=1e-7,cocycle=1e-3")
    common.add_argument("--format", dest="fmt", choices=("csv", "json"))
    common.add_argument("--output", "-o", help="Output file (default: stdout)")
    common.add_argument("--jobs", type=int, help="Parallel workers")
    common.add_argument(
        "--no-timestamp", action="store_true", help="Omit the timestamp field"
    )
    common.add_argument("--seed", type=int, help="Seed for random spot checks")
    common.add_argument("--budget", type=float, help="Moment budget of a measure system")
    common.add_argument(
        "--degree-cap", dest="degree_cap", type=int, help="Largest degree of a product θ"
    )
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(
        prog="cocyclic",
        description="Numerical checks for rank-one cocyclic perturbations of the shift",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("inner", parents=[common], help="Clark inner function report")
    sub.add_parser("verify", parents=[common], help="Run the invariant battery")
    scan = sub.add_parser("scan", parents=[common], help="Schatten norm scans")
    scan.add_argument(
        "--builder",
        action="append",
        choices=list(DifferenceBuilder.builders),
        help="Restrict to these differences; repeatable",
    )
    scan.add_argument("--probe", action="store_true", help="Add the √t probe rows")
    sub.add_parser("parfenov", parents=[common], help="Half-plane weight and sums")
    matrix = sub.add_parser("matrix", parents=[common], help="Dump operator entries")
    matrix.add_argument(
        "--operator", choices=MATRICES, default="V", help="Operator to export"
    )
    return parser


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    config = load_experiment(args.config) if args.config else ExperimentConfig()
    config = config.update(
        measures=tuple(args.measure) if args.measure else None,
        q=args.q,
        t_list=args.t_list,
        p_list=args.p_list,
        N_list=args.N_list,
        K=args.K,
        nodes=args.nodes,
        fmt=args.fmt,
        output=args.output,
        jobs=args.jobs,
        seed=args.seed,
        budget=args.budget,
        degree_cap=args.degree_cap,
        timestamp=False if args.no_timestamp else None,
    )
    if args.tol:
        config = config.update(
            tolerances=config.tolerances.replace(parse_tol_overrides(args.tol))
        )
    return config.validate()


def render(report: Report, config: ExperimentConfig) -> str:
    if config.fmt == "csv":
        buf = io.StringIO()
        (report.table if report.table is not None else pd.DataFrame()).to_csv(
            buf, index=False, lineterminator="\n"
        )
        return buf.getvalue()
    payload = {}
    if config.timestamp:
        payload["generated"] = datetime.datetime.now().isoformat(timespec="seconds")
    payload.update(report.data)
    return json.dumps(payload, indent=2) + "\n"


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    sys.excepthook = handle_exception

    try:
        config = build_config(args)
    except (ConfigError, OSError) as e:
        log.error(f"Invalid configuration: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 2

    start = time.perf_counter()
    try:
        if args.command == "scan":
            report = cmd_scan(config, args.builder, args.probe)
        elif args.command == "matrix":
            report = cmd_matrix(config, args.operator)
        else:
            report = COMMANDS[args.command](config)
    except (InputError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except CocyclicError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    text = render(report, config)
    if config.output:
        with open(config.output, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    elapsed = datetime.timedelta(seconds=time.perf_counter() - start)
    log.info(f"{args.command} finished in {humanize.precisedelta(elapsed)}")
    return 0 if report.passed else 1
