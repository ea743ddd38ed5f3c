"""Linear programs in a canonical minimisation form and the solvers behind them.

Every LP in the package is an :class:`LpProblem`: a dense objective, a
constraint matrix with one relation per row, and per-variable bounds.
:func:`solve` dispatches to a backend.  Two backends ship:

``"highs"``
    scipy's HiGHS dual simplex.  Default, used for real workloads.
``"simplex"``
    A self-contained dense revised simplex with Bland's rule.  Exact vertex
    solutions for small problems; used as an independent check of HiGHS.
"""

from __future__ import annotations

import enum
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

LE, EQ, GE = "<=", "=", ">="
_SENSES = (LE, EQ, GE)


class LpError(RuntimeError):
    """Raised when an LP result cannot be used (infeasible, unbounded, failed)."""

    def __init__(self, message: str, status: "Status | None" = None):
        super().__init__(message)
        self.status = status


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class SolverTolerances:
    feas: float = 1e-8
    opt: float = 1e-7
    pivot_factor: int = 50


DEFAULT_TOLERANCES = SolverTolerances()


@dataclass(frozen=True, eq=False)
class LpProblem:
    """``min objective @ x`` subject to ``A x (senses) rhs`` and bounds.

    ``A`` may be a dense array or any scipy sparse matrix; it is stored as CSR.
    ``bounds`` has shape ``(n, 2)`` and may contain ``-inf``/``inf``.
    """

    objective: np.ndarray
    A: sp.csr_matrix
    senses: tuple[str, ...]
    rhs: np.ndarray
    bounds: np.ndarray
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float).ravel()
        n = c.size
        A = sp.csr_matrix(self.A, dtype=float) if self.A is not None else sp.csr_matrix((0, n))
        if A.shape[0] == 0:
            A = sp.csr_matrix((0, n))
        rhs = np.asarray(self.rhs, dtype=float).ravel()
        bounds = np.asarray(self.bounds, dtype=float).reshape(-1, 2)
        senses = tuple(self.senses)
        if A.shape[1] != n:
            raise ValueError(f"constraint rows have {A.shape[1]} columns, objective has {n}")
        if bounds.shape[0] != n:
            raise ValueError(f"{bounds.shape[0]} bounds for {n} variables")
        if rhs.size != A.shape[0] or len(senses) != A.shape[0]:
            raise ValueError("rhs and senses must have one entry per constraint row")
        bad = [s for s in senses if s not in _SENSES]
        if bad:
            raise ValueError(f"unknown relation(s) {sorted(set(bad))}; use one of {_SENSES}")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(rhs)) and np.all(np.isfinite(A.data))):
            raise ValueError("objective, coefficients and right-hand sides must be finite")
        if np.any(np.isnan(bounds)) or np.any(bounds[:, 0] > bounds[:, 1]):
            raise ValueError("invalid variable bounds")
        if self.names is not None and len(self.names) != n:
            raise ValueError("one name per variable required")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "rhs", rhs)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "senses", senses)

    @classmethod
    def from_rows(cls, objective, constraints, bounds=None) -> "LpProblem":
        """Build from ``[(row, relation, rhs), ...]``; bounds default to ``x >= 0``."""
        c = np.asarray(objective, dtype=float)
        rows = [np.asarray(r, dtype=float) for r, _, _ in constraints]
        A = np.vstack(rows) if rows else np.zeros((0, c.size))
        if bounds is None:
            bounds = [(0.0, np.inf)] * c.size
        bounds = [(-np.inf if lo is None else lo, np.inf if hi is None else hi) for lo, hi in bounds]
        return cls(c, A, tuple(s for _, s, _ in constraints), [r for _, _, r in constraints], bounds)

    @property
    def n_vars(self) -> int:
        return self.objective.size

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def constraints(self) -> Iterator[tuple[np.ndarray, str, float]]:
        for k in range(self.n_rows):
            yield self.A.getrow(k).toarray().ravel(), self.senses[k], float(self.rhs[k])

    def max_violation(self, x: np.ndarray) -> float:
        """Largest constraint or bound violation at ``x`` (0 when feasible)."""
        x = np.asarray(x, dtype=float)
        worst = 0.0
        if self.n_rows:
            ax = self.A @ x
            sense = np.asarray(self.senses)
            gap = np.zeros_like(ax)
            gap[sense == LE] = (ax - self.rhs)[sense == LE]
            gap[sense == GE] = (self.rhs - ax)[sense == GE]
            gap[sense == EQ] = np.abs(ax - self.rhs)[sense == EQ]
            worst = max(worst, float(gap.max(initial=0.0)))
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        worst = max(worst, float(np.max(lo - x, initial=0.0)), float(np.max(x - hi, initial=0.0)))
        return worst


@dataclass(frozen=True)
class LpSolution:
    status: Status
    point: np.ndarray | None = None
    objective_value: float | None = None
    iterations: int = 0
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


# ---------------------------------------------------------------------------
# solve counter

_counter_lock = threading.Lock()
_solve_count = 0


def solve_count() -> int:
    """Number of :func:`solve` calls made in this process."""
    return _solve_count


def _bump() -> None:
    global _solve_count
    with _counter_lock:
        _solve_count += 1


# ---------------------------------------------------------------------------
# dispatch


def solve(problem: LpProblem, tolerances: SolverTolerances = DEFAULT_TOLERANCES,
          backend: str | None = None) -> LpSolution:
    """Solve ``problem`` and return an :class:`LpSolution`.

    An Optimal answer is re-verified against the original rows; a point that
    violates them by more than ``tolerances.feas`` (relative to the row scale)
    is reported as NumericalFailure rather than returned.
    """
    _bump()
    backend = backend or os.environ.get("ORDFRI_LP_BACKEND", "highs")
    if os.environ.get("FRI_LP_DUMP") == "1":
        _dump(problem)
    if backend == "highs":
        sol = _solve_highs(problem, tolerances)
    elif backend == "simplex":
        sol = RevisedSimplex(tolerances).solve(problem)
    else:
        raise ValueError(f"unknown LP backend {backend!r}")
    if sol.ok:
        scale = 1.0 + max(float(np.max(np.abs(problem.rhs), initial=0.0)),
                          float(np.max(np.abs(sol.point), initial=0.0)))
        viol = problem.max_violation(sol.point)
        # HiGHS checks feasibility on its scaled model; allow that slack here
        if viol > 100 * tolerances.feas * scale:
            return LpSolution(Status.NUMERICAL_FAILURE, iterations=sol.iterations,
                              message=f"returned point violates constraints by {viol:.3g}")
    return sol


def _solve_highs(problem: LpProblem, tol: SolverTolerances) -> LpSolution:
    A, senses, rhs = problem.A, np.asarray(problem.senses), problem.rhs
    le, ge, eq = senses == LE, senses == GE, senses == EQ
    A_ub = sp.vstack([A[np.flatnonzero(le)], -A[np.flatnonzero(ge)]], format="csr")
    b_ub = np.concatenate([rhs[le], -rhs[ge]])
    A_eq = A[np.flatnonzero(eq)] if eq.any() else None
    b_eq = rhs[eq] if eq.any() else None
    bounds = [(None if np.isinf(lo) else lo, None if np.isinf(hi) else hi)
              for lo, hi in problem.bounds]
    limit = tol.pivot_factor * (problem.n_rows + problem.n_vars)
    res = linprog(problem.objective, A_ub=A_ub if A_ub.shape[0] else None,
                  b_ub=b_ub if A_ub.shape[0] else None, A_eq=A_eq, b_eq=b_eq,
                  bounds=bounds, method="highs-ds",
                  options={"primal_feasibility_tolerance": tol.feas,
                           "dual_feasibility_tolerance": tol.feas,
                           "maxiter": max(limit, 1000), "presolve": True})
    nit = int(getattr(res, "nit", 0) or 0)
    if res.status == 0:
        x = np.asarray(res.x, dtype=float)
        return LpSolution(Status.OPTIMAL, x, float(problem.objective @ x), nit, res.message)
    if res.status == 2:
        return LpSolution(Status.INFEASIBLE, iterations=nit, message=res.message)
    if res.status == 3:
        return LpSolution(Status.UNBOUNDED, iterations=nit, message=res.message)
    return LpSolution(Status.NUMERICAL_FAILURE, iterations=nit, message=res.message)


# ---------------------------------------------------------------------------
# revised simplex


class RevisedSimplex:
    """Two-phase dense revised simplex with Bland's anti-cycling rule.

    The problem is brought to ``min c'z, Mz = r, z >= 0, r >= 0`` by shifting
    finite lower bounds, mirroring upper-only variables, splitting free
    variables, and adding slack/surplus columns.  Phase one minimises the sum
    of artificial variables; phase two the true objective.
    """

    def __init__(self, tolerances: SolverTolerances = DEFAULT_TOLERANCES):
        self.tol = tolerances
        self.zero = 1e-11

    def solve(self, problem: LpProblem) -> LpSolution:
        std = _StandardForm(problem)
        M, r, c = std.M, std.r, std.c
        m, n = M.shape
        limit = self.tol.pivot_factor * (problem.n_rows + problem.n_vars + 1)
        if m == 0:
            if np.any(c < -self.zero):
                return LpSolution(Status.UNBOUNDED)
            x = std.recover(np.zeros(n))
            return LpSolution(Status.OPTIMAL, x, float(problem.objective @ x))

        # phase one: artificials occupy columns n..n+m-1
        T = np.hstack([M, np.eye(m)])
        basis = list(range(n, n + m))
        c1 = np.concatenate([np.zeros(n), np.ones(m)])
        status, basis, xb, its = self._iterate(T, r, c1, basis, limit, n + m)
        if status is not Status.OPTIMAL:
            return LpSolution(Status.NUMERICAL_FAILURE if status is Status.NUMERICAL_FAILURE
                              else status, iterations=its, message="phase one")
        if xb @ c1[basis] > self.tol.feas * (1.0 + np.abs(r).max()):
            return LpSolution(Status.INFEASIBLE, iterations=its)

        # drive remaining artificials out of the basis, dropping redundant rows
        rows = list(range(m))
        B = T[:, basis]
        for pos in range(m - 1, -1, -1):
            if basis[pos] < n:
                continue
            Binv_row = np.linalg.solve(B.T, np.eye(m)[pos])
            alpha = Binv_row @ M
            cand = [k for k in range(n) if abs(alpha[k]) > 1e-9 and k not in basis]
            if cand:
                basis[pos] = cand[0]
                B = T[:, basis]
            else:
                rows.remove(pos)
        keep = sorted(rows)
        basis = [basis[i] for i in keep]
        M2, r2 = M[keep], r[keep]
        status, basis, xb, its2 = self._iterate(M2, r2, c, basis, limit, n)
        its += its2
        if status is not Status.OPTIMAL:
            return LpSolution(status, iterations=its)
        z = np.zeros(n)
        z[basis] = xb
        z = np.maximum(z, 0.0)
        x = std.recover(z)
        return LpSolution(Status.OPTIMAL, x, float(problem.objective @ x), its)

    def _iterate(self, T, r, c, basis, limit, ncols):
        m = T.shape[0]
        its = 0
        while True:
            B = T[:, basis]
            try:
                xb = np.linalg.solve(B, r)
                y = np.linalg.solve(B.T, c[basis])
            except np.linalg.LinAlgError:
                return Status.NUMERICAL_FAILURE, basis, None, its
            reduced = c[:ncols] - y @ T[:, :ncols]
            in_basis = np.zeros(ncols, dtype=bool)
            in_basis[basis] = True
            # Bland: lowest-index improving column
            entering = next((k for k in range(ncols)
                             if not in_basis[k] and reduced[k] < -self.tol.feas), None)
            if entering is None:
                return Status.OPTIMAL, basis, xb, its
            if its >= limit:
                return Status.NUMERICAL_FAILURE, basis, None, its
            d = np.linalg.solve(B, T[:, entering])
            pos_rows = np.flatnonzero(d > self.zero)
            if pos_rows.size == 0:
                return Status.UNBOUNDED, basis, None, its
            ratios = np.maximum(xb[pos_rows], 0.0) / d[pos_rows]
            best = ratios.min()
            tied = pos_rows[ratios <= best + 1e-12 * (1.0 + best)]
            leave = min(tied, key=lambda i: basis[i])
            basis = list(basis)
            basis[leave] = entering
            its += 1
        # unreachable


class _StandardForm:
    def __init__(self, problem: LpProblem):
        A = problem.A.toarray()
        lo, hi = problem.bounds[:, 0], problem.bounds[:, 1]
        nv = problem.n_vars
        cols, costs, self.map = [], [], []  # map: (var, sign, column)
        shift = np.zeros(nv)
        extra_rows, extra_rhs = [], []
        for k in range(nv):
            if np.isfinite(lo[k]):
                shift[k] = lo[k]
                self.map.append((k, 1.0, len(cols)))
                cols.append(A[:, k])
                costs.append(problem.objective[k])
                if np.isfinite(hi[k]):
                    extra_rows.append((len(cols) - 1, hi[k] - lo[k]))
            elif np.isfinite(hi[k]):
                shift[k] = hi[k]
                self.map.append((k, -1.0, len(cols)))
                cols.append(-A[:, k])
                costs.append(-problem.objective[k])
            else:
                self.map.append((k, 1.0, len(cols)))
                cols.append(A[:, k])
                costs.append(problem.objective[k])
                self.map.append((k, -1.0, len(cols)))
                cols.append(-A[:, k])
                costs.append(-problem.objective[k])
        ncore = len(cols)
        core = np.column_stack(cols) if cols else np.zeros((problem.n_rows, 0))
        rhs = problem.rhs - A @ shift
        senses = list(problem.senses)
        ub_rows = np.zeros((len(extra_rows), ncore))
        for i, (col, width) in enumerate(extra_rows):
            ub_rows[i, col] = 1.0
        core = np.vstack([core, ub_rows]) if extra_rows else core
        rhs = np.concatenate([rhs, [w for _, w in extra_rows]])
        senses += [LE] * len(extra_rows)
        ineq = [i for i, s in enumerate(senses) if s != EQ]
        slack = np.zeros((core.shape[0], len(ineq)))
        for j, i in enumerate(ineq):
            slack[i, j] = 1.0 if senses[i] == LE else -1.0
        M = np.hstack([core, slack])
        neg = rhs < 0
        M[neg] *= -1.0
        rhs = np.where(neg, -rhs, rhs)
        self.M, self.r = M, rhs
        self.c = np.concatenate([costs, np.zeros(len(ineq))])
        self.shift, self.nv = shift, nv

    def recover(self, z: np.ndarray) -> np.ndarray:
        x = self.shift.copy()
        for k, sign, col in self.map:
            x[k] += sign * z[col]
        return x


# ---------------------------------------------------------------------------
# block layout / assembly


@dataclass(frozen=True)
class Block:
    name: str
    size: int
    lower: float = -np.inf
    upper: float = np.inf


@dataclass
class LpBuilder:
    """Assemble an LP from named variable blocks and block-structured rows.

    >>> b = LpBuilder([Block("w", 2), Block("b", 1)])
    >>> b.build().n_vars
    3
    """

    blocks: Sequence[Block]
    index: dict[str, slice] = field(init=False)

    def __post_init__(self):
        self.index = {}
        start = 0
        for blk in self.blocks:
            if blk.name in self.index:
                raise ValueError(f"duplicate block name {blk.name!r}")
            if blk.size < 0:
                raise ValueError(f"block {blk.name!r} has negative size")
            self.index[blk.name] = slice(start, start + blk.size)
            start += blk.size
        self.n_vars = start
        self._rows: list[sp.csr_matrix] = []
        self._senses: list[str] = []
        self._rhs: list[np.ndarray] = []

    def size(self, name: str) -> int:
        s = self.index[name]
        return s.stop - s.start

    def add_rows(self, coefs: dict, sense: str, rhs) -> None:
        """Append rows; ``coefs`` maps block name to a (rows x block size) matrix."""
        nrows = None
        parts = []
        for name, mat in coefs.items():
            if name not in self.index:
                raise KeyError(f"unknown block {name!r}")
            mat = sp.csr_matrix(mat) if not sp.issparse(mat) else mat.tocsr()
            if mat.shape[1] != self.size(name):
                raise ValueError(f"block {name!r} expects {self.size(name)} columns, got {mat.shape[1]}")
            if nrows is None:
                nrows = mat.shape[0]
            elif mat.shape[0] != nrows:
                raise ValueError("row count mismatch between blocks")
            parts.append((self.index[name].start, mat))
        rhs = np.broadcast_to(np.asarray(rhs, dtype=float), (nrows,)).copy()
        if nrows == 0:
            return
        coo_r, coo_c, coo_v = [], [], []
        for start, mat in parts:
            m = mat.tocoo()
            coo_r.append(m.row)
            coo_c.append(m.col + start)
            coo_v.append(m.data)
        rows = sp.csr_matrix((np.concatenate(coo_v), (np.concatenate(coo_r), np.concatenate(coo_c))),
                             shape=(nrows, self.n_vars))
        self._rows.append(rows)
        self._senses.extend([sense] * nrows)
        self._rhs.append(rhs)

    def vector(self, coefs: dict) -> np.ndarray:
        v = np.zeros(self.n_vars)
        for name, val in coefs.items():
            v[self.index[name]] = val
        return v

    def build(self, objective: dict | np.ndarray | None = None) -> LpProblem:
        if objective is None:
            c = np.zeros(self.n_vars)
        elif isinstance(objective, dict):
            c = self.vector(objective)
        else:
            c = np.asarray(objective, dtype=float)
        A = sp.vstack(self._rows, format="csr") if self._rows else sp.csr_matrix((0, self.n_vars))
        bounds = np.empty((self.n_vars, 2))
        names = []
        for blk in self.blocks:
            bounds[self.index[blk.name]] = (blk.lower, blk.upper)
            names.extend(f"{blk.name}{i}" for i in range(blk.size))
        return LpProblem(c, A, tuple(self._senses), np.concatenate(self._rhs) if self._rhs else [],
                         bounds, tuple(names))


def assemble(blocks: Sequence[Block], constraint_builders=()) -> tuple[LpProblem, dict[str, slice]]:
    """Build an LP from blocks and callables ``f(builder)`` that add rows."""
    builder = LpBuilder(blocks)
    for add in constraint_builders:
        add(builder)
    return builder.build(), dict(builder.index)


# ---------------------------------------------------------------------------
# fixed-column MPS dump

_dump_lock = threading.Lock()
_dump_seq = 0


def write_mps(problem: LpProblem, path: str | Path, name: str = "ORDFRI") -> Path:
    """Write ``problem`` in fixed-column MPS format."""
    path = Path(path)
    vnames = [f"X{k:07d}" for k in range(problem.n_vars)]
    rnames = [f"R{k:07d}" for k in range(problem.n_rows)]
    code = {LE: "L", GE: "G", EQ: "E"}
    out = [f"NAME          {name}", "ROWS", " N  COST"]
    out += [f" {code[s]}  {rn}" for s, rn in zip(problem.senses, rnames)]
    out.append("COLUMNS")
    A = problem.A.tocsc()
    for k, vn in enumerate(vnames):
        entries = [("COST", problem.objective[k])] if problem.objective[k] != 0 else []
        col = A.getcol(k).tocoo()
        entries += [(rnames[i], v) for i, v in zip(col.row, col.data)]
        for rn, v in entries:
            out.append(f"    {vn:<8}  {rn:<8}  {v:>12.6g}")
    out.append("RHS")
    for rn, v in zip(rnames, problem.rhs):
        if v != 0:
            out.append(f"    {'RHS':<8}  {rn:<8}  {v:>12.6g}")
    out.append("BOUNDS")
    for vn, (lo, hi) in zip(vnames, problem.bounds):
        if np.isinf(lo) and np.isinf(hi):
            out.append(f" FR BND       {vn:<8}")
            continue
        if np.isinf(lo):
            out.append(f" MI BND       {vn:<8}")
        elif lo != 0:
            out.append(f" LO BND       {vn:<8}  {lo:>12.6g}")
        if np.isfinite(hi):
            out.append(f" UP BND       {vn:<8}  {hi:>12.6g}")
    out.append("ENDATA")
    path.write_text("\n".join(out) + "\n")
    return path


def _dump(problem: LpProblem) -> None:
    global _dump_seq
    directory = Path(os.environ.get("FRI_LP_DUMP_DIR", "lp_dump"))
    directory.mkdir(parents=True, exist_ok=True)
    with _dump_lock:
        _dump_seq += 1
        seq = _dump_seq
    write_mps(problem, directory / f"lp_{os.getpid()}_{seq:06d}.mps")
