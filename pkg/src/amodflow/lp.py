"""Linear programming core.

The native solver is a dense two-phase primal simplex on an equilibrated
standard form. Entering variables follow Dantzig's rule with lowest-index
tie-breaking; after a run of degenerate pivots the rule switches to Bland's
until progress resumes. Large instances (beyond ``DENSE_LIMIT`` tableau
entries) are routed to scipy's HiGHS backend under ``method="auto"``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_FAILURE = "numerical-failure"

DENSE_LIMIT = 4_000_000
_PIVOT_TOL = 1e-9
_DEGENERATE_SWITCH = 50


@dataclass
class Constraint:
    coeffs: dict[int, float]
    relation: str  # "<=", "==", ">="
    rhs: float
    name: str = ""


@dataclass
class LinearProgram:
    """``minimize c.x`` subject to rows and variable bounds."""

    cost: list[float] = field(default_factory=list)
    lower: list[float] = field(default_factory=list)
    upper: list[float] = field(default_factory=list)
    names: list[str] = field(default_factory=list)
    rows: list[Constraint] = field(default_factory=list)

    @property
    def num_vars(self) -> int:
        return len(self.cost)

    def add_variable(self, cost: float = 0.0, lower: float = 0.0, upper: float = math.inf, name: str = "") -> int:
        self.cost.append(float(cost))
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        self.names.append(name or f"x{len(self.cost) - 1}")
        return len(self.cost) - 1

    def add_constraint(self, coeffs: Mapping[int, float], relation: str, rhs: float, name: str = "") -> int:
        if relation not in ("<=", "==", ">="):
            raise ValueError(f"bad relation {relation!r}")
        clean = {int(j): float(a) for j, a in coeffs.items() if a != 0.0}
        for j, a in clean.items():
            if not 0 <= j < self.num_vars:
                raise ValueError(f"constraint references undeclared variable {j}")
            if not math.isfinite(a):
                raise ValueError("non-finite coefficient")
        if not math.isfinite(rhs):
            raise ValueError("non-finite right-hand side")
        self.rows.append(Constraint(clean, relation, float(rhs), name or f"r{len(self.rows)}"))
        return len(self.rows) - 1

    def fix(self, j: int, value: float) -> None:
        self.lower[j] = self.upper[j] = float(value)

    def dump(self) -> str:
        """Plain-text rendering, one item per line::

            min: <cost> <name> + ...
            <row name>: <coef> <name> + ... <rel> <rhs>
            bound: <lower> <= <name> <= <upper>
        """

        def term(a: float, j: int) -> str:
            return f"{a:+.12g} {self.names[j]}"

        lines = ["min: " + " ".join(term(c, j) for j, c in enumerate(self.cost) if c != 0.0)]
        for r in self.rows:
            body = " ".join(term(a, j) for j, a in sorted(r.coeffs.items()))
            lines.append(f"{r.name}: {body} {r.relation} {r.rhs:.12g}")
        for j in range(self.num_vars):
            lines.append(f"bound: {self.lower[j]:.12g} <= {self.names[j]} <= {self.upper[j]:.12g}")
        return "\n".join(lines) + "\n"

    def matrices(self):
        """Dense (A, b, relations) view, mainly for tests."""
        A = np.zeros((len(self.rows), self.num_vars))
        for i, r in enumerate(self.rows):
            for j, a in r.coeffs.items():
                A[i, j] = a
        return A, np.array([r.rhs for r in self.rows]), [r.relation for r in self.rows]


@dataclass
class LpSolution:
    status: str
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None
    duals: Optional[np.ndarray] = None
    dual_objective: Optional[float] = None
    pivots: int = 0
    method: str = ""
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


# ---------------------------------------------------------------------------
# standard form


@dataclass
class _Standard:
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    const: float
    # x_orig = offset + sum over std columns of coef * x_std[col]
    var_map: list[list[tuple[int, float]]]
    offset: np.ndarray
    row_sign: np.ndarray  # +-1 flip applied to each user row (after scaling)
    n_user_rows: int


def _to_standard(lp: LinearProgram) -> _Standard:
    n = lp.num_vars
    lower = np.array(lp.lower, dtype=float)
    upper = np.array(lp.upper, dtype=float)
    cost = np.array(lp.cost, dtype=float)

    offset = np.zeros(n)
    var_map: list[list[tuple[int, float]]] = []
    cols = 0
    extra_bounds: list[tuple[int, float]] = []  # (std col, bound)
    for j in range(n):
        lo, hi = lower[j], upper[j]
        if lo == hi:
            offset[j] = lo
            var_map.append([])
        elif math.isfinite(lo):
            offset[j] = lo
            var_map.append([(cols, 1.0)])
            if math.isfinite(hi):
                extra_bounds.append((cols, hi - lo))
            cols += 1
        elif math.isfinite(hi):
            offset[j] = hi
            var_map.append([(cols, -1.0)])
            cols += 1
        else:
            var_map.append([(cols, 1.0), (cols + 1, -1.0)])
            cols += 2

    n_struct = cols
    user_rows = lp.rows
    m_user = len(user_rows)
    n_slack = sum(1 for r in user_rows if r.relation != "==") + len(extra_bounds)
    m = m_user + len(extra_bounds)
    A = np.zeros((m, n_struct + n_slack))
    b = np.zeros(m)
    slack = n_struct
    for i, r in enumerate(user_rows):
        shift = 0.0
        for j, a in r.coeffs.items():
            shift += a * offset[j]
            for col, sgn in var_map[j]:
                A[i, col] += a * sgn
        b[i] = r.rhs - shift
        if r.relation == "<=":
            A[i, slack] = 1.0
            slack += 1
        elif r.relation == ">=":
            A[i, slack] = -1.0
            slack += 1
    for k, (col, bound) in enumerate(extra_bounds):
        i = m_user + k
        A[i, col] = 1.0
        A[i, slack] = 1.0
        slack += 1
        b[i] = bound

    c = np.zeros(A.shape[1])
    for j in range(n):
        for col, sgn in var_map[j]:
            c[col] += cost[j] * sgn
    const = float(cost @ offset)
    return _Standard(A, b, c, const, var_map, offset, np.ones(m), m_user)


def _equilibrate(A: np.ndarray, passes: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Row and column factors bringing every row and column to unit max-norm
    (approximately, after a few alternating passes), rounded to powers of two."""
    m, n = A.shape
    r = np.ones(m)
    s = np.ones(n)
    work = np.abs(A)
    for _ in range(passes):
        rmax = (work * s[None, :]).max(axis=1, initial=0.0) * r
        r /= np.where(rmax > 0, rmax, 1.0)
        cmax = (work * r[:, None]).max(axis=0, initial=0.0) * s
        s /= np.where(cmax > 0, cmax, 1.0)
    r = np.exp2(np.round(np.log2(r)))
    s = np.exp2(np.round(np.log2(s)))
    return r, s


# ---------------------------------------------------------------------------
# dense simplex


class _Tableau:
    def __init__(self, A: np.ndarray, b: np.ndarray, max_pivots: int):
        m, n = A.shape
        self.m, self.n = m, n
        # artificials for every row; columns n..n+m-1
        self.T = np.zeros((m, n + m + 1))
        self.T[:, :n] = A
        self.T[:, n: n + m] = np.eye(m)
        self.T[:, -1] = b
        self.basis = list(range(n, n + m))
        self.pivots = 0
        self.max_pivots = max_pivots

    def pivot(self, r: int, col: int) -> None:
        T = self.T
        T[r] /= T[r, col]
        colv = T[:, col].copy()
        colv[r] = 0.0
        nz = np.flatnonzero(colv)
        if nz.size:
            T[nz] -= np.outer(colv[nz], T[r])
        T[:, col] = 0.0
        T[r, col] = 1.0
        self.basis[r] = col
        self.pivots += 1

    def run(self, cost: np.ndarray, allowed: np.ndarray, opt_tol: float) -> str:
        """Minimize ``cost`` over the current basis; ``allowed`` masks the
        columns permitted to enter."""
        T = self.T
        degenerate = 0
        bland = False
        width = T.shape[1] - 1
        while True:
            cb = cost[self.basis]
            d = cost[:width] - cb @ T[:, :width]
            d[~allowed] = 0.0
            d[self.basis] = 0.0
            cand = np.flatnonzero(d < -opt_tol)
            if cand.size == 0:
                return OPTIMAL
            if bland:
                col = int(cand[0])
            else:
                # argmin returns the lowest index among ties
                col = int(np.argmin(d))
            colv = T[:, col]
            pos = np.flatnonzero(colv > _PIVOT_TOL)
            if pos.size == 0:
                return UNBOUNDED
            ratios = T[pos, -1] / colv[pos]
            best = ratios.min()
            tied = pos[ratios <= best + 1e-12 * max(1.0, abs(best))]
            r = min(tied, key=lambda i: self.basis[i])
            if best <= 1e-12:
                degenerate += 1
                if degenerate >= _DEGENERATE_SWITCH:
                    bland = True
            else:
                degenerate = 0
                bland = False
            self.pivot(int(r), col)
            if self.pivots > self.max_pivots:
                return NUMERICAL_FAILURE


def _simplex(A: np.ndarray, b: np.ndarray, c: np.ndarray, feas_tol: float, opt_tol: float, max_pivots: int):
    """Two-phase simplex on ``min c.x, Ax = b, x >= 0`` with ``b >= 0``.

    Returns (status, x, basis, kept_rows, pivots).
    """
    m, n = A.shape
    tab = _Tableau(A, b, max_pivots)
    # Phase 1
    cost1 = np.zeros(n + m)
    cost1[n:] = 1.0
    allowed = np.ones(n + m, dtype=bool)
    status = tab.run(cost1, allowed, opt_tol)
    if status == NUMERICAL_FAILURE:
        return status, None, None, None, tab.pivots
    infeas = float(tab.T[[i for i, j in enumerate(tab.basis) if j >= n], -1].sum()) if m else 0.0
    if infeas > feas_tol * max(1.0, float(np.abs(b).max(initial=0.0))):
        return INFEASIBLE, None, None, None, tab.pivots

    # drive artificials out of the basis; drop redundant rows
    keep = np.ones(m, dtype=bool)
    for r in range(m):
        if tab.basis[r] >= n:
            row = tab.T[r, :n]
            cand = np.flatnonzero(np.abs(row) > 1e-9)
            if cand.size:
                tab.pivot(r, int(cand[0]))
            else:
                keep[r] = False
    if not keep.all():
        tab.T = tab.T[keep]
        tab.basis = [j for j, k in zip(tab.basis, keep) if k]
        tab.m = int(keep.sum())

    # Phase 2
    cost2 = np.zeros(n + m)
    cost2[:n] = c
    allowed = np.zeros(n + m, dtype=bool)
    allowed[:n] = True
    status = tab.run(cost2, allowed, opt_tol)
    if status != OPTIMAL:
        return status, None, None, None, tab.pivots
    x = np.zeros(n)
    for r, j in enumerate(tab.basis):
        if j < n:
            x[j] = tab.T[r, -1]
    x[(x < 0) & (x > -feas_tol)] = 0.0
    return OPTIMAL, x, list(tab.basis), keep, tab.pivots


def _solve_dense(lp: LinearProgram, feas_tol: float, opt_tol: float, max_pivots: Optional[int]) -> LpSolution:
    std = _to_standard(lp)
    A, b, c = std.A, std.b.copy(), std.c
    m, n = A.shape
    if n == 0:
        # every variable fixed: feasibility is a direct check
        x = std.offset.copy()
        status = OPTIMAL if _max_violation(lp, x) <= feas_tol * max(1.0, float(np.abs(x).max(initial=0.0))) else INFEASIBLE
        obj = float(np.dot(lp.cost, x)) if status == OPTIMAL else None
        return LpSolution(status, x if status == OPTIMAL else None, obj, method="dense")

    r_scale, c_scale = _equilibrate(A)
    As = A * r_scale[:, None] * c_scale[None, :]
    bs = b * r_scale
    cs = c * c_scale
    sign = np.where(bs < 0, -1.0, 1.0)
    As = As * sign[:, None]
    bs = bs * sign
    cmax = float(np.abs(cs).max(initial=0.0))
    cnorm = cmax if cmax > 0 else 1.0
    cs_n = cs / cnorm

    limit = max_pivots if max_pivots is not None else 50 * (m + n) + 1000
    status, xs, basis, keep, pivots = _simplex(As, bs, cs_n, feas_tol, opt_tol, limit)
    if status != OPTIMAL:
        return LpSolution(status, pivots=pivots, method="dense")

    x_std = xs * c_scale
    x = _recover(std, x_std)

    # duals of the kept rows from the final basis
    kept_idx = np.flatnonzero(keep)
    B = As[np.ix_(kept_idx, [j for j in basis])] if basis and all(j < n for j in basis) else None
    duals = None
    dual_obj = None
    if B is not None and B.shape[0] == B.shape[1]:
        try:
            y_k = np.linalg.solve(B.T, cs[basis])
            y_s = np.zeros(m)
            y_s[kept_idx] = y_k
            y_std = y_s * sign * r_scale  # duals of the unscaled standard rows
            duals = y_std[: std.n_user_rows].copy()
            dual_obj = float(y_std @ std.b) + std.const
        except np.linalg.LinAlgError:
            pass
    sol = LpSolution(OPTIMAL, x, float(np.dot(lp.cost, x)), duals, dual_obj, pivots, "dense")
    return _verified(lp, sol, feas_tol)


def _recover(std: _Standard, x_std: np.ndarray) -> np.ndarray:
    x = std.offset.copy()
    for j, terms in enumerate(std.var_map):
        for col, sgn in terms:
            x[j] += sgn * x_std[col]
    return x


# ---------------------------------------------------------------------------
# HiGHS backend


def _solve_highs(lp: LinearProgram, feas_tol: float, opt_tol: float) -> LpSolution:
    from scipy.optimize import linprog
    from scipy.sparse import coo_matrix

    n = lp.num_vars
    ub_rows, eq_rows = [], []
    for i, r in enumerate(lp.rows):
        (eq_rows if r.relation == "==" else ub_rows).append(i)

    def build(idx, flip_ge):
        data, ri, ci, rhs = [], [], [], []
        for k, i in enumerate(idx):
            r = lp.rows[i]
            s = -1.0 if (flip_ge and r.relation == ">=") else 1.0
            for j, a in r.coeffs.items():
                data.append(s * a)
                ri.append(k)
                ci.append(j)
            rhs.append(s * r.rhs)
        if not idx:
            return None, None
        return coo_matrix((data, (ri, ci)), shape=(len(idx), n)).tocsr(), np.array(rhs)

    A_ub, b_ub = build(ub_rows, True)
    A_eq, b_eq = build(eq_rows, False)
    bounds = [
        (lo if math.isfinite(lo) else None, hi if math.isfinite(hi) else None)
        for lo, hi in zip(lp.lower, lp.upper)
    ]
    res = linprog(
        np.array(lp.cost),
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=bounds,
        method="highs",
        options={
            "primal_feasibility_tolerance": max(feas_tol, 1e-10),
            "dual_feasibility_tolerance": max(opt_tol, 1e-10),
            "presolve": True,
        },
    )
    if res.status == 2:
        return LpSolution(INFEASIBLE, method="highs", message=res.message)
    if res.status == 3:
        return LpSolution(UNBOUNDED, method="highs", message=res.message)
    if res.status != 0:
        return LpSolution(NUMERICAL_FAILURE, method="highs", message=res.message)
    x = np.asarray(res.x, dtype=float)
    x = np.clip(x, np.array(lp.lower), np.array(lp.upper))
    duals = np.zeros(len(lp.rows))
    if A_ub is not None:
        for k, i in enumerate(ub_rows):
            s = -1.0 if lp.rows[i].relation == ">=" else 1.0
            duals[i] = s * res.ineqlin.marginals[k]
    if A_eq is not None:
        for k, i in enumerate(eq_rows):
            duals[i] = res.eqlin.marginals[k]
    sol = LpSolution(OPTIMAL, x, float(np.dot(lp.cost, x)), duals, None, int(getattr(res, "nit", 0)), "highs")
    return _verified(lp, sol, feas_tol)


# ---------------------------------------------------------------------------
# checks and entry point


def _row_violations(lp: LinearProgram, x: np.ndarray) -> np.ndarray:
    out = np.zeros(len(lp.rows))
    for i, r in enumerate(lp.rows):
        lhs = sum(a * x[j] for j, a in r.coeffs.items())
        scale = max(1.0, max((abs(a) for a in r.coeffs.values()), default=0.0))
        if r.relation == "<=":
            v = lhs - r.rhs
        elif r.relation == ">=":
            v = r.rhs - lhs
        else:
            v = abs(lhs - r.rhs)
        out[i] = max(0.0, v) / scale
    return out


def _max_violation(lp: LinearProgram, x: np.ndarray) -> float:
    rows = _row_violations(lp, x)
    lo = np.array(lp.lower) - x
    hi = x - np.array(lp.upper)
    vals = [rows.max(initial=0.0), np.nanmax(lo, initial=0.0), np.nanmax(hi, initial=0.0)]
    return float(max(0.0, *vals))


def _verified(lp: LinearProgram, sol: LpSolution, feas_tol: float) -> LpSolution:
    scale = max(1.0, float(np.abs(sol.x).max(initial=0.0)))
    viol = _max_violation(lp, sol.x)
    # rows carry the unscaled magnitudes; allow for accumulated rounding
    if viol > max(feas_tol, 1e-9) * scale * 100:
        log.warning("LP solution violates constraints by %.3g; reporting failure", viol)
        return LpSolution(NUMERICAL_FAILURE, pivots=sol.pivots, method=sol.method,
                          message=f"max violation {viol:.3g}")
    return sol


def solve_lp(
    lp: LinearProgram,
    feasibility_tol: float = 1e-9,
    optimality_tol: float = 1e-9,
    method: str = "auto",
    max_pivots: Optional[int] = None,
) -> LpSolution:
    """Solve ``lp``. ``method`` is ``"dense"``, ``"highs"`` or ``"auto"``.

    The dense simplex returns basic (vertex) solutions, which the
    rebalancing code relies on for integrality.
    """
    if method == "auto":
        free = sum(1 for lo, hi in zip(lp.lower, lp.upper) if lo != hi)
        size = (len(lp.rows) + free) * (2 * free + len(lp.rows))
        method = "dense" if size <= DENSE_LIMIT else "highs"
    if method == "dense":
        return _solve_dense(lp, feasibility_tol, optimality_tol, max_pivots)
    if method == "highs":
        return _solve_highs(lp, feasibility_tol, optimality_tol)
    raise ValueError(f"unknown method {method!r}")
