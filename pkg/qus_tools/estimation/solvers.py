#!/usr/bin/env python
"""Provide the least-squares, L2-L2 and ADMM estimators for one lateral column.

Every estimator minimizes a data term plus depth-difference penalties. The data
term is either the residual form 0.5 ||H x - t||^2 (``residual``) or the
equivalent quadratic 0.5 x^T H x - t^T x (``normal_equations``); both share the
unregularized minimizer. Internally both are handled as 0.5 x^T P x - q^T x with
(P, q) = (H^T H, H^T t) or (H, t).
"""
import typing as typ
from dataclasses import dataclass, field

import numpy as np
from logzero import logger as log
from scipy import sparse

from qus_tools import errors as e
from qus_tools.estimation.assembly import PARAMETERS, SystemFactor, build_normal_system, build_penalty
from qus_tools.etl import is_subset
from qus_tools.model import ParamColumn

DATA_MODES = ("residual", "normal_equations")
PROX_VARIANTS = ("derived", "literal")
SOLVERS = ("lsq", "l2l2", "admm_l1", "admm_l1l2", "admm_l2")

# alternate spellings accepted on input, stored under the canonical name
DATA_MODE_ALIASES = {"paper_literal": "residual"}
PROX_VARIANT_ALIASES = {"paper_literal": "literal"}

MAX_CONDITION = 1e12
POLISH_EVERY = 25
SATURATED_GAIN = 100.0


@dataclass(frozen=True)
class SolverConfig(object):
    """Settings shared by every estimator.

    ``lam`` drives ``l2l2`` and ``admm_l1``; ``lam1`` (L2 block) and ``lam2`` (L1 block)
    drive ``admm_l1l2``; ``admm_l2`` puts every parameter in the L2 block with ``lam1``.
    The weights ``w_a``, ``w_b``, ``w_n`` scale each parameter's difference block, so only
    their products with the lambdas matter.
    """

    method: str = "admm_l1l2"
    rho: float = 1.0
    rho_auto: bool = False
    lam: float = 0.0
    lam1: float = 0.0
    lam2: float = 0.0
    w_a: float = 1.0
    w_b: float = 1.0
    w_n: float = 1.0
    max_iter: int = 5000
    eps_abs: float = 1e-6
    eps_rel: float = 1e-4
    data_mode: str = "residual"
    prox_variant: str = "derived"
    l2_params: typ.Tuple[str, ...] = ("a", )
    polish: bool = True

    def __post_init__(self):
        """Validate the settings."""
        object.__setattr__(self, "data_mode", DATA_MODE_ALIASES.get(self.data_mode, self.data_mode))
        object.__setattr__(self, "prox_variant", PROX_VARIANT_ALIASES.get(self.prox_variant, self.prox_variant))
        if not self.rho > 0:
            raise e.ConfigError(f"rho must be > 0, got {self.rho}.")
        if min(self.lam, self.lam1, self.lam2) < 0:
            raise e.ConfigError("Regularization strengths must be >= 0.")
        if not (self.eps_abs > 0 and self.eps_rel > 0):
            raise e.ConfigError("Tolerances must be > 0.")
        if self.max_iter < 1:
            raise e.ConfigError(f"max_iter must be >= 1, got {self.max_iter}.")
        for name, value, choices in (
            ("method", self.method, SOLVERS),
            ("data_mode", self.data_mode, DATA_MODES),
            ("prox_variant", self.prox_variant, PROX_VARIANTS),
        ):
            if not is_subset(value, choices):
                raise e.ConfigError(f"{name} must be one of {choices}, got {value!r}.")
        if not is_subset(tuple(self.l2_params), PARAMETERS):
            raise e.ConfigError(f"l2_params must be drawn from {PARAMETERS}, got {self.l2_params}.")
        object.__setattr__(self, "l2_params", tuple(self.l2_params))

    def penalty(self, n_depths):
        return build_penalty(self.w_a, self.w_b, self.w_n, n_depths, split=self.method == "admm_l1l2")


@dataclass
class SolveReport(object):
    """Diagnostics of one column solve."""

    solver: str
    data_mode: str
    prox_variant: str
    iterations: int = 0
    primal_residual: float = 0.0
    dual_residual: float = 0.0
    objective_trace: typ.List[float] = field(default_factory=list)
    converged: bool = True
    rho: float = float("nan")
    rho_l2: float = float("nan")
    condition: float = float("nan")
    polished: bool = False
    multiplier: typ.Optional[np.ndarray] = None

    @property
    def objective(self):
        return self.objective_trace[-1] if self.objective_trace else float("nan")

    def summary(self):
        """Return the scalar fields as a dict, for tabular reports."""
        return {
            "solver": self.solver,
            "data_mode": self.data_mode,
            "prox_variant": self.prox_variant,
            "iterations": self.iterations,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "objective": self.objective,
            "converged": self.converged,
            "rho": self.rho,
            "rho_l2": self.rho_l2,
            "condition": self.condition,
            "polished": self.polished,
        }


def data_quadratic(sys, data_mode):
    """Return the (P, q) system of the chosen data term as a NormalSystem."""
    if data_mode == "residual":
        return sys.squared()
    if data_mode == "normal_equations":
        return sys
    raise e.ConfigError(f"data_mode must be one of {DATA_MODES}, got {data_mode!r}.")


def data_objective(x, sys, data_mode):
    """Return the data term at ``x``."""
    hx = sys.matvec(x)
    t = sys.vector
    if data_mode == "residual":
        return 0.5 * float(np.sum((hx - t)**2))
    return 0.5 * float(x @ hx) - float(t @ x)


def data_gradient(x, sys, data_mode):
    quad = data_quadratic(sys, data_mode)
    return quad.matvec(x) - quad.vector


def soft_threshold(v, kappa):
    """Return sgn(v) * max(|v| - kappa, 0) element-wise."""
    if np.any(np.asarray(kappa) < 0):
        raise e.ConfigError(f"Threshold must be >= 0, got {kappa}.")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - kappa, 0.0)


def objective(x, sys, k1=None, k2=None, lam1=0.0, lam2=0.0, data_mode="residual", s2=None):
    """Return data term + lam1 ||K1 x||^2 + lam2 ||s2||_1 with s2 = K2 x unless given."""
    x = np.asarray(x, dtype=float)
    if x.shape != (sys.size, ):
        raise e.DimensionMismatchError(f"x has shape {x.shape}, system expects ({sys.size},).")

    value = data_objective(x, sys, data_mode)
    if k1 is not None and k1.shape[0] and lam1:
        value += lam1 * float(np.sum((k1 @ x)**2))
    if k2 is not None and k2.shape[0] and lam2:
        s2 = k2 @ x if s2 is None else np.asarray(s2, dtype=float)
        value += lam2 * float(np.abs(s2).sum())
    return value


def stationarity_residual(x, g, sys, k, data_mode):
    """Return || grad data(x) + K^T g ||, the optimality gap certified by multiplier ``g``."""
    return float(np.linalg.norm(data_gradient(x, sys, data_mode) + k.T @ np.asarray(g, dtype=float)))


def _checked_condition(sys):
    condition = sys.condition()
    if not condition < MAX_CONDITION:
        raise e.SingularSystemError("Data system H is singular or ill-conditioned", condition=condition)
    return condition


def solve_lsq(sys):
    """Return the unregularized solution of H x = t, solved depth by depth."""
    condition = _checked_condition(sys)
    blocks = sys.blocks()
    solution = np.linalg.solve(blocks, sys.t.T[:, :, None])[:, :, 0]
    x = solution.T.ravel()

    residual = np.linalg.norm(sys.matvec(x) - sys.vector)
    if residual > 1e-8 * max(np.linalg.norm(sys.vector), 1.0):
        log.warning(f"LSQ residual {residual:.3e} is large for condition estimate {condition:.3e}.")
    return ParamColumn.from_stacked(x)


def solve_l2l2(sys, k, lam, data_mode="residual"):
    """Return the closed-form minimizer of the data term + lam ||K x||^2.

    Args:
        sys (NormalSystem): Data system.
        k: Penalty rows against the stacked x (sparse), or a PenaltyOperator.
        lam (float): Regularization strength.
        data_mode (str): ``residual`` or ``normal_equations``.
    """
    if lam < 0:
        raise e.ConfigError(f"lam must be >= 0, got {lam}.")
    k = getattr(k, "joint", k)
    quad = data_quadratic(sys, data_mode)
    factor = SystemFactor(quad.matrix() + 2.0 * lam * (k.T @ k))
    return ParamColumn.from_stacked(factor.solve(quad.vector))


def auto_rho(quad, k):
    """Return 1 / sqrt(mu_min * mu_max) over the positive spectrum of K P^-1 K^T."""
    if not k.shape[0] or not k.count_nonzero():
        return None
    factor = SystemFactor(quad.matrix())
    dense_k = k.toarray()
    coupling = dense_k @ np.column_stack([factor.solve(row) for row in dense_k])
    mu = np.linalg.eigvalsh(0.5 * (coupling + coupling.T))
    mu = mu[mu > 1e-12 * mu.max()]
    return float(1.0 / np.sqrt(mu.min() * mu.max()))


def strength_rho(quad, k1, k2, lam1, lam2, prox_variant="derived"):
    """Return (rows, rho_l1, rho_l2): per-row ADMM penalties sized once from the strengths.

    With the derived prox every L2 row gets 2 lam1, which makes that split exact
    after the first iteration. The L1 rows are equilibrated by the diagonal of
    C = K2 A^-1 K2^T, A = P + 2 lam1 K1^T K1, and scaled to 1 / sqrt(mu_min mu_max)
    of the equilibrated spectrum. When lam2 exceeds the strength that zeroes every
    L1 row, the scale becomes SATURATED_GAIN / mu_min instead.

    Returns None when no row has anything to size.
    """
    m1, m2 = k1.shape[0], k2.shape[0]
    fold = prox_variant == "derived" and lam1 > 0 and m1 > 0
    matrix = quad.matrix()
    if fold:
        matrix = matrix + 2.0 * lam1 * (k1.T @ k1)

    rho_l1 = rows_l1 = None
    if m2 and k2.count_nonzero():
        factor = SystemFactor(matrix)
        dense_k2 = k2.toarray()
        coupling = dense_k2 @ np.column_stack([factor.solve(row) for row in dense_k2])
        coupling = 0.5 * (coupling + coupling.T)
        diag = np.diag(coupling)
        scale = np.ones(m2)
        live = diag > 1e-12 * diag.max()
        scale[live] = 1.0 / np.sqrt(diag[live])
        mu = np.linalg.eigvalsh(coupling * np.outer(scale, scale))
        mu = mu[mu > 1e-12 * mu.max()]
        if mu.size:
            rho_l1 = float(1.0 / np.sqrt(mu.min() * mu.max()))
            zeroing = np.linalg.lstsq(coupling, dense_k2 @ factor.solve(quad.vector), rcond=None)[0]
            if lam2 > np.abs(zeroing).max():
                rho_l1 = SATURATED_GAIN / float(mu.min())
            rows_l1 = rho_l1 * scale**2

    if fold:
        rho_l2 = 2.0 * lam1
    elif rho_l1 is not None:
        rho_l2 = rho_l1
    else:
        rho_l2 = auto_rho(quad, k1)
    if rho_l2 is None:
        rho_l2 = rho_l1
    if rho_l1 is None:
        rho_l1 = rho_l2
    if rho_l1 is None:
        return None
    if rows_l1 is None:
        rows_l1 = np.full(m2, rho_l1)
    return np.concatenate([np.full(m1, rho_l2), rows_l1]), rho_l1, rho_l2


def polish_support(quad, k1, k2, lam1, lam2, s2):
    """Return (x, multiplier) solving the optimality system on the support of ``s2``, or None.

    Rows with s2 == 0 become constraints K2_j x = 0 with a free multiplier u_j; the
    others enter as lam2 sign(s2_j). The solution is kept only when it is an exact
    optimum: every |u_j| <= lam2 and every free row keeps its sign.
    """
    matrix = quad.matrix()
    if k1.shape[0] and lam1:
        matrix = matrix + 2.0 * lam1 * (k1.T @ k1)
    matrix = matrix.toarray()
    dense_k2 = k2.toarray()

    free = s2 != 0
    tied = ~free & np.any(dense_k2 != 0, axis=1)
    signs = np.sign(s2[free])
    k_tied, k_free = dense_k2[tied], dense_k2[free]
    rhs = quad.vector - lam2 * (k_free.T @ signs)

    size, n_tied = matrix.shape[0], k_tied.shape[0]
    kkt = np.block([[matrix, k_tied.T], [k_tied, np.zeros((n_tied, n_tied))]])
    try:
        solution = np.linalg.solve(kkt, np.concatenate([rhs, np.zeros(n_tied)]))
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(solution)):
        return None
    x, u = solution[:size], solution[size:]

    gap = np.linalg.norm(matrix @ x + k_tied.T @ u - rhs)
    scale = (
        1.0 + np.linalg.norm(quad.vector) + np.linalg.norm(np.abs(matrix) @ np.abs(x)) +
        np.linalg.norm(np.abs(k_tied).T @ np.abs(u)) + lam2 * np.linalg.norm(np.abs(k_free).sum(axis=0))
    )
    if gap > 1e-9 * scale:
        return None
    if np.any(np.abs(u) > lam2 * (1.0 + 1e-9)):
        return None
    if np.any(signs * (k_free @ x) < -1e-10 * (1.0 + np.abs(x).max())):
        return None

    g = np.zeros(k2.shape[0])
    g[tied] = np.clip(u, -lam2, lam2)
    g[free] = lam2 * signs
    return x, np.concatenate([2.0 * lam1 * (k1 @ x), g])


def _admm(sys, k1, k2, lam1, lam2, cfg, solver):
    """Run scaled-form ADMM on data + lam1 ||s1||^2 + lam2 ||s2||_1 with K1 x = s1, K2 x = s2.

    Each constraint row carries its own penalty; all equal ``cfg.rho`` unless
    ``cfg.rho_auto`` asks for strength_rho. With ``cfg.polish`` (derived prox only)
    the support of s2 is refit exactly every POLISH_EVERY iterations and at
    convergence, and a verified refit ends the run.
    """
    quad = data_quadratic(sys, cfg.data_mode)
    k = sparse.vstack([k1, k2], format="csr")
    m1 = k1.shape[0]
    size = sys.size

    report = SolveReport(solver=solver, data_mode=cfg.data_mode, prox_variant=cfg.prox_variant, converged=False)

    try:
        report.condition = _checked_condition(sys)
        x = solve_lsq(sys).stacked()
    except e.SingularSystemError:
        report.condition = sys.condition()
        x = np.zeros(size)

    rows = np.full(k.shape[0], cfg.rho)
    report.rho = report.rho_l2 = cfg.rho
    if cfg.rho_auto:
        try:
            chosen = strength_rho(quad, k1, k2, lam1, lam2, cfg.prox_variant)
        except e.SingularSystemError:
            chosen = None
            log.warning(f"Automatic rho needs a nonsingular data system; using rho={cfg.rho}.")
        if chosen is not None:
            rows, report.rho, report.rho_l2 = chosen

    weighted_kt = (k.T @ sparse.diags(rows)).tocsr()
    factor = SystemFactor(quad.matrix() + weighted_kt @ k)

    s = k @ x
    y = np.zeros(k.shape[0])
    rows1, rows2 = rows[:m1], rows[m1:]
    threshold = lam2 / rows2
    if cfg.prox_variant == "derived":
        shrink = rows1 / (rows1 + 2.0 * lam1)
    else:
        shrink = 1.0 / (rows1 + lam1)

    polish = cfg.polish and cfg.prox_variant == "derived"
    tried = None

    for iteration in range(1, cfg.max_iter + 1):
        x = factor.solve(quad.vector + weighted_kt @ (s - y))
        kx = k @ x
        v = kx + y

        s_prev = s
        s = np.concatenate([shrink * v[:m1], soft_threshold(v[m1:], threshold)])
        y = v - s

        report.primal_residual = float(np.linalg.norm(kx - s))
        report.dual_residual = float(np.linalg.norm(weighted_kt @ (s - s_prev)))
        report.objective_trace.append(objective(x, sys, k1, k2, lam1, lam2, cfg.data_mode))
        report.iterations = iteration

        eps_primal = np.sqrt(k.shape[0]) * cfg.eps_abs + cfg.eps_rel * max(np.linalg.norm(kx), np.linalg.norm(s))
        eps_dual = np.sqrt(size) * cfg.eps_abs + cfg.eps_rel * np.linalg.norm(weighted_kt @ y)
        done = report.primal_residual <= eps_primal and report.dual_residual <= eps_dual

        if polish and (done or iteration % POLISH_EVERY == 0):
            pattern = np.sign(s[m1:]).tobytes()
            if pattern != tried:
                tried = pattern
                polished = polish_support(quad, k1, k2, lam1, lam2, s[m1:])
                if polished is not None:
                    x, report.multiplier = polished
                    report.objective_trace[-1] = objective(x, sys, k1, k2, lam1, lam2, cfg.data_mode)
                    report.polished = done = True

        if done:
            report.converged = True
            break

    if not report.converged:
        log.warning(
            f"{solver} stopped at max_iter={cfg.max_iter} (primal {report.primal_residual:.2e}, "
            f"dual {report.dual_residual:.2e})."
        )

    if report.multiplier is None:
        report.multiplier = rows * y
    return ParamColumn.from_stacked(x), report


def admm_l1(sys, k, cfg):
    """Return the ADMM solution of data + lam ||K x||_1 and its SolveReport."""
    k = sparse.csr_matrix(getattr(k, "joint", k))
    empty = sparse.csr_matrix((0, sys.size))
    return _admm(sys, empty, k, 0.0, cfg.lam, cfg, "admm_l1")


def admm_l1l2(sys, k1, k2, cfg, solver="admm_l1l2"):
    """Return the ADMM solution of data + lam1 ||K1 x||^2 + lam2 ||K2 x||_1 and its SolveReport.

    ``k1`` and ``k2`` act on the full stacked x; either may have zero rows.
    """
    k1 = sparse.csr_matrix(k1)
    k2 = sparse.csr_matrix(k2)
    return _admm(sys, k1, k2, cfg.lam1, cfg.lam2, cfg, solver)


def split_penalty(penalty, l2_params=("a", )):
    """Return (K1, K2): the L2 rows of ``l2_params`` and the L1 rows of the rest."""
    l1_params = tuple(name for name in PARAMETERS if name not in l2_params)
    return penalty.rows(tuple(l2_params)), penalty.rows(l1_params)


def _closed_form_report(x, sys, cfg, solver, k=None, lam=0.0):
    report = SolveReport(solver=solver, data_mode=cfg.data_mode, prox_variant=cfg.prox_variant, iterations=1)
    report.objective_trace.append(objective(x.stacked(), sys, k, None, lam, 0.0, cfg.data_mode))
    report.condition = sys.condition()
    return report


def solve_column(x_map, grid, weights, cfg):
    """Return (ParamColumn, SolveReport) for one log-ratio map with the configured estimator."""
    sys = build_normal_system(x_map, grid, weights)
    penalty = cfg.penalty(grid.n_depths)

    if cfg.method == "lsq":
        params = solve_lsq(sys)
        return params, _closed_form_report(params, sys, cfg, "lsq")

    if cfg.method == "l2l2":
        params = solve_l2l2(sys, penalty, cfg.lam, cfg.data_mode)
        return params, _closed_form_report(params, sys, cfg, "l2l2", penalty.joint, cfg.lam)

    if cfg.method == "admm_l1":
        return admm_l1(sys, penalty, cfg)

    if cfg.method == "admm_l2":
        k1, k2 = split_penalty(penalty, PARAMETERS)
        return admm_l1l2(sys, k1, k2, cfg, solver="admm_l2")

    k1, k2 = split_penalty(penalty, cfg.l2_params)
    return admm_l1l2(sys, k1, k2, cfg)
