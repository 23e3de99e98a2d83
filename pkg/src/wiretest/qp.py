"""Box-constrained convex QP and the wire tension distribution built on it.

The tension problem

    minimize   (tau + Ge^T T)^T Lambda (tau + Ge^T T) + |T|^2
    subject to T_min <= T <= T_max

with ``Ge = G`` (uncompensated) or ``Ge = eta * G`` (pulley-loss compensated)
is rewritten as ``1/2 T^T H T + g^T T`` with ``H = 2 (Ge Lambda Ge^T + I)`` and
``g = 2 Ge Lambda tau``. The identity term keeps ``H`` positive definite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import ContractError, DomainError, NumericalError
from .pulley import EtaMatrix

DEFAULT_TOL = 1e-8
DEFAULT_LAMBDA = 1e6
DEFAULT_T_MIN = 5.0
DEFAULT_T_MAX = 400.0


@dataclass(frozen=True)
class QPProblem:
    H: np.ndarray
    g: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        H = np.array(self.H, dtype=float)
        g = np.array(self.g, dtype=float).reshape(-1)
        lower = np.array(self.lower, dtype=float).reshape(-1)
        upper = np.array(self.upper, dtype=float).reshape(-1)
        m = g.size
        if H.shape != (m, m) or lower.shape != (m,) or upper.shape != (m,):
            raise ContractError(f"inconsistent QP shapes H{H.shape} g{g.shape} l{lower.shape} u{upper.shape}")
        scale = max(float(np.abs(H).max()), 1.0)
        if np.abs(H - H.T).max() > 1e-10 * scale:
            raise ContractError("H must be symmetric")
        if np.any(lower > upper):
            raise DomainError("lower bound exceeds upper bound")
        H = 0.5 * (H + H.T)
        for name, arr in (("H", H), ("g", g), ("lower", lower), ("upper", upper)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def size(self) -> int:
        return self.g.size

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.H @ x + self.g @ x)

    def gradient(self, x) -> np.ndarray:
        return self.H @ x + self.g


@dataclass(frozen=True)
class TensionSolution:
    T_ref: np.ndarray
    objective: float
    kkt_residual: float
    active_set: frozenset
    iterations: int
    achieved_torque: np.ndarray | None = None
    torque_residual: float | None = None
    converged: bool = True


def kkt_residual(p: QPProblem, x) -> float:
    """Largest violation of the box KKT conditions at ``x``."""
    grad = p.gradient(x)
    at_lower = x <= p.lower
    at_upper = x >= p.upper
    viol = np.abs(grad)
    viol = np.where(at_lower & ~at_upper, np.maximum(0.0, -grad), viol)
    viol = np.where(at_upper & ~at_lower, np.maximum(0.0, grad), viol)
    viol = np.where(at_lower & at_upper, 0.0, viol)
    return float(viol.max()) if viol.size else 0.0


class BoxQPSolver:
    """Primal active-set solver for strictly convex box-constrained QPs.

    Each iteration factors the free block of ``H`` with Cholesky. If the
    active-set loop does not terminate within ``max_iter`` iterations, a
    projected-gradient phase restarts it from a better active set.
    """

    def __init__(self, tol: float = DEFAULT_TOL, max_iter: int | None = None):
        if not tol > 0:
            raise ContractError(f"tol must be positive, got {tol}")
        self.tol = tol
        self.max_iter = max_iter
        self._x = None
        self._state = None

    def solve(self, p: QPProblem) -> TensionSolution:
        m = p.size
        try:
            cho_factor(p.H)
        except LinAlgError:
            raise NumericalError("H is not positive definite") from None
        max_iter = self.max_iter or 10 * m + 20
        # state: -1 at lower, +1 at upper, 0 free
        x = np.clip(self._unconstrained(p), p.lower, p.upper)
        state = np.where(x <= p.lower, -1, np.where(x >= p.upper, 1, 0))
        state[p.lower == p.upper] = -1
        x, state, iters, done = self._active_set(p, x, state, max_iter)
        if not done:
            x = self._projected_gradient(p, x)
            state = np.where(x <= p.lower, -1, np.where(x >= p.upper, 1, 0))
            x, state, more, done = self._active_set(p, x, state, max_iter)
            iters += more
        self._x, self._state = x, state
        active = frozenset(int(i) for i in np.flatnonzero(state != 0))
        return TensionSolution(
            T_ref=x,
            objective=p.objective(x),
            kkt_residual=kkt_residual(p, x),
            active_set=active,
            iterations=iters,
            converged=done,
        )

    @staticmethod
    def _unconstrained(p: QPProblem) -> np.ndarray:
        return cho_solve(cho_factor(p.H), -p.g)

    def _subproblem(self, p: QPProblem, x, free) -> np.ndarray:
        fixed = ~free
        rhs = -(p.g[free] + p.H[np.ix_(free, fixed)] @ x[fixed])
        try:
            factor = cho_factor(p.H[np.ix_(free, free)])
        except LinAlgError:
            raise NumericalError("free block of H is not positive definite") from None
        xf = cho_solve(factor, rhs)
        # one step of iterative refinement
        xf += cho_solve(factor, rhs - p.H[np.ix_(free, free)] @ xf)
        return xf

    def _active_set(self, p: QPProblem, x, state, max_iter):
        x = x.copy()
        state = state.copy()
        for it in range(1, max_iter + 1):
            free = state == 0
            if free.any():
                target = self._subproblem(p, x, free)
                lo, hi = p.lower[free], p.upper[free]
                if np.all(target >= lo) and np.all(target <= hi):
                    x[free] = target
                else:
                    step = target - x[free]
                    alpha = np.ones_like(step)
                    down, up = step < 0, step > 0
                    alpha[down] = (lo[down] - x[free][down]) / step[down]
                    alpha[up] = (hi[up] - x[free][up]) / step[up]
                    alpha = np.clip(alpha, 0.0, 1.0)
                    k = int(np.argmin(alpha))
                    idx = np.flatnonzero(free)
                    x[free] = np.clip(x[free] + alpha[k] * step, lo, hi)
                    blocked = idx[k]
                    if step[k] < 0:
                        x[blocked], state[blocked] = p.lower[blocked], -1
                    else:
                        x[blocked], state[blocked] = p.upper[blocked], 1
                    continue
            grad = p.gradient(x)
            mult = np.where(state == -1, grad, np.where(state == 1, -grad, np.inf))
            mult[p.lower == p.upper] = np.inf
            k = int(np.argmin(mult))
            if mult[k] >= -self.tol:
                return x, state, it, True
            state[k] = 0
        return x, state, max_iter, False

    def _projected_gradient(self, p: QPProblem, x, iters: int = 5000) -> np.ndarray:
        step = 1.0 / np.linalg.eigvalsh(p.H)[-1]
        for _ in range(iters):
            x_new = np.clip(x - step * p.gradient(x), p.lower, p.upper)
            if np.max(np.abs(x_new - x)) < 1e-14 * max(1.0, np.abs(x).max()):
                return x_new
            x = x_new
        return x


def solve_box_qp(p: QPProblem, tol: float = DEFAULT_TOL) -> TensionSolution:
    """Global minimizer of ``1/2 x^T H x + g^T x`` over ``lower <= x <= upper``."""
    return BoxQPSolver(tol).solve(p)


def _lambda_diag(Lambda, n: int) -> np.ndarray:
    L = np.asarray(Lambda, dtype=float)
    if L.ndim == 0:
        L = np.full(n, float(L))
    elif L.ndim == 2:
        if L.shape != (n, n):
            raise ContractError(f"Lambda must be {n}x{n}, got {L.shape}")
        if np.any(L - np.diag(np.diag(L))):
            raise ContractError("Lambda must be diagonal")
        L = np.diag(L).copy()
    if L.shape != (n,):
        raise ContractError(f"Lambda must have {n} diagonal entries")
    if np.any(L < 0):
        raise DomainError("Lambda entries must be non-negative")
    return L


def tension_problem(tau_ref, G, Lambda=DEFAULT_LAMBDA, T_min=DEFAULT_T_MIN, T_max=DEFAULT_T_MAX) -> QPProblem:
    G = np.atleast_2d(np.asarray(G, dtype=float))
    m, n = G.shape
    tau = np.asarray(tau_ref, dtype=float).reshape(-1)
    if tau.shape != (n,):
        raise ContractError(f"tau_ref has {tau.size} entries, G has {n} joints")
    lam = _lambda_diag(Lambda, n)
    lower = np.broadcast_to(np.asarray(T_min, dtype=float), (m,)).copy()
    upper = np.broadcast_to(np.asarray(T_max, dtype=float), (m,)).copy()
    if np.any(lower < 0):
        raise DomainError("T_min must be non-negative")
    H = 2.0 * ((G * lam) @ G.T + np.eye(m))
    g = 2.0 * (G * lam) @ tau
    return QPProblem(H, g, lower, upper)


def _solve(tau_ref, G_eff, Lambda, T_min, T_max, tol) -> TensionSolution:
    p = tension_problem(tau_ref, G_eff, Lambda, T_min, T_max)
    sol = solve_box_qp(p, tol)
    G_eff = np.atleast_2d(np.asarray(G_eff, dtype=float))
    tau = np.asarray(tau_ref, dtype=float).reshape(-1)
    lam = _lambda_diag(Lambda, G_eff.shape[1])
    T = sol.T_ref
    err = tau + G_eff.T @ T
    achieved = -(G_eff.T @ T)
    return TensionSolution(
        T_ref=T,
        objective=float(err @ (lam * err) + T @ T),
        kkt_residual=sol.kkt_residual,
        active_set=sol.active_set,
        iterations=sol.iterations,
        achieved_torque=achieved,
        torque_residual=float(np.linalg.norm(err)),
        converged=sol.converged,
    )


def solve_tension(tau_ref, G, Lambda=DEFAULT_LAMBDA, T_min=DEFAULT_T_MIN, T_max=DEFAULT_T_MAX,
                  tol: float = DEFAULT_TOL) -> TensionSolution:
    """Tension distribution ignoring pulley losses."""
    return _solve(tau_ref, G, Lambda, T_min, T_max, tol)


def solve_tension_compensated(tau_ref, G, eta: EtaMatrix | np.ndarray, Lambda=DEFAULT_LAMBDA,
                              T_min=DEFAULT_T_MIN, T_max=DEFAULT_T_MAX,
                              tol: float = DEFAULT_TOL) -> TensionSolution:
    """Tension distribution with the moment arms attenuated by ``eta``.

    ``achieved_torque`` is the torque predicted under that attenuation.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    values = eta.values if isinstance(eta, EtaMatrix) else np.asarray(eta, dtype=float)
    if values.shape != G.shape:
        raise ContractError(f"eta {values.shape} does not match G {G.shape}")
    return _solve(tau_ref, values * G, Lambda, T_min, T_max, tol)
