"""Bounded weighted nonlinear least squares (Levenberg-Marquardt).

Bounds are handled by smooth reparametrization: parameters with only a lower
(upper) bound are mapped through an exponential, parameters with both bounds
through a logistic, unbounded ones are left alone.  The Jacobian is taken by
central differences in the transformed space; the reported covariance is in
the natural parameter space.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

MAX_ITER = 500
RTOL_CHI2 = 1e-9
STEP_TOL = 1e-10
LAMBDA0 = 1e-3
LAMBDA_DOWN = 0.3
LAMBDA_UP = 2.0
COND_LIMIT = 1e14


class FitError(RuntimeError):
    pass


class SingularMatrixError(FitError):
    def __init__(self, message, condition):
        super().__init__(f"{message} (condition number {condition:.3g})")
        self.condition = condition


@dataclass
class Parameter:
    name: str
    value: float
    lower: float = -np.inf
    upper: float = np.inf
    fixed: bool = False

    def __post_init__(self):
        self.value = float(self.value)
        if not self.lower < self.upper:
            raise ValueError(f"{self.name}: bounds must satisfy lower < upper")
        if self.fixed:
            return
        if not self.lower < self.value < self.upper:
            raise ValueError(
                f"{self.name}: initial value {self.value} must lie strictly inside "
                f"({self.lower}, {self.upper})"
            )

    @property
    def transform(self):
        lo, hi = np.isfinite(self.lower), np.isfinite(self.upper)
        if lo and hi:
            return "logistic"
        if lo:
            return "log"
        if hi:
            return "neglog"
        return "none"

    def to_internal(self, p):
        if self.transform == "logistic":
            z = (p - self.lower) / (self.upper - self.lower)
            return float(np.log(z / (1.0 - z)))
        if self.transform == "log":
            return float(np.log(p - self.lower))
        if self.transform == "neglog":
            return float(np.log(self.upper - p))
        return float(p)

    def to_external(self, u):
        if self.transform == "logistic":
            # split by sign so exp never overflows
            z = 1.0 / (1.0 + np.exp(-u)) if u >= 0 else np.exp(u) / (1.0 + np.exp(u))
            return self.lower + (self.upper - self.lower) * z
        if self.transform == "log":
            return self.lower + np.exp(u)
        if self.transform == "neglog":
            return self.upper - np.exp(u)
        return u


@dataclass
class FitProblem:
    """Minimize sum w (y - model(values, x))^2 over the free parameters.

    ``model`` receives a ``{name: value}`` dict and the abscissa array.
    """

    model: Callable
    x: np.ndarray
    y: np.ndarray
    weights: np.ndarray
    parameters: list

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if not (len(self.x) == self.y.size == self.weights.size):
            raise ValueError("x, y and weights must have equal length")
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite and non-negative")
        names = [p.name for p in self.parameters]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")


@dataclass
class FitResult:
    names: list
    free: list
    values: dict
    errors: dict
    covariance: np.ndarray
    chi2: float
    dof: int
    converged: bool
    iterations: int
    history: list = field(default_factory=list)
    message: str = ""
    condition: float = float("nan")
    derived: dict = field(default_factory=dict)

    @property
    def reduced_chi2(self):
        return self.chi2 / self.dof if self.dof > 0 else float("nan")

    def correlation(self, a, b):
        i, j = self.free.index(a), self.free.index(b)
        c = self.covariance
        return c[i, j] / np.sqrt(c[i, i] * c[j, j])

    def summary(self, names=None):
        parts = []
        for name in names or self.names:
            parts.append(f"{name} = {self.values[name]:.6g} +/- {self.errors[name]:.2g}")
        return ", ".join(parts)


class _Objective:
    def __init__(self, problem):
        self.problem = problem
        self.free = [p for p in problem.parameters if not p.fixed]
        self.fixed = {p.name: p.value for p in problem.parameters if p.fixed}
        self.sqrt_w = np.sqrt(problem.weights)

    def values(self, u):
        vals = dict(self.fixed)
        for par, ui in zip(self.free, u):
            vals[par.name] = par.to_external(ui)
        return vals

    def residuals(self, u):
        p = self.problem
        pred = np.asarray(p.model(self.values(u), p.x), dtype=float)
        if pred.shape != p.y.shape:
            raise FitError(f"model returned shape {pred.shape}, expected {p.y.shape}")
        return self.sqrt_w * (p.y - pred)

    def jacobian(self, u):
        """d(residuals)/du by central differences."""
        cols = []
        for i in range(u.size):
            h = max(1e-6 * abs(u[i]), 1e-9)
            up, dn = u.copy(), u.copy()
            up[i] += h
            dn[i] -= h
            cols.append((self.residuals(up) - self.residuals(dn)) / (2.0 * h))
        return np.column_stack(cols) if cols else np.zeros((self.problem.y.size, 0))


def least_squares(problem, max_iter=MAX_ITER):
    """Levenberg-Marquardt fit of a :class:`FitProblem`.

    Raises :class:`SingularMatrixError` if the normal matrix at the optimum
    cannot be inverted; a fit that hits ``max_iter`` is returned with
    ``converged=False``.
    """
    obj = _Objective(problem)
    n_free = len(obj.free)
    dof = problem.y.size - n_free
    if dof < 1:
        raise FitError(f"underdetermined fit: {problem.y.size} points for {n_free} free parameters")

    u = np.array([p.to_internal(p.value) for p in obj.free], dtype=float)
    r = obj.residuals(u)
    if not np.all(np.isfinite(r)):
        raise FitError("model is not finite at the initial parameters")
    chi2 = float(r @ r)
    history = [chi2]
    lam = LAMBDA0
    converged = False
    message = "iteration limit reached"
    iterations = 0
    jac = obj.jacobian(u) if n_free else None

    while iterations < max_iter and n_free:
        iterations += 1
        a = jac.T @ jac
        g = jac.T @ r
        diag = np.diag(a).copy()
        diag[diag <= 0] = max(diag.max(), 1.0) * 1e-12
        try:
            step = np.linalg.solve(a + lam * np.diag(diag), -g)
        except np.linalg.LinAlgError:
            lam *= LAMBDA_UP
            continue
        if np.linalg.norm(step) < STEP_TOL:
            converged, message = True, "step below tolerance"
            break
        u_new = u + step
        r_new = obj.residuals(u_new)
        chi2_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else np.inf
        if chi2_new <= chi2:
            decrease = chi2 - chi2_new
            u, r, chi2 = u_new, r_new, chi2_new
            history.append(chi2)
            lam *= LAMBDA_DOWN
            if decrease <= RTOL_CHI2 * chi2 or chi2 == 0.0:
                converged, message = True, "relative chi2 decrease below tolerance"
                break
            jac = obj.jacobian(u)
        else:
            lam *= LAMBDA_UP
    if not n_free:
        converged, message = True, "no free parameters"

    values = obj.values(u)
    names = [p.name for p in problem.parameters]
    free_names = [p.name for p in obj.free]
    cov, cond = _covariance(obj, u, chi2, dof)
    errors = {n: 0.0 for n in names}
    for i, n in enumerate(free_names):
        errors[n] = float(np.sqrt(max(cov[i, i], 0.0)))
    return FitResult(
        names=names,
        free=free_names,
        values={n: float(values[n]) for n in names},
        errors=errors,
        covariance=cov,
        chi2=chi2,
        dof=dof,
        converged=converged,
        iterations=iterations,
        history=history,
        message=message,
        condition=cond,
    )


def natural_jacobian(obj, u):
    """d(residuals)/dp in natural parameters at internal point u.

    Differenced directly in p rather than through the transforms, so a
    parameter sitting on a bound (where dp/du vanishes) keeps its
    sensitivity; one-sided differences are used next to a bound.
    """
    base = obj.values(u)
    p = obj.problem
    cols = []
    for par in obj.free:
        x0 = base[par.name]
        h = max(1e-6 * abs(x0), 1e-9)
        lo, hi = x0 - h, x0 + h
        if lo < par.lower:
            lo = x0
        if hi > par.upper:
            hi = x0
        if hi == lo:
            cols.append(np.zeros(p.y.size))
            continue
        up, dn = dict(base), dict(base)
        up[par.name], dn[par.name] = hi, lo
        f_up = np.asarray(p.model(up, p.x), dtype=float)
        f_dn = np.asarray(p.model(dn, p.x), dtype=float)
        cols.append(-obj.sqrt_w * (f_up - f_dn) / (hi - lo))
    return np.column_stack(cols) if cols else np.zeros((p.y.size, 0))


def normal_matrix(obj, u):
    """J^T W J in natural parameter space at internal point u."""
    jac_p = natural_jacobian(obj, u)
    return jac_p.T @ jac_p


def _covariance(obj, u, chi2, dof):
    n = len(obj.free)
    if n == 0:
        return np.zeros((0, 0)), 1.0
    a = normal_matrix(obj, u)
    d = np.diag(a)
    if not np.all(np.isfinite(a)) or np.any(d <= 0):
        bad = [p.name for p, di in zip(obj.free, d) if not di > 0]
        raise SingularMatrixError(f"normal matrix is singular; no sensitivity to {bad}", np.inf)
    s = 1.0 / np.sqrt(d)
    scaled = a * np.outer(s, s)
    cond = float(np.linalg.cond(scaled))
    if not cond < COND_LIMIT:
        raise SingularMatrixError("normal matrix is numerically singular", cond)
    cov = np.linalg.inv(scaled) * np.outer(s, s)
    cov = 0.5 * (cov + cov.T) * (chi2 / dof)
    return cov, cond
