"""Complex-circle manifold machinery and the Riemannian conjugate gradient
solver for the log-sum-exp smoothed max objective.

The search space is the product of unit circles {theta : |theta(n)| = 1}.
Gradients use the packed-real convention grad(n) = d/dRe + j d/dIm, so the
directional derivative along a complex step d is Re{grad^H d}.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import csv

import numpy as np

from .geometry import CoefficientBundle


class RetractionError(ArithmeticError):
    """theta + step has a zero entry; the caller should shrink the step."""


@dataclass
class RcgOptions:
    """Solver knobs.  smoothing_eps=None picks 0.05 * max row norm of the
    bundle at solve time."""

    smoothing_eps: float | None = None
    max_iters: int = 500
    grad_tol: float = 1e-6
    armijo_shrink: float = 0.5
    armijo_slope: float = 1e-4
    initial_step: float = 1.0

    def __post_init__(self):
        if self.smoothing_eps is not None and self.smoothing_eps <= 0:
            raise ValueError("smoothing_eps must be positive")
        if self.max_iters < 0 or self.grad_tol <= 0 or self.initial_step <= 0:
            raise ValueError("max_iters, grad_tol and initial_step must be positive")
        if not (0 < self.armijo_shrink < 1 and 0 < self.armijo_slope < 1):
            raise ValueError("Armijo parameters must lie in (0, 1)")


@dataclass
class RcgResult:
    theta: np.ndarray
    value: float                 # smoothed objective at theta
    trace: list                  # (iteration, value, grad_norm, step)
    iterations: int              # accepted steps
    converged: bool


def random_circle_point(n: int, rng: np.random.Generator) -> np.ndarray:
    return np.exp(1j * rng.uniform(0.0, 2 * np.pi, size=n))


def lse_objective(theta: np.ndarray, bundle: CoefficientBundle, eps: float):
    """Smoothed objective eps*log sum_i [exp(f_i/eps) + exp(g_i/eps)] and its
    Euclidean gradient; overflow-safe via max subtraction."""
    f, g = bundle.rows_fg(theta)
    m0 = max(f.max(), g.max())
    pf = np.exp((f - m0) / eps)
    pg = np.exp((g - m0) / eps)
    s = pf.sum() + pg.sum()
    value = m0 + eps * np.log(s)
    grad = (bundle.b_rows.conj().T @ pf + bundle.c_rows.conj().T @ pg) / s
    return float(value), grad


def project_tangent(theta: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Project g onto the tangent space at theta: g - Re{g . theta*} . theta."""
    if theta.shape != g.shape:
        raise ValueError("length mismatch")
    return g - (g * theta.conj()).real * theta


def retract(theta: np.ndarray, step: np.ndarray) -> np.ndarray:
    """Map theta + step back onto the unit circles by normalizing entrywise."""
    cand = theta + step
    mags = np.abs(cand)
    if np.any(mags == 0.0):
        raise RetractionError("retraction hit a zero-magnitude entry")
    return cand / mags


def _inner(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.real(np.vdot(x, y)))


def rcg_minimize(bundle: CoefficientBundle, theta0: np.ndarray,
                 opts: RcgOptions | None = None) -> RcgResult:
    """Riemannian conjugate gradient descent of the smoothed max objective.

    Polak-Ribiere conjugacy (clamped at zero for automatic restarts) with
    tangent-projection vector transport, Armijo backtracking, and
    convergence on the Riemannian gradient norm.  The accepted-iterate
    objective is monotone non-increasing; the best iterate is returned.
    """
    opts = opts or RcgOptions()
    eps = opts.smoothing_eps
    if eps is None:
        eps = 0.05 * max(bundle.max_row_norm(), 1e-300)
    theta = np.asarray(theta0, dtype=complex).copy()
    val, eg = lse_objective(theta, bundle, eps)
    rg = project_tangent(theta, eg)
    gnorm = float(np.linalg.norm(rg))
    d = -rg
    trace = [(0, val, gnorm, 0.0)]
    accepted = 0
    step_prev = opts.initial_step

    for _ in range(opts.max_iters):
        if gnorm <= opts.grad_tol:
            break
        slope = _inner(rg, d)
        if slope >= 0:          # stale conjugate direction: restart
            d = -rg
            slope = -gnorm ** 2
        step = min(opts.initial_step, step_prev / opts.armijo_shrink)
        cand = cval = ceg = None
        for _bt in range(60):
            try:
                cand = retract(theta, step * d)
            except RetractionError:
                step *= opts.armijo_shrink
                continue
            cval, ceg = lse_objective(cand, bundle, eps)
            if cval <= val + opts.armijo_slope * step * slope:
                break
            step *= opts.armijo_shrink
        else:
            if not np.array_equal(d, -rg):
                d = -rg
                step_prev = opts.initial_step
                continue
            break               # no descent along -grad: numerically critical

        rg_new = project_tangent(cand, ceg)
        denom = _inner(rg, rg)
        if denom > 0:
            transported = project_tangent(cand, rg)
            eta = max(0.0, _inner(rg_new, rg_new - transported) / denom)
        else:
            eta = 0.0
        d = -rg_new + eta * project_tangent(cand, d)
        theta, val, rg = cand, cval, rg_new
        gnorm = float(np.linalg.norm(rg))
        accepted += 1
        step_prev = step
        trace.append((accepted, val, gnorm, step))

    return RcgResult(theta=theta, value=val, trace=trace,
                     iterations=accepted, converged=gnorm <= opts.grad_tol)


def save_trace_csv(trace, path) -> None:
    """Dump a solver trace as CSV (iteration, value, grad_norm, step)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "value", "grad_norm", "step"])
        writer.writerows(trace)
