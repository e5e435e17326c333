"""Joint symbol-level precoding and reflection design: convex minimum-norm
precoder subproblems, the stacked two-state reflection subproblem, the
alternating power-minimization and QoS-balancing loops, and the closed-form
power allocation that equalizes per-symbol-vector QoS.

The precoder subproblem is a strictly convex QP over the 2M real precoder
coordinates, solved on its nonnegative dual by accelerated projected
gradient with an active-set polish, certified by KKT residuals.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import discrete, manifold
from ._parallel import parallel_map
from .channel import ChannelSet, compound_channel_joint
from .geometry import SymbolBook, build_coefficients_joint
from .manifold import RcgOptions
from .units import watts_to_dbm


class InfeasibleDesignError(RuntimeError):
    """The constraint system of a design stage admits no solution."""


@dataclass
class JointOptions:
    # the reflection stage needs well-converged smoothed solves: underdone
    # inner iterations shrink the outer steps and stall the alternation
    rcg: RcgOptions = field(default_factory=lambda: RcgOptions(max_iters=2000,
                                                               grad_tol=1e-5))
    seed: int = 0
    threads: int = 1
    qp_tol: float = 1e-8
    qp_max_iter: int = 200_000
    max_outer: int = 30
    rel_tol: float = 1e-4
    # candidate reflection updates are kept only when they move the loop
    # objective by this relative amount; the alternation tail otherwise
    # crawls at ~1e-3 per round indefinitely
    min_improvement: float = 1e-3
    init_retries: int = 20
    t0: float = 1.0


@dataclass
class PrecoderBook:
    precoders: np.ndarray        # (Omega**K, M)

    @property
    def total_power(self) -> float:
        return float((np.abs(self.precoders) ** 2).sum())

    @property
    def avg_power(self) -> float:
        return self.total_power / self.precoders.shape[0]


@dataclass
class JointDesignResult:
    precoders: PrecoderBook
    theta0: np.ndarray
    theta1: np.ndarray
    trace: list
    feasible: bool
    converged: bool
    iterations: int
    mode: str
    with_sir: bool
    avg_power: Optional[float] = None
    balanced_t: Optional[float] = None
    budget_power: Optional[float] = None


# ----------------------------------------------------------------------
# minimum-norm QP:  min ||z||^2  s.t.  A z >= rhs
# ----------------------------------------------------------------------

def _kkt_residual(An, bn, lam):
    z = An.T @ lam / 2.0
    slack = An @ z - bn
    ref = max(1.0, float(np.abs(bn).max(initial=0.0)))
    primal = max(0.0, float(-slack.min(initial=0.0)))
    comp = float(np.abs(lam * slack).max(initial=0.0))
    return max(primal, comp) / ref, z, slack


def _active_set_polish(An, bn, lam):
    """Iterative active-set cleanup seeded by the current dual estimate:
    exact equality-KKT solves with drop-most-negative / add-most-violated
    pivoting, Lawson-Hanson style."""
    ref = max(1.0, float(np.abs(bn).max(initial=0.0)))
    _, z, slack = _kkt_residual(An, bn, lam)
    active = set(np.flatnonzero(
        (lam > 1e-10 * max(1.0, lam.max(initial=0.0)))
        | (slack < 1e-7 * ref)).tolist())
    best = lam
    best_kkt, _, _ = _kkt_residual(An, bn, lam)
    for _ in range(2 * An.shape[0] + 4):
        if not active:
            cand = np.zeros_like(lam)
        else:
            idx = np.fromiter(sorted(active), dtype=int)
            Aact = An[idx]
            lam_act, *_ = np.linalg.lstsq(Aact @ Aact.T / 2.0, bn[idx],
                                          rcond=None)
            neg = lam_act < -1e-12 * ref
            if np.any(neg):
                active.discard(int(idx[int(np.argmin(lam_act))]))
                continue
            cand = np.zeros_like(lam)
            cand[idx] = np.maximum(lam_act, 0.0)
        kkt, _, slack = _kkt_residual(An, bn, cand)
        if kkt < best_kkt:
            best, best_kkt = cand, kkt
        worst = int(np.argmin(slack))
        if slack[worst] < -1e-12 * ref and worst not in active:
            active.add(worst)
            continue
        break
    return best


def min_norm_qp(A: np.ndarray, rhs: np.ndarray, tol: float = 1e-8,
                max_iter: int = 200_000):
    """Minimum-Euclidean-norm point of {z : A z >= rhs}.

    Accelerated projected gradient on the nonnegative dual with periodic
    active-set polishing.  Returns (z, lam, info) with info carrying the
    final KKT residual; raises InfeasibleDesignError when the dual diverges
    (empty feasible set).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    rhs = np.asarray(rhs, dtype=float).ravel()
    nc = A.shape[0]
    norms = np.linalg.norm(A, axis=1)
    dead = norms < 1e-300
    if np.any(dead & (rhs > 0)):
        idx = int(np.flatnonzero(dead & (rhs > 0))[0])
        raise InfeasibleDesignError(f"constraint {idx} has a zero row but positive bound")
    keep = ~dead
    An = A[keep] / norms[keep, None]
    bn = rhs[keep] / norms[keep]
    if An.shape[0] == 0:
        return np.zeros(A.shape[1]), np.zeros(nc), {"kkt": 0.0, "iterations": 0}
    # the solution is linear in rhs: normalize its scale so the dual
    # iteration and tolerances are scale-free
    rhs_scale = float(np.abs(bn).max())
    if rhs_scale > 0:
        bn = bn / rhs_scale
    else:
        rhs_scale = 1.0

    Q = An @ An.T / 2.0
    lip = float(np.linalg.eigvalsh(Q).max()) + 1e-15
    lam = np.zeros(An.shape[0])
    y = lam.copy()
    t_acc = 1.0
    diverge_bound = 1e12 * (1.0 + float(np.abs(bn).max()))
    kkt = np.inf
    it = 0
    while it < max_iter:
        it += 1
        grad = Q @ y - bn
        lam_new = np.maximum(y - grad / lip, 0.0)
        if np.dot(y - lam_new, lam_new - lam) > 0:   # adaptive restart
            t_new = 1.0
            y = lam_new
        else:
            t_new = (1.0 + np.sqrt(1.0 + 4.0 * t_acc ** 2)) / 2.0
            y = lam_new + ((t_acc - 1.0) / t_new) * (lam_new - lam)
        lam, t_acc = lam_new, t_new
        if it % 25 == 0 or it == max_iter:
            kkt, _, _ = _kkt_residual(An, bn, lam)
            if kkt <= tol:
                break
            if it % 200 == 0:
                polished = _active_set_polish(An, bn, lam)
                pk, _, _ = _kkt_residual(An, bn, polished)
                if pk < kkt:
                    lam, kkt = polished, pk
                    if kkt <= tol:
                        break
            if np.linalg.norm(lam) > diverge_bound:
                worst = int(np.argmax(lam))
                raise InfeasibleDesignError(
                    f"dual divergence: constraint system infeasible "
                    f"(largest multiplier on normalized row {worst})")
    kkt, z, _ = _kkt_residual(An, bn, lam)
    if kkt > tol:
        raise RuntimeError(f"QP did not reach KKT residual {tol:g} "
                           f"(got {kkt:.3g} after {it} iterations)")
    lam_full = np.zeros(nc)
    lam_full[keep] = lam * rhs_scale / norms[keep]
    return z * rhs_scale, lam_full, {"kkt": kkt, "iterations": it}


def precoder_constraints(compound_pir: np.ndarray, s_m: np.ndarray, alpha,
                         psi: float, compound_sir: Optional[np.ndarray],
                         beta: Optional[float]):
    """Real constraint rows A z >= rhs of the per-symbol-vector precoder
    problem, z = [Re x; Im x].  Returns (A, rhs, labels)."""
    compound_pir = np.asarray(compound_pir)
    if compound_pir.ndim == 2:
        compound_pir = compound_pir[:, None, :]
    K, n_states, M = compound_pir.shape
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (K,))
    if np.any(alpha <= 0):
        raise ValueError("alpha_k must be positive")
    s_m = np.asarray(s_m).ravel()
    sp, cp = np.sin(psi), np.cos(psi)
    rows, rhs, labels = [], [], []
    for k in range(K):
        phase = s_m[k].conj() / abs(s_m[k])
        for st in range(n_states):
            r = compound_pir[k, st].conj() * phase     # row of h^H e^{-j angle s}
            re = np.concatenate([r.real, -r.imag])
            im = np.concatenate([r.imag, r.real])
            for sgn in (1.0, -1.0):
                rows.append(sp * re - sgn * cp * im)
                rhs.append(alpha[k])
                labels.append(("pir", k, st, int(sgn)))
    if compound_sir is not None:
        if beta is None or beta <= 0:
            raise ValueError("beta must be positive with secondary constraints")
        v0 = np.asarray(compound_sir[0]).conj()
        v1 = np.asarray(compound_sir[1]).conj()
        rows.append(-np.concatenate([v0.real, -v0.imag]))
        rhs.append(beta)
        labels.append(("sir", 0))
        rows.append(np.concatenate([v1.real, -v1.imag]))
        rhs.append(beta)
        labels.append(("sir", 1))
    return np.array(rows), np.array(rhs), labels


def solve_precoder_pm(compound_pir: np.ndarray, s_m: np.ndarray, alpha,
                      psi: float, compound_sir: Optional[np.ndarray] = None,
                      beta: Optional[float] = None, tol: float = 1e-8,
                      max_iter: int = 200_000) -> np.ndarray:
    """Minimum-power precoder meeting the CI margins for every reflection
    state plus the secondary-receiver sign constraints (when present).

    compound_pir: (K, n_states, M) compound channels (or (K, M) for a
    single state); compound_sir: (2, M) or None.
    """
    A, rhs, labels = precoder_constraints(compound_pir, s_m, alpha, psi,
                                          compound_sir, beta)
    try:
        z, _, _ = min_norm_qp(A, rhs, tol=tol, max_iter=max_iter)
    except InfeasibleDesignError as exc:
        raise InfeasibleDesignError(f"precoder stage infeasible: {exc}") from exc
    m = A.shape[1] // 2
    return z[:m] + 1j * z[m:]


# ----------------------------------------------------------------------
# compound channels and exact margin evaluation
# ----------------------------------------------------------------------

def compound_all(channels: ChannelSet, theta0: np.ndarray,
                 theta1: Optional[np.ndarray] = None):
    """Compound channels for every user and reflection state.

    Returns (pir, sir) with pir (K, n_states, M) and sir (n_states, M);
    sir is None when the channel set has no secondary links."""
    states = [theta0] if theta1 is None else [theta0, theta1]
    pir = np.stack([
        channels.direct + (channels.irs_user * th.conj()[None, :]) @ channels.bs_irs.conj()
        for th in states], axis=1)
    sir = None
    if channels.sir_direct is not None:
        sir = np.stack([
            compound_channel_joint(channels.sir_direct, channels.sir_irs,
                                   channels.bs_irs, th)
            for th in states])
    return pir, sir


def eval_joint_margins(X: np.ndarray, channels: ChannelSet, book: SymbolBook,
                       theta0: np.ndarray, theta1: Optional[np.ndarray],
                       psi: Optional[float] = None):
    """Exact CI margins of a joint design.

    Returns (pir_margins, sir_margins): pir (Omega**K, K, n_states) raw CI
    distances, sir (Omega**K, n_states) signed real-part margins (state 0
    is -Re, state 1 is +Re), or None without secondary links."""
    psi = book.half_angle if psi is None else psi
    pir, sir = compound_all(channels, theta0, theta1)
    X = np.atleast_2d(X)
    s_phase = book.vectors.conj() / np.abs(book.vectors)
    n_states = pir.shape[1]
    margins = np.empty((X.shape[0], book.n_users, n_states))
    for st in range(n_states):
        y = (X @ pir[:, st, :].conj().T) * s_phase       # (n_m, K)
        margins[:, :, st] = y.real * np.sin(psi) - np.abs(y.imag) * np.cos(psi)
    sir_margins = None
    if sir is not None:
        y0 = (X @ sir[0].conj()).real
        sir_margins = np.stack([-y0, (X @ sir[1].conj()).real], axis=1)
    return margins, sir_margins


# ----------------------------------------------------------------------
# reflection stage
# ----------------------------------------------------------------------

def solve_reflection(X: np.ndarray, channels: ChannelSet, book: SymbolBook,
                     alpha, beta: Optional[float], psi: float,
                     theta_incumbent: np.ndarray,
                     opts: JointOptions | None = None,
                     with_sir: bool = True,
                     safeguard: bool = True):
    """Improve the stacked reflection vector for fixed precoders.

    Minimizes the exact max of all constraint rows via the smoothed RCG
    solver, warm-started at the incumbent.  With ``safeguard`` the
    incumbent is kept whenever the solver fails to improve the exact
    objective, so the returned margin t never regresses; without it the
    raw smoothed-solver point is returned (the alternating loops use that
    and gate acceptance on their own objective, since at scale the
    minimum-power precoders leave more tight rows than reflection degrees
    of freedom and a never-regress update cannot move at all).

    Returns (theta, t, iterations) with theta of length n_states*N and t
    the minimum weighted margin."""
    opts = opts or JointOptions()
    bundle = build_coefficients_joint(X, channels, book, alpha, beta, psi,
                                      with_sir=with_sir)
    scale = bundle.max_row_norm()
    theta_incumbent = np.asarray(theta_incumbent, dtype=complex)
    if bundle.n_vars == 0 or scale == 0.0:
        t = -bundle.max_margin(theta_incumbent) if bundle.pair_count else np.inf
        return theta_incumbent.copy(), float(t), 0
    scaled = bundle.scaled(1.0 / scale)
    inc_val = scaled.max_margin(theta_incumbent)
    res = manifold.rcg_minimize(scaled, theta_incumbent, opts.rcg)
    new_val = scaled.max_margin(res.theta)
    if not safeguard or new_val <= inc_val:
        theta, val = res.theta, new_val
    else:
        theta, val = theta_incumbent.copy(), inc_val
    return theta, float(-val * scale), res.iterations


def _split_states(theta: np.ndarray, n: int, with_sir: bool):
    if with_sir:
        return theta[:n].copy(), theta[n:].copy()
    return theta.copy(), theta.copy()


# ----------------------------------------------------------------------
# alternating designs
# ----------------------------------------------------------------------

def _solve_precoders(channels, book, alpha, beta, psi, theta, with_sir, opts):
    n = channels.irs_user.shape[1]
    th0, th1 = _split_states(theta, n, with_sir)
    pir, sir = compound_all(channels, th0, th1 if with_sir else None)
    if not with_sir:
        sir = None

    def run(m):
        return solve_precoder_pm(pir, book.vectors[m], alpha, psi,
                                 compound_sir=sir, beta=beta,
                                 tol=opts.qp_tol, max_iter=opts.qp_max_iter)

    X = np.array(parallel_map(run, range(book.n_vectors), threads=opts.threads))
    return X


def _random_theta(n_vars, seed, attempt):
    rng = np.random.Generator(np.random.Philox(
        np.random.SeedSequence([seed, 9001, attempt])))
    return manifold.random_circle_point(n_vars, rng)


def _feasible_init(channels, book, alpha, beta, psi, with_sir, opts,
                   theta_init=None, bits=None):
    n = channels.irs_user.shape[1]
    n_vars = (2 if with_sir else 1) * n
    last_error = None
    for attempt in range(opts.init_retries):
        if theta_init is not None:
            theta = np.asarray(theta_init, dtype=complex)
        else:
            theta = _random_theta(n_vars, opts.seed, attempt)
            if bits is not None:
                theta = discrete.quantize(theta, bits)
        try:
            X = _solve_precoders(channels, book, alpha, beta, psi, theta,
                                 with_sir, opts)
            return theta, X
        except InfeasibleDesignError as exc:
            last_error = exc
            if theta_init is not None:
                break
    raise InfeasibleDesignError(
        f"no feasible initialization found in {opts.init_retries} attempts: "
        f"{last_error}")


def joint_power_min(channels: ChannelSet, book: SymbolBook, alpha,
                    beta: Optional[float] = None, psi: Optional[float] = None,
                    bits: Optional[int] = None,
                    opts: JointOptions | None = None,
                    with_sir: bool = True,
                    theta_init=None) -> JointDesignResult:
    """Alternate precoder and reflection stages to minimize total transmit
    power under per-state CI margins (and secondary sign constraints).

    With ``bits`` set, the reflection vectors are directly quantized each
    outer iteration and the precoders re-solved against the quantized
    surface, so every reported iterate is feasible.  Convergence is a
    relative precoder-stage power change below opts.rel_tol.
    """
    opts = opts or JointOptions()
    psi = book.half_angle if psi is None else psi
    K = book.n_users
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (K,)).copy()
    n = channels.irs_user.shape[1]
    if theta_init is not None and bits is not None:
        theta_init = discrete.quantize(np.asarray(theta_init, dtype=complex), bits)
    theta, X = _feasible_init(channels, book, alpha, beta, psi, with_sir, opts,
                              theta_init, bits=bits)
    power = float((np.abs(X) ** 2).sum())
    trace = [{"iteration": 0, "total_power": power, "reflection_t": None,
              "accepted": True}]
    converged = n == 0
    outer = 0
    for outer in range(1, (opts.max_outer if n else 0) + 1):
        theta_cand, t, _ = solve_reflection(X, channels, book, alpha, beta,
                                            psi, theta, opts, with_sir,
                                            safeguard=False)
        if bits is not None:
            theta_cand = discrete.quantize(theta_cand, bits)
        X_cand = _solve_precoders(channels, book, alpha, beta, psi, theta_cand,
                                  with_sir, opts)
        power_cand = float((np.abs(X_cand) ** 2).sum())
        accepted = power_cand < power * (1.0 - opts.min_improvement)
        trace.append({"iteration": outer, "total_power": min(power_cand, power),
                      "reflection_t": t, "accepted": accepted})
        if not accepted:
            converged = True
            break
        converged = abs(power_cand - power) <= opts.rel_tol * abs(power)
        theta, X, power = theta_cand, X_cand, power_cand
        if converged:
            break
    th0, th1 = _split_states(theta, n, with_sir)
    book_result = PrecoderBook(precoders=X)
    return JointDesignResult(
        precoders=book_result, theta0=th0, theta1=th1, trace=trace,
        feasible=True, converged=converged, iterations=outer,
        mode="power-min", with_sir=with_sir,
        avg_power=book_result.avg_power)


def allocate_power(norms: np.ndarray, t0: float, p_total: float) -> np.ndarray:
    """Power split proportional to the squared reference precoder norms.

    Equalizes t_m = sqrt(p_m) t0 / norms_m across symbol vectors and
    exhausts the budget exactly."""
    norms = np.asarray(norms, dtype=float)
    if p_total <= 0:
        raise ValueError("p_total must be positive")
    if np.any(norms <= 0):
        raise ValueError("zero reference norm: symbol vector unreachable")
    sq = norms ** 2
    return p_total * sq / sq.sum()


def joint_qos_balance(channels: ChannelSet, book: SymbolBook, rho,
                      varrho: float, power: float,
                      psi: Optional[float] = None,
                      bits: Optional[int] = None,
                      opts: JointOptions | None = None,
                      theta_init=None,
                      with_sir: bool = True) -> JointDesignResult:
    """Maximize the minimum weighted QoS under an average power budget.

    Each outer iteration solves the precoder stage in three steps
    (reference minimum-power solves at an arbitrary t0, the closed-form
    power allocation, and rescaling), then improves the reflections with
    weighted margins 1/rho_k and 1/varrho.  The returned balanced_t is the
    exact minimum weighted margin of the final design.
    """
    opts = opts or JointOptions()
    psi = book.half_angle if psi is None else psi
    K = book.n_users
    rho = np.broadcast_to(np.asarray(rho, dtype=float), (K,)).copy()
    if np.any(rho <= 0) or varrho <= 0 or power <= 0:
        raise ValueError("weights and the power budget must be positive")
    n = channels.irs_user.shape[1]
    n_m = book.n_vectors
    p_total = power * n_m
    t0 = opts.t0
    alpha_ref = t0 / rho
    beta_ref = (t0 / varrho) if with_sir else None

    def precoder_stage(theta):
        x_ref = _solve_precoders(channels, book, alpha_ref, beta_ref, psi,
                                 theta, with_sir, opts)
        norms = np.linalg.norm(x_ref, axis=1)
        p = allocate_power(norms, t0, p_total)
        X = x_ref * (np.sqrt(p) / norms)[:, None]
        t_bal = float(t0 * np.sqrt(p_total / (norms ** 2).sum()))
        return X, t_bal

    if theta_init is not None and bits is not None:
        theta_init = discrete.quantize(np.asarray(theta_init, dtype=complex), bits)
    theta, _ = _feasible_init(channels, book, alpha_ref, beta_ref, psi,
                              with_sir, opts, theta_init, bits=bits)
    X, t_bal = precoder_stage(theta)
    trace = [{"iteration": 0, "balanced_t": t_bal, "reflection_t": None,
              "accepted": True}]
    converged = n == 0
    outer = 0
    for outer in range(1, (opts.max_outer if n else 0) + 1):
        theta_cand, t_refl, _ = solve_reflection(
            X, channels, book, 1.0 / rho, 1.0 / varrho if with_sir else None,
            psi, theta, opts, with_sir, safeguard=False)
        if bits is not None:
            theta_cand = discrete.quantize(theta_cand, bits)
        X_cand, t_cand = precoder_stage(theta_cand)
        accepted = t_cand > t_bal * (1.0 + opts.min_improvement)
        trace.append({"iteration": outer, "balanced_t": max(t_cand, t_bal),
                      "reflection_t": t_refl, "accepted": accepted})
        if not accepted:
            converged = True
            break
        converged = abs(t_cand - t_bal) <= opts.rel_tol * abs(t_bal)
        theta, X, t_bal = theta_cand, X_cand, t_cand
        if converged:
            break

    th0, th1 = _split_states(theta, n, with_sir)
    pir_m, sir_m = eval_joint_margins(X, channels, book, th0,
                                      th1 if with_sir else None, psi)
    balanced = float((rho[None, :, None] * pir_m).min())
    if with_sir and sir_m is not None:
        balanced = min(balanced, float((varrho * sir_m).min()))
    book_result = PrecoderBook(precoders=X)
    return JointDesignResult(
        precoders=book_result, theta0=th0, theta1=th1, trace=trace,
        feasible=True, converged=converged, iterations=outer,
        mode="qos-balance", with_sir=with_sir,
        balanced_t=balanced, budget_power=float(power))


# ----------------------------------------------------------------------
# exports
# ----------------------------------------------------------------------

def joint_summary_json(result: JointDesignResult, path) -> None:
    summary = {
        "mode": result.mode,
        "with_sir": result.with_sir,
        "feasible": result.feasible,
        "converged": result.converged,
        "iterations": result.iterations,
        "power_dbm": (float(watts_to_dbm(result.avg_power))
                      if result.avg_power else None),
        "balanced_t": result.balanced_t,
        "budget_power_dbm": (float(watts_to_dbm(result.budget_power))
                             if result.budget_power else None),
    }
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")


def joint_trace_csv(result: JointDesignResult, path) -> None:
    keys = sorted({k for row in result.trace for k in row})
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        writer.writerows(result.trace)


def reflections_to_csv(result: JointDesignResult, path) -> None:
    """Phase-angle table of the two reflection vectors."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "theta0_phase", "theta1_phase"])
        for i in range(result.theta0.shape[0]):
            writer.writerow([i, f"{np.angle(result.theta0[i]):.12g}",
                             f"{np.angle(result.theta1[i]):.12g}"])
