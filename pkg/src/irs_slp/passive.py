"""Passive-transmitter designs: per-symbol-vector reflection optimization
for transmit power minimization and for QoS balancing under a power budget.

Every strategy solves the Omega**K independent subproblems and reports the
exact (unsmoothed) weighted margins; coefficient rows are normalized before
solving, which makes the designs exactly invariant to uniform scaling of
the QoS requirements.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import discrete, manifold
from .geometry import SymbolBook, build_coefficients_standalone
from ._parallel import parallel_map
from .units import watts_to_dbm


def parse_strategy(strategy: str) -> tuple[str, Optional[int]]:
    """Split 'continuous' / 'quantize-3' / 'bnb-1' / 'heuristic-2' into
    (kind, bits)."""
    if strategy == "continuous":
        return "continuous", None
    kind, _, bits = strategy.partition("-")
    if kind not in ("quantize", "bnb", "heuristic") or not bits.isdigit():
        raise ValueError(f"unknown strategy {strategy!r}")
    return kind, int(bits)


@dataclass
class PassiveOptions:
    rcg: manifold.RcgOptions = field(default_factory=manifold.RcgOptions)
    n_starts: int = 1
    seed: int = 0
    threads: int = 1
    bnb_node_budget: int = 200_000


@dataclass
class PassiveDesignResult:
    reflections: np.ndarray       # (Omega**K, N) unit-modulus rows
    margin_t: float               # min over (m, k) weighted margin at unit power
    min_power: float              # 1 / margin_t**2 (inf when infeasible)
    per_m_margins: np.ndarray     # (Omega**K,)
    per_mk_margins: np.ndarray    # (Omega**K, K)
    feasible: bool
    strategy: str
    iterations: int
    mode: str = "power-min"
    budget_power: Optional[float] = None


def _solve_subproblem(bundle, strategy_kind, bits, m, opts: PassiveOptions):
    """One symbol-vector subproblem on a row-normalized bundle.  Returns
    (theta, per-row margins, accepted RCG iterations)."""
    scale = bundle.max_row_norm()
    if scale == 0.0:
        raise ValueError("all coefficient rows are zero; channels are degenerate")
    scaled = bundle.scaled(1.0 / scale)
    best_theta, best_val, iters = None, np.inf, 0
    for start in range(opts.n_starts):
        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence([opts.seed, m, start])))
        theta0 = manifold.random_circle_point(scaled.n_vars, rng)
        res = manifold.rcg_minimize(scaled, theta0, opts.rcg)
        iters += res.iterations
        true_val = scaled.max_margin(res.theta)
        if true_val < best_val:
            best_val, best_theta = true_val, res.theta
    if strategy_kind == "quantize":
        best_theta = discrete.quantize(best_theta, bits)
    elif strategy_kind == "heuristic":
        best_theta = discrete.coordinate_refine(best_theta, scaled, bits)
    elif strategy_kind == "bnb":
        inc = discrete.coordinate_refine(best_theta, scaled, bits)
        best_theta = discrete.branch_and_bound(
            scaled, bits, node_budget=opts.bnb_node_budget, incumbent=inc).theta
    f, g = bundle.rows_fg(best_theta)
    return best_theta, -np.maximum(f, g), iters


def design_power_min(channels: np.ndarray, book: SymbolBook, alpha,
                     strategy: str = "continuous",
                     opts: PassiveOptions | None = None,
                     psi: float | None = None) -> PassiveDesignResult:
    """Minimize transmit power subject to per-user weighted CI margins.

    channels: (K, N) equivalent per-user channels (rows h_k).  The returned
    margin_t is the minimum weighted margin at unit power; the minimum
    feasible power is 1/margin_t**2.  margin_t <= 0 flags a symbol vector
    that no reflection can deliver at any power.
    """
    opts = opts or PassiveOptions()
    channels = np.atleast_2d(np.asarray(channels))
    if np.any(np.all(channels == 0, axis=1)):
        raise ValueError("a user has an all-zero channel row")
    k = channels.shape[0]
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (k,)).copy()
    psi = book.half_angle if psi is None else psi
    kind, bits = parse_strategy(strategy)

    def run(m):
        bundle = build_coefficients_standalone(channels, book.vectors[m], alpha, psi, m=m)
        return _solve_subproblem(bundle, kind, bits, m, opts)

    results = parallel_map(run, range(book.n_vectors), threads=opts.threads)
    reflections = np.array([r[0] for r in results])
    per_mk = np.array([r[1] for r in results])
    iterations = sum(r[2] for r in results)
    per_m = per_mk.min(axis=1)
    margin_t = float(per_m.min())
    feasible = margin_t > 0
    return PassiveDesignResult(
        reflections=reflections,
        margin_t=margin_t,
        min_power=1.0 / margin_t ** 2 if feasible else np.inf,
        per_m_margins=per_m,
        per_mk_margins=per_mk,
        feasible=feasible,
        strategy=strategy,
        iterations=iterations,
    )


def design_qos_balance(channels: np.ndarray, book: SymbolBook, rho,
                       power: float, strategy: str = "continuous",
                       opts: PassiveOptions | None = None,
                       psi: float | None = None) -> PassiveDesignResult:
    """Maximize the minimum weighted CI margin under the power budget.

    Reduces to the power-minimization design with alpha_k = 1/(rho_k
    sqrt(P)); the reported margin_t is then exactly the minimum weighted
    margin achieved at transmit power P, with identical reflections.
    """
    if power <= 0:
        raise ValueError("power budget must be positive")
    k = np.atleast_2d(np.asarray(channels)).shape[0]
    rho = np.broadcast_to(np.asarray(rho, dtype=float), (k,))
    if np.any(rho <= 0):
        raise ValueError("all weights rho_k must be positive")
    alpha = 1.0 / (rho * np.sqrt(power))
    result = design_power_min(channels, book, alpha, strategy, opts, psi)
    return replace(result, mode="qos-balance", budget_power=float(power))


def margins_to_csv(result: PassiveDesignResult, path) -> None:
    """Per-(symbol vector, user) weighted margins as CSV (m, k, margin)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["m", "k", "margin"])
        for m in range(result.per_mk_margins.shape[0]):
            for k in range(result.per_mk_margins.shape[1]):
                writer.writerow([m, k, f"{result.per_mk_margins[m, k]:.12g}"])


def summary_to_json(result: PassiveDesignResult, path) -> None:
    summary = {
        "mode": result.mode,
        "strategy": result.strategy,
        "feasible": result.feasible,
        "margin_t": result.margin_t,
        "min_power_dbm": (float(watts_to_dbm(result.min_power))
                          if result.feasible else None),
        "budget_power_dbm": (float(watts_to_dbm(result.budget_power))
                             if result.budget_power else None),
        "iterations": result.iterations,
    }
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
