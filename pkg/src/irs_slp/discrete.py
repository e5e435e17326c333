"""Low-resolution reflection design: direct quantization, globally optimal
branch-and-bound over the discrete phase grid, and the coordinate-descent
refinement heuristic.

The B-bit grid holds the 2**B unit-modulus points with phases at integer
multiples of 2*pi/2**B; 0 and 2*pi are identified.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CoefficientBundle


@dataclass(frozen=True)
class PhaseGrid:
    bits: int
    resolution: float       # 2*pi / 2**bits
    points: np.ndarray      # exp(j*resolution*[1..2**bits]); 2*pi == 0


def make_phase_grid(bits: int) -> PhaseGrid:
    if bits < 1:
        raise ValueError("bits must be >= 1")
    delta = 2 * np.pi / 2 ** bits
    return PhaseGrid(bits=bits, resolution=delta,
                     points=np.exp(1j * delta * np.arange(1, 2 ** bits + 1)))


def _grid_candidates(bits: int) -> np.ndarray:
    # canonical phases in [0, 2*pi): same point set as PhaseGrid.points
    delta = 2 * np.pi / 2 ** bits
    return np.exp(1j * delta * np.arange(2 ** bits))


def quantize(theta: np.ndarray, bits: int) -> np.ndarray:
    """Snap each phase to the nearest grid value round(angle/delta)*delta."""
    if bits < 1:
        raise ValueError("bits must be >= 1")
    delta = 2 * np.pi / 2 ** bits
    return np.exp(1j * delta * np.round(np.angle(theta) / delta))


@dataclass
class BnbResult:
    theta: np.ndarray
    value: float
    certified: bool          # False when the node budget ran out
    nodes: int


def branch_and_bound(bundle: CoefficientBundle, bits: int,
                     node_budget: int = 200_000,
                     incumbent: np.ndarray | None = None,
                     max_bits: int = 2) -> BnbResult:
    """Global minimizer of the exact max-margin objective over grid-valued
    theta, by depth-first branch and bound.

    Elements are branched in descending order of their stacked coefficient
    column norm; the bound at a partial assignment lets every unassigned
    element contribute -|row entry| to each f/g row.  An optional on-grid
    incumbent seeds the pruning bound.  If the node budget is exhausted the
    best assignment found so far is returned with certified=False.
    """
    if bits > max_bits or bits < 1:
        raise ValueError(f"branch and bound supports 1..{max_bits} bits, got {bits}")
    n = bundle.n_vars
    cand = _grid_candidates(bits)
    B, C = bundle.b_rows, bundle.c_rows
    w = bundle.offsets_w.real.astype(float)
    z = bundle.offsets_z.real.astype(float)

    col_norm = np.sqrt((np.abs(B) ** 2 + np.abs(C) ** 2).sum(axis=0))
    order = np.argsort(-col_norm, kind="stable")
    Babs = np.abs(B[:, order])
    Cabs = np.abs(C[:, order])
    # remB[:, d] = sum of |B| over positions d.. in branching order
    remB = np.zeros((B.shape[0], n + 1))
    remC = np.zeros((C.shape[0], n + 1))
    for d in range(n - 1, -1, -1):
        remB[:, d] = remB[:, d + 1] + Babs[:, d]
        remC[:, d] = remC[:, d + 1] + Cabs[:, d]

    best_assign = None      # best leaf found by the search, in branching order
    best_val = np.inf
    if incumbent is not None:
        incumbent = np.asarray(incumbent, dtype=complex)
        best_val = bundle.max_margin(incumbent)

    Bord = B[:, order]
    Cord = C[:, order]
    nodes = 0
    certified = True
    # stack entries: (depth, partial f, partial g, assignment in branching order)
    stack = [(0, w.copy(), z.copy(), np.empty(n, dtype=complex))]
    while stack:
        depth, pf, pg, assign = stack.pop()
        nodes += 1
        if nodes > node_budget:
            certified = False
            break
        if depth == n:
            val = max(pf.max(), pg.max()) if pf.size else 0.0
            if val < best_val:
                best_val = val
                best_assign = assign.copy()
            continue
        lb = max((pf - remB[:, depth]).max(), (pg - remC[:, depth]).max())
        if lb >= best_val:
            continue
        # child bounds, vectorized over the candidate phases
        contrib_b = np.real(np.outer(cand, Bord[:, depth]))
        contrib_c = np.real(np.outer(cand, Cord[:, depth]))
        child_pf = pf[None, :] + contrib_b
        child_pg = pg[None, :] + contrib_c
        child_lb = np.maximum((child_pf - remB[:, depth + 1]).max(axis=1),
                              (child_pg - remC[:, depth + 1]).max(axis=1))
        # push worst child first so the LIFO explores best-bound first
        for j in np.argsort(child_lb, kind="stable")[::-1]:
            if child_lb[j] >= best_val:
                continue
            child_assign = assign.copy()
            child_assign[depth] = cand[j]
            stack.append((depth + 1, child_pf[j], child_pg[j], child_assign))

    if best_assign is None:
        if incumbent is None:
            raise RuntimeError("node budget too small to reach any leaf and no incumbent given")
        theta = incumbent.copy()
    else:
        theta = np.empty(n, dtype=complex)
        theta[order] = best_assign
    return BnbResult(theta=theta, value=float(best_val), certified=certified, nodes=nodes)


def coordinate_refine(theta_init: np.ndarray, bundle: CoefficientBundle,
                      bits: int, max_sweeps: int = 200) -> np.ndarray:
    """Cyclic exhaustive coordinate descent over the phase grid.

    Starts from the quantized initial point, so the result never does worse
    than direct quantization; each coordinate step picks the grid value
    minimizing the exact max-margin with the others fixed, breaking ties
    toward the phase nearest the current value.  Stops when a full sweep
    changes nothing.
    """
    if bits < 1:
        raise ValueError("bits must be >= 1")
    n = bundle.n_vars
    cand = _grid_candidates(bits)
    B, C = bundle.b_rows, bundle.c_rows
    w = bundle.offsets_w.real.astype(float)
    z = bundle.offsets_z.real.astype(float)
    theta = quantize(np.asarray(theta_init, dtype=complex), bits)
    if n == 0:
        return theta
    sB = B @ theta
    sC = C @ theta
    cand_ang = np.angle(cand)
    for _ in range(max_sweeps):
        changed = False
        for pos in range(n):
            baseB = sB - B[:, pos] * theta[pos]
            baseC = sC - C[:, pos] * theta[pos]
            valsB = (baseB[None, :] + np.outer(cand, B[:, pos])).real + w[None, :]
            valsC = (baseC[None, :] + np.outer(cand, C[:, pos])).real + z[None, :]
            obj = np.maximum(valsB.max(axis=1), valsC.max(axis=1))
            best = obj.min()
            ties = np.flatnonzero(obj == best)
            if ties.size > 1:
                diff = np.abs(np.angle(np.exp(1j * (cand_ang[ties] - np.angle(theta[pos])))))
                ties = ties[np.argsort(diff, kind="stable")]
            j = int(ties[0])
            if cand[j] != theta[pos]:
                theta[pos] = cand[j]
                sB = baseB + B[:, pos] * theta[pos]
                sC = baseC + C[:, pos] * theta[pos]
                changed = True
        if not changed:
            break
    return theta
