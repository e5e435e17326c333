"""PSK constellations, constructive-interference margins, and the linear
coefficient bundles that turn every max-min design into

    minimize over unit-modulus theta of  max_i { f_i, g_i },
    f_i = Re{b_i^H theta} + Re{w_i},   g_i = Re{c_i^H theta} + Re{z_i}.

Each index i carries one (f, g) pair.  For primary-user rows the pair is
the two half-plane splits of the absolute value in the CI margin; for
secondary-receiver rows f covers the reflection-state-0 constraint and g
the state-1 constraint.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Optional

import numpy as np

from .channel import ChannelSet

MAX_SYMBOL_VECTORS = 2 ** 20


class CapacityError(ValueError):
    """Symbol-vector enumeration would exceed the configured memory guard."""


@dataclass(frozen=True)
class PskConstellation:
    order: int
    half_angle: float          # pi / order
    points: np.ndarray         # (order,) unit-modulus symbols

    def nearest(self, r: complex) -> int:
        """Index of the point whose decision sector contains r (correlation
        detector; ties and r == 0 resolve to the lowest index)."""
        return int(np.argmax((r * self.points.conj()).real))


def make_constellation(order: int) -> PskConstellation:
    """Gray-free Omega-PSK constellation.

    Points sit at odd multiples of pi/Omega (decision boundaries on the
    coordinate axes for QPSK); binary PSK uses the conventional {1, -1}.
    """
    if order < 2 or order & (order - 1) != 0:
        raise ValueError(f"order must be a power of 2 and >= 2, got {order}")
    if order == 2:
        phases = np.array([0.0, np.pi])
    else:
        phases = (2 * np.arange(order) + 1) * np.pi / order
    return PskConstellation(order=order, half_angle=np.pi / order,
                            points=np.exp(1j * phases))


@dataclass(frozen=True)
class SymbolBook:
    """Exhaustive, duplicate-free enumeration of all Omega**K symbol vectors
    in lexicographic order of the per-user symbol indices."""

    constellation: PskConstellation
    vectors: np.ndarray   # (Omega**K, K) complex
    indices: np.ndarray   # (Omega**K, K) int

    @property
    def n_vectors(self) -> int:
        return self.vectors.shape[0]

    @property
    def n_users(self) -> int:
        return self.vectors.shape[1]

    @property
    def half_angle(self) -> float:
        return self.constellation.half_angle


def enumerate_symbol_vectors(order: int, n_users: int,
                             max_vectors: int = MAX_SYMBOL_VECTORS) -> SymbolBook:
    """All Omega**K symbol vectors; raises CapacityError past the guard."""
    if n_users < 1:
        raise ValueError("n_users must be >= 1")
    const = make_constellation(order)
    count = order ** n_users
    if count > max_vectors:
        raise CapacityError(
            f"{order}**{n_users} = {count} symbol vectors exceeds the "
            f"guard of {max_vectors}")
    idx = np.array(list(product(range(order), repeat=n_users)), dtype=int)
    return SymbolBook(constellation=const, vectors=const.points[idx], indices=idx)


def ci_distance(r: complex, psi: float):
    """Signed distance from the rotated noise-free signal to the nearest
    decision boundary: Re{r} sin(psi) - |Im{r}| cos(psi)."""
    r = np.asarray(r)
    out = r.real * np.sin(psi) - np.abs(r.imag) * np.cos(psi)
    return float(out) if out.ndim == 0 else out


def rotate(r: complex, s: complex):
    """Rotate r by the negative phase of the unit-modulus symbol s."""
    s = np.asarray(s)
    return r * (s.conj() / np.abs(s))


@dataclass
class CoefficientBundle:
    """Rows of one smoothed max-min subproblem.

    b_rows[i] stores the row vector b_i^H (so f_i = Re{b_rows[i] @ theta}
    + Re{offsets_w[i]}), likewise c_rows/offsets_z.  index_map[i] names the
    originating constraint: ("pir", m, k, state) or ("sir", m); standalone
    bundles use ("pir", m, k, 0).
    """

    b_rows: np.ndarray          # (I, n) complex
    c_rows: np.ndarray          # (I, n) complex
    offsets_w: np.ndarray       # (I,) complex
    offsets_z: np.ndarray       # (I,) complex
    index_map: list

    @property
    def n_vars(self) -> int:
        return self.b_rows.shape[1]

    @property
    def pair_count(self) -> int:
        return self.b_rows.shape[0]

    def rows_fg(self, theta: np.ndarray):
        f = (self.b_rows @ theta).real + self.offsets_w.real
        g = (self.c_rows @ theta).real + self.offsets_z.real
        return f, g

    def max_margin(self, theta: np.ndarray) -> float:
        """Exact piecewise objective max_i{f_i, g_i} (no smoothing)."""
        f, g = self.rows_fg(theta)
        return float(max(f.max(), g.max()))

    def scaled(self, factor: float) -> "CoefficientBundle":
        return CoefficientBundle(self.b_rows * factor, self.c_rows * factor,
                                 self.offsets_w * factor, self.offsets_z * factor,
                                 self.index_map)

    def max_row_norm(self) -> float:
        if self.b_rows.size == 0:
            return 0.0
        return float(np.linalg.norm(self.b_rows, axis=1).max())


def _split_factors(psi: float):
    # f picks up Im{.}cos - Re{.}sin, g picks up -Im{.}cos - Re{.}sin
    return (-np.sin(psi) - 1j * np.cos(psi)), (-np.sin(psi) + 1j * np.cos(psi))


def build_coefficients_standalone(channels: np.ndarray, s_m: np.ndarray,
                                  alpha: np.ndarray, psi: float,
                                  m: int = 0) -> CoefficientBundle:
    """Coefficient rows for one symbol vector of the passive transmitter.

    channels: (K, N) matrix of equivalent per-user channels h_k (rows,
    un-conjugated).  Row i covers user k = i with
    a_i^H = h_k^H e^{-j angle(s_k)} / alpha_k.
    """
    channels = np.atleast_2d(np.asarray(channels))
    s_m = np.asarray(s_m).ravel()
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (channels.shape[0],))
    if np.any(alpha <= 0):
        raise ValueError("all QoS requirements alpha_k must be positive")
    if s_m.shape[0] != channels.shape[0]:
        raise ValueError("one symbol per user required")
    phase = (s_m.conj() / np.abs(s_m))[:, None]
    a_rows = channels.conj() * phase / alpha[:, None]
    cf, cg = _split_factors(psi)
    zeros = np.zeros(channels.shape[0], dtype=complex)
    index_map = [("pir", m, k, 0) for k in range(channels.shape[0])]
    return CoefficientBundle(a_rows * cf, a_rows * cg, zeros, zeros.copy(), index_map)


def build_coefficients_joint(precoders: np.ndarray, channels: ChannelSet,
                             book: SymbolBook, alpha: np.ndarray,
                             beta: Optional[float], psi: float,
                             with_sir: bool = True) -> CoefficientBundle:
    """Coefficient rows of the stacked reflection problem for the joint
    system, over theta = [theta_0; theta_1] (length 2N).

    Index layout: primary rows come in (state 0, state 1) pairs per (m, k),
    occupying the first 2*K*Omega**K indices; each secondary row occupies
    one index after those, its f covering the state-0 constraint and its g
    the state-1 constraint.  With ``with_sir=False`` a single reflection
    state over N variables is produced (pure passive-reflector baseline).
    """
    X = np.atleast_2d(np.asarray(precoders))
    n_m = X.shape[0]
    if n_m != book.n_vectors:
        raise ValueError(f"expected {book.n_vectors} precoders, got {n_m}")
    K = book.n_users
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (K,))
    if np.any(alpha <= 0):
        raise ValueError("all QoS requirements alpha_k must be positive")
    if with_sir and (beta is None or beta <= 0):
        raise ValueError("beta must be positive when the secondary receiver is active")
    h_direct = np.atleast_2d(channels.direct)
    h_ru = np.atleast_2d(channels.irs_user)
    G = channels.bs_irs
    N = h_ru.shape[1]
    if G.shape != (N, h_direct.shape[1]):
        raise ValueError(f"bs_irs shape {G.shape} inconsistent with channels")
    n_states = 2 if with_sir else 1
    n_vars = n_states * N
    cf, cg = _split_factors(psi)

    gx = X @ G.T                      # (n_m, N): (G x_m) entries
    s_phase = book.vectors.conj() / np.abs(book.vectors)   # e^{-j angle(s_mk)}
    a_pir = (X @ h_direct.conj().T) * s_phase              # (n_m, K)

    b_rows, c_rows, w_off, z_off, index_map = [], [], [], [], []
    for m in range(n_m):
        for k in range(K):
            base = h_ru[k].conj() * gx[m] * s_phase[m, k]  # h_rk^H diag(G x e^{-j.})
            for state in range(n_states):
                row = np.zeros(n_vars, dtype=complex)
                row[state * N:(state + 1) * N] = base
                b_rows.append(row * cf / alpha[k])
                c_rows.append(row * cg / alpha[k])
                w_off.append(a_pir[m, k] * cf / alpha[k])
                z_off.append(a_pir[m, k] * cg / alpha[k])
                index_map.append(("pir", m, k, state))
    if with_sir:
        a_sir = X @ channels.sir_direct.conj()             # (n_m,)
        for m in range(n_m):
            base = channels.sir_irs.conj() * gx[m]
            row0 = np.zeros(n_vars, dtype=complex)
            row0[:N] = base
            row1 = np.zeros(n_vars, dtype=complex)
            row1[N:] = base
            b_rows.append(row0 / beta)
            c_rows.append(-row1 / beta)
            w_off.append(a_sir[m] / beta)
            z_off.append(-a_sir[m] / beta)
            index_map.append(("sir", m))
    return CoefficientBundle(np.array(b_rows), np.array(c_rows),
                             np.array(w_off), np.array(z_off), index_map)
