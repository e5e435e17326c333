"""Monte Carlo symbol-error-rate evaluation: AWGN injection, PSK
hard-decision detection for the users, and the L-slot averaging sign
detector for the secondary receiver.

Noise streams are keyed by (seed, grid index, trial-block index) with a
fixed block size, so results are bit-identical for any worker count or
evaluation order.  Desk-scale defaults: a few hundred channel realizations
and >= 1e4..1e5 symbol trials per grid point give stable curves.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from math import erfc, pi, sin, sqrt
from typing import Optional

import numpy as np

from ._parallel import parallel_map
from .channel import ChannelSet, ScenarioConfig, effective_channels
from .geometry import SymbolBook, enumerate_symbol_vectors, make_constellation
from .joint import JointDesignResult, compound_all
from .passive import PassiveDesignResult
from .units import dbm_to_watts

TRIAL_BLOCK = 8192


@lru_cache(maxsize=None)
def _cached_constellation(order: int):
    return make_constellation(order)


def detect_psk(r: complex, order: int) -> int:
    """Index of the constellation point whose decision sector contains r.

    Implemented as the correlation detector argmax Re{r conj(s_i)};
    ties (including r == 0) resolve to the lowest index."""
    if order < 2:
        raise ValueError("order must be >= 2")
    return _cached_constellation(order).nearest(r)


def _detect_psk_array(r: np.ndarray, points: np.ndarray) -> np.ndarray:
    return np.argmax((r[..., None] * points.conj()).real, axis=-1)


def detect_sir(received) -> int:
    """1 if the real part of the L-slot mean is positive, else 0."""
    received = np.asarray(received)
    if received.size < 1:
        raise ValueError("need at least one slot")
    return int(np.mean(received).real > 0)


@dataclass
class SerResult:
    power_dbm: float
    trials: int
    per_user_ser: np.ndarray
    per_user_half_width: np.ndarray
    avg_ser: float
    avg_half_width: float
    max_ser: float
    max_half_width: float
    sir_ber: Optional[float] = None
    sir_half_width: Optional[float] = None


def _half_width(p: float, n: int) -> float:
    # 95% normal-approximation confidence half-width
    return 1.96 * sqrt(max(p * (1.0 - p), 0.0) / n)


def _block_rng(seed: int, grid_index: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(
        np.random.SeedSequence([seed, grid_index, block])))


def _blocks(trials: int):
    starts = range(0, trials, TRIAL_BLOCK)
    return [(b, min(TRIAL_BLOCK, trials - s)) for b, s in enumerate(starts)]


def _make_result(power_dbm, trials, err_users, n_det, err_sir=None, n_sir=None):
    per_user = err_users / n_det
    hw = np.array([_half_width(p, n_det) for p in per_user])
    avg = float(err_users.sum() / (n_det * err_users.size))
    worst = int(np.argmax(per_user))
    res = SerResult(
        power_dbm=float(power_dbm), trials=trials,
        per_user_ser=per_user, per_user_half_width=hw,
        avg_ser=avg, avg_half_width=_half_width(avg, n_det * err_users.size),
        max_ser=float(per_user[worst]), max_half_width=float(hw[worst]))
    if err_sir is not None:
        ber = err_sir / n_sir
        res.sir_ber = float(ber)
        res.sir_half_width = _half_width(ber, n_sir)
    return res


def _run_ser_passive(design: PassiveDesignResult, channels: ChannelSet,
                     scenario: ScenarioConfig, power_grid_dbm, trials, seed,
                     threads):
    book = enumerate_symbol_vectors(scenario.constellation_order,
                                    scenario.n_users)
    points = book.constellation.points
    eff = effective_channels(channels)                       # (K, N)
    r0 = design.reflections @ eff.conj().T                   # (n_m, K) at unit power
    sigma = scenario.noise_std
    k = eff.shape[0]
    results = []
    for gi, p_dbm in enumerate(power_grid_dbm):
        amp = sqrt(dbm_to_watts(p_dbm))

        def run_block(block_size, gi=gi, amp=amp):
            block, nb = block_size
            rng = _block_rng(seed, gi, block)
            m_idx = rng.integers(0, book.n_vectors, size=nb)
            noise = (rng.standard_normal((nb, k)) + 1j * rng.standard_normal((nb, k)))
            rx = amp * r0[m_idx] + noise * (sigma / sqrt(2.0))
            det = _detect_psk_array(rx, points)
            return (det != book.indices[m_idx]).sum(axis=0)

        errs = parallel_map(run_block, _blocks(trials), threads=threads)
        results.append(_make_result(p_dbm, trials, np.sum(errs, axis=0), trials))
    return results


def _run_ser_joint(design: JointDesignResult, channels: ChannelSet,
                   scenario: ScenarioConfig, power_grid_dbm, trials, seed,
                   threads):
    book = enumerate_symbol_vectors(scenario.constellation_order,
                                    scenario.n_users)
    points = book.constellation.points
    X = design.precoders.precoders
    pir, sir = compound_all(channels, design.theta0,
                            design.theta1 if design.with_sir else None)
    n_states = pir.shape[1]
    y_pir = np.stack([X @ pir[:, st, :].conj().T for st in range(n_states)])
    y_sir = None
    if design.with_sir and sir is not None:
        y_sir = np.stack([X @ sir[st].conj() for st in range(n_states)])
    sigma = scenario.noise_std
    L = scenario.embedding_length
    k = book.n_users
    ref_power = design.precoders.avg_power
    results = []
    for gi, p_dbm in enumerate(power_grid_dbm):
        factor = sqrt(dbm_to_watts(p_dbm) / ref_power)

        def run_block(block_size, gi=gi, factor=factor):
            block, nb = block_size
            rng = _block_rng(seed, gi, block)
            bits = rng.integers(0, 2, size=nb) if design.with_sir \
                else np.zeros(nb, dtype=int)
            slots = rng.integers(0, book.n_vectors, size=(nb, L))
            noise_u = (rng.standard_normal((nb, L, k))
                       + 1j * rng.standard_normal((nb, L, k)))
            rx = factor * y_pir[bits[:, None], slots, :] + noise_u * (sigma / sqrt(2.0))
            det = _detect_psk_array(rx, points)
            err_u = (det != book.indices[slots]).sum(axis=(0, 1))
            err_s = 0
            if y_sir is not None:
                noise_s = (rng.standard_normal((nb, L))
                           + 1j * rng.standard_normal((nb, L)))
                rbar = (factor * y_sir[bits[:, None], slots]
                        + noise_s * (sigma / sqrt(2.0))).mean(axis=1)
                err_s = int(((rbar.real > 0).astype(int) != bits).sum())
            return err_u, err_s

        outs = parallel_map(run_block, _blocks(trials), threads=threads)
        err_users = np.sum([o[0] for o in outs], axis=0)
        err_sir = sum(o[1] for o in outs)
        results.append(_make_result(
            p_dbm, trials, err_users, trials * L,
            err_sir=err_sir if y_sir is not None else None,
            n_sir=trials if y_sir is not None else None))
    return results


def run_ser(design, channels: ChannelSet, scenario: ScenarioConfig,
            power_grid_dbm, trials: int, seed: int = 0,
            threads: int = 1) -> list[SerResult]:
    """Monte Carlo SER of a design over a transmit-power grid (dBm).

    Passive designs are simulated as sqrt(P) h^H theta_m + noise.  Joint
    designs keep the designed precoder shapes and rescale them so the
    average transmit power matches each grid point; each trial sends one
    secondary bit over L primary slots.  Deterministic for fixed seed
    regardless of thread count.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if isinstance(design, PassiveDesignResult):
        return _run_ser_passive(design, channels, scenario, power_grid_dbm,
                                trials, seed, threads)
    if isinstance(design, JointDesignResult):
        return _run_ser_joint(design, channels, scenario, power_grid_dbm,
                              trials, seed, threads)
    raise TypeError(f"unsupported design type {type(design)!r}")


def ser_to_csv(results: list[SerResult], path) -> None:
    """CSV rows (power_dbm, receiver, ser, half_width, trials)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["power_dbm", "receiver", "ser", "half_width", "trials"])
        for r in results:
            for k, (p, hw) in enumerate(zip(r.per_user_ser, r.per_user_half_width)):
                writer.writerow([r.power_dbm, f"user{k}", f"{p:.8g}", f"{hw:.4g}", r.trials])
            writer.writerow([r.power_dbm, "avg", f"{r.avg_ser:.8g}", f"{r.avg_half_width:.4g}", r.trials])
            writer.writerow([r.power_dbm, "max", f"{r.max_ser:.8g}", f"{r.max_half_width:.4g}", r.trials])
            if r.sir_ber is not None:
                writer.writerow([r.power_dbm, "sir", f"{r.sir_ber:.8g}", f"{r.sir_half_width:.4g}", r.trials])


def psk_ser_awgn(snr: float, order: int) -> float:
    """Closed-form uncoded PSK symbol-error rate over AWGN at symbol SNR.

    Exact for orders 2 and 4; the standard 2Q(sqrt(2 snr) sin(pi/order))
    tight approximation otherwise."""
    def q(x):
        return 0.5 * erfc(x / sqrt(2.0))

    if order == 2:
        return q(sqrt(2.0 * snr))
    if order == 4:
        pe = q(sqrt(snr))
        return 1.0 - (1.0 - pe) ** 2
    return 2.0 * q(sqrt(2.0 * snr) * sin(pi / order))


def simulate_awgn_psk(order: int, snr: float, trials: int, seed: int = 0) -> float:
    """Measured SER of plain PSK over AWGN (design bypassed); calibration
    reference for the Monte Carlo engine."""
    points = _cached_constellation(order).points
    errors = 0
    for block, nb in _blocks(trials):
        rng = _block_rng(seed, 0, block)
        idx = rng.integers(0, order, size=nb)
        noise = (rng.standard_normal(nb) + 1j * rng.standard_normal(nb)) \
            * sqrt(1.0 / (2.0 * snr))
        det = _detect_psk_array(points[idx] + noise, points)
        errors += int((det != idx).sum())
    return errors / trials
