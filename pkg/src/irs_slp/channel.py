"""Channel generation: path loss, Rician fading, and the equivalent/compound
channels consumed by the reflection and precoding designs.

All randomness is counter-based (numpy Philox4x64) keyed by
(scenario seed, link id, trial id), so channel draws are bit-reproducible
and independent across trials regardless of evaluation order or thread
count.  Large-scale geometry (LoS angles) is drawn once per link from a
separate stream keyed by (scenario seed, 64 + link id) and is therefore
fixed across trials.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

# Stable stream ids, one per link.  Geometry streams use 64 + code.
LINK_CODES = {
    "generator_irs": 0,
    "irs_user": 1,
    "bs_irs": 2,
    "direct": 3,
    "sir_direct": 4,
    "sir_irs": 5,
}
_GEOMETRY_OFFSET = 64

STANDALONE_LINKS = ("generator_irs", "irs_user")
JOINT_LINKS = ("direct", "irs_user", "bs_irs", "sir_direct", "sir_irs")


def _rng(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def link_rng(seed: int, link: str, trial: int = 0) -> np.random.Generator:
    """Small-scale fading stream for one (scenario seed, link, trial)."""
    return _rng(seed, LINK_CODES[link], trial)


def geometry_rng(seed: int, link: str) -> np.random.Generator:
    """Per-link geometry stream (LoS angles); independent of trial."""
    return _rng(seed, _GEOMETRY_OFFSET + LINK_CODES[link])


@dataclass
class LinkSpec:
    """Large-scale parameters of one propagation link.

    rician_factor overrides the scenario-wide Rician factor when set;
    use 0.0 for NLoS-only links.
    """

    distance: float
    exponent: float
    rician_factor: Optional[float] = None

    def __post_init__(self):
        if self.distance <= 0:
            raise ValueError(f"link distance must be positive, got {self.distance}")
        if self.rician_factor is not None and self.rician_factor < 0:
            raise ValueError("rician_factor must be >= 0")


@dataclass
class ScenarioConfig:
    """System dimensions and propagation parameters for one scenario.

    Powers and gains are linear (watts / ratios), not dB.
    """

    n_bs_antennas: int
    n_irs_elements: int
    n_users: int
    constellation_order: int
    noise_power: float
    rician_factor: float
    pathloss_ref_gain: float
    pathloss_ref_distance: float
    links: dict[str, LinkSpec]
    rng_seed: int = 0
    embedding_length: int = 1

    def __post_init__(self):
        for name, v in (("n_bs_antennas", self.n_bs_antennas),
                        ("n_irs_elements", self.n_irs_elements),
                        ("n_users", self.n_users),
                        ("constellation_order", self.constellation_order)):
            if v < 1:
                raise ValueError(f"{name} must be >= 1, got {v}")
        omega = self.constellation_order
        if omega & (omega - 1) != 0:
            raise ValueError(f"constellation_order must be a power of 2, got {omega}")
        if self.noise_power < 0:
            raise ValueError("noise_power must be >= 0")
        if self.rician_factor < 0:
            raise ValueError("rician_factor must be >= 0")
        if self.pathloss_ref_distance <= 0 or self.pathloss_ref_gain <= 0:
            raise ValueError("path-loss reference gain/distance must be positive")
        if self.embedding_length < 1:
            raise ValueError("embedding_length must be >= 1")
        for link in self.links:
            if link not in LINK_CODES:
                raise ValueError(f"unknown link id {link!r}")

    @property
    def noise_std(self) -> float:
        return float(np.sqrt(self.noise_power))


def standalone_scenario(n_irs_elements: int = 100, n_users: int = 3,
                        constellation_order: int = 4, rng_seed: int = 0,
                        noise_power: float = 1e-11,
                        rician_factor: float = 10 ** 0.3) -> ScenarioConfig:
    """Passive-transmitter scenario: users 100 m from the IRS, exponent 3,
    RF generator at the path-loss reference distance.  Noise -80 dBm,
    reference gain -30 dB at 1 m, Rician factor 3 dB.
    """
    return ScenarioConfig(
        n_bs_antennas=1,
        n_irs_elements=n_irs_elements,
        n_users=n_users,
        constellation_order=constellation_order,
        noise_power=noise_power,
        rician_factor=rician_factor,
        pathloss_ref_gain=1e-3,
        pathloss_ref_distance=1.0,
        links={
            "generator_irs": LinkSpec(distance=1.0, exponent=2.0),
            "irs_user": LinkSpec(distance=100.0, exponent=3.0),
        },
        rng_seed=rng_seed,
    )


def joint_scenario(n_bs_antennas: int = 6, n_irs_elements: int = 100,
                   n_users: int = 3, constellation_order: int = 4,
                   embedding_length: int = 12, rng_seed: int = 0,
                   noise_power: float = 1e-11,
                   rician_factor: float = 10 ** 0.3) -> ScenarioConfig:
    """Joint reflection/transmission scenario: IRS 10 m from the BS (Rician,
    exponent 2.5), receivers 100 m (primary) and 20 m (secondary) from the
    IRS on NLoS links with exponent 3.
    """
    return ScenarioConfig(
        n_bs_antennas=n_bs_antennas,
        n_irs_elements=n_irs_elements,
        n_users=n_users,
        constellation_order=constellation_order,
        noise_power=noise_power,
        rician_factor=rician_factor,
        pathloss_ref_gain=1e-3,
        pathloss_ref_distance=1.0,
        links={
            "bs_irs": LinkSpec(distance=10.0, exponent=2.5),
            "irs_user": LinkSpec(distance=100.0, exponent=3.0, rician_factor=0.0),
            "direct": LinkSpec(distance=110.0, exponent=3.0, rician_factor=0.0),
            "sir_irs": LinkSpec(distance=20.0, exponent=3.0, rician_factor=0.0),
            "sir_direct": LinkSpec(distance=30.0, exponent=3.0, rician_factor=0.0),
        },
        rng_seed=rng_seed,
        embedding_length=embedding_length,
    )


@dataclass
class ChannelSet:
    """All channel realizations for one trial.

    Vectors are stored un-conjugated: row k of ``direct`` is h_k, so the
    receive row vector is ``direct[k].conj()``.  Fields not present in a
    given system are None.
    """

    direct: Optional[np.ndarray] = None        # (K, M) BS -> primary users
    irs_user: Optional[np.ndarray] = None      # (K, N) IRS -> users
    bs_irs: Optional[np.ndarray] = None        # (N, M) BS -> IRS
    generator_irs: Optional[np.ndarray] = None  # (N,)  RF generator -> IRS
    sir_direct: Optional[np.ndarray] = None    # (M,)  BS -> secondary receiver
    sir_irs: Optional[np.ndarray] = None       # (N,)  IRS -> secondary receiver


def path_loss(distance: float, exponent: float, ref_gain: float = 1e-3,
              ref_distance: float = 1.0) -> float:
    """Distance-based large-scale gain ref_gain * (ref_distance/distance)**exponent."""
    if distance <= 0:
        raise ValueError(f"distance must be positive, got {distance}")
    if ref_distance <= 0:
        raise ValueError(f"ref_distance must be positive, got {ref_distance}")
    return float(ref_gain * (ref_distance / distance) ** exponent)


def steering_vector(n: int, angle: float) -> np.ndarray:
    """Half-wavelength ULA steering vector for the given angle."""
    return np.exp(1j * np.pi * np.arange(n) * np.sin(angle))


def draw_rician(rows: int, cols: int, kappa: float, los: np.ndarray,
                avg_gain: float, seed) -> np.ndarray:
    """Draw one Rician fading matrix.

    Returns sqrt(avg_gain) * (sqrt(kappa/(kappa+1)) * los
                              + sqrt(1/(kappa+1)) * W)
    with W i.i.d. circularly-symmetric complex Gaussian of unit variance.
    ``seed`` may be an int or a sequence of ints (stream key); the draw is
    deterministic given the seed.
    """
    los = np.asarray(los, dtype=complex)
    if los.shape != (rows, cols):
        raise ValueError(f"los shape {los.shape} does not match ({rows}, {cols})")
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    key = [seed] if np.isscalar(seed) else list(seed)
    rng = _rng(*key)
    w = (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2.0)
    out = np.sqrt(kappa / (kappa + 1.0)) * los + np.sqrt(1.0 / (kappa + 1.0)) * w
    return np.sqrt(avg_gain) * out


def _link_kappa(config: ScenarioConfig, link: str) -> float:
    spec = config.links[link]
    return config.rician_factor if spec.rician_factor is None else spec.rician_factor


def _link_gain(config: ScenarioConfig, link: str) -> float:
    spec = config.links[link]
    return path_loss(spec.distance, spec.exponent, config.pathloss_ref_gain,
                     config.pathloss_ref_distance)


def _los_matrix(config: ScenarioConfig, link: str, rows: int, cols: int) -> np.ndarray:
    """LoS component with unit-magnitude entries, built from ULA steering
    vectors at seeded per-link angles (fixed across trials)."""
    grng = geometry_rng(config.rng_seed, link)
    if link == "bs_irs":
        aoa, aod = grng.uniform(-np.pi / 2, np.pi / 2, size=2)
        return np.outer(steering_vector(rows, aoa), steering_vector(cols, aod).conj())
    angles = grng.uniform(-np.pi / 2, np.pi / 2, size=rows)
    return np.vstack([steering_vector(cols, a) for a in angles])


def _draw_link(config: ScenarioConfig, link: str, rows: int, cols: int,
               trial: int) -> np.ndarray:
    los = _los_matrix(config, link, rows, cols)
    return draw_rician(rows, cols, _link_kappa(config, link), los,
                       _link_gain(config, link),
                       [config.rng_seed, LINK_CODES[link], trial])


def draw_channels(config: ScenarioConfig, trial: int = 0,
                  system: str = "standalone") -> ChannelSet:
    """Draw one full channel realization for the requested system."""
    m, n, k = config.n_bs_antennas, config.n_irs_elements, config.n_users
    if system == "standalone":
        return ChannelSet(
            generator_irs=_draw_link(config, "generator_irs", 1, n, trial).ravel(),
            irs_user=_draw_link(config, "irs_user", k, n, trial),
        )
    if system == "joint":
        return ChannelSet(
            direct=_draw_link(config, "direct", k, m, trial),
            irs_user=_draw_link(config, "irs_user", k, n, trial),
            bs_irs=_draw_link(config, "bs_irs", n, m, trial),
            sir_direct=_draw_link(config, "sir_direct", 1, m, trial).ravel(),
            sir_irs=_draw_link(config, "sir_irs", 1, n, trial).ravel(),
        )
    raise ValueError(f"unknown system {system!r}")


def effective_channel_standalone(h_rk: np.ndarray, h_g: np.ndarray) -> np.ndarray:
    """Equivalent generator->IRS->user channel h_k with h_k^H = h_rk^H diag(h_g).

    Returned as the un-conjugated vector h_k (conjugate to get the row).
    """
    h_rk = np.asarray(h_rk)
    h_g = np.asarray(h_g)
    if h_rk.shape != h_g.shape:
        raise ValueError(f"length mismatch: {h_rk.shape} vs {h_g.shape}")
    return h_rk * h_g.conj()


def effective_channels(channels: ChannelSet) -> np.ndarray:
    """(K, N) matrix whose rows are the equivalent per-user channels h_k."""
    return channels.irs_user * channels.generator_irs.conj()[None, :]


def compound_channel_joint(h_k: np.ndarray, h_rk: np.ndarray, G: np.ndarray,
                           theta: np.ndarray) -> np.ndarray:
    """Compound BS->receiver channel through the reflecting surface.

    Returns h with h^H = h_k^H + h_rk^H diag(theta) G.  Unit-modulus theta
    is expected in designs but not enforced (the map is affine in theta).
    """
    h_k = np.asarray(h_k)
    h_rk = np.asarray(h_rk)
    G = np.asarray(G)
    theta = np.asarray(theta)
    if G.shape != (h_rk.shape[0], h_k.shape[0]) or theta.shape != h_rk.shape:
        raise ValueError(
            f"dimension mismatch: h_k {h_k.shape}, h_rk {h_rk.shape}, "
            f"G {G.shape}, theta {theta.shape}")
    return h_k + G.conj().T @ (theta.conj() * h_rk)


_CSV_FIELDS = ("direct", "irs_user", "bs_irs", "generator_irs", "sir_direct", "sir_irs")


def channels_to_csv(channels: ChannelSet, path) -> None:
    """Write a channel set as CSV: per link a `link,rows,cols` header line
    followed by `rows` lines of interleaved re,im pairs."""
    with open(path, "w") as fh:
        for name in _CSV_FIELDS:
            arr = getattr(channels, name)
            if arr is None:
                continue
            mat = np.atleast_2d(arr)
            fh.write(f"{name},{mat.shape[0]},{mat.shape[1]}\n")
            for row in mat:
                vals = []
                for v in row:
                    vals.append(f"{v.real:.17g}")
                    vals.append(f"{v.imag:.17g}")
                fh.write(",".join(vals) + "\n")


def channels_from_csv(path) -> ChannelSet:
    """Inverse of :func:`channels_to_csv`."""
    out = ChannelSet()
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    i = 0
    while i < len(lines):
        name, rows, cols = lines[i].split(",")
        rows, cols = int(rows), int(cols)
        if name not in _CSV_FIELDS:
            raise ValueError(f"unknown link {name!r} in {path}")
        mat = np.empty((rows, cols), dtype=complex)
        for r in range(rows):
            vals = [float(x) for x in lines[i + 1 + r].split(",")]
            if len(vals) != 2 * cols:
                raise ValueError(f"bad row length for link {name!r}")
            mat[r] = np.array(vals[0::2]) + 1j * np.array(vals[1::2])
        setattr(out, name, mat.ravel() if name in ("generator_irs", "sir_direct", "sir_irs") else mat)
        i += 1 + rows
    return out
