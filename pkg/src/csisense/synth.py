"""Ground-truth multipath channel simulator.

Stands in for the radio hardware: builds CsiFrames from explicit path
lists, robot trajectories and injected hardware imperfections, and models
a multi-AP environment for the channel scanner.

Channel model per path p (ray sum):

    csi[i][t][j] = amp_p * exp(-j 2 pi f_j delay_p)
                         * exp(+j (2 pi / lambda_c) [cos aoa_p, sin aoa_p] . a_i)
                         * exp(+j (2 pi / lambda_c) [cos aod_p, sin aod_p] . b_t)

The time-of-flight term uses each subcarrier's absolute frequency; the
array term uses the center wavelength only, mirroring the narrowband
model the calibration pipeline assumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    SPEED_OF_LIGHT,
    ArrayGeometry,
    CalibrationMatrix,
    ChannelSpec,
    ConfigurationError,
    CsiFrame,
    Pose2D,
    ground_truth_bearing,
    steering_vector,
    subcarrier_frequencies,
    wavelength,
    wrap_angle,
)

# A unit-amplitude single path reports this RSSI; every other level is
# relative to it.
REFERENCE_RSSI_DBM = -30.0

DEFAULT_PATH_LOSS_EXPONENT = 2.2

DEFAULT_MAC = bytes.fromhex("020000000001")


@dataclass(frozen=True)
class PathComponent:
    """One propagation path: arrival/departure angles, absolute delay, gain."""

    aoa: float  # radians, arrival angle at the receiver
    aod: float = 0.0  # radians, departure angle (used when n_tx > 1)
    delay_s: float = 0.0  # absolute time of flight, seconds
    amplitude: complex = 1.0 + 0.0j

    def __post_init__(self):
        if self.delay_s < 0:
            raise ConfigurationError("path delay must be >= 0")
        if abs(self.amplitude) == 0:
            raise ConfigurationError("path amplitude must be non-zero")


@dataclass(frozen=True)
class Reflection:
    """Scenario-level reflected path, relative to the direct path."""

    aoa_offset: float  # radians added to the direct path's arrival angle
    excess_delay_s: float  # seconds added to the direct path's delay
    rel_amplitude: float  # linear gain relative to the direct path
    random_phase: bool = True  # new uniform phase each packet


@dataclass(frozen=True)
class ApSpec:
    """One access point in the simulated environment."""

    location: np.ndarray  # (2,) meters
    chanspec: ChannelSpec
    tx_power_dbm: float
    mac: bytes = DEFAULT_MAC

    def __post_init__(self):
        object.__setattr__(self, "location", np.asarray(self.location, dtype=np.float64))


@dataclass
class SimScenario:
    """Everything needed to synthesize a dataset or a scanner walkthrough."""

    tx_location: np.ndarray  # (2,) meters
    chanspec: ChannelSpec
    trajectory: list[tuple[int, Pose2D]]  # (timestamp_ns, pose), strictly increasing
    true_calibration: CalibrationMatrix | None = None
    snr_db: float | None = 30.0  # None disables noise
    per_packet_phase: bool = True
    reflections: list[Reflection] = field(default_factory=list)
    aps: list[ApSpec] = field(default_factory=list)
    tx_power_dbm: float = REFERENCE_RSSI_DBM
    path_loss_exponent: float = DEFAULT_PATH_LOSS_EXPONENT
    source_mac: bytes = DEFAULT_MAC
    seed: int = 0

    def __post_init__(self):
        self.tx_location = np.asarray(self.tx_location, dtype=np.float64)
        stamps = [ts for ts, _ in self.trajectory]
        if any(b <= a for a, b in zip(stamps, stamps[1:])):
            raise ConfigurationError("trajectory timestamps must be strictly increasing")


def rssi_at(ap_power_dbm: float, distance_m: float,
            exponent: float = DEFAULT_PATH_LOSS_EXPONENT) -> float:
    """Log-distance path loss: power - 10*n*log10(d / 1 m)."""
    if distance_m <= 0:
        raise ConfigurationError("distance must be positive")
    return ap_power_dbm - 10.0 * exponent * np.log10(distance_m)


def synth_frame(
    paths: list[PathComponent],
    geom: ArrayGeometry,
    chanspec: ChannelSpec,
    snr_db: float | None = None,
    rng_seed: int | np.random.Generator | None = None,
    tx_geom: ArrayGeometry | None = None,
    source_mac: bytes = DEFAULT_MAC,
    seq: int = 0,
    timestamp_ns: int = 0,
) -> CsiFrame:
    """Synthesize one CsiFrame from an explicit path list.

    paths[0] is the direct path; the noise level is scaled so that path
    alone achieves `snr_db` per element (None = noiseless).  RSSI is the
    noiseless mean element power referenced to REFERENCE_RSSI_DBM.
    Deterministic for a fixed seed.
    """
    if not paths:
        raise ConfigurationError("need at least one path")
    signal = _ray_sum(paths, geom, chanspec, tx_geom)
    rssi = _rssi_of(signal)
    if snr_db is not None and np.isfinite(snr_db):
        rng = _as_rng(rng_seed)
        signal = signal + _noise_like(signal, abs(paths[0].amplitude), snr_db, rng)
    return CsiFrame(
        csi=signal.astype(np.complex64),
        rssi_dbm=float(rssi),
        source_mac=source_mac,
        seq=seq,
        chanspec=chanspec,
        timestamp_ns=timestamp_ns,
    )


def synth_trajectory(
    scenario: SimScenario,
    geom: ArrayGeometry,
) -> list[tuple[Pose2D, CsiFrame]]:
    """Synthesize one frame per trajectory pose, time-ordered.

    Per pose: direct path from the ground-truth bearing and distance,
    configured reflections, element-wise hardware bias exp(1j*Phi_true),
    optional random common phase per frame, then noise.
    """
    rng = np.random.default_rng(scenario.seed)
    chanspec = scenario.chanspec
    bias = None
    if scenario.true_calibration is not None:
        cal = scenario.true_calibration
        if cal.chanspec != chanspec:
            raise ConfigurationError("true_calibration chanspec does not match scenario")
        if cal.n_rx != geom.n_antennas:
            raise ConfigurationError("true_calibration antenna count does not match geometry")
        bias = np.exp(1j * cal.phase)[:, None, :]

    out = []
    for k, (ts, pose) in enumerate(scenario.trajectory):
        d = float(np.hypot(pose.x - scenario.tx_location[0], pose.y - scenario.tx_location[1]))
        theta = ground_truth_bearing(pose, scenario.tx_location)  # raises if coincident
        amp = 10.0 ** ((rssi_at(scenario.tx_power_dbm, d, scenario.path_loss_exponent)
                        - REFERENCE_RSSI_DBM) / 20.0)
        paths = [PathComponent(aoa=theta, delay_s=d / SPEED_OF_LIGHT, amplitude=amp)]
        for refl in scenario.reflections:
            phase = rng.uniform(0.0, 2.0 * np.pi) if refl.random_phase else 0.0
            paths.append(
                PathComponent(
                    aoa=wrap_angle(theta + refl.aoa_offset),
                    delay_s=d / SPEED_OF_LIGHT + refl.excess_delay_s,
                    amplitude=amp * refl.rel_amplitude * np.exp(1j * phase),
                )
            )
        signal = _ray_sum(paths, geom, chanspec, None)
        rssi = _rssi_of(signal)
        if bias is not None:
            signal = signal * bias
        if scenario.per_packet_phase:
            signal = signal * np.exp(1j * rng.uniform(0.0, 2.0 * np.pi))
        if scenario.snr_db is not None and np.isfinite(scenario.snr_db):
            signal = signal + _noise_like(signal, amp, scenario.snr_db, rng)
        frame = CsiFrame(
            csi=signal.astype(np.complex64),
            rssi_dbm=float(rssi),
            source_mac=scenario.source_mac,
            seq=k & 0xFFFF,
            chanspec=chanspec,
            timestamp_ns=ts,
        )
        out.append((pose, frame))
    return out


def environment_beacons(
    aps: list[ApSpec],
    position: np.ndarray,
    exponent: float = DEFAULT_PATH_LOSS_EXPONENT,
) -> dict[ChannelSpec, list[tuple[bytes, float]]]:
    """Beacon observations per channel at a position: {chanspec: [(mac, rssi)]}."""
    position = np.asarray(position, dtype=np.float64)
    obs: dict[ChannelSpec, list[tuple[bytes, float]]] = {}
    for ap in aps:
        d = float(np.linalg.norm(position - ap.location))
        obs.setdefault(ap.chanspec, []).append((ap.mac, rssi_at(ap.tx_power_dbm, max(d, 1e-6), exponent)))
    return obs


def _as_rng(rng_seed) -> np.random.Generator:
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    return np.random.default_rng(rng_seed)


def _ray_sum(paths, geom, chanspec, tx_geom) -> np.ndarray:
    freqs = subcarrier_frequencies(chanspec)
    lam = wavelength(chanspec)
    n_rx = geom.n_antennas
    n_tx = tx_geom.n_antennas if tx_geom is not None else 1
    csi = np.zeros((n_rx, n_tx, freqs.size), dtype=np.complex128)
    for p in paths:
        tof = np.exp(-2j * np.pi * freqs * p.delay_s)
        rx = steering_vector(p.aoa, geom, lam)
        tx = steering_vector(p.aod, tx_geom, lam) if tx_geom is not None else np.ones(1)
        csi += p.amplitude * rx[:, None, None] * tx[None, :, None] * tof[None, None, :]
    return csi


def _rssi_of(signal) -> float:
    # mean element power referenced to REFERENCE_RSSI_DBM, floored 90 dB
    # below the reference so degenerate all-zero frames stay encodable
    power = max(float(np.mean(np.abs(signal) ** 2)), 1e-9)
    return REFERENCE_RSSI_DBM + 10.0 * np.log10(power)


def _noise_like(signal, direct_amp, snr_db, rng) -> np.ndarray:
    sigma2 = (direct_amp ** 2) * 10.0 ** (-snr_db / 10.0)
    scale = np.sqrt(sigma2 / 2.0)
    return scale * (rng.standard_normal(signal.shape) + 1j * rng.standard_normal(signal.shape))
