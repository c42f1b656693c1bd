"""Scenario files and pose files.

A scenario is a flat INI-style text file describing everything the
simulator needs: channel, transmitter, receiver array, trajectory,
injected hardware bias, reflections, and (for scanner runs) the AP
layout.  Section and key names are validated; unknown keys are
rejected so typos fail loudly.

Example::

    [channel]
    channel = 155
    bandwidth = 80

    [transmitter]
    x = 0.0
    y = 0.0
    power_dbm = -30

    [array]
    layout = square
    spacing = half-wavelength

    [simulation]
    seed = 1
    snr_db = 30
    per_packet_phase = true
    bias = random

    [trajectory]
    kind = disc
    n = 200
    radius_m = 5.0
    rate_hz = 1.0

    [reflection.1]
    aoa_offset_deg = 30
    excess_delay_ns = 8
    rel_amplitude = 0.7
    random_phase = true

    [ap.1]
    x = 10
    y = 0
    channel = 42
    bandwidth = 80
    power_dbm = -30

Pose files are CSV with header ``timestamp_ns,x,y,theta`` (theta in
degrees, like every file in this package).
"""

from __future__ import annotations

import configparser

import numpy as np

from .calibration import parse_geometry
from .codec import parse_mac
from .core import (
    ArrayGeometry,
    CalibrationMatrix,
    ChannelSpec,
    ConfigurationError,
    Pose2D,
    wavelength,
)
from .synth import ApSpec, Reflection, SimScenario

_SECTIONS = {
    "channel": {"channel", "bandwidth"},
    "transmitter": {"x", "y", "power_dbm"},
    "array": {"antennas", "layout", "count", "spacing", "spacing_m"},
    "simulation": {"seed", "snr_db", "per_packet_phase", "bias", "path_loss_exponent",
                   "source_mac"},
    "trajectory": {"kind", "n", "radius_m", "rate_hz", "center_x", "center_y",
                   "x0", "y0", "x1", "y1", "length_m", "width_m", "laps", "file"},
}
_REFLECTION_KEYS = {"aoa_offset_deg", "excess_delay_ns", "rel_amplitude", "random_phase"}
_AP_KEYS = {"x", "y", "channel", "bandwidth", "power_dbm", "mac"}


def load_scenario(path, seed: int | None = None) -> tuple[SimScenario, ArrayGeometry]:
    """Parse a scenario file; `seed` overrides the file's seed when given."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise ConfigurationError(f"cannot read scenario file {path}")
    _validate_sections(parser, path)

    chan = parser["channel"]
    chanspec = ChannelSpec(chan.getint("channel"), chan.getint("bandwidth"))

    tx = parser["transmitter"]
    tx_location = np.array([tx.getfloat("x"), tx.getfloat("y")])
    tx_power = tx.getfloat("power_dbm", fallback=-30.0)

    geom = _parse_array(parser["array"], chanspec)

    sim = parser["simulation"] if parser.has_section("simulation") else {}
    file_seed = int(sim.get("seed", 0)) if sim else 0
    eff_seed = file_seed if seed is None else seed
    snr_raw = str(sim.get("snr_db", "30")).strip().lower() if sim else "30"
    snr_db = None if snr_raw in ("none", "inf", "off") else float(snr_raw)
    per_packet = _parse_bool(sim.get("per_packet_phase", "true")) if sim else True
    bias_mode = str(sim.get("bias", "zero")).strip().lower() if sim else "zero"
    exponent = float(sim.get("path_loss_exponent", 2.2)) if sim else 2.2
    mac = parse_mac(sim.get("source_mac", "02:00:00:00:00:01")) if sim else \
        parse_mac("02:00:00:00:00:01")

    trajectory = _parse_trajectory(parser["trajectory"], tx_location, eff_seed)

    true_cal = None
    if bias_mode == "random":
        true_cal = random_bias(chanspec, geom.n_antennas, eff_seed)
    elif bias_mode not in ("zero", "none"):
        raise ConfigurationError(f"unknown bias mode {bias_mode!r}")

    reflections = []
    for name in sorted(s for s in parser.sections() if s.startswith("reflection.")):
        sec = parser[name]
        reflections.append(
            Reflection(
                aoa_offset=np.radians(sec.getfloat("aoa_offset_deg")),
                excess_delay_s=sec.getfloat("excess_delay_ns") * 1e-9,
                rel_amplitude=sec.getfloat("rel_amplitude"),
                random_phase=sec.getboolean("random_phase", fallback=True),
            )
        )

    aps = []
    for k, name in enumerate(sorted(s for s in parser.sections() if s.startswith("ap."))):
        sec = parser[name]
        mac_text = sec.get("mac", f"02:00:00:00:01:{k + 1:02x}")
        aps.append(
            ApSpec(
                location=np.array([sec.getfloat("x"), sec.getfloat("y")]),
                chanspec=ChannelSpec(sec.getint("channel"), sec.getint("bandwidth", fallback=80)),
                tx_power_dbm=sec.getfloat("power_dbm", fallback=-30.0),
                mac=parse_mac(mac_text),
            )
        )

    scenario = SimScenario(
        tx_location=tx_location,
        chanspec=chanspec,
        trajectory=trajectory,
        true_calibration=true_cal,
        snr_db=snr_db,
        per_packet_phase=per_packet,
        reflections=reflections,
        aps=aps,
        tx_power_dbm=tx_power,
        path_loss_exponent=exponent,
        source_mac=mac,
        seed=eff_seed,
    )
    return scenario, geom


def random_bias(chanspec: ChannelSpec, n_rx: int, seed: int) -> CalibrationMatrix:
    """Uniform random per-element hardware bias phases, reproducible by seed."""
    rng = np.random.default_rng(seed ^ 0x5EED_B1A5)
    phase = rng.uniform(-np.pi, np.pi, size=(n_rx, chanspec.n_sub))
    return CalibrationMatrix(phase=phase, chanspec=chanspec)


def disc_trajectory(
    center: np.ndarray,
    radius_m: float,
    n: int,
    seed: int,
    rate_hz: float = 1.0,
    min_distance_m: float = 0.5,
    t0_ns: int = 0,
) -> list[tuple[int, Pose2D]]:
    """Poses uniform over a disc around `center`, random headings.

    Poses closer than `min_distance_m` to the center are resampled so
    the path-loss model stays finite.
    """
    rng = np.random.default_rng(seed ^ 0x7A7E_C70A)
    dt_ns = int(round(1e9 / rate_hz))
    out = []
    for k in range(n):
        while True:
            r = radius_m * np.sqrt(rng.uniform())
            if r >= min_distance_m:
                break
        phi = rng.uniform(0.0, 2.0 * np.pi)
        heading = rng.uniform(-np.pi, np.pi)
        pose = Pose2D(center[0] + r * np.cos(phi), center[1] + r * np.sin(phi), heading)
        out.append((t0_ns + k * dt_ns, pose))
    return out


def loop_trajectory(
    x0: float,
    y0: float,
    length_m: float,
    width_m: float,
    laps: int,
    n: int,
    rate_hz: float = 1.0,
    t0_ns: int = 0,
) -> list[tuple[int, Pose2D]]:
    """Rectangular circuit traversed `laps` times with n poses total."""
    per = 2.0 * (length_m + width_m)
    dt_ns = int(round(1e9 / rate_hz))
    out = []
    for k in range(n):
        s = (k / n) * laps * per % per
        if s < length_m:
            x, y, th = x0 + s, y0, 0.0
        elif s < length_m + width_m:
            x, y, th = x0 + length_m, y0 + (s - length_m), np.pi / 2
        elif s < 2 * length_m + width_m:
            x, y, th = x0 + length_m - (s - length_m - width_m), y0 + width_m, np.pi
        else:
            x, y, th = x0, y0 + width_m - (s - 2 * length_m - width_m), -np.pi / 2
        out.append((t0_ns + k * dt_ns, Pose2D(x, y, th)))
    return out


def line_trajectory(
    x0: float, y0: float, x1: float, y1: float, n: int,
    rate_hz: float = 1.0, t0_ns: int = 0,
) -> list[tuple[int, Pose2D]]:
    """Straight segment from (x0, y0) to (x1, y1), heading along motion."""
    heading = float(np.arctan2(y1 - y0, x1 - x0))
    dt_ns = int(round(1e9 / rate_hz))
    ts = np.linspace(0.0, 1.0, n)
    return [
        (t0_ns + k * dt_ns, Pose2D(x0 + t * (x1 - x0), y0 + t * (y1 - y0), heading))
        for k, t in enumerate(ts)
    ]


def write_poses_csv(path, trajectory: list[tuple[int, Pose2D]]) -> None:
    """Pose file: timestamp_ns, x, y, theta (degrees)."""
    with open(path, "w") as fh:
        fh.write("timestamp_ns,x,y,theta\n")
        for ts, pose in trajectory:
            fh.write(f"{ts},{pose.x:.9g},{pose.y:.9g},{np.degrees(pose.theta):.9g}\n")


def read_poses_csv(path) -> list[tuple[int, Pose2D]]:
    out = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header.split(",")[:4] != ["timestamp_ns", "x", "y", "theta"]:
            raise ConfigurationError(f"bad pose file header: {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            ts, x, y, theta = line.split(",")
            out.append((int(ts), Pose2D(float(x), float(y), np.radians(float(theta)))))
    return out


def _validate_sections(parser: configparser.ConfigParser, path) -> None:
    for section in parser.sections():
        if section.startswith("reflection."):
            allowed = _REFLECTION_KEYS
        elif section.startswith("ap."):
            allowed = _AP_KEYS
        elif section in _SECTIONS:
            allowed = _SECTIONS[section]
        else:
            raise ConfigurationError(f"unknown section [{section}] in {path}")
        unknown = set(parser[section]) - allowed
        if unknown:
            raise ConfigurationError(
                f"unknown keys {sorted(unknown)} in [{section}] of {path}"
            )
    for required in ("channel", "transmitter", "array", "trajectory"):
        if not parser.has_section(required):
            raise ConfigurationError(f"missing [{required}] section in {path}")


def _parse_array(section, chanspec: ChannelSpec) -> ArrayGeometry:
    if "antennas" in section:
        return parse_geometry(section["antennas"])
    layout = section.get("layout", "square").strip().lower()
    spacing_raw = section.get("spacing", "half-wavelength").strip().lower()
    if "spacing_m" in section:
        spacing = float(section["spacing_m"])
    elif spacing_raw in ("half-wavelength", "half-lambda"):
        spacing = wavelength(chanspec) / 2.0
    else:
        spacing = float(spacing_raw)
    if layout == "square":
        return ArrayGeometry.square(spacing)
    if layout in ("linear-x", "linear-y"):
        count = int(section.get("count", 4))
        return ArrayGeometry.uniform_linear(count, spacing, axis=layout[-1])
    raise ConfigurationError(f"unknown array layout {layout!r}")


def _parse_trajectory(section, tx_location, seed) -> list[tuple[int, Pose2D]]:
    kind = section.get("kind", "disc").strip().lower()
    n = section.getint("n", fallback=200)
    rate = section.getfloat("rate_hz", fallback=1.0)
    if kind == "disc":
        center = np.array([
            section.getfloat("center_x", fallback=tx_location[0]),
            section.getfloat("center_y", fallback=tx_location[1]),
        ])
        return disc_trajectory(center, section.getfloat("radius_m", fallback=5.0),
                               n, seed, rate)
    if kind == "loop":
        return loop_trajectory(
            section.getfloat("x0", fallback=0.0), section.getfloat("y0", fallback=0.0),
            section.getfloat("length_m", fallback=30.0),
            section.getfloat("width_m", fallback=5.0),
            section.getint("laps", fallback=2), n, rate,
        )
    if kind == "line":
        return line_trajectory(
            section.getfloat("x0", fallback=0.0), section.getfloat("y0", fallback=0.0),
            section.getfloat("x1", fallback=10.0), section.getfloat("y1", fallback=0.0),
            n, rate,
        )
    if kind == "file":
        return read_poses_csv(section["file"])
    raise ConfigurationError(f"unknown trajectory kind {kind!r}")


def _parse_bool(text) -> bool:
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"bad boolean {text!r}")
