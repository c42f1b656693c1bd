"""Wireless phase-calibration pipeline.

Recovers per-antenna, per-subcarrier phase corrections from a dataset of
robot poses and raw CSI frames collected around a transmitter at a known
location, assuming the direct path dominates:

1. suppress the bearing-induced phase of each frame using the expected
   direct-path CSI for its pose,
2. normalize each frame's random common phase and remove its best-fit
   linear phase slope across subcarriers (packet-detection phase and
   time-of-flight, which the expected-CSI model omits),
3. take the phase of the first left-singular vector of the stacked
   snapshots (the dominant common structure is the hardware bias),
4. re-project onto unit-modulus-element matrices with a
   Levenberg-Marquardt refinement started from the SVD estimate.

The recovered bias is returned *negated* and referenced to antenna 0
(row 0 identically zero), so the stored matrix is the correction that
`apply_calibration` multiplies in directly.  Anything common to all
antennas -- a per-subcarrier offset and a linear-in-frequency slope --
is not observable by this pipeline and not meaningful to bearing
estimation; comparisons against ground truth must quotient it out.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    ArrayGeometry,
    CalibrationMatrix,
    ChannelSpec,
    CsiFrame,
    CsiSenseError,
    DimensionMismatchError,
    Pose2D,
    expected_csi,
    subcarrier_frequencies,
    wrap_angle,
)
from .core import SUBCARRIER_SPACING_HZ


class CalibrationError(CsiSenseError):
    """Calibration pipeline failure (bad dataset, degenerate data)."""


class LowConfidenceError(CalibrationError):
    """Spectral gap below threshold: data likely not line-of-sight dominated."""


@dataclass
class CalibrationDataset:
    """Time-aligned (pose, frame) pairs plus the measured setup geometry."""

    pairs: list[tuple[Pose2D, CsiFrame]]
    tx_location: np.ndarray  # (2,) meters
    geom: ArrayGeometry
    chanspec: ChannelSpec

    def __post_init__(self):
        self.tx_location = np.asarray(self.tx_location, dtype=np.float64)

    def validate(self, min_pairs: int = 50) -> None:
        if len(self.pairs) < min_pairs:
            raise CalibrationError(
                f"{len(self.pairs)} pose/frame pairs; at least {min_pairs} required"
            )
        for _, frame in self.pairs:
            if frame.chanspec != self.chanspec:
                raise CalibrationError("all frames must share the dataset chanspec")
            if frame.n_rx != self.geom.n_antennas:
                raise CalibrationError("frame antenna count does not match geometry")


@dataclass
class CoarseResult:
    """SVD stage output: coarse phase plus the full left-singular basis."""

    phi_coarse: np.ndarray  # (n_rx, n_sub) radians
    basis: np.ndarray  # (n, n) unitary, columns = left singular vectors
    singular_values: np.ndarray  # descending, non-negative

    def __post_init__(self):
        sv = np.asarray(self.singular_values, dtype=np.float64)
        if np.any(np.diff(sv) > 1e-9) or np.any(sv < 0):
            raise CalibrationError("singular values must be descending and non-negative")

    @property
    def spectral_gap(self) -> float:
        """sigma_1 / sigma_2 (inf for exactly rank-1 data)."""
        sv = self.singular_values
        if sv.size < 2 or sv[1] == 0.0:
            return float("inf")
        return float(sv[0] / sv[1])


@dataclass
class FineTuneResult:
    phi: np.ndarray  # (n_rx, n_sub) radians
    objective: float
    initial_objective: float
    iterations: int
    converged: bool
    iterates: list[np.ndarray] = field(default_factory=list)


@dataclass
class CalibrationResult:
    """Recovered correction plus the fit diagnostics the CLI reports."""

    matrix: CalibrationMatrix
    spectral_gap: float
    coarse_objective: float
    fine_objective: float
    converged: bool
    n_pairs: int


def suppress_bearing(
    frame: CsiFrame,
    pose: Pose2D,
    tx_location,
    geom: ArrayGeometry,
    tx_index: int = 0,
) -> np.ndarray:
    """Element-wise product of one tx slice with conj(expected CSI).

    Removes the bearing-induced inter-antenna phase, leaving bias, common
    phase and the per-subcarrier time-of-flight slope.  Magnitudes are
    unchanged (the expected CSI is unit modulus).
    """
    if frame.n_rx != geom.n_antennas:
        raise DimensionMismatchError(
            f"frame has {frame.n_rx} antennas, geometry has {geom.n_antennas}"
        )
    if not 0 <= tx_index < frame.n_tx:
        raise DimensionMismatchError(f"tx index {tx_index} out of range")
    expected = expected_csi(pose, tx_location, geom, frame.chanspec)
    return frame.csi[:, tx_index, :].astype(np.complex128) * np.conj(expected)


def coarse_calibration(sups: list[np.ndarray]) -> CoarseResult:
    """Stack suppressed snapshots and extract the dominant component.

    Each snapshot is flattened rx-major into one column of the data
    matrix; a full complex SVD (conjugate-transpose semantics) yields the
    strongest shared structure in its first left-singular vector, whose
    element-wise phase is the coarse calibration estimate.
    """
    if len(sups) < 2:
        raise CalibrationError("need at least 2 snapshots")
    shape = sups[0].shape
    if any(s.shape != shape for s in sups):
        raise CalibrationError("snapshots must share one shape")
    stacked = np.stack([np.asarray(s, dtype=np.complex128).ravel() for s in sups], axis=1)
    if not np.any(stacked):
        raise CalibrationError("degenerate all-zero snapshots")
    try:
        basis, sv, _vh = np.linalg.svd(stacked, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise CalibrationError(f"SVD failed: {exc}") from exc
    phi = np.angle(basis[:, 0]).reshape(shape)
    return CoarseResult(phi_coarse=phi, basis=basis, singular_values=sv)


def complement_power(basis: np.ndarray, phi: np.ndarray) -> float:
    """||U_[1:]^H flatten(exp(j*phi))||^2 evaluated via the first column.

    For a unitary basis this equals n - |U_0^H x|^2 because the element
    count n is exactly ||x||^2 when every element of x has unit modulus.
    """
    x = np.exp(1j * np.asarray(phi, dtype=np.float64).ravel())
    s = np.vdot(basis[:, 0], x)
    return max(float(x.size - np.abs(s) ** 2), 0.0)


def fine_tune(
    coarse: CoarseResult,
    damping_init: float = 1e-3,
    max_iter: int = 200,
    ftol: float = 1e-10,
    gtol: float = 1e-8,
    keep_iterates: bool = False,
) -> FineTuneResult:
    """Minimize the off-component projection of exp(j*phi) from phi_coarse.

    Levenberg-Marquardt over the real phases, complex residuals split
    into real and imaginary parts.  Because the basis is unitary and
    every element of exp(j*phi) has unit modulus, the residual Jacobian
    products reduce to rank-2 updates of the identity
    (J^T J = I - Re(v) Re(v)^T - Im(v) Im(v)^T with
    v = conj(j*x) * U_0), so each step costs O(n); the minimized
    objective is identical to the materialized-residual form.

    Damping starts at 1e-3, x10 on reject, /10 on accept; stops when the
    relative objective decrease drops below ftol or the gradient
    infinity-norm below gtol.  Only improving steps are accepted, so the
    result never exceeds the starting objective.  If the iteration
    budget runs out, the best iterate is returned with converged=False.
    """
    basis = coarse.basis
    u0 = basis[:, 0]
    n = u0.size
    phi = np.asarray(coarse.phi_coarse, dtype=np.float64).ravel().copy()
    shape = coarse.phi_coarse.shape

    # One-time consistency check of the fast objective against the full
    # basis (Parseval: the projections onto all columns must add to n).
    x0 = np.exp(1j * phi)
    proj = basis.conj().T @ x0
    total = float(np.sum(np.abs(proj) ** 2))
    if abs(total - n) > 1e-6 * n:
        raise CalibrationError("basis is not orthonormal (projection power != n)")

    def objective(p):
        x = np.exp(1j * p)
        return max(float(n - np.abs(np.vdot(u0, x)) ** 2), 0.0), x

    f, x = objective(phi)
    initial = f
    lam = damping_init
    eye2 = np.eye(2)
    converged = False
    iterates: list[np.ndarray] = [phi.copy()] if keep_iterates else []
    it = 0
    for it in range(1, max_iter + 1):
        s = np.vdot(u0, x)
        w = x - u0 * s  # projection of x off the dominant component
        g = 1j * x
        grad = 2.0 * np.real(np.conj(g) * w)
        if np.max(np.abs(grad)) < gtol:
            converged = True
            break
        v = np.conj(g) * u0
        bmat = np.column_stack([v.real, v.imag])  # J^T J = I - B B^T
        gram = bmat.T @ bmat
        rhs = -0.5 * grad
        accepted = False
        while lam < 1e12:
            a = 1.0 + lam
            w2 = np.linalg.solve(a * eye2 - gram, bmat.T @ rhs)
            delta = (rhs + bmat @ w2) / a
            trial = phi + delta
            f_trial, x_trial = objective(trial)
            if f_trial < f:
                rel = (f - f_trial) / max(f, np.finfo(float).tiny)
                phi, f, x = trial, f_trial, x_trial
                lam = max(lam / 10.0, 1e-15)
                if keep_iterates:
                    iterates.append(phi.copy())
                accepted = True
                if rel < ftol:
                    converged = True
                break
            lam *= 10.0
        if not accepted or converged:
            if not accepted:
                converged = True  # damping exhausted: local minimum to precision
            break
    return FineTuneResult(
        phi=phi.reshape(shape),
        objective=f,
        initial_objective=initial,
        iterations=it,
        converged=converged,
        iterates=iterates,
    )


def calibrate(
    dataset: CalibrationDataset,
    min_pairs: int = 50,
    spectral_gap_min: float = 3.0,
    tx_index: int = 0,
) -> CalibrationResult:
    """Run the full pipeline on a pose/frame dataset.

    Raises CalibrationError for too few or inconsistent pairs and
    LowConfidenceError when sigma_1/sigma_2 falls below
    `spectral_gap_min` (the line-of-sight dominance check).
    """
    dataset.validate(min_pairs)
    chanspec = dataset.chanspec
    freqs = subcarrier_frequencies(chanspec)
    mid = freqs.size // 2

    sups = []
    for pose, frame in dataset.pairs:
        sup = suppress_bearing(frame, pose, dataset.tx_location, dataset.geom, tx_index)
        # Packet-detection/CFO phase: rotate so the reference element
        # (antenna 0, middle subcarrier) has zero phase.  Row 0 of the
        # expected CSI is all ones, so this equals normalizing the raw
        # frame by the same element.
        ref = sup[0, mid]
        mag = np.abs(ref)
        if mag > 0:
            sup = sup * (np.conj(ref) / mag)
        sups.append(sup)

    # Per-frame time-of-flight slope, fitted against the first snapshot
    # so the (arbitrary) bias-phase structure cancels out of the fit.
    # The removed slopes differ from the true ones by one common value,
    # which lands in the unobservable gauge.
    ref_sup = sups[0]
    rel_freq = freqs - freqs[mid]
    for t in range(len(sups)):
        slope = _fit_common_slope(sups[t] * np.conj(ref_sup), freqs)
        sups[t] = sups[t] * np.exp(-1j * slope * rel_freq)[None, :]

    coarse = coarse_calibration(sups)
    gap = coarse.spectral_gap
    if gap < spectral_gap_min:
        raise LowConfidenceError(
            f"spectral gap {gap:.2f} below {spectral_gap_min:.2f}: "
            "data does not look line-of-sight dominated"
        )
    fine = fine_tune(coarse)

    # Negate the recovered bias to get the correction, and reference it
    # to antenna 0 (row 0 becomes zero: the inter-antenna relative form).
    correction = wrap_angle(-(fine.phi - fine.phi[0:1, :]))
    matrix = CalibrationMatrix(phase=correction, chanspec=chanspec)
    return CalibrationResult(
        matrix=matrix,
        spectral_gap=gap,
        coarse_objective=fine.initial_objective,
        fine_objective=fine.objective,
        converged=fine.converged,
        n_pairs=len(dataset.pairs),
    )


def save_calibration(path, cal: CalibrationMatrix, geom: ArrayGeometry) -> None:
    """Write the text calibration format: header lines, then degrees."""
    lines = [
        "# csisense wireless phase calibration",
        f"channel = {cal.chanspec.channel_number}",
        f"bandwidth_mhz = {cal.chanspec.bandwidth_mhz}",
        f"n_rx = {cal.n_rx}",
        f"n_sub = {cal.n_sub}",
        f"geometry = {format_geometry(geom)}",
        "",
    ]
    deg = np.degrees(cal.phase)
    for row in deg:
        lines.append(",".join(f"{v:.10g}" for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_calibration(path) -> tuple[CalibrationMatrix, ArrayGeometry]:
    """Read a calibration file; returns the matrix and the array geometry."""
    header: dict[str, str] = {}
    rows: list[list[float]] = []
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" in line and not rows:
                key, _, value = line.partition("=")
                header[key.strip()] = value.strip()
            else:
                rows.append([float(v) for v in line.split(",")])
    try:
        chanspec = ChannelSpec(int(header["channel"]), int(header["bandwidth_mhz"]))
        n_rx = int(header["n_rx"])
        n_sub = int(header["n_sub"])
        geom = parse_geometry(header["geometry"])
    except (KeyError, ValueError) as exc:
        raise CalibrationError(f"bad calibration file header: {exc}") from exc
    phase = np.radians(np.array(rows, dtype=np.float64))
    if phase.shape != (n_rx, n_sub):
        raise CalibrationError(
            f"calibration matrix is {phase.shape}, header says ({n_rx}, {n_sub})"
        )
    return CalibrationMatrix(phase=phase, chanspec=chanspec), geom


def format_geometry(geom: ArrayGeometry) -> str:
    return "; ".join(f"{x:.10g},{y:.10g}" for x, y in geom.positions)


def parse_geometry(text: str) -> ArrayGeometry:
    points = []
    for chunk in text.split(";"):
        sx, _, sy = chunk.partition(",")
        points.append((float(sx), float(sy)))
    return ArrayGeometry(np.array(points, dtype=np.float64))


def _fit_common_slope(ratios: np.ndarray, freqs: np.ndarray) -> float:
    """Best-fit linear phase slope (rad/Hz) across subcarriers.

    Uses only adjacent subcarrier pairs at the base spacing, summed over
    antennas, so pilot/DC gaps never alias the estimate.
    """
    gaps = np.diff(freqs)
    unit = np.isclose(gaps, SUBCARRIER_SPACING_HZ)
    prod = ratios[:, 1:][:, unit] * np.conj(ratios[:, :-1][:, unit])
    z = np.sum(prod)
    if z == 0:
        return 0.0
    return float(np.angle(z) / SUBCARRIER_SPACING_HZ)
