"""Bit-exact wire and file codec for CSI frames, plus capture replay.

Wire layout (all little-endian, 32-byte header):

    offset  size  field
    0       4     magic, u32 = 0x57435349 ("WCSI")
    4       1     version, u8 = 1
    5       1     n_rx, u8
    6       1     n_tx, u8
    7       1     bandwidth_mhz, u8
    8       2     channel_number, u16
    10      2     seq, u16
    12      1     rssi_dbm, i8 (rounded)
    13      1     pad, u8 = 0
    14      2     n_sub, u16
    16      6     source_mac
    22      2     reserved, u16 = 0 (keeps the timestamp 8-aligned)
    24      8     timestamp_ns, u64

followed by 8 * n_rx * n_tx * n_sub payload bytes: float32 (real, imag)
pairs in rx-major, then tx, then subcarrier order.

Capture files (".wcap"): a 16-byte header (magic "WCAP", u32 version = 1,
u64 frame count) followed by `count` length-prefixed (u32) wire frames.
"""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .core import (
    ChannelSpec,
    ConfigurationError,
    CsiFrame,
    CsiSenseError,
    FrameValidationError,
)

FRAME_MAGIC = 0x57435349
FRAME_VERSION = 1
_HEADER = struct.Struct("<IBBBBHHbBH6sHQ")
HEADER_SIZE = _HEADER.size  # 32

CAPTURE_MAGIC = b"WCAP"
CAPTURE_VERSION = 1
_CAPTURE_HEADER = struct.Struct("<4sIQ")
CAPTURE_HEADER_SIZE = _CAPTURE_HEADER.size  # 16
_LENGTH_PREFIX = struct.Struct("<I")

DEFAULT_UDP_PORT = 5500


class CodecError(CsiSenseError):
    """Base class for frame and capture codec errors."""


class BadMagicError(CodecError):
    pass


class UnsupportedVersionError(CodecError):
    pass


class TruncatedFrameError(CodecError):
    pass


class FrameFormatError(CodecError):
    """Inconsistent counts, out-of-range fields, or trailing bytes."""


class CaptureFormatError(CodecError):
    """Corrupt capture file header."""


class CaptureTruncatedError(CodecError):
    """Capture ended mid-frame; `frames` holds everything before the cut."""

    def __init__(self, message: str, frames: list[CsiFrame] | None = None):
        super().__init__(message)
        self.frames = frames if frames is not None else []


def encode_frame(frame: CsiFrame) -> bytes:
    """Serialize a frame to the documented wire layout.

    The rssi field is rounded to the nearest integer dB; every other
    field round-trips bit-exactly.
    """
    rssi = int(round(frame.rssi_dbm))
    _check_range("rssi_dbm", rssi, -128, 127)
    _check_range("channel_number", frame.chanspec.channel_number, 0, 0xFFFF)
    _check_range("seq", frame.seq, 0, 0xFFFF)
    _check_range("timestamp_ns", frame.timestamp_ns, 0, 0xFFFFFFFFFFFFFFFF)
    header = _HEADER.pack(
        FRAME_MAGIC,
        FRAME_VERSION,
        frame.n_rx,
        frame.n_tx,
        frame.chanspec.bandwidth_mhz,
        frame.chanspec.channel_number,
        frame.seq,
        rssi,
        0,
        frame.n_sub,
        frame.source_mac,
        0,
        frame.timestamp_ns,
    )
    payload = np.ascontiguousarray(frame.csi, dtype=np.complex64).view(np.float32)
    return header + payload.tobytes()


def decode_frame(buf: bytes) -> CsiFrame:
    """Decode one wire frame; raises a structured CodecError on any defect.

    Never reads past the buffer and never raises anything that is not a
    CodecError, no matter the input bytes.
    """
    if len(buf) < HEADER_SIZE:
        raise TruncatedFrameError(f"buffer too short for header: {len(buf)} bytes")
    (magic, version, n_rx, n_tx, bandwidth, channel, seq, rssi, _pad, n_sub,
     mac, _reserved, timestamp) = _HEADER.unpack_from(buf)
    if magic != FRAME_MAGIC:
        raise BadMagicError(f"bad magic 0x{magic:08x}")
    if version != FRAME_VERSION:
        raise UnsupportedVersionError(f"unsupported frame version {version}")
    try:
        chanspec = ChannelSpec(channel, bandwidth)
    except ConfigurationError as exc:
        raise FrameFormatError(str(exc)) from exc
    if not (1 <= n_rx <= 4 and 1 <= n_tx <= 4):
        raise FrameFormatError(f"antenna counts out of range: rx={n_rx} tx={n_tx}")
    if n_sub != chanspec.n_sub:
        raise FrameFormatError(
            f"n_sub={n_sub} inconsistent with {bandwidth} MHz (expected {chanspec.n_sub})"
        )
    expected = HEADER_SIZE + 8 * n_rx * n_tx * n_sub
    if len(buf) < expected:
        raise TruncatedFrameError(f"payload truncated: {len(buf)} of {expected} bytes")
    if len(buf) > expected:
        raise FrameFormatError(f"{len(buf) - expected} trailing bytes")
    pairs = np.frombuffer(buf, dtype="<f4", offset=HEADER_SIZE).reshape(n_rx, n_tx, n_sub, 2)
    csi = pairs[..., 0] + 1j * pairs[..., 1]
    try:
        return CsiFrame(
            csi=csi.astype(np.complex64),
            rssi_dbm=float(rssi),
            source_mac=mac,
            seq=seq,
            chanspec=chanspec,
            timestamp_ns=timestamp,
        )
    except FrameValidationError as exc:
        raise FrameFormatError(str(exc)) from exc


def parse_mac(text: str) -> bytes:
    """Parse "aa:bb:cc:dd:ee:ff" into 6 bytes."""
    parts = text.strip().split(":")
    if len(parts) != 6:
        raise ConfigurationError(f"bad MAC address {text!r}")
    try:
        return bytes(int(p, 16) for p in parts)
    except ValueError as exc:
        raise ConfigurationError(f"bad MAC address {text!r}") from exc


def format_mac(mac: bytes) -> str:
    return ":".join(f"{b:02x}" for b in mac)


@dataclass
class IngestStats:
    """Drop accounting for one ingest stream."""

    received: int = 0
    delivered: int = 0
    dropped_decode: int = 0
    dropped_mac: int = 0
    dropped_rssi: int = 0


def ingest_stream(
    datagrams: Iterable[bytes],
    mac_allow: set[bytes] | None = None,
    rssi_floor_dbm: float | None = None,
    stats: IngestStats | None = None,
) -> Iterator[CsiFrame]:
    """Decode datagrams (one frame each), filter, preserve arrival order.

    Frames failing the MAC allow-list or the RSSI floor are dropped and
    counted; malformed datagrams are counted and skipped, never fatal.
    An empty/None allow-list passes every MAC.
    """
    if stats is None:
        stats = IngestStats()
    for buf in datagrams:
        stats.received += 1
        try:
            frame = decode_frame(buf)
        except CodecError:
            stats.dropped_decode += 1
            continue
        if mac_allow and frame.source_mac not in mac_allow:
            stats.dropped_mac += 1
            continue
        if rssi_floor_dbm is not None and frame.rssi_dbm < rssi_floor_dbm:
            stats.dropped_rssi += 1
            continue
        stats.delivered += 1
        yield frame


def udp_datagrams(
    port: int = DEFAULT_UDP_PORT,
    host: str = "0.0.0.0",
    max_datagrams: int | None = None,
    timeout_s: float | None = None,
) -> Iterator[bytes]:
    """Yield UDP datagrams from a bound socket (one wire frame each).

    Stops after `max_datagrams` or on receive timeout.
    """
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    try:
        sock.bind((host, port))
        sock.settimeout(timeout_s)
        count = 0
        while max_datagrams is None or count < max_datagrams:
            try:
                buf, _addr = sock.recvfrom(1 << 20)
            except socket.timeout:
                return
            count += 1
            yield buf
    finally:
        sock.close()


def write_capture(path, frames: Iterable[CsiFrame]) -> int:
    """Write frames to a .wcap capture file; returns the frame count."""
    encoded = [encode_frame(f) for f in frames]
    with open(path, "wb") as fh:
        fh.write(_CAPTURE_HEADER.pack(CAPTURE_MAGIC, CAPTURE_VERSION, len(encoded)))
        for buf in encoded:
            fh.write(_LENGTH_PREFIX.pack(len(buf)))
            fh.write(buf)
    return len(encoded)


def iter_capture(path) -> Iterator[CsiFrame]:
    """Yield frames from a capture in stored order.

    Raises CaptureFormatError on a corrupt header and
    CaptureTruncatedError when the file ends mid-frame (frames already
    yielded remain valid).
    """
    with open(path, "rb") as fh:
        head = fh.read(CAPTURE_HEADER_SIZE)
        if len(head) < CAPTURE_HEADER_SIZE:
            raise CaptureFormatError("file too short for capture header")
        magic, version, count = _CAPTURE_HEADER.unpack(head)
        if magic != CAPTURE_MAGIC:
            raise CaptureFormatError(f"bad capture magic {magic!r}")
        if version != CAPTURE_VERSION:
            raise CaptureFormatError(f"unsupported capture version {version}")
        max_frame = HEADER_SIZE + 8 * 4 * 4 * 1024  # no valid frame is bigger
        for k in range(count):
            prefix = fh.read(_LENGTH_PREFIX.size)
            if len(prefix) < _LENGTH_PREFIX.size:
                raise CaptureTruncatedError(f"capture ends at frame {k} of {count}")
            (length,) = _LENGTH_PREFIX.unpack(prefix)
            if length > max_frame:
                raise CaptureTruncatedError(
                    f"frame {k} of {count} has implausible length {length}"
                )
            buf = fh.read(length)
            if len(buf) < length:
                raise CaptureTruncatedError(f"frame {k} of {count} cut short")
            try:
                yield decode_frame(buf)
            except CodecError as exc:
                raise CaptureTruncatedError(f"frame {k} of {count} undecodable: {exc}") from exc
        if fh.read(1):
            raise CaptureFormatError("trailing bytes after final frame")


def read_capture(path) -> list[CsiFrame]:
    """Read a whole capture; on truncation the error carries partial frames."""
    frames: list[CsiFrame] = []
    try:
        for frame in iter_capture(path):
            frames.append(frame)
    except CaptureTruncatedError as exc:
        exc.frames = frames
        raise
    return frames


def _check_range(name: str, value: int, lo: int, hi: int) -> None:
    if not lo <= value <= hi:
        raise FrameFormatError(f"{name}={value} does not fit the wire layout")
