"""CAN conversion and playback: DBC subset, signal codec, trace resampling.

Parses the message/signal subset of the DBC format, bit-packs physical
values into classic 8-byte CAN frames (Intel and Motorola byte orders),
converts labelled drive traces into timestamped playback records, and
streams them to a byte sink with optional real-time pacing.

Wire framing: timestamp_ms (u32 LE) | can_id (u32 LE) | dlc (u8) | data.
"""

from __future__ import annotations

import math
import re
import socket
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

LITTLE_ENDIAN = "little"
BIG_ENDIAN = "big"


class DbcSyntaxError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class OverlappingSignals(ValueError):
    """Two signals in one message claim the same bit."""


class SignalOutOfFrame(ValueError):
    """Signal bits extend past the message's dlc bytes."""


class ValueOutOfRange(ValueError):
    """Physical value outside [min, max] with clamping disabled."""


class MappingError(ValueError):
    """Trace field or target signal missing."""


class CsvFormatError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SinkError(RuntimeError):
    def __init__(self, message: str, frames_sent: int):
        super().__init__(message)
        self.frames_sent = frames_sent


@dataclass(frozen=True)
class CanSignalDef:
    name: str
    start_bit: int
    bit_length: int
    byte_order: str          # LITTLE_ENDIAN | BIG_ENDIAN
    signed: bool
    scale: float
    offset: float
    minimum: float
    maximum: float
    unit: str = ""

    def __post_init__(self):
        if not 1 <= self.bit_length <= 64:
            raise SignalOutOfFrame(
                f"{self.name}: bit_length {self.bit_length} outside 1..64")
        if not 0 <= self.start_bit <= 63:
            raise SignalOutOfFrame(
                f"{self.name}: start_bit {self.start_bit} outside 0..63")
        if self.minimum > self.maximum:
            raise ValueError(f"{self.name}: min > max")

    def bit_positions(self) -> list[int]:
        """Frame bit indices (byte*8 + bit-in-byte, LSB=0) occupied by the
        signal, ordered raw-LSB first."""
        if self.byte_order == LITTLE_ENDIAN:
            return [self.start_bit + k for k in range(self.bit_length)]
        # Motorola: start_bit is the MSB; walk down within the byte, then on
        # to bit 7 of the next byte
        positions = []
        byte_i, bit_i = divmod(self.start_bit, 8)
        for _ in range(self.bit_length):
            positions.append(byte_i * 8 + bit_i)
            bit_i -= 1
            if bit_i < 0:
                bit_i = 7
                byte_i += 1
        return positions[::-1]


@dataclass(frozen=True)
class CanMessageDef:
    can_id: int
    name: str
    dlc: int
    signals: tuple[CanSignalDef, ...]

    def __post_init__(self):
        if not 0 <= self.dlc <= 8:
            raise ValueError(f"{self.name}: dlc {self.dlc} outside 0..8")
        seen: dict[int, str] = {}
        for sig in self.signals:
            for pos in sig.bit_positions():
                if pos >= self.dlc * 8:
                    raise SignalOutOfFrame(
                        f"{self.name}.{sig.name}: bit {pos} outside dlc {self.dlc}")
                if pos in seen:
                    raise OverlappingSignals(
                        f"{self.name}: {sig.name} overlaps {seen[pos]} at bit {pos}")
                seen[pos] = sig.name

    def signal(self, name: str) -> CanSignalDef:
        for sig in self.signals:
            if sig.name == name:
                return sig
        raise MappingError(f"message {self.name} has no signal {name}")


@dataclass(frozen=True)
class CanDatabase:
    messages: tuple[CanMessageDef, ...]

    def by_name(self, name: str) -> CanMessageDef:
        for msg in self.messages:
            if msg.name == name:
                return msg
        raise MappingError(f"no message named {name}")


_BO_RE = re.compile(r"^BO_\s+(\d+)\s+(\w+)\s*:\s*(\d+)\s+(\S+)\s*$")
_SG_RE = re.compile(
    r"^\s*SG_\s+(\w+)\s*:\s*(\d+)\|(\d+)@([01])([+-])\s*"
    r"\(\s*([^,]+)\s*,\s*([^)]+)\s*\)\s*"
    r"\[\s*([^|]+)\|([^\]]+)\s*\]\s*\"([^\"]*)\"\s*(.*)$")


def parse_dbc(text: str) -> CanDatabase:
    """Parse the BO_/SG_ subset; other line kinds are ignored."""
    messages: list[dict] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip()
        stripped = line.strip()
        if stripped.startswith("BO_ "):
            m = _BO_RE.match(stripped)
            if not m:
                raise DbcSyntaxError(f"bad message line: {stripped!r}", lineno)
            messages.append({
                "can_id": int(m.group(1)),
                "name": m.group(2),
                "dlc": int(m.group(3)),
                "signals": [],
            })
        elif stripped.startswith("SG_ "):
            m = _SG_RE.match(stripped)
            if not m:
                raise DbcSyntaxError(f"bad signal line: {stripped!r}", lineno)
            if not messages:
                raise DbcSyntaxError("signal line before any message", lineno)
            try:
                sig = CanSignalDef(
                    name=m.group(1),
                    start_bit=int(m.group(2)),
                    bit_length=int(m.group(3)),
                    byte_order=LITTLE_ENDIAN if m.group(4) == "1" else BIG_ENDIAN,
                    signed=m.group(5) == "-",
                    scale=float(m.group(6)),
                    offset=float(m.group(7)),
                    minimum=float(m.group(8)),
                    maximum=float(m.group(9)),
                    unit=m.group(10))
            except ValueError as exc:
                raise DbcSyntaxError(str(exc), lineno) from exc
            messages[-1]["signals"].append(sig)
    return CanDatabase(messages=tuple(
        CanMessageDef(can_id=m["can_id"], name=m["name"], dlc=m["dlc"],
                      signals=tuple(m["signals"]))
        for m in messages))


# ---------------------------------------------------------------------------
# codec

def encode_signal(sig: CanSignalDef, value: float, frame: bytearray,
                  clamp: bool = True) -> None:
    """Pack a physical value into the frame buffer, touching only the
    signal's own bits."""
    if clamp:
        value = min(max(value, sig.minimum), sig.maximum)
    elif not sig.minimum <= value <= sig.maximum:
        raise ValueOutOfRange(
            f"{sig.name}: {value} outside [{sig.minimum}, {sig.maximum}]")
    raw = round((value - sig.offset) / sig.scale)
    if sig.signed:
        lo = -(1 << (sig.bit_length - 1))
        hi = (1 << (sig.bit_length - 1)) - 1
        raw = min(max(raw, lo), hi)
        raw &= (1 << sig.bit_length) - 1      # two's complement
    else:
        raw = min(max(raw, 0), (1 << sig.bit_length) - 1)
    for k, pos in enumerate(sig.bit_positions()):
        byte_i, bit_i = divmod(pos, 8)
        if raw >> k & 1:
            frame[byte_i] |= 1 << bit_i
        else:
            frame[byte_i] &= ~(1 << bit_i)


def decode_signal(sig: CanSignalDef, frame: bytes | bytearray) -> float:
    raw = 0
    for k, pos in enumerate(sig.bit_positions()):
        byte_i, bit_i = divmod(pos, 8)
        raw |= (frame[byte_i] >> bit_i & 1) << k
    if sig.signed and raw >> (sig.bit_length - 1):
        raw -= 1 << sig.bit_length
    return raw * sig.scale + sig.offset


# ---------------------------------------------------------------------------
# default database and trace mapping

DEFAULT_DBC = """\
BO_ 256 VEHICLE_DYNAMICS: 8 SIM
 SG_ speed_kmh : 0|16@1+ (0.01,0) [0|655.35] "km/h" DUT

BO_ 257 STEERING: 8 SIM
 SG_ angle_deg : 0|16@1- (0.1,0) [-3276.8|3276.7] "deg" DUT

BO_ 258 PEDALS: 8 SIM
 SG_ throttle_pct : 0|8@1+ (0.5,0) [0|100] "%" DUT
 SG_ brake_pct : 8|8@1+ (0.5,0) [0|100] "%" DUT
"""

MS_PER_KMH = 3.6


@dataclass(frozen=True)
class SignalMapping:
    """Pairs (trace field, message name, signal name, conversion factor)."""
    entries: tuple[tuple[str, str, str, float], ...]

    def validate(self, db: CanDatabase, trace_fields: set[str]) -> None:
        for field_name, msg_name, sig_name, _ in self.entries:
            if field_name not in trace_fields:
                raise MappingError(f"trace has no field {field_name!r}")
            db.by_name(msg_name).signal(sig_name)


DEFAULT_MAPPING = SignalMapping(entries=(
    ("speed", "VEHICLE_DYNAMICS", "speed_kmh", MS_PER_KMH),
    ("steering", "STEERING", "angle_deg", 180.0 / math.pi),
    ("throttle", "PEDALS", "throttle_pct", 100.0),
    ("brake", "PEDALS", "brake_pct", 100.0),
))

TRACE_FIELDS = {"t", "x", "y", "heading", "speed", "steering", "throttle", "brake"}


@dataclass(frozen=True)
class PlaybackRecord:
    timestamp_ms: int
    can_id: int
    dlc: int
    data: bytes

    def __post_init__(self):
        if len(self.data) != self.dlc:
            raise ValueError(
                f"data length {len(self.data)} != dlc {self.dlc}")


def convert_trace(trace, db: CanDatabase, mapping: SignalMapping,
                  sample_period_ms: int = 20) -> list[PlaybackRecord]:
    """Zero-order-hold resample of the trace, one record per mapped message
    per sample instant, sorted by timestamp then id.

    trace: sequence of VehicleState-like objects (attribute access).
    """
    if not trace:
        raise MappingError("empty trace")
    mapping.validate(db, TRACE_FIELDS)
    per_message: dict[str, list] = {}
    for entry in mapping.entries:
        per_message.setdefault(entry[1], []).append(entry)

    end_ms = round(trace[-1].t * 1000.0)
    instants = range(0, end_ms + 1, sample_period_ms)
    records = []
    idx = 0
    for ms in instants:
        while (idx + 1 < len(trace)
               and round(trace[idx + 1].t * 1000.0) <= ms):
            idx += 1
        state = trace[idx]
        for msg_name in sorted(per_message):
            msg = db.by_name(msg_name)
            frame = bytearray(msg.dlc)
            for field_name, _, sig_name, factor in per_message[msg_name]:
                value = getattr(state, field_name) * factor
                encode_signal(msg.signal(sig_name), value, frame)
            records.append(PlaybackRecord(
                timestamp_ms=ms, can_id=msg.can_id, dlc=msg.dlc,
                data=bytes(frame)))
    records.sort(key=lambda r: (r.timestamp_ms, r.can_id))
    return records


# ---------------------------------------------------------------------------
# playback CSV

CSV_HEADER = "timestamp_ms,can_id_hex,dlc,data_hex"


def write_playback_csv(records: list[PlaybackRecord], path: str | Path) -> None:
    lines = [CSV_HEADER]
    for rec in records:
        lines.append(f"{rec.timestamp_ms},{rec.can_id:x},{rec.dlc},{rec.data.hex()}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_playback_csv(path: str | Path) -> list[PlaybackRecord]:
    records = []
    prev_ts = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if lineno == 1:
                if line != CSV_HEADER:
                    raise CsvFormatError(f"bad header {line!r}", lineno)
                continue
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise CsvFormatError(f"expected 4 fields, got {len(parts)}", lineno)
            try:
                ts = int(parts[0])
                can_id = int(parts[1], 16)
                dlc = int(parts[2])
                data = bytes.fromhex(parts[3])
            except ValueError as exc:
                raise CsvFormatError(str(exc), lineno) from exc
            if dlc != len(data):
                raise CsvFormatError(
                    f"dlc {dlc} != data length {len(data)}", lineno)
            if prev_ts is not None and ts < prev_ts:
                raise CsvFormatError(
                    f"timestamp {ts} decreases from {prev_ts}", lineno)
            prev_ts = ts
            records.append(PlaybackRecord(ts, can_id, dlc, data))
    return records


# ---------------------------------------------------------------------------
# playback to a byte sink

AS_FAST_AS_POSSIBLE = "fast"
REAL_TIME = "realtime"


@dataclass(frozen=True)
class TransmissionReport:
    frames_sent: int
    mean_latency_ms: float
    min_latency_ms: float
    max_latency_ms: float


def open_sink(target: str):
    """file://path opens a binary file; tcp://host:port opens a socket
    stream. Anything with a write() method is accepted directly."""
    if target.startswith("file://"):
        return open(target[len("file://"):], "wb")
    if target.startswith("tcp://"):
        host, _, port = target[len("tcp://"):].partition(":")
        sock = socket.create_connection((host, int(port)))
        return sock.makefile("wb")
    raise ValueError(f"unsupported sink target {target!r}")


def playback(records: list[PlaybackRecord], sink,
             pacing: str = AS_FAST_AS_POSSIBLE) -> TransmissionReport:
    """Write frames to the sink in timestamp order; real-time pacing sleeps
    out the inter-record gaps."""
    latencies = []
    sent = 0
    prev_ts = None
    for rec in records:
        if pacing == REAL_TIME and prev_ts is not None:
            gap = (rec.timestamp_ms - prev_ts) / 1000.0
            if gap > 0:
                time.sleep(gap)
        prev_ts = rec.timestamp_ms
        frame = struct.pack("<IIB", rec.timestamp_ms, rec.can_id, rec.dlc) + rec.data
        start = time.perf_counter()
        try:
            sink.write(frame)
        except (OSError, ValueError) as exc:
            raise SinkError(f"sink failed after {sent} frames: {exc}", sent) from exc
        latencies.append((time.perf_counter() - start) * 1000.0)
        sent += 1
    if latencies:
        return TransmissionReport(
            frames_sent=sent,
            mean_latency_ms=sum(latencies) / len(latencies),
            min_latency_ms=min(latencies),
            max_latency_ms=max(latencies))
    return TransmissionReport(0, 0.0, 0.0, 0.0)


def read_frames(blob: bytes) -> list[PlaybackRecord]:
    """Inverse of the wire framing, for round-trip checks."""
    records = []
    offset = 0
    while offset < len(blob):
        ts, can_id, dlc = struct.unpack_from("<IIB", blob, offset)
        offset += 9
        data = blob[offset:offset + dlc]
        offset += dlc
        records.append(PlaybackRecord(ts, can_id, dlc, data))
    return records
