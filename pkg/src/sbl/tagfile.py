"""Click-stream files.

Binary layout (all integers little-endian)::

    offset  size  field
    0       8     magic b"SBLTAG01"
    8       1     m_channels (1..32)
    9       8     pulse_period_ps
    17      8     pulse_count
    25      12*P  records: u64 pulse_index, u32 channel bitmask

Every pulse has a record, empty ones included. The CSV alternative lists
one click per row as ``pulse_index,channel``; empty pulses have no row, so
the header comments carry the pulse range::

    # m_channels=31
    # pulse_period_ps=12500
    # first_pulse=0
    # pulse_count=1000
    pulse_index,channel
    3,17

Readers pick the format from the first eight bytes.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clickstream import MAX_CHANNELS, ClickStream
from .errors import CorruptFileError, DomainError

MAGIC = b"SBLTAG01"
_HEADER = struct.Struct("<8sBQQ")
HEADER_SIZE = _HEADER.size
RECORD = np.dtype([("pulse_index", "<u8"), ("mask", "<u4")])
_CSV_KEYS = ("m_channels", "pulse_period_ps", "first_pulse", "pulse_count")


@dataclass(frozen=True)
class TagFileHeader:
    m_channels: int
    pulse_period_ps: int
    pulse_count: int
    magic: bytes = MAGIC

    def pack(self) -> bytes:
        return _HEADER.pack(self.magic, self.m_channels, self.pulse_period_ps, self.pulse_count)

    @classmethod
    def unpack(cls, raw: bytes) -> "TagFileHeader":
        if len(raw) < HEADER_SIZE:
            raise CorruptFileError("file is shorter than the tag header")
        magic, m, period, count = _HEADER.unpack_from(raw)
        if magic != MAGIC:
            raise CorruptFileError(f"bad magic {magic!r}")
        if not 1 <= m <= MAX_CHANNELS:
            raise CorruptFileError(f"header m_channels {m} outside 1..{MAX_CHANNELS}")
        if period == 0:
            raise CorruptFileError("header pulse_period_ps is zero")
        return cls(m, period, count, magic)


def to_bytes(stream: ClickStream) -> bytes:
    rec = np.empty(len(stream), dtype=RECORD)
    rec["pulse_index"] = stream.pulse_index
    rec["mask"] = stream.masks
    header = TagFileHeader(stream.m_channels, stream.pulse_period_ps, len(stream))
    return header.pack() + rec.tobytes()


def from_bytes(raw: bytes) -> ClickStream:
    header = TagFileHeader.unpack(raw)
    body = len(raw) - HEADER_SIZE
    if body != header.pulse_count * RECORD.itemsize:
        raise CorruptFileError(
            f"header announces {header.pulse_count} records but the body holds {body} bytes"
        )
    rec = np.frombuffer(raw, dtype=RECORD, offset=HEADER_SIZE)
    try:
        return ClickStream(rec["mask"], header.m_channels, header.pulse_period_ps, rec["pulse_index"])
    except DomainError as exc:
        raise CorruptFileError(str(exc)) from exc


def to_csv(stream: ClickStream) -> str:
    idx = stream.pulse_index
    first = int(idx[0]) if len(stream) else 0
    if len(stream) and int(idx[-1]) - first + 1 != len(stream):
        raise DomainError("CSV tag format needs a contiguous pulse range")
    out = io.StringIO()
    meta = dict(zip(_CSV_KEYS, (stream.m_channels, stream.pulse_period_ps, first, len(stream))))
    for k, v in meta.items():
        out.write(f"# {k}={v}\n")
    out.write("pulse_index,channel\n")
    bits = (stream.masks[:, None] >> np.arange(stream.m_channels, dtype=np.uint32)) & 1
    rows, chans = np.nonzero(bits)
    for i, c in zip(idx[rows].tolist(), chans.tolist()):
        out.write(f"{i},{c}\n")
    return out.getvalue()


def from_csv(text: str) -> ClickStream:
    meta: dict[str, int] = {}
    pairs = []
    header_seen = False
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, val = line[1:].strip().partition("=")
            if sep and key.strip() in _CSV_KEYS:
                try:
                    meta[key.strip()] = int(val)
                except ValueError as exc:
                    raise CorruptFileError(f"line {lineno}: bad value for {key.strip()}") from exc
            continue
        if not header_seen:
            if line.replace(" ", "") != "pulse_index,channel":
                raise CorruptFileError(f"line {lineno}: expected header 'pulse_index,channel'")
            header_seen = True
            continue
        try:
            a, b = line.split(",")
            pairs.append((int(a), int(b)))
        except ValueError as exc:
            raise CorruptFileError(f"line {lineno}: expected 'pulse_index,channel'") from exc
    missing = [k for k in ("m_channels", "pulse_count") if k not in meta]
    if missing or not header_seen:
        raise CorruptFileError(f"CSV tag file lacks {missing or 'the column header'}")
    m, count = meta["m_channels"], meta["pulse_count"]
    first = meta.get("first_pulse", 0)
    period = meta.get("pulse_period_ps", 12_500)
    if not 1 <= m <= MAX_CHANNELS or count < 0 or first < 0 or period <= 0:
        raise CorruptFileError("CSV tag metadata out of range")
    masks = np.zeros(count, dtype=np.uint32)
    if pairs:
        arr = np.array(pairs, dtype=np.int64)
        pos, ch = arr[:, 0] - first, arr[:, 1]
        if (pos < 0).any() or (pos >= count).any():
            raise CorruptFileError("CSV row pulse_index outside the announced pulse range")
        if (ch < 0).any() or (ch >= m).any():
            raise CorruptFileError(f"CSV row channel outside 0..{m - 1}")
        np.bitwise_or.at(masks, pos, (np.uint32(1) << ch.astype(np.uint32)))
    idx = np.arange(first, first + count, dtype=np.uint64)
    return ClickStream(masks, m, period, idx)


def write_tag(stream: ClickStream, path, fmt: str = "binary") -> Path:
    path = Path(path)
    if fmt == "binary":
        path.write_bytes(to_bytes(stream))
    elif fmt == "csv":
        path.write_text(to_csv(stream), encoding="ascii", newline="\n")
    else:
        raise DomainError(f"unknown tag format {fmt!r}")
    return path


def read_tag(path) -> ClickStream:
    """Read either format, chosen by the leading bytes."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CorruptFileError(f"cannot read {path}: {exc}") from exc
    if raw[:8] == MAGIC:
        return from_bytes(raw)
    head = raw.lstrip()[:1]
    if head in (b"#", b"p"):
        try:
            return from_csv(raw.decode("ascii"))
        except UnicodeDecodeError as exc:
            raise CorruptFileError(f"{path}: not ASCII") from exc
    raise CorruptFileError(f"{path}: unrecognized tag file (bad magic)")
