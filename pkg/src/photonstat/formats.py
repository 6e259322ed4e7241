"""
File formats: PTAG binary time tags, CSV count streams, CSV/JSON curve output.

PTAG layout (little-endian, no padding)::

    offset  size  field
    0       5     magic b"PTAG1"
    5       1     u8 version (= 1)
    6       8     u64 tick resolution in picoseconds
    14      8     u64 record count
    22      9*N   records: u64 timestamp ticks, u8 channel (1 or 2)

Readers stream the file in fixed-size record blocks, so memory use does not
grow with file size.
"""

from __future__ import annotations

import csv
import json
import os
import struct
from typing import BinaryIO, Iterator, Optional, Tuple

import numpy as np

from .errors import FormatError
from .simulate import BinnedCountStream, TimeTagStream

MAGIC = b"PTAG1"
VERSION = 1
HEADER = struct.Struct("<5sBQQ")
HEADER_SIZE = HEADER.size  # 22
RECORD = np.dtype([("t", "<u8"), ("ch", "u1")])  # packed, itemsize 9
READ_BLOCK = 1 << 18


def _ps(resolution: float) -> int:
    x = resolution * 1e12
    ps = int(round(x))
    if ps < 1 or abs(x - ps) > 1e-6 + 1e-13 * x:
        raise ValueError(f"resolution {resolution} s is not a whole number of picoseconds")
    return ps


class PtagWriter:
    """Incremental PTAG writer; the record count is patched on close."""

    def __init__(self, path, resolution: float):
        self.path = os.fspath(path)
        self.resolution_ps = _ps(resolution)
        self.count = 0
        self._last = 0
        self._fh: BinaryIO = open(self.path, "wb")
        self._fh.write(HEADER.pack(MAGIC, VERSION, self.resolution_ps, 0))

    def write(self, timestamps: np.ndarray, channels: np.ndarray):
        t = np.asarray(timestamps, dtype=np.uint64)
        c = np.asarray(channels, dtype=np.uint8)
        if t.size == 0:
            return
        if t[0] < self._last or np.any(t[1:] < t[:-1]):
            raise ValueError("timestamps must be non-decreasing across writes")
        if np.any((c != 1) & (c != 2)):
            raise ValueError("channels must be 1 or 2")
        rec = np.empty(t.size, dtype=RECORD)
        rec["t"] = t
        rec["ch"] = c
        self._fh.write(rec.tobytes())
        self.count += t.size
        self._last = int(t[-1])

    def close(self):
        if self._fh.closed:
            return
        self._fh.seek(0)
        self._fh.write(HEADER.pack(MAGIC, VERSION, self.resolution_ps, self.count))
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_ptag(path, tags: TimeTagStream):
    with PtagWriter(path, tags.resolution) as w:
        w.write(tags.timestamps, tags.channels)


def read_ptag_header(fh: BinaryIO) -> Tuple[float, int]:
    """Return (resolution in seconds, record count); validates magic and version."""
    raw = fh.read(HEADER_SIZE)
    if len(raw) < HEADER_SIZE:
        raise FormatError(f"truncated PTAG header ({len(raw)} of {HEADER_SIZE} bytes)", offset=len(raw))
    magic, version, res_ps, count = HEADER.unpack(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"unsupported PTAG version {version}", offset=5)
    if res_ps == 0:
        raise FormatError("zero tick resolution", offset=6)
    return res_ps * 1e-12, count


def iter_ptag(path, block: Optional[int] = None) -> Iterator[Tuple[float, np.ndarray, np.ndarray]]:
    """Yield (resolution, timestamps, channels) blocks, validating as it goes.

    Raises FormatError with the byte offset of the first bad record
    (invalid channel, decreasing timestamp, or truncation).
    """
    block = READ_BLOCK if block is None else block
    with open(path, "rb") as fh:
        resolution, count = read_ptag_header(fh)
        expected = HEADER_SIZE + RECORD.itemsize * count
        size = os.fstat(fh.fileno()).st_size
        if size != expected:
            raise FormatError(
                f"file holds {size} bytes but header declares {count} records ({expected} bytes)",
                offset=min(size, expected),
            )
        done = 0
        last = 0
        while done < count:
            k = min(block, count - done)
            rec = np.fromfile(fh, dtype=RECORD, count=k)
            if rec.size != k:
                raise FormatError("unexpected end of records", offset=HEADER_SIZE + RECORD.itemsize * (done + rec.size))
            t = rec["t"]
            c = rec["ch"]
            bad = np.flatnonzero((c != 1) & (c != 2))
            if bad.size:
                i = done + int(bad[0])
                raise FormatError(f"invalid channel {int(c[bad[0]])} in record {i}", offset=HEADER_SIZE + 9 * i + 8)
            if t[0] < last:
                raise FormatError(f"timestamp decreases at record {done}", offset=HEADER_SIZE + 9 * done)
            dec = np.flatnonzero(t[1:] < t[:-1])
            if dec.size:
                i = done + int(dec[0]) + 1
                raise FormatError(f"timestamp decreases at record {i}", offset=HEADER_SIZE + 9 * i)
            last = int(t[-1])
            done += k
            yield resolution, t, c


def read_ptag(path) -> TimeTagStream:
    with open(path, "rb") as fh:
        resolution, _ = read_ptag_header(fh)
    ts, cs = [], []
    for _, t, c in iter_ptag(path):
        ts.append(t.copy())
        cs.append(c.copy())
    t = np.concatenate(ts) if ts else np.empty(0, dtype=np.uint64)
    c = np.concatenate(cs) if cs else np.empty(0, dtype=np.uint8)
    return TimeTagStream(resolution, t, c)


# -- CSV --------------------------------------------------------------------

def fmt(x) -> str:
    """Shortest round-trip decimal form; integers stay integers."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if x != x:
        return "nan"
    return repr(x)


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_counts_csv(path, stream: BinnedCountStream):
    """Columns: bin, counts_ch1, counts_ch2; bin width (s) in a leading comment line."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# bin_width={fmt(stream.bin_width)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin", "counts_ch1", "counts_ch2"])
        for i, (a, b) in enumerate(zip(stream.counts_ch1.tolist(), stream.counts_ch2.tolist())):
            w.writerow([i, a, b])


def read_counts_csv(path, bin_width: Optional[float] = None, fallback_bin_width: Optional[float] = None) -> BinnedCountStream:
    """Parse a counts CSV.  An explicit ``bin_width`` overrides the file's
    comment line; ``fallback_bin_width`` applies only when the file has none."""
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    line_no = 0
    if lines and lines[0].startswith("#"):
        meta = lines[0][1:].strip()
        if meta.startswith("bin_width=") and bin_width is None:
            try:
                bin_width = float(meta.split("=", 1)[1])
            except ValueError:
                raise FormatError("unparseable bin_width comment", offset=1)
        line_no = 1
    if bin_width is None:
        bin_width = fallback_bin_width
    if bin_width is None:
        raise FormatError("bin width missing from CSV and not given", offset=1)
    if line_no >= len(lines) or lines[line_no].replace(" ", "") != "bin,counts_ch1,counts_ch2":
        raise FormatError("expected header 'bin,counts_ch1,counts_ch2'", offset=line_no + 1)
    c1, c2 = [], []
    for j, line in enumerate(lines[line_no + 1 :], start=line_no + 2):
        if not line.strip():
            continue
        parts = line.split(",")
        try:
            if len(parts) != 3:
                raise ValueError
            a, b = int(parts[1]), int(parts[2])
            if a < 0 or b < 0:
                raise ValueError
        except ValueError:
            raise FormatError(f"bad count row {line!r}", offset=j)
        c1.append(a)
        c2.append(b)
    return BinnedCountStream(bin_width, np.array(c1, dtype=np.int64), np.array(c2, dtype=np.int64))


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
