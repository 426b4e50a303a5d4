"""Timestamped detector events, detector deadtime and the stream file formats."""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numba as nb
import numpy as np

__all__ = ["ClickStream", "apply_deadtime", "write_stream", "read_stream", "MAGIC", "VERSION"]

MAGIC = b"PSIM"
VERSION = 1
_HEADER = struct.Struct("<4sHH")
_EVENT = np.dtype([("t", "<u8"), ("c", "<u2")])  # packed, 10 bytes per event


@dataclass(frozen=True, eq=False)
class ClickStream:
    """Events sorted by timestamp (integer ps), ties broken by channel."""

    timestamps: np.ndarray
    channels: np.ndarray
    duration: int
    rep_period_ps: float | None = None

    def __post_init__(self):
        t = np.ascontiguousarray(self.timestamps, dtype=np.int64)
        c = np.ascontiguousarray(self.channels, dtype=np.uint16)
        if t.shape != c.shape or t.ndim != 1:
            raise ValueError("timestamps and channels must be 1-D arrays of equal length")
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "channels", c)
        if t.size:
            if t[0] < 0 or t[-1] >= self.duration:
                raise ValueError("timestamps must lie in [0, duration)")
            if np.any(np.diff(t) < 0):
                raise ValueError("timestamps must be sorted")
            for ch in np.unique(c):
                if np.any(np.diff(t[c == ch]) <= 0):
                    raise ValueError(f"timestamps not strictly increasing on channel {ch}")

    def __len__(self):
        return self.timestamps.size

    def __eq__(self, other):
        return (isinstance(other, ClickStream) and self.duration == other.duration
                and np.array_equal(self.timestamps, other.timestamps)
                and np.array_equal(self.channels, other.channels))

    def channel(self, ch):
        return self.timestamps[self.channels == ch]

    @classmethod
    def from_unsorted(cls, timestamps, channels, duration, rep_period_ps=None):
        t = np.asarray(timestamps, dtype=np.int64)
        c = np.asarray(channels, dtype=np.uint16)
        order = np.lexsort((c, t))
        return cls(t[order], c[order], int(duration), rep_period_ps)

    @classmethod
    def merge(cls, streams, duration=None, rep_period_ps=None):
        t = np.concatenate([s.timestamps for s in streams]) if streams else np.zeros(0, np.int64)
        c = np.concatenate([s.channels for s in streams]) if streams else np.zeros(0, np.uint16)
        if duration is None:
            duration = max(s.duration for s in streams)
        return cls.from_unsorted(t, c, duration, rep_period_ps)


@nb.njit(cache=True)
def _deadtime_mask(t, c, n_channels, deadtime):
    keep = np.zeros(t.size, dtype=np.bool_)
    last = np.full(n_channels, -(2 ** 62), dtype=np.int64)
    for i in range(t.size):
        ch = c[i]
        if t[i] - last[ch] >= deadtime and t[i] > last[ch]:
            keep[i] = True
            last[ch] = t[i]
    return keep


def apply_deadtime(timestamps, channels, deadtime_ps):
    """Non-paralyzable deadtime on time-sorted events: a click is dropped if it
    falls within ``deadtime_ps`` of the previous *registered* click on its
    channel. Coincident same-channel events collapse to one even at zero deadtime."""
    t = np.ascontiguousarray(timestamps, dtype=np.int64)
    c = np.ascontiguousarray(channels, dtype=np.int64)
    if t.size == 0:
        return np.zeros(0, dtype=bool)
    return _deadtime_mask(t, c, int(c.max()) + 1, int(deadtime_ps))


def write_stream(stream, path, fmt="binary", n_channels=None):
    if n_channels is None:
        n_channels = int(stream.channels.max()) + 1 if len(stream) else 0
    if fmt == "binary":
        rec = np.empty(len(stream), dtype=_EVENT)
        rec["t"] = stream.timestamps
        rec["c"] = stream.channels
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, n_channels))
            fh.write(rec.tobytes())
    elif fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["timestamp_ps", "channel"])
            w.writerows(zip(stream.timestamps.tolist(), stream.channels.tolist()))
    else:
        raise ValueError(f"unknown stream format {fmt!r}")


def read_stream(path, fmt=None, duration=None, rep_period_ps=None):
    """Read a stream file; the format is sniffed from the magic when not given.

    Neither format stores the acquisition duration; it defaults to one past
    the last timestamp.
    """
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if fmt is None:
            fmt = "binary" if head[:4] == MAGIC else "csv"
        if fmt == "binary":
            magic, version, _ = _HEADER.unpack(head)
            if magic != MAGIC:
                raise ValueError(f"{path}: bad magic {magic!r}")
            if version != VERSION:
                raise ValueError(f"{path}: unsupported version {version}")
            rec = np.frombuffer(fh.read(), dtype=_EVENT)
            t = rec["t"].astype(np.int64)
            c = rec["c"].astype(np.uint16)
    if fmt == "csv":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != ["timestamp_ps", "channel"]:
            raise ValueError(f"{path}: expected header timestamp_ps,channel")
        t = np.array([int(r[0]) for r in rows[1:]], dtype=np.int64)
        c = np.array([int(r[1]) for r in rows[1:]], dtype=np.uint16)
    if duration is None:
        duration = int(t.max()) + 1 if t.size else 1
    return ClickStream(t, c, duration, rep_period_ps)
