"""Event stream parsing, keyframe-centered windowing, and polarity slice accumulation.

Timestamps are integer microseconds throughout; a 33 ms frame period is exactly
33,000 us, so window and slice boundaries never drift.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

EVS_MAGIC = b"EVS1"
EVS_HEADER = np.dtype([("magic", "S4"), ("w", "<u2"), ("h", "<u2"), ("pad", "V8")])
EVS_RECORD = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "<i1"), ("pad", "V3")])


class EventFormatError(ValueError):
    """Malformed event input. ``line`` is 1-based for CSV, a record index for binary."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"{message} (record at line/index {line})"
        super().__init__(message)


@dataclass(frozen=True)
class EventRecord:
    """One camera event: (t, x, y, polarity) with polarity in {+1, -1}."""

    t: int
    x: int
    y: int
    polarity: int


def _as_columns(records):
    t = np.asarray([r.t for r in records], dtype=np.int64)
    x = np.asarray([r.x for r in records], dtype=np.int64)
    y = np.asarray([r.y for r in records], dtype=np.int64)
    p = np.asarray([r.polarity for r in records], dtype=np.int8)
    return t, x, y, p


def _check_bounds(t, x, y, p, width, height, line_offset=0):
    if len(t) == 0:
        return
    for name, col, bound in (("x", x, width), ("y", y, height)):
        bad = np.flatnonzero((col < 0) | (col >= bound))
        if bad.size:
            i = int(bad[0])
            raise EventFormatError(
                f"{name}={int(col[i])} out of sensor bounds [0, {bound})", line=i + line_offset
            )
    bad = np.flatnonzero(t < 0)
    if bad.size:
        i = int(bad[0])
        raise EventFormatError(f"negative timestamp {int(t[i])}", line=i + line_offset)
    bad = np.flatnonzero((p != 1) & (p != -1))
    if bad.size:
        i = int(bad[0])
        raise EventFormatError(f"polarity {int(p[i])} not in {{+1, -1}}", line=i + line_offset)


class EventStream:
    """Bounds-checked, time-sorted event sequence with sensor geometry.

    Events are stored columnar (int64 t/x/y, int8 polarity) so windowing and
    accumulation stay vectorized; iteration yields :class:`EventRecord` views.
    """

    __slots__ = ("sensor_width", "sensor_height", "t", "x", "y", "p")

    def __init__(self, sensor_width, sensor_height, t, x, y, p):
        if sensor_width <= 0 or sensor_height <= 0:
            raise EventFormatError(f"zero-sized sensor {sensor_width}x{sensor_height}")
        t = np.asarray(t, dtype=np.int64)
        x = np.asarray(x, dtype=np.int64)
        y = np.asarray(y, dtype=np.int64)
        p = np.asarray(p, dtype=np.int8)
        if not (len(t) == len(x) == len(y) == len(p)):
            raise EventFormatError("ragged event columns")
        _check_bounds(t, x, y, p, sensor_width, sensor_height)
        if len(t) > 1 and np.any(np.diff(t) < 0):
            i = int(np.flatnonzero(np.diff(t) < 0)[0]) + 1
            raise EventFormatError(f"timestamps not sorted at event {i}", line=i)
        self.sensor_width = int(sensor_width)
        self.sensor_height = int(sensor_height)
        self.t, self.x, self.y, self.p = t, x, y, p

    @classmethod
    def from_records(cls, sensor_width, sensor_height, records):
        return cls(sensor_width, sensor_height, *_as_columns(records))

    def __len__(self):
        return len(self.t)

    def __iter__(self):
        for i in range(len(self.t)):
            yield EventRecord(int(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.p[i]))

    def __eq__(self, other):
        if not isinstance(other, (EventStream, EventWindow)):
            return NotImplemented
        return (
            self.sensor_width == other.sensor_width
            and self.sensor_height == other.sensor_height
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.p, other.p)
        )


class EventWindow(EventStream):
    """Half-open event window [t_start, t_end) centered on a keyframe timestamp."""

    __slots__ = ("t_start", "t_end", "keyframe_t")

    def __init__(self, sensor_width, sensor_height, t, x, y, p, t_start, t_end, keyframe_t):
        super().__init__(sensor_width, sensor_height, t, x, y, p)
        if not (t_start <= keyframe_t < t_end):
            raise ValueError(f"keyframe {keyframe_t} outside window [{t_start}, {t_end})")
        if len(self.t) and (self.t[0] < t_start or self.t[-1] >= t_end):
            raise ValueError("window contains events outside its own bounds")
        self.t_start = int(t_start)
        self.t_end = int(t_end)
        self.keyframe_t = int(keyframe_t)


@dataclass
class SliceStack:
    """Per-slice, per-polarity event count images.

    ``counts[s, c, y, x]`` counts events in temporal slice ``s`` at pixel (x, y);
    channel 0 is positive polarity, channel 1 negative. ``pad_us`` records how far
    ``t_end`` was padded upward to make the window divisible into equal slices.
    """

    n_slices: int
    height: int
    width: int
    counts: np.ndarray
    t_start: int = 0
    t_end: int = 0
    pad_us: int = 0

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (self.n_slices, 2, self.height, self.width):
            raise ValueError(f"counts shape {self.counts.shape} does not match declared dims")
        if np.any(self.counts < 0):
            raise ValueError("negative slice counts")

    @property
    def total_events(self):
        return int(self.counts.sum())


def _parse_csv(data: bytes, sort, tolerance):
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = data[: exc.start].count(b"\n") + 1
        raise EventFormatError(f"invalid UTF-8 at byte {exc.start}", line=line) from None
    lines = text.split("\n")
    if not lines or not lines[0].strip():
        raise EventFormatError("missing 'w=<int>,h=<int>' header", line=1)
    header = lines[0].strip()
    try:
        wpart, hpart = header.split(",")
        if not (wpart.startswith("w=") and hpart.startswith("h=")):
            raise ValueError
        width, height = int(wpart[2:]), int(hpart[2:])
    except ValueError:
        raise EventFormatError(f"bad header {header!r}, expected 'w=<int>,h=<int>'", line=1) from None
    if width <= 0 or height <= 0:
        raise EventFormatError(f"zero-sized sensor {width}x{height}", line=1)

    ts, xs, ys, ps = [], [], [], []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise EventFormatError(f"expected 't,x,y,p', got {line!r}", line=lineno)
        try:
            t, x, y, p = (int(v) for v in parts)
        except ValueError:
            raise EventFormatError(f"non-integer field in {line!r}", line=lineno) from None
        ts.append(t)
        xs.append(x)
        ys.append(y)
        ps.append(p)
    t = np.asarray(ts, dtype=np.int64)
    x = np.asarray(xs, dtype=np.int64)
    y = np.asarray(ys, dtype=np.int64)
    p = np.asarray(ps, dtype=np.int8)
    _check_bounds(t, x, y, p, width, height, line_offset=2)
    t, x, y, p = _enforce_order(t, x, y, p, sort, tolerance, line_offset=2)
    return EventStream(width, height, t, x, y, p)


def _parse_evs(data: bytes, sort, tolerance):
    if len(data) < EVS_HEADER.itemsize:
        raise EventFormatError("truncated header", line=0)
    head = np.frombuffer(data[: EVS_HEADER.itemsize], dtype=EVS_HEADER)[0]
    if bytes(head["magic"]) != EVS_MAGIC:
        raise EventFormatError(f"bad magic {bytes(head['magic'])!r}, expected {EVS_MAGIC!r}", line=0)
    if int(head["w"]) == 0 or int(head["h"]) == 0:
        raise EventFormatError(f"zero-sized sensor {int(head['w'])}x{int(head['h'])}", line=0)
    body = data[EVS_HEADER.itemsize :]
    if len(body) % EVS_RECORD.itemsize:
        raise EventFormatError(
            f"payload of {len(body)} bytes is not a whole number of 16-byte records",
            line=len(body) // EVS_RECORD.itemsize,
        )
    rec = np.frombuffer(body, dtype=EVS_RECORD)
    t = rec["t"].astype(np.int64)
    x = rec["x"].astype(np.int64)
    y = rec["y"].astype(np.int64)
    p = rec["p"].astype(np.int8)
    _check_bounds(t, x, y, p, int(head["w"]), int(head["h"]))
    t, x, y, p = _enforce_order(t, x, y, p, sort, tolerance)
    return EventStream(int(head["w"]), int(head["h"]), t, x, y, p)


def _enforce_order(t, x, y, p, sort, tolerance, line_offset=0):
    if len(t) > 1:
        regress = np.maximum.accumulate(t)[:-1] - t[1:]
        worst = int(regress.max()) if regress.size else 0
        if worst > tolerance and not sort:
            i = int(np.argmax(regress)) + 1
            raise EventFormatError(
                f"timestamp regression of {worst} us exceeds tolerance {tolerance}",
                line=i + line_offset,
            )
        if worst > 0:
            order = np.argsort(t, kind="stable")
            t, x, y, p = t[order], x[order], y[order], p[order]
    return t, x, y, p


def parse_event_stream(data: bytes, format: str = "csv", *, sort: bool = False,
                       regression_tolerance_us: int = 0) -> EventStream:
    """Decode a raw event dump in ``csv`` or ``evs`` (packed binary) format.

    CSV: header line ``w=<int>,h=<int>`` then ``t,x,y,p`` lines with p in {1,-1}.
    EVS: 16-byte header (magic ``EVS1``, u16 w, u16 h, 8 pad bytes), then
    little-endian 16-byte records (u64 t, u16 x, u16 y, i8 p, 3 pad bytes).

    Timestamp regressions beyond ``regression_tolerance_us`` raise unless
    ``sort=True``, which stably re-sorts instead.
    """
    if format == "csv":
        return _parse_csv(data, sort, regression_tolerance_us)
    if format == "evs":
        return _parse_evs(data, sort, regression_tolerance_us)
    raise ValueError(f"unknown format {format!r}, expected 'csv' or 'evs'")


def write_csv(stream: EventStream) -> bytes:
    out = [f"w={stream.sensor_width},h={stream.sensor_height}"]
    for i in range(len(stream)):
        out.append(f"{stream.t[i]},{stream.x[i]},{stream.y[i]},{stream.p[i]}")
    return ("\n".join(out) + "\n").encode("utf-8")


def write_evs(stream: EventStream) -> bytes:
    head = np.zeros(1, dtype=EVS_HEADER)
    head["magic"] = EVS_MAGIC
    head["w"] = stream.sensor_width
    head["h"] = stream.sensor_height
    rec = np.zeros(len(stream), dtype=EVS_RECORD)
    rec["t"] = stream.t.astype(np.uint64)
    rec["x"] = stream.x.astype(np.uint16)
    rec["y"] = stream.y.astype(np.uint16)
    rec["p"] = stream.p
    return head.tobytes() + rec.tobytes()


def select_window(stream: EventStream, keyframe_t: int, n: int = 4,
                  frame_ms: int = 33) -> EventWindow:
    """Cut the half-open window [keyframe_t - n*frame_ms/2, keyframe_t + n*frame_ms/2).

    The window spans exactly n * frame_ms milliseconds centered on the keyframe.
    A window reaching past the stream's recorded time span only warns.
    """
    if n <= 0 or frame_ms <= 0:
        raise ValueError(f"window size n={n}, frame_ms={frame_ms} must be positive")
    half = int(n) * int(frame_ms) * 500  # n * frame_ms * 1000 / 2, exact in microseconds
    t_start = int(keyframe_t) - half
    t_end = int(keyframe_t) + half
    if len(stream):
        lo, hi = int(stream.t[0]), int(stream.t[-1])
        if t_start < lo or t_end > hi + 1:
            warnings.warn(
                f"window [{t_start}, {t_end}) extends past stream span [{lo}, {hi}]",
                stacklevel=2,
            )
    i0 = int(np.searchsorted(stream.t, t_start, side="left"))
    i1 = int(np.searchsorted(stream.t, t_end, side="left"))
    return EventWindow(
        stream.sensor_width, stream.sensor_height,
        stream.t[i0:i1], stream.x[i0:i1], stream.y[i0:i1], stream.p[i0:i1],
        t_start, t_end, keyframe_t,
    )


def accumulate_slices(window: EventWindow, n_slices: int = 3, height: int | None = None,
                      width: int | None = None) -> SliceStack:
    """Accumulate window events into ``n_slices`` two-channel count images.

    The window is partitioned into equal half-open slices; if the duration is not
    divisible by ``n_slices``, ``t_end`` is padded upward by < n_slices us and the
    pad recorded on the stack. Channel 0 counts +1 events, channel 1 counts -1.
    """
    if n_slices <= 0:
        raise ValueError("n_slices must be positive")
    height = window.sensor_height if height is None else int(height)
    width = window.sensor_width if width is None else int(width)
    if height <= 0 or width <= 0:
        raise ValueError(f"zero-sized sensor {width}x{height}")
    duration = window.t_end - window.t_start
    pad = (-duration) % n_slices
    slice_len = (duration + pad) // n_slices
    counts = np.zeros((n_slices, 2, height, width), dtype=np.int64)
    if len(window):
        s = (window.t - window.t_start) // slice_len
        c = (window.p < 0).astype(np.int64)  # 0 = positive, 1 = negative
        np.add.at(counts, (s, c, window.y, window.x), 1)
    return SliceStack(n_slices, height, width, counts,
                      t_start=window.t_start, t_end=window.t_end + pad, pad_us=int(pad))


GRAY = 128


def render_slice_png(stack: SliceStack, slice_index: int) -> bytes:
    """Render one slice as a deterministic red/blue PNG.

    Pixels fade from mid-gray toward red (net positive polarity) or blue (net
    negative), scaled by the slice's own peak magnitude. Identical stacks render
    to byte-identical PNGs.
    """
    if not 0 <= slice_index < stack.n_slices:
        raise IndexError(f"slice {slice_index} out of range [0, {stack.n_slices})")
    net = stack.counts[slice_index, 0].astype(np.float64) - stack.counts[slice_index, 1]
    peak = np.abs(net).max()
    img = np.full((stack.height, stack.width, 3), GRAY, dtype=np.uint8)
    if peak > 0:
        a = np.abs(net) / peak
        pos = net > 0
        neg = net < 0
        base = np.full_like(net, GRAY)
        img[..., 0] = np.where(pos, base + a * (255 - GRAY), np.where(neg, base * (1 - a), base)).round()
        img[..., 1] = (base * np.where(net != 0, 1 - a, 1.0)).round()
        img[..., 2] = np.where(neg, base + a * (255 - GRAY), np.where(pos, base * (1 - a), base)).round()
    buf = io.BytesIO()
    Image.fromarray(img, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()
