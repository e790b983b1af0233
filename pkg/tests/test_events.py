import hashlib
import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image

from eventforge.events import (
    EventFormatError,
    EventRecord,
    EventStream,
    accumulate_slices,
    parse_event_stream,
    render_slice_png,
    select_window,
    write_csv,
    write_evs,
)
from helpers import accumulate_oracle, make_random_stream, window_filter_oracle


def test_csv_single_line_maps_fields():
    stream = parse_event_stream(b"w=640,h=480\n100,5,3,1\n", "csv")
    assert stream.sensor_width == 640 and stream.sensor_height == 480
    assert list(stream) == [EventRecord(t=100, x=5, y=3, polarity=1)]


def test_csv_empty_body():
    stream = parse_event_stream(b"w=640,h=480\n", "csv")
    assert len(stream) == 0


def test_csv_malformed_line_reports_number():
    data = b"w=640,h=480\n100,5,3,1\nnot-an-event\n"
    with pytest.raises(EventFormatError) as err:
        parse_event_stream(data, "csv")
    assert err.value.line == 3


def test_csv_out_of_bounds_coordinate():
    with pytest.raises(EventFormatError, match="out of sensor bounds"):
        parse_event_stream(b"w=10,h=10\n100,10,3,1\n", "csv")


def test_csv_bad_polarity():
    with pytest.raises(EventFormatError, match="polarity"):
        parse_event_stream(b"w=10,h=10\n100,5,3,2\n", "csv")


def test_csv_bad_header():
    with pytest.raises(EventFormatError) as err:
        parse_event_stream(b"width=640\n", "csv")
    assert err.value.line == 1


def test_timestamp_regression_strict_and_repair():
    data = b"w=10,h=10\n200,1,1,1\n100,2,2,-1\n"
    with pytest.raises(EventFormatError, match="regression"):
        parse_event_stream(data, "csv")
    repaired = parse_event_stream(data, "csv", sort=True)
    assert [r.t for r in repaired] == [100, 200]
    # within tolerance: accepted and re-sorted to keep the stream invariant
    tolerant = parse_event_stream(data, "csv", regression_tolerance_us=100)
    assert [r.t for r in tolerant] == [100, 200]


def test_evs_round_trip_oracle():
    rng = np.random.default_rng(7)
    stream = make_random_stream(rng, 1000, width=640, height=480)
    parsed = parse_event_stream(write_evs(stream), "evs")
    assert parsed == stream
    assert parsed.sensor_width == 640 and parsed.sensor_height == 480


def test_csv_round_trip():
    rng = np.random.default_rng(8)
    stream = make_random_stream(rng, 200)
    assert parse_event_stream(write_csv(stream), "csv") == stream


def test_evs_bad_magic_and_truncation():
    with pytest.raises(EventFormatError, match="magic"):
        parse_event_stream(b"NOPE" + b"\x00" * 12, "evs")
    rng = np.random.default_rng(9)
    blob = write_evs(make_random_stream(rng, 3))
    with pytest.raises(EventFormatError, match="whole number"):
        parse_event_stream(blob[:-5], "evs")


def test_unknown_format():
    with pytest.raises(ValueError, match="unknown format"):
        parse_event_stream(b"", "aedat")


def test_csv_invalid_utf8_positioned_diagnostic():
    with pytest.raises(EventFormatError) as err:
        parse_event_stream(b"w=10,h=10\n100,1,1,1\n\xff\xfe,2,2,1\n", "csv")
    assert err.value.line == 3


@settings(max_examples=60, deadline=None)
@given(st.binary(max_size=200))
def test_parser_totality_over_arbitrary_bytes(blob):
    # any byte stream either parses or yields a positioned diagnostic
    for fmt in ("csv", "evs"):
        try:
            parse_event_stream(blob, fmt)
        except EventFormatError as err:
            assert err.line is not None


def test_window_paper_default_boundaries():
    rng = np.random.default_rng(10)
    stream = make_random_stream(rng, 50, t_max=2_000_000)
    window = select_window(stream, keyframe_t=1_000_000, n=4, frame_ms=33)
    assert (window.t_start, window.t_end) == (934_000, 1_066_000)


def test_window_half_open_boundary_membership():
    t = np.array([933_999, 934_000, 1_000_000, 1_065_999, 1_066_000])
    stream = EventStream(10, 10, t, [0, 1, 2, 3, 4], [0, 0, 0, 0, 0], [1, 1, 1, 1, 1])
    window = select_window(stream, 1_000_000, 4, 33)
    assert [r.t for r in window] == [934_000, 1_000_000, 1_065_999]


def test_window_against_brute_force_oracle():
    import warnings

    rng = np.random.default_rng(11)
    stream = make_random_stream(rng, 500)
    for _ in range(20):
        keyframe = int(rng.integers(100_000, 1_900_000))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            window = select_window(stream, keyframe, 4, 33)
        expected = window_filter_oracle(stream, window.t_start, window.t_end)
        assert list(window) == expected


def test_window_empty_range():
    stream = EventStream(10, 10, [5_000_000], [1], [1], [1])
    with pytest.warns(UserWarning, match="extends past"):
        window = select_window(stream, 1_000_000)
    assert len(window) == 0


def test_window_rejects_degenerate_params():
    stream = EventStream(10, 10, [0], [0], [0], [1])
    with pytest.raises(ValueError):
        select_window(stream, 0, n=0)
    with pytest.raises(ValueError):
        select_window(stream, 0, frame_ms=0)


def test_window_idempotence():
    rng = np.random.default_rng(12)
    stream = make_random_stream(rng, 300)
    window = select_window(stream, 1_000_000, 4, 33)
    again = select_window(window, 1_000_000, 4, 33)
    assert list(again) == list(window)


@pytest.mark.filterwarnings("ignore:window")
def test_accumulate_single_event():
    stream = EventStream(8, 8, [10], [2], [3], [1])
    window = select_window(stream, 1000, n=2, frame_ms=1)  # [0, 2000), event in slice 0
    stack = accumulate_slices(window, n_slices=2)
    assert stack.counts[0, 0, 3, 2] == 1
    assert stack.counts.sum() == 1


def test_accumulate_matches_nested_loop_oracle():
    rng = np.random.default_rng(13)
    stream = make_random_stream(rng, 2000)
    window = select_window(stream, 1_000_000, 4, 33)
    stack = accumulate_slices(window, 3)
    expected = accumulate_oracle(window, 3, stream.sensor_height, stream.sensor_width)
    assert np.array_equal(stack.counts, expected)


def test_accumulate_default_three_slices():
    stream = EventStream(8, 8, [10, 20], [1, 2], [1, 2], [1, -1])
    window = select_window(stream, 20, n=2, frame_ms=3)
    assert accumulate_slices(window).n_slices == 3


def test_accumulate_records_pad():
    stream = EventStream(8, 8, [10], [1], [1], [1])
    window = select_window(stream, 10, n=1, frame_ms=1)  # duration 1000, 3 slices
    stack = accumulate_slices(window, 3)
    assert stack.pad_us == 2
    assert (stack.t_end - stack.t_start) % 3 == 0


def test_accumulate_rejects_zero_sensor():
    stream = EventStream(8, 8, [10], [1], [1], [1])
    window = select_window(stream, 10, n=2, frame_ms=1)
    with pytest.raises(ValueError, match="zero-sized"):
        accumulate_slices(window, 3, height=0, width=8)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 500), st.integers(0, 2**31))
def test_conservation_and_partition(n_events, seed):
    rng = np.random.default_rng(seed)
    stream = make_random_stream(rng, n_events, width=32, height=24)
    window = select_window(stream, 1_000_000, 4, 33)
    stack3 = accumulate_slices(window, 3)
    stack1 = accumulate_slices(window, 1)
    assert stack3.total_events == len(window)
    assert stack1.total_events == len(window)
    # every event lands in exactly one slice
    assert np.array_equal(stack3.counts.sum(axis=0), stack1.counts[0])


def test_render_zero_slice_uniform_gray():
    stack = accumulate_slices(
        select_window(EventStream(4, 4, [], [], [], []), 500, n=1, frame_ms=1), 1
    )
    png = render_slice_png(stack, 0)
    img = np.asarray(Image.open(io.BytesIO(png)))
    assert img.shape == (4, 4, 3)
    assert np.all(img == 128)


def test_render_single_positive_event_single_pixel():
    stream = EventStream(6, 5, [100], [2], [3], [1])
    window = select_window(stream, 100, n=1, frame_ms=1)
    png = render_slice_png(accumulate_slices(window, 1), 0)
    img = np.asarray(Image.open(io.BytesIO(png)))
    non_gray = np.any(img != 128, axis=-1)
    assert non_gray.sum() == 1
    assert non_gray[3, 2]
    assert img[3, 2, 0] > img[3, 2, 2]  # positive polarity leans red


def test_render_deterministic():
    rng = np.random.default_rng(14)
    stream = make_random_stream(rng, 500, width=32, height=24)
    window = select_window(stream, 1_000_000, 4, 33)
    stack = accumulate_slices(window, 3)
    h1 = hashlib.sha256(render_slice_png(stack, 1)).hexdigest()
    h2 = hashlib.sha256(render_slice_png(stack, 1)).hexdigest()
    assert h1 == h2


def test_render_index_out_of_range():
    stream = EventStream(4, 4, [10], [1], [1], [1])
    stack = accumulate_slices(select_window(stream, 10, n=2, frame_ms=1), 2)
    with pytest.raises(IndexError):
        render_slice_png(stack, 2)
