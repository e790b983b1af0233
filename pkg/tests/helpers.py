"""Shared generators and independent oracles for the test suite.

Oracles here are written by definition (nested loops, brute force) and stay
independent of the library code paths they check.
"""

from __future__ import annotations

import numpy as np

from eventforge.events import EventStream, EventWindow
from eventforge.graph import parse_caption_to_graph

# ---------------------------------------------------------------------------
# Event generators and oracles


def make_random_stream(rng, n_events, width=64, height=48, t_max=2_000_000):
    t = np.sort(rng.integers(0, t_max, size=n_events))
    x = rng.integers(0, width, size=n_events)
    y = rng.integers(0, height, size=n_events)
    p = rng.choice([-1, 1], size=n_events)
    return EventStream(width, height, t, x, y, p)


def window_filter_oracle(stream, t_start, t_end):
    """Brute-force linear scan over the whole stream."""
    hits = []
    for rec in stream:
        if t_start <= rec.t < t_end:
            hits.append(rec)
    return hits


def accumulate_oracle(window, n_slices, height, width):
    """Nested-loop per-event counting, integer arithmetic only."""
    duration = window.t_end - window.t_start
    pad = (-duration) % n_slices
    slice_len = (duration + pad) // n_slices
    counts = np.zeros((n_slices, 2, height, width), dtype=np.int64)
    for rec in window:
        s = (rec.t - window.t_start) // slice_len
        c = 0 if rec.polarity > 0 else 1
        counts[s, c, rec.y, rec.x] += 1
    return counts


# ---------------------------------------------------------------------------
# Numeric oracles for the alignment kernel


def dwconv_oracle(data, kernels, projection):
    """Convolution-by-definition loops for the multi-scale depthwise branch."""
    t, h, w, d = data.shape
    branches = []
    for k in sorted(kernels):
        kern = kernels[k]
        half = (k - 1) // 2
        out = np.zeros_like(data)
        for tt in range(t):
            for hh in range(h):
                for ww in range(w):
                    for cc in range(d):
                        acc = 0.0
                        for j in range(k):
                            src = tt + j - half
                            if 0 <= src < t:
                                acc += kern[j, cc] * data[src, hh, ww, cc]
                        out[tt, hh, ww, cc] = acc
        branches.append(out)
    concat = np.concatenate(branches, axis=-1)
    out = np.zeros((t, h, w, projection.shape[1]))
    for tt in range(t):
        for hh in range(h):
            for ww in range(w):
                for o in range(projection.shape[1]):
                    out[tt, hh, ww, o] = sum(
                        concat[tt, hh, ww, m] * projection[m, o]
                        for m in range(projection.shape[0])
                    )
    return out


def discrepancy_oracle(rgb, event):
    """Triple-loop evaluation of the channel-wise mean absolute difference."""
    t, h, w, d = rgb.shape
    out = np.zeros((t, h, w))
    for tt in range(t):
        for hh in range(h):
            for ww in range(w):
                out[tt, hh, ww] = sum(
                    abs(rgb[tt, hh, ww, c] - event[tt, hh, ww, c]) for c in range(d)
                ) / d
    return out


def cawtd_oracle(weights, disc):
    """Direct double-sum evaluation of the frame-averaged weighted discrepancy."""
    t = weights.shape[0]
    total = 0.0
    for tt in range(t):
        frame = 0.0
        for hh in range(weights.shape[1]):
            for ww in range(weights.shape[2]):
                frame += weights[tt, hh, ww] * disc[tt, hh, ww]
        total += frame
    return total / t


def central_difference(fn, x, step=1e-5):
    """Central finite differences of a scalar function w.r.t. every entry of x."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + step
        hi = fn(x)
        x[idx] = orig - step
        lo = fn(x)
        x[idx] = orig
        grad[idx] = (hi - lo) / (2 * step)
    return grad


def relative_errors(analytic, numeric, floor=1e-8):
    return np.abs(analytic - numeric) / np.maximum(np.abs(numeric), floor)


# ---------------------------------------------------------------------------
# Grammar document generator (canonical form, independent of the renderer)

NOUNS = ["car", "pedestrian", "bus", "truck", "cyclist", "dog", "traffic_light",
         "van", "train", "rider"]
VERBS = ["move", "stand", "turn", "accelerate", "stop", "cross", "wait"]
MOTIONS = ["forward", "backward", "left", "right", "stationary", "fast", "slow"]
PLACES = ["lane_center", "sidewalk", "crosswalk", "intersection", "curb", "road_edge"]
DIRECTIONS = ["north", "south", "east", "west"]
COLORS = ["white", "black", "red", "blue", "silver", "green", "yellow"]
TEXTURES = ["smooth", "rough", "wet", "shiny", "matte"]
REL_KINDS = ["hierarchical", "attribute", "spatial", "temporal"]
DEG_KINDS = ["low_light", "overexposure", "glare", "motion_blur", "noise", "fog", "rain"]
EXTRA_ARGS = {"speed": ["high", "low"], "lane": ["left_lane", "right_lane"]}


def gen_predicate_string(rng):
    """One canonical predicate line: role args in canonical order, extras sorted."""
    subject = rng.choice(NOUNS)
    verb = rng.choice(VERBS)
    parts = [f"subject={subject}"]
    if rng.random() < 0.8:
        parts.append(f"motion={rng.choice(MOTIONS)}")
    if rng.random() < 0.6:
        parts.append(f"place={rng.choice(PLACES)}")
    if rng.random() < 0.3:
        parts.append(f"direction={rng.choice(DIRECTIONS)}")
    if rng.random() < 0.3:
        parts.append(f"target={rng.choice(NOUNS)}")
    extras = sorted(k for k in EXTRA_ARGS if rng.random() < 0.25)
    for k in extras:
        parts.append(f"{k}={rng.choice(EXTRA_ARGS[k])}")
    return f"{verb.capitalize()}({', '.join(parts)})"


def gen_caption_doc(rng, max_predicates=4):
    """A full canonical document: predicates, entity blocks (sorted), relations."""
    lines = []
    entities = {}

    def touch(name):
        entities.setdefault(name, {"place": None, "attrs": {}, "degs": []})

    n_preds = int(rng.integers(1, max_predicates + 1))
    for _ in range(n_preds):
        line = gen_predicate_string(rng)
        lines.append(line)
        body = line[line.index("(") + 1 : -1]
        for kv in body.split(", "):
            key, value = kv.split("=")
            if key in ("subject", "target"):
                touch(value)

    for name in list(entities):
        ent = entities[name]
        if rng.random() < 0.5:
            ent["attrs"]["color"] = rng.choice(COLORS)
        if rng.random() < 0.3:
            ent["attrs"]["texture"] = rng.choice(TEXTURES)
        if rng.random() < 0.25:
            ent["place"] = rng.choice(PLACES)
        if rng.random() < 0.2:
            ent["degs"].append((rng.choice(DEG_KINDS), rng.choice(["mild", "severe"])))
    if rng.random() < 0.3:
        touch("scene")
        entities["scene"]["attrs"][f"{rng.choice(NOUNS)}_count"] = str(rng.integers(1, 6))
    if rng.random() < 0.25:
        touch("scene")
        entities["scene"]["degs"].append((rng.choice(DEG_KINDS), rng.choice(["mild", "severe"])))

    for name in sorted(entities):
        ent = entities[name]
        if ent["place"] is not None:
            lines.append(f"{name}.place={ent['place']}")
        for key in sorted(ent["attrs"]):
            lines.append(f"{name}.{key}={ent['attrs'][key]}")
        for kind, severity in ent["degs"]:
            lines.append(f"deg({name}, {kind}, {severity})")

    names = sorted(entities)
    rels = set()
    if len(names) >= 2:
        for _ in range(int(rng.integers(0, 3))):
            a, b = rng.choice(names, size=2, replace=False)
            rels.add((a, rng.choice(REL_KINDS), b))
    for a, kind, b in sorted(rels):
        lines.append(f"rel({a}, {kind}, {b})")

    return "\n".join(lines) + "\n"


def gen_graph_pair(rng):
    """Random (event, rgb) graph pair with overlapping entities for fusion tests."""
    g_e = parse_caption_to_graph(gen_caption_doc(rng), "event")
    g_r = parse_caption_to_graph(gen_caption_doc(rng), "rgb")
    return g_e, g_r


# ---------------------------------------------------------------------------
# End-to-end pipeline fixture

FIXTURE_NOTES = [
    # (sequence, event-side facts, rgb-side facts)
    ("seq-a",
     "Move(subject=car, motion=forward, place=lane_center)\nscene.car_count=2",
     "Move(subject=car, motion=forward, place=lane_center)\ncar.color=white\nscene.car_count=2"),
    ("seq-a",
     "Cross(subject=pedestrian, motion=left, place=crosswalk)",
     "pedestrian.color=dark\ndeg(scene, low_light, severe)"),
    ("seq-b",
     "Move(subject=bus, motion=forward)\nscene.bus_count=1",
     "bus.color=blue\nscene.bus_count=2"),
]


def build_pipeline_fixture(root, notes=FIXTURE_NOTES, seed=100):
    """Write a runnable 3-keyframe fixture (events, keyframes, index, config).

    Returns the config path; outputs land in root/out.
    """
    import json
    from pathlib import Path

    from PIL import Image

    from eventforge.events import write_csv

    root = Path(root)
    (root / "events").mkdir(parents=True, exist_ok=True)
    (root / "frames").mkdir(exist_ok=True)
    rng = np.random.default_rng(seed)
    index = []
    for i, (sequence, notes_event, notes_rgb) in enumerate(notes):
        item_id = f"kf-{i:03d}"
        stream = make_random_stream(rng, 400, width=64, height=48, t_max=2_000_000)
        (root / "events" / f"{item_id}.csv").write_bytes(write_csv(stream))
        frame = (rng.random((48, 64, 3)) * 255).astype(np.uint8)
        Image.fromarray(frame).save(root / "frames" / f"{item_id}.png")
        index.append({
            "item_id": item_id,
            "sequence_id": sequence,
            "events": f"events/{item_id}.csv",
            "keyframe_ts": 1_000_000,
            "rgb": f"frames/{item_id}.png",
            "notes_event": notes_event,
            "notes_rgb": notes_rgb,
            "condition": "adverse" if "deg(" in notes_rgb else "normal",
        })
    (root / "index.json").write_text(json.dumps(index, indent=2))
    config = """dataset_name = "fixture"

[inputs]
index = "index.json"

[window]
n = 4
frame_ms = 33
slices = 3

[fusion]
tau = 0.3

[synth]
mode = "template"

[gateway]
mode = "mock"

[output]
root = "out"
"""
    (root / "config.toml").write_text(config)
    return root / "config.toml"
