#!/usr/bin/env python3
"""Build a small synthetic RGB-Event demo dataset and run the full pipeline.

Creates event streams with a moving hot spot (so slice renders show motion),
paired keyframes, scene notes, and a TOML config; then runs ingest -> graphs
-> fusion -> synthesis and prints where to point `forge serve`.

Usage: python scripts/make_demo_dataset.py [--root demo] [--keyframes 6]
"""

import argparse
import json
from pathlib import Path

import numpy as np
from PIL import Image

from eventforge.events import EventStream, write_csv
from eventforge.pipeline import load_config, run_pipeline

WIDTH, HEIGHT = 64, 48

SCENES = [
    ("seq-a", "Move(subject=car, motion=forward, place=lane_center)\nscene.car_count=2",
     "Move(subject=car, motion=forward, place=lane_center)\ncar.color=white\nscene.car_count=2"),
    ("seq-a", "Cross(subject=pedestrian, motion=left, place=crosswalk)",
     "pedestrian.color=dark\ndeg(scene, low_light, severe)"),
    ("seq-b", "Move(subject=bus, motion=forward)\nscene.bus_count=1",
     "bus.color=blue\nscene.bus_count=2"),
    ("seq-b", "Turn(subject=cyclist, motion=right, place=intersection)",
     "cyclist.color=green\nTurn(subject=cyclist, motion=right, place=intersection)"),
    ("seq-c", "Stop(subject=truck, motion=stationary, place=curb)",
     "truck.color=red\ndeg(truck, glare, mild)\nStop(subject=truck, motion=stationary, place=curb)"),
    ("seq-c", "Move(subject=van, motion=backward)",
     "van.color=silver\ndeg(scene, overexposure, severe)"),
]


def moving_spot_stream(rng, keyframe_ts, n_events=3000):
    """Events clustered around a spot sweeping left to right through the window."""
    t = np.sort(rng.integers(keyframe_ts - 66_000, keyframe_ts + 66_000, size=n_events))
    progress = (t - (keyframe_ts - 66_000)) / 132_000
    cx = 8 + progress * (WIDTH - 16)
    cy = HEIGHT / 2 + 6 * np.sin(progress * 2 * np.pi)
    x = np.clip(np.round(cx + rng.normal(0, 2.5, n_events)), 0, WIDTH - 1).astype(int)
    y = np.clip(np.round(cy + rng.normal(0, 2.5, n_events)), 0, HEIGHT - 1).astype(int)
    p = np.where(rng.random(n_events) < 0.5, 1, -1)
    return EventStream(WIDTH, HEIGHT, t, x, y, p)


def keyframe_image(rng):
    base = rng.integers(40, 90)
    img = np.full((HEIGHT, WIDTH, 3), base, dtype=np.uint8)
    for _ in range(4):
        x0, y0 = rng.integers(0, WIDTH - 12), rng.integers(0, HEIGHT - 10)
        color = rng.integers(60, 220, size=3)
        img[y0 : y0 + 10, x0 : x0 + 12] = color
    return img


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--root", default="demo")
    parser.add_argument("--keyframes", type=int, default=len(SCENES))
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    root = Path(args.root)
    (root / "events").mkdir(parents=True, exist_ok=True)
    (root / "frames").mkdir(exist_ok=True)
    rng = np.random.default_rng(args.seed)

    index = []
    for i in range(args.keyframes):
        sequence, notes_event, notes_rgb = SCENES[i % len(SCENES)]
        item_id = f"kf-{i:03d}"
        keyframe_ts = 1_000_000 + 200_000 * i
        stream = moving_spot_stream(rng, keyframe_ts)
        (root / "events" / f"{item_id}.csv").write_bytes(write_csv(stream))
        Image.fromarray(keyframe_image(rng)).save(root / "frames" / f"{item_id}.png")
        index.append({
            "item_id": item_id,
            "sequence_id": sequence,
            "events": f"events/{item_id}.csv",
            "keyframe_ts": keyframe_ts,
            "rgb": f"frames/{item_id}.png",
            "notes_event": notes_event,
            "notes_rgb": notes_rgb,
            "condition": "adverse" if "severe" in notes_rgb else "normal",
        })
    (root / "index.json").write_text(json.dumps(index, indent=2))
    (root / "config.toml").write_text(
        'dataset_name = "demo"\n\n'
        '[inputs]\nindex = "index.json"\n\n'
        '[window]\nn = 4\nframe_ms = 33\nslices = 3\n\n'
        '[fusion]\ntau = 0.3\n\n'
        '[synth]\nmode = "template"\n\n'
        '[gateway]\nmode = "mock"\n\n'
        '[output]\nroot = "out"\n'
    )

    cfg = load_config(root / "config.toml")
    manifest, quarantined = run_pipeline(cfg)
    print(f"wrote {manifest['splits']['all']['items']} items under {cfg.output_root}")
    if quarantined:
        print(f"quarantined: {quarantined}")
    print(f"review with: forge serve --manifest {cfg.output_root} --port 8630")


if __name__ == "__main__":
    main()
