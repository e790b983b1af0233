#!/usr/bin/env python3
"""Regenerate docs/openapi.json from the review service's live schema.

Usage: python scripts/export_openapi.py [--out docs/openapi.json]
"""

import argparse
import json
import tempfile
from pathlib import Path

from eventforge.service import create_app


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="docs/openapi.json")
    args = parser.parse_args()
    with tempfile.TemporaryDirectory() as tmp:
        (Path(tmp) / "items.jsonl").write_text("")
        app = create_app(tmp)
        schema = app.openapi()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(schema, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
