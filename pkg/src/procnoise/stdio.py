"""Subprocess oracle server: one JSON classify request per stdin line, one
JSON response per stdout line.  Runnable as `python -m procnoise.stdio`."""
from __future__ import annotations

import argparse
import base64
import json
import sys

from .image import decode_png
from .ledger import QueryLedger
from .oracle import oracle_from_uri


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="line-protocol oracle server")
    parser.add_argument("--uri", default="toy://", help="oracle URI to serve")
    parser.add_argument("--defence-k", type=int, default=None,
                        help="wrap with a median-filter defence of this window")
    args = parser.parse_args(argv)
    oracle = oracle_from_uri(args.uri, defence_k=args.defence_k)
    ledger = QueryLedger(None)
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        req = json.loads(line)
        image = decode_png(base64.b64decode(req["image_png_b64"]))
        verdict = oracle.classify(image, int(req.get("top_k", 1)), ledger)
        labels = [{"class": c, "prob": p} for c, p in (verdict.probs or [])]
        sys.stdout.write(json.dumps({"id": req.get("id", ""), "labels": labels}) + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
