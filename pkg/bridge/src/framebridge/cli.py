"""Bridge operator entry points: extract features, serve the oracle."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .config import BridgeConfig
from .extract import extract_features
from .server import serve_oracle


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level="INFO", format="%(levelname)s %(name)s: %(message)s")
    parser = argparse.ArgumentParser(prog="framebridge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("extract", help="video + question -> sample directory")
    ex.add_argument("--video", required=True, help="video file or frame directory")
    ex.add_argument("--question", required=True)
    ex.add_argument("--options", required=True, help="JSON list of option strings")
    ex.add_argument("--answer-id", type=int, required=True)
    ex.add_argument("--out", required=True)
    ex.add_argument("--sample-id", default=None)
    ex.add_argument("--encoder", default="hashed")
    ex.add_argument("--encoder-dim", type=int, default=64)
    ex.add_argument("--frames", type=int, default=128)
    ex.add_argument("--device", default="cpu")

    sv = sub.add_parser("serve", help="serve the oracle wire protocol")
    sv.add_argument("--samples", required=True, help="sample store root")
    sv.add_argument("--host", default="127.0.0.1")
    sv.add_argument("--port", type=int, default=8711)
    sv.add_argument("--vlm", default="toy")
    sv.add_argument("--prompt-mode", default="train-scoring",
                    choices=("train-scoring", "think", "no-think"))
    sv.add_argument("--device", default="cpu")

    args = parser.parse_args(argv)
    if args.command == "extract":
        config = BridgeConfig(
            encoder=args.encoder,
            encoder_dim=args.encoder_dim,
            frames_per_video=args.frames,
            device=args.device,
        )
        manifest = extract_features(
            args.video,
            args.question,
            json.loads(args.options),
            args.answer_id,
            args.out,
            config=config,
            sample_id=args.sample_id,
        )
        print(manifest)
        return 0

    config = BridgeConfig(vlm=args.vlm, prompt_mode=args.prompt_mode, device=args.device)
    server = serve_oracle(config, Path(args.samples), host=args.host, port=args.port)
    print(f"serving {server.oracle_id} on {server.endpoint}", flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.stop()
    return 0


if __name__ == "__main__":
    sys.exit(main())
