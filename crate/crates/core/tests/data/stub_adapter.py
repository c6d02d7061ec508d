#!/usr/bin/env python3
"""Stand-in adapter that speaks the detection line protocol without a model.

Every well-formed INFER gets one deterministic detection. Flags inject the
failure modes the host has to survive.
"""
import argparse
import os
import sys
import time

CLASSES = ["boar", "elephant", "monkey"]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--name", default="stub")
    ap.add_argument("--crash-on", default=None, help="exit without answering this frame")
    ap.add_argument("--hang-on", default=None, help="never answer this frame")
    ap.add_argument("--garbage-on", default=None, help="answer this frame with a malformed line")
    ap.add_argument("--err-on", default=None, help="answer this frame with ERR")
    ap.add_argument("--no-ready", action="store_true")
    ap.add_argument("--exit-code", type=int, default=3)
    args = ap.parse_args()

    print("loading stub weights", file=sys.stderr, flush=True)
    if args.no_ready:
        print("weights file not found", file=sys.stderr, flush=True)
        sys.exit(args.exit_code)
    print(f"READY {args.name}", flush=True)

    for raw in sys.stdin:
        line = raw.rstrip("\n")
        if line == "QUIT":
            break
        parts = line.split(" ")
        if len(parts) != 3 or parts[0] != "INFER" or not os.path.isabs(parts[2]):
            frame = parts[1] if len(parts) > 1 and parts[1] else "-"
            print(f"ERR {frame} malformed request", flush=True)
            continue
        frame, path = parts[1], parts[2]
        if frame == args.crash_on:
            print(f"segfault while reading {frame}", file=sys.stderr, flush=True)
            sys.exit(args.exit_code)
        if frame == args.hang_on:
            time.sleep(3600)
        if frame == args.garbage_on:
            print(f"DET {frame} boar high 0.1 0.1 0.5 0.5", flush=True)
            print(f"END {frame} 1", flush=True)
            continue
        if frame == args.err_on:
            print(f"ERR {frame} cannot decode image", flush=True)
            continue
        if not os.path.exists(path):
            print(f"ERR {frame} image not found", flush=True)
            continue
        label = CLASSES[sum(frame.encode()) % len(CLASSES)]
        print(f"DET {frame} {label} 0.800000 0.100000 0.200000 0.500000 0.600000", flush=True)
        print(f"END {frame} 12.5", flush=True)


if __name__ == "__main__":
    main()
