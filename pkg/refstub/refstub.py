#!/usr/bin/env python3
"""Reference server for the line-delimited JSON prediction protocol.

A minimal last-value forecaster: every horizon row repeats the last observed
value of each target channel.  It exists to integration-test protocol
clients and as a template for wrapping real models.

Frames (one JSON object per line, UTF-8):

    <- {"type": "hello", "protocol": 1, "n": ..., "horizon": ...,
        "channels": ..., "targets": [...]}
    -> {"type": "ready"}
    <- {"type": "predict", "id": <int>, "x": [[row floats] ...]}
    -> {"type": "prediction", "id": <int>, "y": [[row floats] ...]}
    <- {"type": "shutdown"}        exits 0

Malformed JSON emits an error frame and exits nonzero.  Unknown frame types
and predict-before-hello emit error frames and keep serving.  Replies are
strictly ordered and written one complete line at a time.

Standard library only; run as:  python3 refstub.py
"""

import json
import sys


def _emit(stdout, frame):
    stdout.write(json.dumps(frame) + "\n")
    stdout.flush()


def serve_protocol(stdin=None, stdout=None) -> int:
    """Serve until shutdown or EOF; returns the process exit code."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    state = None
    for line in stdin:
        if not line.strip():
            continue
        try:
            frame = json.loads(line)
        except json.JSONDecodeError as exc:
            _emit(stdout, {"type": "error", "msg": f"malformed frame: {exc}"})
            return 1
        if not isinstance(frame, dict) or "type" not in frame:
            _emit(stdout, {"type": "error", "msg": "frame is not an object with a type"})
            return 1
        kind = frame["type"]
        if kind == "hello":
            state = {
                "n": int(frame["n"]),
                "horizon": int(frame["horizon"]),
                "channels": int(frame["channels"]),
                "targets": list(frame["targets"]),
            }
            _emit(stdout, {"type": "ready"})
        elif kind == "predict":
            if state is None:
                _emit(stdout, {"type": "error", "msg": "predict before hello"})
                continue
            x = frame.get("x")
            frame_id = frame.get("id")
            if frame_id is None or not isinstance(x, list) or not x:
                _emit(stdout, {"type": "error", "msg": "predict frame needs id and x"})
                continue
            last = x[-1]
            row = [last[t] for t in state["targets"]]
            y = [list(row) for _ in range(state["horizon"])]
            _emit(stdout, {"type": "prediction", "id": frame_id, "y": y})
        elif kind == "shutdown":
            return 0
        else:
            _emit(stdout, {"type": "error", "msg": f"unknown frame type {kind!r}"})
    return 0


if __name__ == "__main__":
    sys.exit(serve_protocol())
