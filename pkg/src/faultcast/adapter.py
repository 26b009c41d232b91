"""Subprocess adapter for external forecasting models.

Wire protocol (line-delimited JSON over the child's standard streams,
UTF-8, one object per line):

    -> {"type": "hello", "protocol": 1, "n": 96, "horizon": 6,
        "channels": 12, "targets": [0]}
    <- {"type": "ready"}
    -> {"type": "predict", "id": 7, "x": [[...], ...]}   # n rows x m cols
    <- {"type": "prediction", "id": 7, "y": [[...], ...]}  # horizon x m_tgt
    -> {"type": "shutdown"}                               # child exits 0

Responses may arrive out of order; they are matched by id.  Each failure
mode carries a distinct error code: process-exit, malformed-frame, timeout,
id-mismatch, shape-mismatch.
"""

from __future__ import annotations

import json
import queue
import subprocess
import threading

import numpy as np

PROTOCOL_VERSION = 1


class AdapterError(RuntimeError):
    code = "adapter"


class AdapterProcessError(AdapterError):
    code = "process-exit"


class AdapterProtocolError(AdapterError):
    code = "malformed-frame"


class AdapterTimeoutError(AdapterError):
    code = "timeout"


class AdapterIdMismatchError(AdapterError):
    code = "id-mismatch"


class AdapterShapeError(AdapterError):
    code = "shape-mismatch"


_EOF = object()


class ExternalModelClient:
    """One subprocess speaking the prediction protocol."""

    def __init__(
        self,
        command: list[str],
        n: int,
        horizon: int,
        channels: int,
        targets: list[int],
        timeout: float = 60.0,
    ):
        self.n = n
        self.horizon = horizon
        self.channels = channels
        self.targets = list(targets)
        self.timeout = timeout
        self._next_id = 0
        self._proc = subprocess.Popen(
            command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
            bufsize=1,
        )
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        self._send(
            {
                "type": "hello",
                "protocol": PROTOCOL_VERSION,
                "n": n,
                "horizon": horizon,
                "channels": channels,
                "targets": self.targets,
            }
        )
        ready = self._recv_frame()
        if ready.get("type") != "ready":
            raise AdapterProtocolError(f"expected ready frame, got {ready!r}")

    def _read_loop(self):
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(_EOF)

    def _send(self, obj: dict):
        try:
            self._proc.stdin.write(json.dumps(obj) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError, OSError):
            raise AdapterProcessError(
                f"model process closed its stdin (exit code {self._proc.poll()})"
            ) from None

    def _recv_frame(self) -> dict:
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise AdapterTimeoutError(
                f"no response within {self.timeout} s"
            ) from None
        if line is _EOF:
            raise AdapterProcessError(
                f"model process exited (code {self._proc.wait()}) before responding"
            )
        try:
            frame = json.loads(line)
        except json.JSONDecodeError as exc:
            raise AdapterProtocolError(f"malformed frame: {exc}: {line[:200]!r}") from None
        if not isinstance(frame, dict) or "type" not in frame:
            raise AdapterProtocolError(f"frame is not an object with a type: {line[:200]!r}")
        if frame["type"] == "error":
            raise AdapterProtocolError(f"model reported an error: {frame.get('msg')}")
        return frame

    def _check_prediction(self, frame: dict) -> np.ndarray:
        y = frame.get("y")
        try:
            arr = np.asarray(y, dtype=np.float64)
        except (TypeError, ValueError):
            raise AdapterProtocolError("prediction y is not a numeric matrix") from None
        expected = (self.horizon, len(self.targets))
        if arr.shape != expected:
            raise AdapterShapeError(
                f"prediction shape {arr.shape} does not match {expected}"
            )
        return arr

    def predict_batch(self, windows: list[np.ndarray]) -> list[np.ndarray]:
        """Send one predict frame per window; match replies by id.

        Out-of-order replies are accepted and reordered; unknown or
        duplicate ids fail with id-mismatch.
        """
        ids = []
        for x in windows:
            x = np.asarray(x, dtype=np.float64)
            if x.shape != (self.n, self.channels):
                raise AdapterShapeError(
                    f"input shape {x.shape} does not match ({self.n}, {self.channels})"
                )
            frame_id = self._next_id
            self._next_id += 1
            ids.append(frame_id)
            self._send({"type": "predict", "id": frame_id, "x": x.tolist()})
        pending = set(ids)
        results: dict[int, np.ndarray] = {}
        while pending:
            frame = self._recv_frame()
            if frame.get("type") != "prediction":
                raise AdapterProtocolError(f"unexpected frame type {frame.get('type')!r}")
            frame_id = frame.get("id")
            if frame_id not in pending:
                raise AdapterIdMismatchError(
                    f"prediction id {frame_id!r} was not requested or already answered"
                )
            results[frame_id] = self._check_prediction(frame)
            pending.discard(frame_id)
        return [results[i] for i in ids]

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.predict_batch([x])[0]

    def shutdown(self, timeout: float = 10.0) -> int:
        """Send shutdown and wait for a clean exit."""
        if self._proc.poll() is None:
            try:
                self._send({"type": "shutdown"})
            except AdapterProcessError:
                pass
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                return self._proc.wait(timeout=timeout)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                return self._proc.wait()
        return self._proc.returncode

    def close(self):
        if self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()
        self.close()


class ExternalForecaster:
    """Forecaster facade over one or more protocol subprocesses.

    ``workers`` subprocesses are spawned lazily; concurrent predict calls
    borrow a client from the pool, so evaluation may run multi-threaded.
    """

    deterministic = True

    def __init__(
        self,
        command: list[str],
        n: int,
        horizon: int,
        channels: int,
        targets: list[int],
        timeout: float = 60.0,
        workers: int = 1,
    ):
        self.command = list(command)
        self.n = n
        self.horizon = horizon
        self.channels = channels
        self.targets = list(targets)
        self.timeout = timeout
        self.workers = max(1, workers)
        self._pool: queue.Queue | None = None
        self._clients: list[ExternalModelClient] = []

    @property
    def identifier(self) -> str:
        return f"external({' '.join(self.command)})"

    def fit(self, windows=None):
        return self

    def _ensure_pool(self):
        if self._pool is None:
            self._pool = queue.Queue()
            for _ in range(self.workers):
                client = ExternalModelClient(
                    self.command, self.n, self.horizon, self.channels,
                    self.targets, self.timeout,
                )
                self._clients.append(client)
                self._pool.put(client)

    def predict(self, x: np.ndarray) -> np.ndarray:
        self._ensure_pool()
        client = self._pool.get()
        try:
            return client.predict(x)
        finally:
            self._pool.put(client)

    def predict_batch(self, windows: list[np.ndarray]) -> list[np.ndarray]:
        self._ensure_pool()
        client = self._pool.get()
        try:
            return client.predict_batch(windows)
        finally:
            self._pool.put(client)

    def close(self):
        for client in self._clients:
            client.shutdown()
        self._clients = []
        self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
