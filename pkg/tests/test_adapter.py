import sys
import textwrap

import numpy as np
import pytest

from faultcast.adapter import (
    AdapterIdMismatchError,
    AdapterProcessError,
    AdapterProtocolError,
    AdapterShapeError,
    AdapterTimeoutError,
    ExternalForecaster,
    ExternalModelClient,
)
from faultcast.forecast import SeasonalNaiveForecaster

PY = sys.executable

LAST_VALUE_SERVER = """
import json, sys

state = None
for line in sys.stdin:
    frame = json.loads(line)
    kind = frame["type"]
    if kind == "hello":
        state = frame
        print(json.dumps({"type": "ready"}), flush=True)
    elif kind == "predict":
        x = frame["x"]
        y = [[x[-1][t] for t in state["targets"]] for _ in range(state["horizon"])]
        print(json.dumps({"type": "prediction", "id": frame["id"], "y": y}), flush=True)
    elif kind == "shutdown":
        sys.exit(0)
"""

OUT_OF_ORDER_SERVER = """
import json, sys

state = None
pending = []
BATCH = 4
def answer(frame):
    x = frame["x"]
    y = [[x[-1][t] for t in state["targets"]] for _ in range(state["horizon"])]
    print(json.dumps({"type": "prediction", "id": frame["id"], "y": y}), flush=True)

for line in sys.stdin:
    frame = json.loads(line)
    if frame["type"] == "hello":
        state = frame
        print(json.dumps({"type": "ready"}), flush=True)
    elif frame["type"] == "predict":
        pending.append(frame)
        if len(pending) == BATCH:
            for f in reversed(pending):
                answer(f)
            pending = []
    elif frame["type"] == "shutdown":
        for f in reversed(pending):
            answer(f)
        sys.exit(0)
"""


def write_server(tmp_path, body, name="server.py"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(body))
    return [PY, str(path)]


def make_client(cmd, n=8, horizon=3, channels=2, targets=(0,), timeout=20.0):
    return ExternalModelClient(cmd, n=n, horizon=horizon, channels=channels,
                               targets=list(targets), timeout=timeout)


class TestProtocolHappyPath:
    def test_matches_builtin_last_value(self, tmp_path):
        cmd = write_server(tmp_path, LAST_VALUE_SERVER)
        rng = np.random.default_rng(0)
        windows = [rng.normal(size=(8, 2)) for _ in range(3)]
        builtin = SeasonalNaiveForecaster(period=1, horizon=3, target_set=(0,))
        with make_client(cmd) as client:
            preds = client.predict_batch(windows)
        for x, pred in zip(windows, preds):
            assert np.max(np.abs(pred - builtin.predict(x))) < 1e-9

    def test_clean_shutdown_exit_zero(self, tmp_path):
        cmd = write_server(tmp_path, LAST_VALUE_SERVER)
        client = make_client(cmd)
        client.predict(np.zeros((8, 2)))
        assert client.shutdown() == 0

    def test_out_of_order_responses_reordered(self, tmp_path):
        cmd = write_server(tmp_path, OUT_OF_ORDER_SERVER)
        rng = np.random.default_rng(1)
        windows = [rng.normal(size=(8, 2)) for _ in range(4)]
        with make_client(cmd) as client:
            preds = client.predict_batch(windows)
        for x, pred in zip(windows, preds):
            assert np.all(pred == x[-1, 0])

    def test_forecaster_facade(self, tmp_path):
        cmd = write_server(tmp_path, LAST_VALUE_SERVER)
        model = ExternalForecaster(cmd, n=8, horizon=3, channels=2, targets=[0],
                                   timeout=20.0)
        with model:
            x = np.random.default_rng(2).normal(size=(8, 2))
            pred = model.predict(x)
        assert np.all(pred == x[-1, 0])


class TestProtocolErrors:
    def test_wrong_horizon_is_shape_mismatch(self, tmp_path):
        body = """
        import json, sys
        for line in sys.stdin:
            frame = json.loads(line)
            if frame["type"] == "hello":
                print(json.dumps({"type": "ready"}), flush=True)
            elif frame["type"] == "predict":
                print(json.dumps({"type": "prediction", "id": frame["id"],
                                  "y": [[0.0]]}), flush=True)
        """
        with make_client(write_server(tmp_path, body)) as client:
            with pytest.raises(AdapterShapeError):
                client.predict(np.zeros((8, 2)))

    def test_unknown_id_is_mismatch(self, tmp_path):
        body = """
        import json, sys
        for line in sys.stdin:
            frame = json.loads(line)
            if frame["type"] == "hello":
                print(json.dumps({"type": "ready"}), flush=True)
            elif frame["type"] == "predict":
                print(json.dumps({"type": "prediction", "id": 999,
                                  "y": [[0.0]] * 3}), flush=True)
        """
        with make_client(write_server(tmp_path, body)) as client:
            with pytest.raises(AdapterIdMismatchError):
                client.predict(np.zeros((8, 2)))

    def test_malformed_frame(self, tmp_path):
        body = """
        import json, sys
        for line in sys.stdin:
            frame = json.loads(line)
            if frame["type"] == "hello":
                print(json.dumps({"type": "ready"}), flush=True)
            elif frame["type"] == "predict":
                print("this is not json", flush=True)
        """
        with make_client(write_server(tmp_path, body)) as client:
            with pytest.raises(AdapterProtocolError):
                client.predict(np.zeros((8, 2)))

    def test_process_exit_detected(self, tmp_path):
        body = """
        import json, sys
        line = sys.stdin.readline()
        print(json.dumps({"type": "ready"}), flush=True)
        sys.exit(3)
        """
        with make_client(write_server(tmp_path, body)) as client:
            with pytest.raises(AdapterProcessError):
                client.predict(np.zeros((8, 2)))

    def test_timeout(self, tmp_path):
        body = """
        import json, sys, time
        for line in sys.stdin:
            frame = json.loads(line)
            if frame["type"] == "hello":
                print(json.dumps({"type": "ready"}), flush=True)
            elif frame["type"] == "predict":
                time.sleep(30)
        """
        client = make_client(write_server(tmp_path, body), timeout=0.5)
        try:
            with pytest.raises(AdapterTimeoutError):
                client.predict(np.zeros((8, 2)))
        finally:
            client.close()

    def test_error_frame_raises(self, tmp_path):
        body = """
        import json, sys
        for line in sys.stdin:
            frame = json.loads(line)
            if frame["type"] == "hello":
                print(json.dumps({"type": "ready"}), flush=True)
            else:
                print(json.dumps({"type": "error", "msg": "boom"}), flush=True)
        """
        with make_client(write_server(tmp_path, body)) as client:
            with pytest.raises(AdapterProtocolError, match="boom"):
                client.predict(np.zeros((8, 2)))

    def test_input_shape_validated(self, tmp_path):
        cmd = write_server(tmp_path, LAST_VALUE_SERVER)
        with make_client(cmd) as client:
            with pytest.raises(AdapterShapeError):
                client.predict(np.zeros((5, 2)))

    def test_distinct_error_codes(self):
        codes = {
            AdapterProcessError.code,
            AdapterProtocolError.code,
            AdapterTimeoutError.code,
            AdapterIdMismatchError.code,
            AdapterShapeError.code,
        }
        assert len(codes) == 5
