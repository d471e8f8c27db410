"""JSON-lines layer server: the FFI surface for out-of-process bindings.

One request per stdin line, one JSON response per stdout line. Tensors
travel through the binary tensor file format (see layout), keeping the
protocol itself tiny. Handles are created once, validated eagerly, and
reused across forward calls:

    {"op": "create_conv", "sig": [1,1], "B": 8, "Cin": 2, "Cout": 2,
     "dimage": 6, "dfilter": 2, "filters": "f.mvtf", "bias": "b.mvtf"}
        -> {"ok": true, "handle": 1}
    {"op": "forward", "handle": 1, "input": "x.mvtf", "output": "y.mvtf"}
        -> {"ok": true, "elapsed_s": 0.0012}
    {"op": "close", "handle": 1} / {"op": "ping"} / {"op": "exit"}

Errors come back as {"ok": false, "error": "ShapeMismatch: ..."} and leave
the server running. Inputs must be single-precision; double payloads are
rejected, not converted.
"""

from __future__ import annotations

import json
import sys
import time

import numpy as np

from . import activation as act
from . import conv as conv_mod
from . import linear as lin
from .errors import MvkernelsError, ShapeMismatch
from .layout import Dims, LayoutTag, read_tensor, write_tensor
from .algebra import validate_signature


def _load_f32(path) -> np.ndarray:
    tf = read_tensor(path)
    if tf.data.dtype != np.float32:
        raise ShapeMismatch(
            f"{path}: payload is {tf.data.dtype}, layers take float32 only"
        )
    return tf.data


class _Handles:
    def __init__(self):
        self._next = 1
        self._live: dict[int, tuple[str, object]] = {}

    def add(self, kind: str, layer) -> int:
        h = self._next
        self._next += 1
        self._live[h] = (kind, layer)
        return h

    def get(self, h: int):
        if h not in self._live:
            raise ShapeMismatch(f"unknown handle {h}")
        return self._live[h]

    def close(self, h: int) -> None:
        self._live.pop(h, None)


def _create_conv(req) -> tuple[str, object]:
    sig = validate_signature(req["sig"])
    dims = Dims(
        B=int(req["B"]),
        C_in=int(req["Cin"]),
        C_out=int(req["Cout"]),
        d_image=int(req["dimage"]),
        d_filter=int(req["dfilter"]),
        k=sig.k,
    )
    layer = conv_mod.make_conv_layer(
        dims,
        sig,
        _load_f32(req["filters"]),
        _load_f32(req["bias"]),
        W=req.get("W"),
        U=int(req.get("U", 1)),
    )
    return "conv", layer


def _create_linear(req) -> tuple[str, object]:
    sig = validate_signature(req["sig"])
    layer = lin.make_linear_layer(sig, _load_f32(req["weight"]), _load_f32(req["bias"]))
    return "linear", layer


def _create_activation(req) -> tuple[str, object]:
    sig = validate_signature(req["sig"])
    weight = _load_f32(req["weight"]) if req.get("weight") else None
    bias = _load_f32(req["bias"]) if req.get("bias") else None
    cfg = act.make_activation_config(
        sig, int(req["mode"]), req["kernel_indices"], weight, bias
    )
    return "activation", cfg


def _forward(kind: str, layer, x: np.ndarray, variant: str | None) -> np.ndarray:
    if kind == "conv":
        return conv_mod.conv_forward(x, layer, variant or "packed")
    if kind == "linear":
        return lin.linear_forward(x, layer, variant or "gemm")
    if kind == "activation":
        if x.ndim == 4:
            # Spatial activation: gate each position independently.
            B, C, P, nb = x.shape
            folded = np.ascontiguousarray(x.transpose(0, 2, 1, 3)).reshape(
                B * P, C, nb
            )
            out = act.activation_forward(folded, layer, variant or "specialized")
            return np.ascontiguousarray(
                out.reshape(B, P, C, nb).transpose(0, 2, 1, 3)
            )
        return act.activation_forward(x, layer, variant or "specialized")
    raise ShapeMismatch(f"unknown layer kind {kind}")


_OUTPUT_TAGS = {
    "conv": LayoutTag.CONV_OUTPUT,
    "linear": LayoutTag.LINEAR_OUTPUT,
    "activation": LayoutTag.ACTIVATION_OUTPUT,
}


def handle_request(req: dict, handles: _Handles) -> dict:
    """Dispatch one request; errors come back as responses, never raises."""
    try:
        return _dispatch(req, handles)
    except MvkernelsError as e:
        return {"ok": False, "error": f"{type(e).__name__}: {e}"}
    except (KeyError, TypeError, ValueError) as e:
        return {"ok": False, "error": f"bad request: {type(e).__name__}: {e}"}
    except OSError as e:
        return {"ok": False, "error": f"io error: {e}"}


def _dispatch(req: dict, handles: _Handles) -> dict:
    op = req.get("op")
    if op == "ping":
        return {"ok": True, "protocol": 1}
    if op == "create_conv":
        return {"ok": True, "handle": handles.add(*_create_conv(req))}
    if op == "create_linear":
        return {"ok": True, "handle": handles.add(*_create_linear(req))}
    if op == "create_activation":
        return {"ok": True, "handle": handles.add(*_create_activation(req))}
    if op == "forward":
        kind, layer = handles.get(int(req["handle"]))
        x = _load_f32(req["input"])
        t0 = time.perf_counter()
        y = _forward(kind, layer, x, req.get("variant"))
        elapsed = time.perf_counter() - t0
        write_tensor(req["output"], y, _OUTPUT_TAGS[kind], layer.sig.k)
        return {"ok": True, "elapsed_s": elapsed, "shape": list(y.shape)}
    if op == "close":
        handles.close(int(req["handle"]))
        return {"ok": True}
    return {"ok": False, "error": f"unknown op {op!r}"}


def serve_stdio() -> int:
    handles = _Handles()
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
        except json.JSONDecodeError as e:
            print(json.dumps({"ok": False, "error": f"bad json: {e}"}), flush=True)
            continue
        if req.get("op") == "exit":
            print(json.dumps({"ok": True}), flush=True)
            return 0
        print(json.dumps(handle_request(req, handles)), flush=True)
    return 0
