"""HTTP wire protocol for backend services, plus a local mock server.

All endpoints are ``POST /v1/<role>`` with JSON bodies. Pixel data never
travels inline: requests reference frame/clip paths on shared storage
and name the output path the service should write. Errors come back as
a non-200 status with an ``{"error": ...}`` body.

The chat endpoint authenticates with a bearer token taken from the
``VLM_API_KEY`` environment variable; the token never appears in logs
(see ``runlog``) and is read lazily at call time.
"""
from __future__ import annotations

import json
import os
import threading
import urllib.error
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .flowio import read_flow, write_flow
from .media import Frame, decode_frame_png, encode_frame_png, read_clip, write_clip
from .vlm.gateway import TransportError

CREDENTIAL_ENV_VAR = "VLM_API_KEY"


def _post(url: str, body: dict, timeout: float, headers: dict | None = None) -> dict:
    payload = json.dumps(body).encode("utf-8")
    request = urllib.request.Request(
        url, data=payload, headers={"Content-Type": "application/json", **(headers or {})}
    )
    try:
        with urllib.request.urlopen(request, timeout=timeout) as response:
            return json.loads(response.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        try:
            detail = json.loads(exc.read().decode("utf-8")).get("error", "")
        except Exception:
            detail = ""
        raise TransportError(f"backend returned {exc.code}: {detail}") from exc
    except (urllib.error.URLError, TimeoutError, json.JSONDecodeError) as exc:
        raise TransportError(f"backend unreachable at {url}: {exc}") from exc


class _Spool:
    """Scratch area for shuttling in-memory frames through path-based calls."""

    def __init__(self, directory: str) -> None:
        self.directory = directory
        self._lock = threading.Lock()
        self._counter = 0

    def fresh(self, suffix: str) -> str:
        os.makedirs(self.directory, exist_ok=True)
        with self._lock:
            self._counter += 1
            return os.path.join(self.directory, f"wire_{os.getpid()}_{self._counter}{suffix}")


def _save_frame(frame: Frame, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_frame_png(frame.pixels))


def _load_frame(path: str) -> Frame:
    with open(path, "rb") as fh:
        return Frame(decode_frame_png(fh.read()))


class HttpChatBackend:
    def __init__(self, url: str, timeout: float = 60.0) -> None:
        self.url = url.rstrip("/")
        self.timeout = timeout

    def complete(self, system_prompt: str, user_prompt: str, images: tuple[str, ...]) -> str:
        headers = {}
        credential = os.environ.get(CREDENTIAL_ENV_VAR)
        if credential:
            headers["Authorization"] = f"Bearer {credential}"
        reply = _post(
            f"{self.url}/v1/chat",
            {"system": system_prompt, "user": user_prompt, "images": list(images)},
            self.timeout,
            headers,
        )
        return reply["text"]


class HttpImageEditor:
    def __init__(self, url: str, spool: _Spool, timeout: float = 60.0) -> None:
        self.url = url.rstrip("/")
        self.spool = spool
        self.timeout = timeout

    def edit_image(self, frame: Frame, instruction: str, guidance_scale: float) -> Frame:
        src = self.spool.fresh(".png")
        dst = self.spool.fresh(".png")
        _save_frame(frame, src)
        _post(
            f"{self.url}/v1/image_edit",
            {"frame_path": src, "instruction": instruction,
             "guidance_scale": guidance_scale, "out_path": dst},
            self.timeout,
        )
        return _load_frame(dst)


class HttpPropagator:
    def __init__(self, url: str, spool: _Spool, timeout: float = 300.0) -> None:
        self.url = url.rstrip("/")
        self.spool = spool
        self.timeout = timeout

    def propagate(self, src_clip, edited_first: Frame):
        clip_dir = self.spool.fresh("_clip")
        first = self.spool.fresh(".png")
        out_dir = self.spool.fresh("_out")
        write_clip(src_clip, clip_dir)
        _save_frame(edited_first, first)
        _post(
            f"{self.url}/v1/propagate",
            {"src_clip_dir": clip_dir, "edited_first_path": first, "out_dir": out_dir},
            self.timeout,
        )
        return read_clip(out_dir)


class HttpImageToVideo:
    def __init__(self, url: str, spool: _Spool, timeout: float = 300.0) -> None:
        self.url = url.rstrip("/")
        self.spool = spool
        self.timeout = timeout

    def image_to_video(self, image: Frame, n_frames: int):
        src = self.spool.fresh(".png")
        out_dir = self.spool.fresh("_out")
        _save_frame(image, src)
        _post(
            f"{self.url}/v1/image_to_video",
            {"image_path": src, "n_frames": n_frames, "out_dir": out_dir},
            self.timeout,
        )
        return read_clip(out_dir)


class HttpFlowEstimator:
    def __init__(self, url: str, spool: _Spool, timeout: float = 120.0) -> None:
        self.url = url.rstrip("/")
        self.spool = spool
        self.timeout = timeout

    def estimate_flow(self, frame_a: Frame, frame_b: Frame):
        a = self.spool.fresh(".png")
        b = self.spool.fresh(".png")
        out = self.spool.fresh(".flo")
        _save_frame(frame_a, a)
        _save_frame(frame_b, b)
        _post(
            f"{self.url}/v1/flow",
            {"frame_a": a, "frame_b": b, "out_path": out},
            self.timeout,
        )
        return read_flow(out)


class HttpMetricScorer:
    def __init__(self, url: str, timeout: float = 120.0) -> None:
        self.url = url.rstrip("/")
        self.timeout = timeout

    def score_metric(self, kind: str, payload: dict) -> float:
        reply = _post(
            f"{self.url}/v1/metric",
            {"kind": kind, "payload": payload},
            self.timeout,
        )
        return float(reply["value"])


# -- mock server ----------------------------------------------------------


class MockServer:
    """Serves all six roles locally, backed by the deterministic mocks."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0) -> None:
        from . import backends

        chat = backends.DeterministicChat()
        editor = backends.MockImageEditor()
        propagator = backends.MockPropagator()
        i2v = backends.MockImageToVideo()
        flow = backends.MockFlowEstimator()
        metrics = backends.MockMetricScorer(values={
            "clip_temporal": 0.956, "clip_text": 19.37, "pick": 18.91, "dover": 0.567,
        })

        def handle(path: str, body: dict) -> dict:
            if path == "/v1/chat":
                text = chat.complete(body["system"], body["user"], tuple(body["images"]))
                return {"text": text}
            if path == "/v1/image_edit":
                frame = _load_frame(body["frame_path"])
                edited = editor.edit_image(frame, body["instruction"], body["guidance_scale"])
                _save_frame(edited, body["out_path"])
                return {"ok": True, "width": edited.width, "height": edited.height}
            if path == "/v1/propagate":
                clip = read_clip(body["src_clip_dir"])
                first = _load_frame(body["edited_first_path"])
                result = propagator.propagate(clip, first)
                write_clip(result, body["out_dir"])
                return {"ok": True, "n_frames": len(result)}
            if path == "/v1/image_to_video":
                image = _load_frame(body["image_path"])
                result = i2v.image_to_video(image, body["n_frames"])
                write_clip(result, body["out_dir"])
                return {"ok": True, "n_frames": len(result)}
            if path == "/v1/flow":
                a = _load_frame(body["frame_a"])
                b = _load_frame(body["frame_b"])
                field = flow.estimate_flow(a, b)
                write_flow(field, body["out_path"])
                return {"ok": True}
            if path == "/v1/metric":
                value = metrics.score_metric(body["kind"], body.get("payload", {}))
                return {"value": value}
            raise KeyError(f"unknown endpoint {path}")

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self) -> None:  # noqa: N802 - stdlib naming
                length = int(self.headers.get("Content-Length", "0"))
                try:
                    body = json.loads(self.rfile.read(length).decode("utf-8"))
                    reply = handle(self.path, body)
                    status = 200
                except KeyError as exc:
                    reply, status = {"error": str(exc)}, 404
                except Exception as exc:  # noqa: BLE001 - fault barrier at the wire
                    reply, status = {"error": f"{type(exc).__name__}: {exc}"}, 500
                data = json.dumps(reply).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args) -> None:  # quiet by default
                pass

        self._server = ThreadingHTTPServer((host, port), Handler)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None

    def serve_forever(self) -> None:
        self._server.serve_forever()


def make_spool(workdir: str) -> _Spool:
    return _Spool(os.path.join(workdir, ".wire"))
