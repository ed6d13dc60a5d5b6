"""Read-only HTTP service exposing a loaded session to the viewer.

All endpoints are GETs; large per-particle arrays are served as raw
little-endian float32 bodies, structured results as JSON. Field results are
cached per exact parameter tuple after the first computation; the session is
immutable after load, so concurrent requests are safe.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import numpy as np

from .diffusion import DiffusionEmbedding, distance_field
from .errors import DriftscopeError
from .separation import diffusion_separation, knn_log_density, particle_separation
from .similarity import cluster_embedding, multi_source_field, similarity_neighborhood
from .trajectory import TrajectoryDataset


class ApiError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


class SessionState:
    """One dataset plus its embedding, with a cache of computed field bodies."""

    def __init__(self, dataset: TrajectoryDataset, embedding: DiffusionEmbedding, rng_seed: int = 0):
        if embedding.n != dataset.n:
            raise ValueError("embedding does not correspond to the dataset (n differs)")
        self.dataset = dataset
        self.embedding = embedding
        self.rng_seed = rng_seed
        self._cache: dict[tuple, tuple[int, str, bytes]] = {}
        self._lock = threading.Lock()

    def get_or_compute(self, key: tuple, fn):
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        value = fn()
        with self._lock:
            # first computer wins; a concurrent duplicate is discarded
            return self._cache.setdefault(key, value)

    def scales_hint(self) -> list[float]:
        lam = self.embedding.eigenvalues
        top = float(lam[1]) if lam.shape[0] > 1 else 0.5
        top = min(max(top, 1e-9), 1.0 - 1e-12)
        s_max = max(10.0, np.log(1e-3) / (2.0 * np.log(top)))
        return [round(float(v), 2) for v in np.geomspace(1.0, s_max, 24)]


def _f32_body(arr: np.ndarray) -> tuple[int, str, bytes]:
    return 200, "application/octet-stream", np.ascontiguousarray(arr).astype("<f4").tobytes()


def _json_body(obj) -> tuple[int, str, bytes]:
    return 200, "application/json", json.dumps(obj).encode()


def _get_float(params, name, default=None):
    if name not in params:
        if default is None:
            raise ApiError(400, f"missing query parameter {name!r}")
        return default
    try:
        return float(params[name][0])
    except ValueError:
        raise ApiError(400, f"query parameter {name!r} must be a number") from None


def _get_int(params, name, default=None):
    if name not in params:
        if default is None:
            raise ApiError(400, f"missing query parameter {name!r}")
        return default
    try:
        return int(params[name][0])
    except ValueError:
        raise ApiError(400, f"query parameter {name!r} must be an integer") from None


def _check_particle(session, idx):
    if not (0 <= idx < session.dataset.n):
        raise ApiError(404, f"unknown particle index {idx}")


def handle_request(session: SessionState, path: str, params: dict) -> tuple[int, str, bytes]:
    ds, emb = session.dataset, session.embedding

    if path == "/api/meta":
        lo, hi = ds.bounds()
        return _json_body(
            {
                "n": ds.n,
                "T": ds.T,
                "d": ds.d,
                "times": ds.times.tolist(),
                "scales_hint": session.scales_hint(),
                "bounds": {"min": lo.tolist(), "max": hi.tolist()},
            }
        )

    if path == "/api/positions":
        t = _get_int(params, "t")
        if not (0 <= t < ds.T):
            raise ApiError(404, f"unknown time step {t}")
        return _f32_body(ds.positions[:, t, :])

    if path == "/api/trajectories":
        if "ids" not in params:
            raise ApiError(400, "missing query parameter 'ids'")
        try:
            ids = [int(v) for v in params["ids"][0].split(",") if v != ""]
        except ValueError:
            raise ApiError(400, "'ids' must be a comma-separated list of integers") from None
        if not ids:
            raise ApiError(400, "'ids' must be nonempty")
        for i in ids:
            _check_particle(session, i)
        return _f32_body(ds.positions[ids])

    if path == "/api/separation":
        direction = params.get("dir", ["forward"])[0]
        if direction not in ("forward", "backward"):
            raise ApiError(400, "dir must be 'forward' or 'backward'")
        k = _get_int(params, "k", default=0) or None
        if "s" in params:
            s = _get_float(params, "s")
            key = ("separation", s, direction, k)
            fn = lambda: _f32_body(diffusion_separation(ds, emb, s, direction, k).values)
        else:
            key = ("separation", None, direction, k)
            fn = lambda: _f32_body(particle_separation(ds, direction, k).values)
        return session.get_or_compute(key, fn)

    if path == "/api/density":
        t = _get_int(params, "t")
        if not (0 <= t < ds.T):
            raise ApiError(404, f"unknown time step {t}")
        k = _get_int(params, "k", default=min(27, ds.n - 1))
        return session.get_or_compute(
            ("density", t, k), lambda: _f32_body(knn_log_density(ds, t, k).values)
        )

    if path == "/api/field":
        if "sources" not in params:
            raise ApiError(400, "missing query parameter 'sources'")
        try:
            sources = [int(v) for v in params["sources"][0].split(",") if v != ""]
        except ValueError:
            raise ApiError(400, "'sources' must be a comma-separated list of integers") from None
        if not sources:
            raise ApiError(400, "'sources' must be nonempty")
        for i in sources:
            _check_particle(session, i)
        s = _get_float(params, "s")

        def compute():
            msf = multi_source_field(emb, sources, s)
            return _json_body(
                {
                    "sources": list(msf.sources),
                    "scale": msf.scale,
                    "nearest": msf.nearest.tolist(),
                    "distances": msf.distances.tolist(),
                }
            )

        return session.get_or_compute(("field", tuple(sorted(sources)), s), compute)

    if path == "/api/neighborhood":
        source = _get_int(params, "source")
        _check_particle(session, source)
        s = _get_float(params, "s")
        radius = _get_float(params, "radius")
        if radius <= 0:
            raise ApiError(400, "radius must be positive")
        max_count = _get_int(params, "max", default=200)
        if max_count < 1:
            raise ApiError(400, "max must be at least 1")
        nb = similarity_neighborhood(emb, source, s, radius, max_count, rng_seed=session.rng_seed)
        return _json_body(
            {
                "source": nb.source,
                "scale": nb.scale,
                "radius": nb.radius,
                "max_count": nb.max_count,
                "members": nb.members.tolist(),
                "distances": nb.distances.tolist(),
            }
        )

    if path == "/api/clusters":
        k = _get_int(params, "k")
        if not (1 <= k <= ds.n):
            raise ApiError(400, f"k must be in [1, {ds.n}]")
        s = _get_float(params, "s")
        return session.get_or_compute(
            ("clusters", k, s),
            lambda: _json_body(
                {"k": k, "scale": s, "labels": cluster_embedding(emb, s, k, session.rng_seed).tolist()}
            ),
        )

    if path == "/api/distance":
        source = _get_int(params, "source")
        _check_particle(session, source)
        s = _get_float(params, "s")
        return session.get_or_compute(
            ("distance", source, s),
            lambda: _f32_body(distance_field(emb, [source], s).values),
        )

    raise ApiError(404, f"unknown endpoint {path}")


def _make_handler(session: SessionState):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):
            pass

        def _send(self, status: int, content_type: str, body: bytes):
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            url = urlparse(self.path)
            try:
                status, ctype, body = handle_request(session, url.path, parse_qs(url.query))
            except ApiError as exc:
                status, ctype = exc.status, "application/json"
                body = json.dumps({"error": str(exc)}).encode()
            except (DriftscopeError, ValueError, IndexError) as exc:
                status, ctype = 400, "application/json"
                body = json.dumps({"error": str(exc)}).encode()
            self._send(status, ctype, body)

    return Handler


def create_server(session: SessionState, port: int = 0, host: str = "127.0.0.1") -> ThreadingHTTPServer:
    """Bind the HTTP server without starting its loop (port 0 binds an ephemeral port)."""
    return ThreadingHTTPServer((host, port), _make_handler(session))


def serve(session: SessionState, port: int, host: str = "127.0.0.1") -> None:
    """Serve the session until interrupted."""
    server = create_server(session, port, host)
    try:
        server.serve_forever()
    finally:
        server.server_close()
