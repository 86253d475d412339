"""Binary wire protocol for out-of-process model adapters.

Adapters holding real weights (latent VAE, inpainting U-Net, feature
scorer, face parser, identity embedder) run as separate processes and
speak this protocol over a TCP stream or exchange single tensors as
files. The core stays importable and testable without any model code.

Framing, all integers little-endian:

  tensor frame   u32 rank | u32 dims[rank] | f32 data, row-major
  message        u32 payload_length | payload
  request        u8 opcode | body
  response       u8 status | body        (status 0 = ok, 1 = error)

A scalar travels as a rank-0 tensor frame (no dims, one f32). An error
response body is a UTF-8 message. Tensor payloads are float32 on the
wire; the core upcasts to float64 on receipt, so a round trip through
an adapter quantizes to f32 precision. Parse maps ride as f32 frames
holding integral values and are rounded back on receipt.

Request/response bodies by opcode:

  DESCRIBE       ()                        -> UTF-8 JSON metadata
  ENCODE         image                     -> latent
  DECODE         latent                    -> image
  PREDICT_NOISE  u32 t | z_t | cond latent
                 | u8 has_mask | [mask]    -> predicted noise
  LOSS_AND_GRAD  z0_hat | target image     -> scalar loss | gradient
  PARSE          image                     -> label grid
  EMBED          image                     -> embedding vector

The DESCRIBE JSON object carries image_shape, latent_shape, num_labels,
embed_dim, and concurrent_safe. `RemoteBackend` is the client side and
satisfies all five backend contracts; `BackendServer` wraps in-process
implementations behind the protocol, which is how the loopback tests
exercise both directions.
"""

from __future__ import annotations

import json
import os
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass

import numpy as np

from ..masking import ParseMap
from .contracts import Conditioning

ENDPOINT_ENV_VAR = "FACEVEIL_ADAPTER_ENDPOINT"

OP_DESCRIBE = 0
OP_ENCODE = 1
OP_DECODE = 2
OP_PREDICT_NOISE = 3
OP_LOSS_AND_GRAD = 4
OP_PARSE = 5
OP_EMBED = 6

STATUS_OK = 0
STATUS_ERROR = 1

_MAX_RANK = 8
_MAX_ELEMENTS = 1 << 28

_U32 = struct.Struct("<I")


class WireError(RuntimeError):
    """Malformed frame, truncated stream, or protocol violation."""


class RemoteBackendError(RuntimeError):
    """The adapter reported a failure for a request."""


def pack_tensor(array: np.ndarray) -> bytes:
    """Encode an array as a tensor frame (f32, row-major)."""
    array = np.asarray(array)
    if array.ndim > _MAX_RANK:
        raise WireError(f"rank {array.ndim} exceeds protocol maximum {_MAX_RANK}")
    header = _U32.pack(array.ndim) + b"".join(
        _U32.pack(d) for d in array.shape
    )
    return header + np.ascontiguousarray(array, dtype="<f4").tobytes()


def unpack_tensor(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decode one tensor frame starting at `offset`; returns (array,
    offset past the frame). The result is float64."""
    rank, offset = _read_u32(buf, offset)
    if rank > _MAX_RANK:
        raise WireError(f"rank {rank} exceeds protocol maximum {_MAX_RANK}")
    dims = []
    for _ in range(rank):
        d, offset = _read_u32(buf, offset)
        dims.append(d)
    count = 1
    for d in dims:
        count *= d
    if count > _MAX_ELEMENTS:
        raise WireError(f"frame declares {count} elements, refusing")
    end = offset + 4 * count
    if end > len(buf):
        raise WireError("tensor frame truncated")
    data = np.frombuffer(buf, dtype="<f4", count=count, offset=offset)
    return data.astype(np.float64).reshape(dims), end


def pack_scalar(value: float) -> bytes:
    return pack_tensor(np.asarray(float(value)))


def save_tensor(path, array: np.ndarray):
    """Write one tensor frame to a file (the file-exchange transport)."""
    with open(path, "wb") as fh:
        fh.write(pack_tensor(array))


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        buf = fh.read()
    array, end = unpack_tensor(buf)
    if end != len(buf):
        raise WireError(f"{path}: {len(buf) - end} trailing bytes after frame")
    return array


def _read_u32(buf: bytes, offset: int) -> tuple[int, int]:
    if offset + 4 > len(buf):
        raise WireError("frame truncated reading u32")
    return _U32.unpack_from(buf, offset)[0], offset + 4


def _recv_exact(rfile, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = rfile.read(remaining)
        if not chunk:
            raise WireError("stream closed mid-message")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_message(rfile) -> bytes | None:
    """Read one length-prefixed message; None on clean EOF."""
    head = rfile.read(4)
    if not head:
        return None
    if len(head) < 4:
        head += _recv_exact(rfile, 4 - len(head))
    (length,) = _U32.unpack(head)
    return _recv_exact(rfile, length)


def write_message(wfile, payload: bytes):
    wfile.write(_U32.pack(len(payload)) + payload)
    wfile.flush()


def resolve_endpoint(endpoint: str | None = None) -> tuple[str, int]:
    """Parse `host:port`, falling back to the environment variable."""
    if endpoint is None:
        endpoint = os.environ.get(ENDPOINT_ENV_VAR)
    if not endpoint:
        raise RemoteBackendError(
            f"no adapter endpoint given and {ENDPOINT_ENV_VAR} is unset"
        )
    host, sep, port = endpoint.rpartition(":")
    if not sep or not host:
        raise RemoteBackendError(f"endpoint must be host:port, got {endpoint!r}")
    return host, int(port)


@dataclass(frozen=True)
class BackendDescription:
    image_shape: tuple[int, int]
    latent_shape: tuple[int, int, int]
    num_labels: int
    embed_dim: int
    concurrent_safe: bool

    @classmethod
    def from_json(cls, raw: bytes) -> "BackendDescription":
        meta = json.loads(raw.decode("utf-8"))
        return cls(
            image_shape=tuple(meta["image_shape"]),
            latent_shape=tuple(meta["latent_shape"]),
            num_labels=int(meta["num_labels"]),
            embed_dim=int(meta["embed_dim"]),
            concurrent_safe=bool(meta["concurrent_safe"]),
        )

    def to_json(self) -> bytes:
        return json.dumps(
            {
                "image_shape": list(self.image_shape),
                "latent_shape": list(self.latent_shape),
                "num_labels": self.num_labels,
                "embed_dim": self.embed_dim,
                "concurrent_safe": self.concurrent_safe,
            }
        ).encode("utf-8")


class RemoteBackend:
    """Client for one adapter process; satisfies all five backend
    contracts over a single socket.

    One socket means one in-flight request, so this declares
    `concurrent_safe = False` regardless of what the adapter itself
    could sustain; the pipeline serializes accordingly.
    """

    concurrent_safe = False

    def __init__(self, endpoint: str | None = None, timeout: float = 30.0):
        self._host, self._port = resolve_endpoint(endpoint)
        self._timeout = timeout
        self._lock = threading.Lock()
        self._sock: socket.socket | None = None
        self._rfile = None
        self._wfile = None
        self._description: BackendDescription | None = None

    # -- transport ----------------------------------------------------

    def _connect(self):
        if self._sock is not None:
            return
        sock = socket.create_connection(
            (self._host, self._port), timeout=self._timeout
        )
        self._sock = sock
        self._rfile = sock.makefile("rb")
        self._wfile = sock.makefile("wb")

    def close(self):
        with self._lock:
            if self._sock is not None:
                self._rfile.close()
                self._wfile.close()
                self._sock.close()
                self._sock = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _request(self, opcode: int, body: bytes = b"") -> bytes:
        with self._lock:
            self._connect()
            write_message(self._wfile, bytes([opcode]) + body)
            reply = read_message(self._rfile)
        if reply is None:
            raise WireError("adapter closed the stream without replying")
        if not reply:
            raise WireError("empty response payload")
        status, body = reply[0], reply[1:]
        if status == STATUS_ERROR:
            raise RemoteBackendError(body.decode("utf-8", errors="replace"))
        if status != STATUS_OK:
            raise WireError(f"unknown response status {status}")
        return body

    def _request_tensor(self, opcode: int, body: bytes) -> np.ndarray:
        reply = self._request(opcode, body)
        array, end = unpack_tensor(reply)
        if end != len(reply):
            raise WireError("trailing bytes after tensor response")
        return array

    # -- contract surface ----------------------------------------------

    def describe(self) -> BackendDescription:
        if self._description is None:
            self._description = BackendDescription.from_json(
                self._request(OP_DESCRIBE)
            )
        return self._description

    @property
    def image_shape(self) -> tuple[int, int]:
        return self.describe().image_shape

    @property
    def latent_shape(self) -> tuple[int, int, int]:
        return self.describe().latent_shape

    def encode(self, image: np.ndarray) -> np.ndarray:
        return self._request_tensor(OP_ENCODE, pack_tensor(image))

    def decode(self, latent: np.ndarray) -> np.ndarray:
        return self._request_tensor(OP_DECODE, pack_tensor(latent))

    def predict_noise(
        self, z_t: np.ndarray, t: int, cond: Conditioning
    ) -> np.ndarray:
        body = _U32.pack(int(t)) + pack_tensor(z_t) + pack_tensor(cond.latent)
        if cond.mask is None:
            body += b"\x00"
        else:
            body += b"\x01" + pack_tensor(cond.mask)
        return self._request_tensor(OP_PREDICT_NOISE, body)

    def loss_and_grad(
        self, z0_hat: np.ndarray, target_image: np.ndarray
    ) -> tuple[float, np.ndarray]:
        reply = self._request(
            OP_LOSS_AND_GRAD, pack_tensor(z0_hat) + pack_tensor(target_image)
        )
        loss, offset = unpack_tensor(reply)
        grad, end = unpack_tensor(reply, offset)
        if end != len(reply):
            raise WireError("trailing bytes after loss/gradient response")
        return float(loss), grad

    def parse(self, image: np.ndarray) -> ParseMap:
        grid = self._request_tensor(OP_PARSE, pack_tensor(image))
        labels = np.rint(grid).astype(np.int64)
        return ParseMap(labels, num_labels=self.describe().num_labels)

    def embed(self, image: np.ndarray) -> np.ndarray:
        return self._request_tensor(OP_EMBED, pack_tensor(image))


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        while True:
            try:
                payload = read_message(self.rfile)
            except WireError:
                return
            if payload is None:
                return
            try:
                response = self._dispatch(payload)
            except Exception as exc:  # backend failures go down the wire
                response = bytes([STATUS_ERROR]) + str(exc).encode("utf-8")
            write_message(self.wfile, response)

    def _dispatch(self, payload: bytes) -> bytes:
        if not payload:
            raise WireError("empty request payload")
        opcode, body = payload[0], payload[1:]
        server: BackendServer = self.server  # type: ignore[assignment]
        if opcode == OP_DESCRIBE:
            return bytes([STATUS_OK]) + server.description.to_json()
        if opcode == OP_ENCODE:
            image, _ = unpack_tensor(body)
            return _ok_tensor(server.codec.encode(image))
        if opcode == OP_DECODE:
            latent, _ = unpack_tensor(body)
            return _ok_tensor(server.codec.decode(latent))
        if opcode == OP_PREDICT_NOISE:
            t, offset = _read_u32(body, 0)
            z_t, offset = unpack_tensor(body, offset)
            cond_latent, offset = unpack_tensor(body, offset)
            if offset >= len(body):
                raise WireError("missing mask flag")
            has_mask, offset = body[offset], offset + 1
            mask = None
            if has_mask:
                mask, offset = unpack_tensor(body, offset)
            cond = Conditioning(latent=cond_latent, mask=mask)
            return _ok_tensor(server.denoiser.predict_noise(z_t, t, cond))
        if opcode == OP_LOSS_AND_GRAD:
            z0_hat, offset = unpack_tensor(body)
            target, _ = unpack_tensor(body, offset)
            loss, grad = server.scorer.loss_and_grad(z0_hat, target)
            return bytes([STATUS_OK]) + pack_scalar(loss) + pack_tensor(grad)
        if opcode == OP_PARSE:
            image, _ = unpack_tensor(body)
            parse = server.parser.parse(image)
            return _ok_tensor(parse.labels.astype(np.float64))
        if opcode == OP_EMBED:
            image, _ = unpack_tensor(body)
            return _ok_tensor(server.embedder.embed(image))
        raise WireError(f"unknown opcode {opcode}")


def _ok_tensor(array: np.ndarray) -> bytes:
    return bytes([STATUS_OK]) + pack_tensor(array)


class BackendServer(socketserver.ThreadingTCPServer):
    """Serves in-process backend implementations over the wire protocol.

    Used by the loopback tests and usable as the skeleton of a real
    adapter process: construct with the five implementations, call
    `start()`, and point `RemoteBackend` (or the CLI via
    FACEVEIL_ADAPTER_ENDPOINT) at `endpoint`.
    """

    allow_reuse_address = True
    daemon_threads = True

    def __init__(
        self,
        codec,
        denoiser,
        scorer,
        parser,
        embedder,
        num_labels: int = 19,
        embed_dim: int | None = None,
        host: str = "127.0.0.1",
        port: int = 0,
    ):
        super().__init__((host, port), _Handler)
        self.codec = codec
        self.denoiser = denoiser
        self.scorer = scorer
        self.parser = parser
        self.embedder = embedder
        if embed_dim is None:
            probe = np.zeros(codec.image_shape, dtype=np.float64)
            embed_dim = int(embedder.embed(probe).shape[0])
        self.description = BackendDescription(
            image_shape=tuple(codec.image_shape),
            latent_shape=tuple(codec.latent_shape),
            num_labels=num_labels,
            embed_dim=embed_dim,
            concurrent_safe=False,
        )
        self._thread: threading.Thread | None = None

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start(self) -> str:
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self.endpoint

    def stop(self):
        self.shutdown()
        self.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.stop()
