"""Encrypted, authenticated framed stream between control plane and fog nodes.

Frame layout (big-endian), 36 bytes of overhead total:

    +-------+---------+----------+-------------+---------------+------------+-----+
    | magic | version | msg_type | payload_len |     nonce     | ciphertext | tag |
    |  2 B  |   1 B   |   1 B    |    4 B BE   | 8 B ctr + 4 B |  variable  | 16B |
    +-------+---------+----------+-------------+---------------+------------+-----+

The 8-byte header (magic through payload_len) is bound as associated
data, so any header mutation fails authentication. The nonce embeds a
per-connection, per-direction send counter; receivers reject any frame
whose counter does not strictly increase. Cipher: ChaCha20-Poly1305
with a 32-byte pre-shared key per fog node.
"""

from __future__ import annotations

import json
import os
import socket
import struct
import threading
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Any, Optional

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

MAGIC = b"\x46\x44"
VERSION = 1
HEADER = struct.Struct(">2sBBI")  # magic, version, msg_type, payload_len
NONCE_LEN = 12
TAG_LEN = 16
OVERHEAD = HEADER.size + NONCE_LEN + TAG_LEN  # 36
MAX_PAYLOAD = 1 << 20  # 1 MiB
MAX_COUNTER = (1 << 64) - 1
HANDSHAKE_TIMEOUT_S = 5.0
DEFAULT_PORT = 7707


class MsgType(IntEnum):
    HELLO = 0x01
    READING_BATCH = 0x02
    INSTRUCTION = 0x03
    ACK = 0x04
    HEALTH = 0x05
    ERROR = 0x06


class WireError(Exception):
    pass


class PayloadTooLarge(WireError):
    pass


class CounterExhausted(WireError):
    pass


class BadMagic(WireError):
    pass


class UnsupportedVersion(WireError):
    pass


class AuthFailure(WireError):
    pass


class ReplayDetected(WireError):
    pass


class Truncated(WireError):
    pass


class HandshakeTimeout(WireError):
    pass


@dataclass(frozen=True)
class PresharedKey:
    """256-bit per-node key. Never serialized into frames or logs."""

    key: bytes

    def __post_init__(self) -> None:
        if len(self.key) != 32:
            raise ValueError("preshared key must be 32 bytes")

    def __repr__(self) -> str:  # keep key material out of logs and tracebacks
        return "PresharedKey(<redacted>)"


def encode_frame(
    msg_type: int,
    payload: bytes,
    key: PresharedKey,
    counter: int,
    nonce_rand: Optional[bytes] = None,
) -> bytes:
    """Seal one frame. `counter` must not have been used on this direction."""
    if len(payload) > MAX_PAYLOAD:
        raise PayloadTooLarge(f"{len(payload)} > {MAX_PAYLOAD}")
    if counter >= MAX_COUNTER:
        raise CounterExhausted(str(counter))
    if nonce_rand is None:
        nonce_rand = os.urandom(4)
    header = HEADER.pack(MAGIC, VERSION, msg_type, len(payload))
    nonce = struct.pack(">Q", counter) + nonce_rand
    sealed = ChaCha20Poly1305(key.key).encrypt(nonce, payload, header)
    # cryptography returns ciphertext||tag; our layout matches it directly.
    return header + nonce + sealed


def decode_frame(buf: bytes, key: PresharedKey, last_counter: int) -> tuple[int, bytes, int]:
    """Open one frame; returns (msg_type, payload, counter).

    Verifies magic, version, exact length, authentication tag, and that
    the embedded counter strictly exceeds `last_counter` before
    releasing any plaintext.
    """
    if len(buf) < HEADER.size:
        raise Truncated(f"{len(buf)} bytes")
    magic, version, msg_type, payload_len = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise BadMagic(magic.hex())
    if version != VERSION:
        raise UnsupportedVersion(str(version))
    if payload_len > MAX_PAYLOAD:
        raise Truncated(f"declared payload {payload_len} over limit")
    if len(buf) != OVERHEAD + payload_len:
        raise Truncated(f"have {len(buf)}, need {OVERHEAD + payload_len}")
    header = buf[: HEADER.size]
    nonce = buf[HEADER.size : HEADER.size + NONCE_LEN]
    sealed = buf[HEADER.size + NONCE_LEN :]
    (counter,) = struct.unpack(">Q", nonce[:8])
    try:
        payload = ChaCha20Poly1305(key.key).decrypt(nonce, sealed, header)
    except InvalidTag as exc:
        raise AuthFailure("tag mismatch") from exc
    if counter <= last_counter:
        raise ReplayDetected(f"counter {counter} <= {last_counter}")
    return msg_type, payload, counter


# --- socket framing -------------------------------------------------------

def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining > 0:
        chunk = sock.recv(remaining)
        if not chunk:
            raise ConnectionError("peer closed")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame_bytes(sock: socket.socket) -> bytes:
    """Read exactly one length-prefixed frame off a stream socket."""
    header = _recv_exact(sock, HEADER.size)
    magic, version, _msg_type, payload_len = HEADER.unpack(header)
    if magic != MAGIC:
        raise BadMagic(magic.hex())
    if version != VERSION:
        raise UnsupportedVersion(str(version))
    if payload_len > MAX_PAYLOAD:
        raise Truncated(f"declared payload {payload_len} over limit")
    rest = _recv_exact(sock, NONCE_LEN + payload_len + TAG_LEN)
    return header + rest


@dataclass
class FrameChannel:
    """Counter state for one direction pair of a connection.

    Sending and receiving each hold their own counter; both strictly
    increase for the lifetime of the connection.
    """

    sock: socket.socket
    key: PresharedKey
    send_counter: int = 0
    recv_counter: int = 0
    peer: str = ""
    # serializes writers; the agent loop and an ack-writing handler may
    # share one channel
    _send_lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def send(self, msg_type: int, payload: bytes) -> None:
        with self._send_lock:
            self.send_counter += 1
            frame = encode_frame(msg_type, payload, self.key, self.send_counter)
            self.sock.sendall(frame)

    def send_json(self, msg_type: int, obj: Any) -> None:
        self.send(msg_type, json.dumps(obj, separators=(",", ":")).encode())

    def recv(self) -> tuple[int, bytes]:
        buf = read_frame_bytes(self.sock)
        msg_type, payload, counter = decode_frame(buf, self.key, self.recv_counter)
        self.recv_counter = counter
        return msg_type, payload

    def recv_json(self) -> tuple[int, Any]:
        msg_type, payload = self.recv()
        return msg_type, json.loads(payload.decode())

    def close(self) -> None:
        # shutdown first: close() alone does not send FIN or wake a reader
        # blocked in recv() on this socket from another thread
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass


@dataclass(frozen=True)
class Session:
    """An authenticated connection after a successful Hello exchange."""

    channel: FrameChannel
    client_id: str
    peer: str


def client_handshake(sock: socket.socket, key: PresharedKey, client_id: str) -> Session:
    """Dial-side handshake: send Hello, verify the server echoes our challenge."""
    channel = FrameChannel(sock=sock, key=key)
    challenge = os.urandom(8).hex()
    channel.send_json(MsgType.HELLO, {"client_id": client_id, "challenge": challenge})
    sock.settimeout(HANDSHAKE_TIMEOUT_S)
    try:
        msg_type, reply = channel.recv_json()
    except socket.timeout as exc:
        raise HandshakeTimeout("no Hello ack") from exc
    except (ConnectionError, WireError) as exc:
        raise AuthFailure(f"handshake rejected: {exc}") from exc
    finally:
        sock.settimeout(None)
    if msg_type != MsgType.ACK or reply.get("challenge") != challenge:
        raise AuthFailure("server failed challenge echo")
    peer = f"{sock.getpeername()[0]}:{sock.getpeername()[1]}"
    return Session(channel=channel, client_id=client_id, peer=peer)


def server_handshake(sock: socket.socket, key: PresharedKey) -> Session:
    """Accept-side handshake: require a decryptable Hello within 5 s.

    A frame that fails authentication means the dialer holds the wrong
    key; the caller should close the connection and raise a security
    event.
    """
    peername = sock.getpeername()
    peer = f"{peername[0]}:{peername[1]}"
    channel = FrameChannel(sock=sock, key=key, peer=peer)
    sock.settimeout(HANDSHAKE_TIMEOUT_S)
    try:
        msg_type, payload, counter = decode_frame(read_frame_bytes(sock), key, 0)
    except socket.timeout as exc:
        raise HandshakeTimeout(peer) from exc
    finally:
        sock.settimeout(None)
    if msg_type != MsgType.HELLO:
        raise AuthFailure(f"expected Hello, got {msg_type}")
    channel.recv_counter = counter
    hello = json.loads(payload.decode())
    client_id = str(hello.get("client_id", ""))
    channel.send_json(MsgType.ACK, {"challenge": hello.get("challenge", ""), "ok": True})
    return Session(channel=channel, client_id=client_id, peer=peer)


# --- key material ---------------------------------------------------------

KEY_FILE_ENV = "FOGDECK_KEY_FILE"


def derive_key(key_seed: str, fog_id: str) -> PresharedKey:
    """Deterministic test-fleet key: sha256(seed ':' fog_id)."""
    import hashlib

    return PresharedKey(hashlib.sha256(f"{key_seed}:{fog_id}".encode()).digest())


def load_key_file(path: str | Path) -> dict[str, PresharedKey]:
    """Key file: JSON object mapping fog_id to 64 hex chars."""
    raw = json.loads(Path(path).read_text())
    return {fog_id: PresharedKey(bytes.fromhex(hexkey)) for fog_id, hexkey in raw.items()}


def write_key_file(path: str | Path, keys: dict[str, PresharedKey]) -> None:
    doc = {fog_id: psk.key.hex() for fog_id, psk in keys.items()}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def keys_from_env() -> dict[str, PresharedKey]:
    path = os.environ.get(KEY_FILE_ENV)
    if not path:
        return {}
    return load_key_file(path)
