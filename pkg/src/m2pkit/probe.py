"""Round-trip motion-to-photon latency probe.

The server answers pose-control messages by streaming frame tokens whose
payload is a known bar pattern for the requested pose. The client times
from sending a control message to the first display repaint tick at which
the matching pattern is visible. Both ends of a measurement use the client
clock, so no clock synchronisation is needed.

Wire format: every message is a 4-byte big-endian length followed by the
body. Body byte 0 is the type (0 control, 1 token).

    control: u8 type, u32 request_id, u16 pose_id, f64 client_send_time_ms
    token:   u8 type, u16 pose_id, u32 sequence, 64-byte pattern
"""

from __future__ import annotations

import logging
import math
import queue
import socket
import struct
import threading
import time
from collections import deque
from dataclasses import asdict, dataclass, field

from .errors import CorruptPayloadError, ProbeError, ProtocolError

log = logging.getLogger(__name__)

MSG_CONTROL = 0
MSG_TOKEN = 1

_LENGTH = struct.Struct(">I")
_CONTROL = struct.Struct(">BIHd")
_TOKEN_HEAD = struct.Struct(">BHI")

N_BARS = 8
BAR_WIDTH = 8
PATTERN_SIZE = N_BARS * BAR_WIDTH
# four bar colours give 2 bits per bar, so 8 bars cover every u16 pose id
PALETTE = (0x1F, 0x5C, 0xA3, 0xE0)
MAX_BODY = 1024


def _clock_ms() -> float:
    return time.perf_counter() * 1000.0


def make_pattern(pose_id: int) -> bytes:
    if not 0 <= pose_id <= 0xFFFF:
        raise ValueError(f"pose_id must fit in 16 bits, got {pose_id}")
    bars = bytearray()
    for k in range(N_BARS):
        bars += bytes([PALETTE[(pose_id >> (2 * k)) & 0b11]]) * BAR_WIDTH
    return bytes(bars)


def decode_pattern(payload: bytes) -> int:
    """Recover the pose id from a bar pattern, rejecting anything malformed."""
    if len(payload) != PATTERN_SIZE:
        raise CorruptPayloadError(f"pattern must be {PATTERN_SIZE} bytes, got {len(payload)}")
    pose_id = 0
    for k in range(N_BARS):
        bar = payload[k * BAR_WIDTH:(k + 1) * BAR_WIDTH]
        if bar.count(bar[0]) != BAR_WIDTH or bar[0] not in PALETTE:
            raise CorruptPayloadError(f"bar {k} is not a uniform palette colour")
        pose_id |= PALETTE.index(bar[0]) << (2 * k)
    return pose_id


@dataclass(frozen=True)
class ControlMessage:
    request_id: int
    pose_id: int
    client_send_time: float

    def encode(self) -> bytes:
        return _frame(_CONTROL.pack(MSG_CONTROL, self.request_id, self.pose_id, self.client_send_time))


@dataclass(frozen=True)
class FrameToken:
    pose_id: int
    sequence: int
    payload: bytes

    @classmethod
    def build(cls, pose_id: int, sequence: int) -> "FrameToken":
        return cls(pose_id, sequence, make_pattern(pose_id))

    def encode(self) -> bytes:
        return _frame(_TOKEN_HEAD.pack(MSG_TOKEN, self.pose_id, self.sequence) + self.payload)


def _frame(body: bytes) -> bytes:
    return _LENGTH.pack(len(body)) + body


def decode_body(body: bytes) -> ControlMessage | FrameToken:
    if not body:
        raise ProtocolError("empty message body")
    kind = body[0]
    if kind == MSG_CONTROL:
        if len(body) != _CONTROL.size:
            raise ProtocolError(f"control message must be {_CONTROL.size} bytes, got {len(body)}")
        _, request_id, pose_id, send_time = _CONTROL.unpack(body)
        return ControlMessage(request_id, pose_id, send_time)
    if kind == MSG_TOKEN:
        if len(body) != _TOKEN_HEAD.size + PATTERN_SIZE:
            raise ProtocolError(f"token message must be {_TOKEN_HEAD.size + PATTERN_SIZE} bytes, got {len(body)}")
        _, pose_id, sequence = _TOKEN_HEAD.unpack_from(body)
        return FrameToken(pose_id, sequence, bytes(body[_TOKEN_HEAD.size:]))
    raise ProtocolError(f"unknown message type {kind}")


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return bytes(buf)


def read_body(sock: socket.socket) -> bytes | None:
    """Read one length-prefixed body; None on orderly EOF."""
    head = _recv_exact(sock, _LENGTH.size)
    if head is None:
        return None
    (length,) = _LENGTH.unpack(head)
    if length > MAX_BODY:
        raise ProtocolError(f"message length {length} exceeds limit {MAX_BODY}")
    body = _recv_exact(sock, length)
    if body is None:
        raise ProtocolError("connection closed mid-message")
    return body


def verify_token(token: FrameToken, expected_pose_id: int) -> bool:
    """True iff the token shows the expected pose.

    The payload is authoritative; a header pose id that disagrees with the
    payload pattern raises :class:`CorruptPayloadError`.
    """
    shown = decode_pattern(token.payload)
    if shown != token.pose_id:
        raise CorruptPayloadError(f"header pose_id {token.pose_id} but payload encodes {shown}")
    return shown == expected_pose_id


def parse_endpoint(text: str, default_host: str = "127.0.0.1") -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep:
        host, port = default_host, text
    try:
        return host or default_host, int(port)
    except ValueError:
        raise ValueError(f"invalid endpoint {text!r}; expected host:port") from None


def _sleep_until(deadline_ms: float, stop: threading.Event | None = None) -> None:
    while True:
        remaining = deadline_ms - _clock_ms()
        if remaining <= 0:
            return
        if stop is not None and stop.is_set():
            return
        time.sleep(min(remaining, 50.0) / 1000.0)


@dataclass(frozen=True)
class DelayProfile:
    """Artificial delays injected by the server, in milliseconds.

    ``proc_delay_ms`` stands in for rendering plus encoding time.
    """

    fps: float = 60.0
    proc_delay_ms: float = 0.0
    up_delay_ms: float = 0.0
    down_delay_ms: float = 0.0

    def __post_init__(self):
        if not self.fps > 0:
            raise ValueError("fps must be positive")
        for name in ("proc_delay_ms", "up_delay_ms", "down_delay_ms"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def frame_interval_ms(self) -> float:
        return 1000.0 / self.fps


class _PoseCell:
    """Current pose id plus switches that become visible at a future time."""

    def __init__(self, pose_id: int = 0):
        self._lock = threading.Lock()
        self._pose = pose_id
        self._pending: list[tuple[float, int]] = []

    def schedule(self, effective_ms: float, pose_id: int) -> None:
        with self._lock:
            self._pending.append((effective_ms, pose_id))

    def current(self, now_ms: float) -> int:
        with self._lock:
            due = [p for p in self._pending if p[0] <= now_ms]
            if due:
                self._pose = due[-1][1]
                self._pending = [p for p in self._pending if p[0] > now_ms]
            return self._pose


class _DelayLine(threading.Thread):
    """Sends byte strings no earlier than their due time, in FIFO order."""

    def __init__(self, sock: socket.socket, stop: threading.Event):
        super().__init__(daemon=True)
        self.sock = sock
        self.stop = stop
        self.q: queue.Queue = queue.Queue()

    def put(self, due_ms: float, data: bytes) -> None:
        self.q.put((due_ms, data))

    def run(self):
        while not self.stop.is_set():
            try:
                due, data = self.q.get(timeout=0.1)
            except queue.Empty:
                continue
            _sleep_until(due, self.stop)
            try:
                self.sock.sendall(data)
            except OSError:
                self.stop.set()


class _ServerSession:
    def __init__(self, conn: socket.socket, peer, profile: DelayProfile, server_stop: threading.Event):
        self.conn = conn
        self.peer = peer
        self.profile = profile
        self.stop = threading.Event()
        self.server_stop = server_stop
        self.cell = _PoseCell()
        self.sender = _DelayLine(conn, self.stop)
        self.threads = [
            threading.Thread(target=self._receive, daemon=True),
            threading.Thread(target=self._emit, daemon=True),
            self.sender,
        ]

    def start(self):
        for t in self.threads:
            t.start()

    def close(self):
        self.stop.set()
        try:
            self.conn.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.conn.close()

    def _receive(self):
        p = self.profile
        while not self.stop.is_set():
            try:
                body = read_body(self.conn)
            except ProtocolError as exc:
                log.warning("%s: dropping connection after framing error: %s", self.peer, exc)
                break
            except OSError:
                break
            if body is None:
                break
            received = _clock_ms()
            try:
                msg = decode_body(body)
            except ProtocolError as exc:
                log.warning("%s: malformed message ignored: %s", self.peer, exc)
                continue
            if not isinstance(msg, ControlMessage):
                log.warning("%s: unexpected message %r ignored", self.peer, type(msg).__name__)
                continue
            self.cell.schedule(received + p.up_delay_ms + p.proc_delay_ms, msg.pose_id)
        self.stop.set()

    def _emit(self):
        p = self.profile
        interval = p.frame_interval_ms
        seq = 0
        next_frame = _clock_ms()
        while not (self.stop.is_set() or self.server_stop.is_set()):
            now = _clock_ms()
            token = FrameToken.build(self.cell.current(now), seq & 0xFFFFFFFF)
            self.sender.put(now + p.down_delay_ms, token.encode())
            seq += 1
            next_frame += interval
            if next_frame < now:
                # fell behind: skip missed frames rather than bursting
                next_frame = now + interval - (now - next_frame) % interval
            _sleep_until(next_frame, self.stop)
        self.stop.set()


class ProbeServer:
    """Threaded probe server; use as a context manager or call start/stop."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0, profile: DelayProfile = DelayProfile()):
        self.profile = profile
        self._stop = threading.Event()
        self._sessions: list[_ServerSession] = []
        self._sock = socket.create_server((host, port))
        self._sock.settimeout(0.2)
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)

    @property
    def address(self) -> tuple[str, int]:
        return self._sock.getsockname()[:2]

    def start(self) -> "ProbeServer":
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self.start()
        try:
            while self._thread.is_alive():
                self._thread.join(0.5)
        finally:
            self.stop()

    def stop(self) -> None:
        self._stop.set()
        for s in self._sessions:
            s.close()
        if self._thread.is_alive():
            self._thread.join(2.0)
        self._sock.close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def _accept_loop(self):
        while not self._stop.is_set():
            try:
                conn, peer = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            log.info("probe client connected from %s", peer)
            session = _ServerSession(conn, peer, self.profile, self._stop)
            self._sessions = [s for s in self._sessions if not s.stop.is_set()] + [session]
            session.start()


def probe_server(listen: tuple[str, int], profile: DelayProfile = DelayProfile()) -> None:
    """Serve until interrupted."""
    server = ProbeServer(listen[0], listen[1], profile)
    log.info("probe server listening on %s:%d", *server.address)
    server.serve_forever()


@dataclass
class ProbeReport:
    samples: list[float]
    repaint_hz: float
    dropped: int = 0
    min: float = field(init=False)
    avg: float = field(init=False)
    max: float = field(init=False)
    n: int = field(init=False)

    def __post_init__(self):
        if not self.samples:
            raise ProbeError("no successful measurements")
        self.n = len(self.samples)
        self.min = min(self.samples)
        self.max = max(self.samples)
        self.avg = math.fsum(self.samples) / self.n
        # guard against the mean drifting outside [min, max] by rounding
        self.avg = min(max(self.avg, self.min), self.max)

    def to_dict(self) -> dict:
        return asdict(self)


class _TokenLog:
    """Recent tokens with client-side arrival times."""

    def __init__(self, maxlen: int = 512):
        self._lock = threading.Lock()
        self._items: deque = deque(maxlen=maxlen)

    def add(self, arrival_ms: float, token: FrameToken) -> None:
        with self._lock:
            self._items.append((arrival_ms, token))

    def latest_at(self, t_ms: float) -> FrameToken | None:
        with self._lock:
            for arrival, token in reversed(self._items):
                if arrival <= t_ms:
                    return token
        return None


def _client_receiver(sock: socket.socket, tokens: _TokenLog, recv_delay_ms: float,
                     stop: threading.Event, errors: list) -> None:
    while not stop.is_set():
        try:
            body = read_body(sock)
        except (OSError, ProtocolError) as exc:
            if not stop.is_set():
                errors.append(exc)
            break
        if body is None:
            if not stop.is_set():
                errors.append(ProbeError("server closed the connection"))
            break
        try:
            msg = decode_body(body)
        except ProtocolError as exc:
            log.warning("malformed message from server ignored: %s", exc)
            continue
        if isinstance(msg, FrameToken):
            tokens.add(_clock_ms() + recv_delay_ms, msg)


def probe_client(server: tuple[str, int], n_measurements: int = 100, repaint_hz: float = 60.0,
                 inter_measurement_gap_ms: float = 50.0, timeout_ms: float = 5000.0,
                 recv_delay_ms: float = 0.0, connect_timeout_s: float = 5.0) -> ProbeReport:
    """Run ``n_measurements`` latency measurements against a probe server.

    Poses alternate between 1 and 2 so a frame from the previous
    measurement can never satisfy the current one. Tokens are only
    inspected at repaint ticks spaced ``1000 / repaint_hz`` ms apart.
    ``recv_delay_ms`` delays token visibility on the client, emulating
    extra downlink delay.
    """
    if n_measurements < 1:
        raise ValueError("n_measurements must be at least 1")
    if not repaint_hz > 0:
        raise ValueError("repaint_hz must be positive")
    try:
        sock = socket.create_connection(server, timeout=connect_timeout_s)
    except OSError as exc:
        raise ProbeError(f"cannot connect to probe server at {server[0]}:{server[1]}: {exc}") from exc
    sock.settimeout(None)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    tokens = _TokenLog()
    stop = threading.Event()
    errors: list = []
    receiver = threading.Thread(target=_client_receiver, args=(sock, tokens, recv_delay_ms, stop, errors),
                                daemon=True)
    receiver.start()

    period = 1000.0 / repaint_hz
    origin = _clock_ms()
    samples: list[float] = []
    dropped = 0
    try:
        for i in range(n_measurements):
            pose = 1 + (i % 2)
            sent = _clock_ms()
            try:
                sock.sendall(ControlMessage(i + 1, pose, sent).encode())
            except OSError as exc:
                raise ProbeError(f"lost connection to probe server: {exc}") from exc
            tick = origin + math.floor((sent - origin) / period + 1.0) * period
            while True:
                _sleep_until(tick)
                if errors:
                    raise ProbeError(f"receiver failed: {errors[0]}")
                token = tokens.latest_at(tick)
                if token is not None and verify_token(token, pose):
                    samples.append(tick - sent)
                    break
                if tick - sent > timeout_ms:
                    dropped += 1
                    log.warning("measurement %d timed out after %.0f ms", i + 1, timeout_ms)
                    break
                tick += period
            _sleep_until(_clock_ms() + inter_measurement_gap_ms)
    finally:
        stop.set()
        try:
            sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        sock.close()
        receiver.join(1.0)
    if dropped:
        log.warning("%d of %d measurements dropped", dropped, n_measurements)
    return ProbeReport(samples, repaint_hz, dropped)
