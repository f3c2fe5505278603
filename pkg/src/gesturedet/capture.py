"""Label-as-you-go capture service and a scripted headless client.

The service owns the session clock and the trajectory: it streams the current
target box to the client, ingests camera frames, stamps each accepted frame
with the target box and gesture label for its timestamp, and writes
FrameRecords. Every persisted box is reproducible offline from
(plan, sequence_index, timestamp_s) alone, so a dataset can be re-labeled
without the service.

Wire protocol (one full-duplex websocket):
  text, one JSON object per message, dispatched on "type":
    hello        client->server  {type, version}
    session_start server->client {type, session_id, subject_id, scene_id,
                                  n_sequences, width, height}
    clock_probe  client->server  {type, t_client_ms}
    clock_echo   server->client  {type, t_client_ms, t_server_ms}
    clicker      client->server  {type, t_client_ms?}   (timestamp optional)
    target       server->client  {type, t, bbox, gesture, hand, phase,
                                  sequence_index, frames_accepted}
    session_done server->client  {type}
    error        server->client  {type, message}
  binary, camera frames:
    16-byte header, little-endian u32s: magic 0x47465231, width, height,
    reserved 0; then u64 client timestamp in ms; then width*height grayscale
    bytes, row-major.

A sequence starts on the clicker and ends when a frame timestamps past its
duration (the closing frame is rejected and the session advances). When the
clicker message carries the client timestamp, frame times are computed
against it directly, which cancels clock-offset error and makes scripted
replays byte-deterministic; otherwise the handshake offset maps client
timestamps onto the server clock.
"""

from __future__ import annotations

import json
import logging
import socket
import statistics
import struct
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from websockets.sync.client import connect as ws_connect
from websockets.sync.server import serve as ws_serve

from .dataset import DatasetError, DatasetStore, FrameRecord
from .labels import GestureClass, Hand
from .trajectory import SessionPlan, target_at

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
FRAME_MAGIC = 0x47465231
_HEADER = struct.Struct("<IIII")
_TSTAMP = struct.Struct("<Q")
CLOCK_PROBES = 5
TARGET_STREAM_HZ = 45.0  # comfortably above the 30 Hz floor


def now_ms() -> int:
    return time.monotonic_ns() // 1_000_000


def pack_frame(image: np.ndarray, timestamp_ms: int) -> bytes:
    h, w = image.shape
    return (_HEADER.pack(FRAME_MAGIC, w, h, 0) + _TSTAMP.pack(timestamp_ms)
            + image.tobytes())


def unpack_frame(data: bytes) -> tuple[int, int, int, np.ndarray]:
    if len(data) < _HEADER.size + _TSTAMP.size:
        raise ValueError("frame payload too short")
    magic, w, h, _ = _HEADER.unpack_from(data, 0)
    if magic != FRAME_MAGIC:
        raise ValueError(f"bad frame magic 0x{magic:08X}")
    (ts,) = _TSTAMP.unpack_from(data, _HEADER.size)
    body = data[_HEADER.size + _TSTAMP.size :]
    if len(body) != w * h:
        raise ValueError(f"frame payload {len(body)} bytes, expected {w * h}")
    image = np.frombuffer(body, dtype=np.uint8).reshape(h, w)
    return w, h, ts, image


class CaptureSession:
    """Session state machine: Idle -> (clicker) Running -> (past duration)
    next sequence's Idle, until the plan is exhausted.

    All mutating calls are serialized by one lock, which also acts as the
    dataset writer queue. Frames are only ever written while Running.
    """

    def __init__(self, plan: SessionPlan, store: DatasetStore, session_id: str):
        self.plan = plan
        self.store = store
        self.session_id = session_id
        self.lock = threading.Lock()
        self.seq_index = 0
        self.phase = "idle"                # idle | running | complete
        self.t0_server: Optional[float] = None
        self.t0_client_ms: Optional[int] = None
        self.clock_offset_ms: Optional[float] = None
        self.frames_accepted = 0
        self._probes: list[float] = []

    # -- clock handshake --

    def add_clock_probe(self, t_client_ms: int, t_server_ms: int) -> None:
        with self.lock:
            self._probes.append(t_client_ms - t_server_ms)
            if len(self._probes) >= CLOCK_PROBES:
                self.clock_offset_ms = statistics.median(self._probes[-CLOCK_PROBES:])

    # -- protocol events --

    def clicker(self, server_now: float, t_client_ms: Optional[int] = None) -> str:
        """Returns "started", "debounced", or "complete"."""
        with self.lock:
            if self.phase == "complete":
                return "complete"
            if self.phase == "running":
                log.warning("clicker ignored: sequence %d already running", self.seq_index)
                return "debounced"
            self.phase = "running"
            self.t0_server = server_now
            self.t0_client_ms = t_client_ms
            return "started"

    def _frame_time_s(self, t_client_ms: int) -> float:
        if self.t0_client_ms is not None:
            return (t_client_ms - self.t0_client_ms) / 1000.0
        offset = self.clock_offset_ms or 0.0
        return (t_client_ms - offset) / 1000.0 - self.t0_server

    def _advance(self) -> None:
        # only called with the lock held, phase "running"
        self.seq_index += 1
        self.t0_server = None
        self.t0_client_ms = None
        self.phase = "idle" if self.seq_index < len(self.plan.sequences) else "complete"

    def ingest(self, t_client_ms: int, image: np.ndarray) -> tuple[bool, str]:
        with self.lock:
            if self.phase != "running":
                return False, "not-running"
            if image.shape != (self.store.height, self.store.width):
                return False, "dimension-mismatch"
            seq = self.plan.sequences[self.seq_index]
            t = self._frame_time_s(t_client_ms)
            if t < 0:
                return False, "before-start"
            if t > seq.trajectory.duration_s:
                self._advance()
                return False, "past-duration"
            self.store.append(FrameRecord(
                frame_id=self.store.next_frame_id(),
                subject_id=self.plan.subject_id,
                scene_id=self.plan.scene_id,
                sequence_index=seq.sequence_index,
                timestamp_s=t,
                image=image.copy(),
                label=(seq.gesture, seq.hand),
                bbox=target_at(seq.trajectory, t)))
            self.frames_accepted += 1
            return True, "ok"

    # -- observation --

    @property
    def complete(self) -> bool:
        return self.phase == "complete"

    def pending_sequences(self) -> int:
        return len(self.plan.sequences) - self.seq_index

    def target_message(self, server_now: float) -> dict:
        with self.lock:
            idx = min(self.seq_index, len(self.plan.sequences) - 1)
            seq = self.plan.sequences[idx]
            if self.phase == "running":
                t = min(max(server_now - self.t0_server, 0.0),
                        seq.trajectory.duration_s)
            else:
                t = 0.0
            box = target_at(seq.trajectory, t)
            return {
                "type": "target",
                "t": t,
                "bbox": [box.cx, box.cy, box.w, box.h],
                "gesture": seq.gesture.value,
                "hand": seq.hand.value,
                "phase": self.phase,
                "sequence_index": seq.sequence_index,
                "frames_accepted": self.frames_accepted,
            }

    def session_start_message(self) -> dict:
        return {
            "type": "session_start",
            "session_id": self.session_id,
            "subject_id": self.plan.subject_id,
            "scene_id": self.plan.scene_id,
            "n_sequences": len(self.plan.sequences),
            "width": self.store.width,
            "height": self.store.height,
        }


class CaptureService:
    """One capture session served over a websocket; one client at a time."""

    def __init__(self, plan: SessionPlan, store: DatasetStore,
                 host: str = "127.0.0.1", port: int = 0):
        self.plan = plan
        self.store = store
        self.host = host
        self.port = port
        self._lockfile = Path(store.root) / ".lock"
        self.session: Optional[CaptureSession] = None
        self.done = threading.Event()
        self._server = None
        self._server_thread: Optional[threading.Thread] = None
        self._client_lock = threading.Lock()
        self._client_attached = False

    def start_session(self) -> str:
        if self.session is not None and not self.session.complete:
            raise RuntimeError("a session is already active")
        try:
            self._lockfile.touch(exist_ok=False)
        except FileExistsError:
            raise DatasetError(f"store locked: {self._lockfile} exists") from None
        self.session = CaptureSession(self.plan, self.store, uuid.uuid4().hex[:12])
        return self.session.session_id

    def start(self) -> None:
        self.start_session()
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((self.host, self.port))
        sock.listen(8)
        self.port = sock.getsockname()[1]
        self._server = ws_serve(self._handler, sock=sock)
        self._server_thread = threading.Thread(
            target=self._server.serve_forever, name="capture-server", daemon=True)
        self._server_thread.start()
        log.info("capture service on ws://%s:%d", self.host, self.port)

    @property
    def url(self) -> str:
        return f"ws://{self.host}:{self.port}"

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server_thread.join(timeout=5)
            self._server = None
        self.store.close()
        self._lockfile.unlink(missing_ok=True)

    def __enter__(self) -> "CaptureService":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

    # -- connection handling --

    def _handler(self, conn) -> None:
        with self._client_lock:
            if self._client_attached:
                conn.send(json.dumps({"type": "error", "message": "client slot busy"}))
                conn.close()
                return
            self._client_attached = True
        session = self.session
        stop_stream = threading.Event()
        done_sent = threading.Event()

        def send_done_once():
            if not done_sent.is_set():
                done_sent.set()
                try:
                    conn.send(json.dumps({"type": "session_done"}))
                except Exception:
                    pass
                self.done.set()

        def streamer():
            period = 1.0 / TARGET_STREAM_HZ
            while not stop_stream.wait(period):
                if session.complete:
                    send_done_once()
                    return
                try:
                    conn.send(json.dumps(session.target_message(time.monotonic())))
                except Exception:
                    return

        stream_thread = threading.Thread(target=streamer, name="target-stream",
                                         daemon=True)
        stream_thread.start()
        try:
            for message in conn:
                if isinstance(message, bytes):
                    self._on_frame(conn, session, message, send_done_once)
                else:
                    self._on_text(conn, session, message, send_done_once)
        except Exception as exc:
            log.info("connection ended: %s", exc)
        finally:
            stop_stream.set()
            stream_thread.join(timeout=2)
            with self._client_lock:
                self._client_attached = False

    def _on_text(self, conn, session, message, send_done_once) -> None:
        try:
            msg = json.loads(message)
            mtype = msg.get("type")
        except json.JSONDecodeError:
            conn.send(json.dumps({"type": "error", "message": "malformed JSON"}))
            return
        if mtype == "hello":
            if msg.get("version") != PROTOCOL_VERSION:
                conn.send(json.dumps({
                    "type": "error",
                    "message": f"protocol version {msg.get('version')} != {PROTOCOL_VERSION}"}))
                conn.close()
                return
            conn.send(json.dumps(session.session_start_message()))
        elif mtype == "clock_probe":
            t_server = now_ms()
            session.add_clock_probe(msg["t_client_ms"], t_server)
            conn.send(json.dumps({"type": "clock_echo",
                                  "t_client_ms": msg["t_client_ms"],
                                  "t_server_ms": t_server}))
        elif mtype == "clicker":
            outcome = session.clicker(time.monotonic(), msg.get("t_client_ms"))
            if outcome == "complete":
                send_done_once()
        else:
            conn.send(json.dumps({"type": "error", "message": f"unknown type {mtype!r}"}))

    def _on_frame(self, conn, session, payload, send_done_once) -> None:
        try:
            w, h, ts, image = unpack_frame(payload)
        except ValueError as exc:
            conn.send(json.dumps({"type": "error", "message": str(exc)}))
            return
        session.ingest(ts, image)
        if session.complete:
            send_done_once()


# --- headless scripted client ---

@dataclass
class ClientState:
    session_id: str = ""
    n_sequences: int = 0
    width: int = 0
    height: int = 0
    last_target: Optional[dict] = None
    frames_accepted: int = 0


class ScriptedCaptureClient:
    """Headless protocol client for tests, replays, and demos.

    Drives the full handshake and plan with scripted timestamps; determinism
    comes from sending the clicker timestamp explicitly and deriving every
    frame timestamp from it.
    """

    def __init__(self, url: str, open_timeout: float = 10.0):
        self.conn = ws_connect(url, open_timeout=open_timeout)
        self.state = ClientState()
        self.session_started = threading.Event()
        self.done = threading.Event()
        self._echoes: "list[dict]" = []
        self._echo_ready = threading.Condition()
        self._reader = threading.Thread(target=self._read_loop, name="client-reader",
                                        daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        try:
            for message in self.conn:
                if isinstance(message, bytes):
                    continue
                msg = json.loads(message)
                mtype = msg.get("type")
                if mtype == "session_start":
                    self.state.session_id = msg["session_id"]
                    self.state.n_sequences = msg["n_sequences"]
                    self.state.width = msg["width"]
                    self.state.height = msg["height"]
                    self.session_started.set()
                elif mtype == "clock_echo":
                    with self._echo_ready:
                        self._echoes.append(msg)
                        self._echo_ready.notify_all()
                elif mtype == "target":
                    self.state.last_target = msg
                    self.state.frames_accepted = msg["frames_accepted"]
                elif mtype == "session_done":
                    self.done.set()
                elif mtype == "error":
                    log.warning("server error: %s", msg.get("message"))
        except Exception:
            pass

    def handshake(self, timeout: float = 10.0) -> ClientState:
        self.conn.send(json.dumps({"type": "hello", "version": PROTOCOL_VERSION}))
        if not self.session_started.wait(timeout):
            raise TimeoutError("no session_start from service")
        for _ in range(CLOCK_PROBES):
            sent = now_ms()
            with self._echo_ready:
                n0 = len(self._echoes)
                self.conn.send(json.dumps({"type": "clock_probe", "t_client_ms": sent}))
                self._echo_ready.wait_for(lambda: len(self._echoes) > n0, timeout)
        return self.state

    def send_clicker(self, t_client_ms: Optional[int] = None) -> None:
        msg: dict = {"type": "clicker"}
        if t_client_ms is not None:
            msg["t_client_ms"] = t_client_ms
        self.conn.send(json.dumps(msg))

    def send_frame(self, image: np.ndarray, t_client_ms: int) -> None:
        self.conn.send(pack_frame(image, t_client_ms))

    def run_plan(self, plan: SessionPlan,
                 timestamps_s: Sequence[float],
                 image_for: Callable[[int, float], np.ndarray],
                 start_ms: int = 1_000_000, gap_ms: int = 1000,
                 timeout: float = 60.0) -> None:
        """Replay every sequence: clicker, frames at the scripted timestamps,
        then one past-duration frame to close the sequence."""
        for seq in plan.sequences:
            duration_ms = int(round(seq.trajectory.duration_s * 1000))
            t0 = start_ms + seq.sequence_index * (duration_ms + gap_ms)
            self.send_clicker(t0)
            for t in timestamps_s:
                self.send_frame(image_for(seq.sequence_index, t), t0 + round(t * 1000))
            self.send_frame(image_for(seq.sequence_index, 0.0), t0 + duration_ms + 1)
        if not self.done.wait(timeout):
            raise TimeoutError("session did not complete")

    def close(self) -> None:
        try:
            self.conn.close()
        finally:
            self._reader.join(timeout=2)
