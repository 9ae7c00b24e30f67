"""Blocking TCP carriers for the frame stream.

One frame stream per connection, reassembled with FrameReader. Header-level
corruption kills the connection (the stream cannot resync); CRC failures are
answered with an ERROR frame and the session continues. Each server runs an
accept loop plus one reader thread per connection, so handlers must be
thread-safe (the stores already are).
"""

from __future__ import annotations

import socket
import threading

from . import messages as msg
from .cloud import CloudNode
from .frames import DecodeError, FrameReader
from .gateway import Gateway

RECV_CHUNK = 65536


def _now_ms() -> int:
    import time
    return int(time.time() * 1000)


class FrameConn:
    """Thread-safe frame writer plus a blocking reader loop."""

    def __init__(self, sock: socket.socket, name: str = ""):
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.sock = sock
        self.name = name
        self._send_lock = threading.Lock()
        self._closed = threading.Event()

    @property
    def closed(self) -> bool:
        return self._closed.is_set()

    def send(self, raw: bytes) -> None:
        if self._closed.is_set():
            return
        try:
            with self._send_lock:
                self.sock.sendall(raw)
        except OSError:
            self.close()

    def close(self) -> None:
        if self._closed.is_set():
            return
        self._closed.set()
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass

    def read_loop(self, on_frame) -> None:
        """Feed complete frames to on_frame(raw, msg_type, payload, error).

        Returns when the peer closes, the socket errors, or the stream is
        unrecoverably corrupt.
        """
        reader = FrameReader()
        try:
            while not self._closed.is_set():
                data = self.sock.recv(RECV_CHUNK)
                if not data:
                    break
                reader.feed(data)
                while True:
                    item = reader.pop()
                    if item is None:
                        break
                    on_frame(*item)
        except OSError:
            pass
        except DecodeError:
            pass  # desynchronized stream: drop the connection
        finally:
            self.close()


class _Server:
    """Accept loop shared by the cloud and gateway listeners."""

    def __init__(self, host: str, port: int):
        self._listener = socket.create_server((host, port))
        self.host, self.port = self._listener.getsockname()[:2]
        self._threads: list[threading.Thread] = []
        self._conns: list[FrameConn] = []
        self._stopping = threading.Event()
        self._accept_thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self.host, self.port

    def start(self) -> None:
        self._accept_thread = threading.Thread(
            target=self._accept_loop, name=f"{type(self).__name__}-accept",
            daemon=True)
        self._accept_thread.start()

    def _accept_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                sock, addr = self._listener.accept()
            except OSError:
                break
            conn = FrameConn(sock, name=f"{addr[0]}:{addr[1]}")
            self._conns.append(conn)
            thread = threading.Thread(
                target=self._serve_conn, args=(conn,),
                name=f"{type(self).__name__}-{conn.name}", daemon=True)
            self._threads.append(thread)
            thread.start()

    def _serve_conn(self, conn: FrameConn) -> None:
        raise NotImplementedError

    def stop(self) -> None:
        self._stopping.set()
        try:
            self._listener.close()
        except OSError:
            pass
        for conn in self._conns:
            conn.close()
        for thread in self._threads:
            thread.join(timeout=2.0)
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=2.0)


class CloudServer(_Server):
    """Terminates frame streams at a CloudNode, one stream per peer."""

    def __init__(self, cloud: CloudNode, host: str = "127.0.0.1",
                 port: int = 0):
        super().__init__(host, port)
        self.cloud = cloud

    def _serve_conn(self, conn: FrameConn) -> None:
        def on_frame(raw, msg_type, payload, error):
            if error is not None:
                conn.send(msg.encode(msg.ErrorMsg(
                    code="bad_frame", detail=type(error).__name__)))
                return
            try:
                message = msg.parse_payload(msg_type, payload)
            except DecodeError as exc:
                conn.send(msg.encode(msg.ErrorMsg(
                    code="bad_frame", detail=type(exc).__name__)))
                return
            reply = self.cloud.handle(message)
            if reply is not None:
                conn.send(msg.encode(reply))

        conn.read_loop(on_frame)


class GatewayServer(_Server):
    """Listens for edges; opens one upstream cloud connection per edge.

    The per-edge upstream keeps reply routing trivial: whatever the cloud
    answers on that socket belongs to that edge.
    """

    def __init__(self, cloud_addr: tuple[str, int], host: str = "127.0.0.1",
                 port: int = 0, gateway: Gateway | None = None):
        super().__init__(host, port)
        self.cloud_addr = cloud_addr
        self.gateway = gateway if gateway is not None else Gateway()

    def _serve_conn(self, conn: FrameConn) -> None:
        edge_key = conn.name
        try:
            upstream_sock = socket.create_connection(self.cloud_addr,
                                                     timeout=10.0)
        except OSError:
            conn.close()
            return
        upstream_sock.settimeout(None)
        upstream = FrameConn(upstream_sock, name=f"up:{edge_key}")
        self._conns.append(upstream)

        def from_cloud(raw, msg_type, payload, error):
            del msg_type, payload, error  # relay decision is on raw bytes
            self.gateway.from_cloud(edge_key, raw, conn.send, _now_ms())

        up_thread = threading.Thread(
            target=upstream.read_loop, args=(from_cloud,),
            name=f"gateway-up-{edge_key}", daemon=True)
        self._threads.append(up_thread)
        up_thread.start()

        def from_edge(raw, msg_type, payload, error):
            del msg_type, payload, error
            self.gateway.from_edge(edge_key, raw, upstream.send, conn.send,
                                   _now_ms())

        try:
            conn.read_loop(from_edge)
        finally:
            upstream.close()


class EdgeClient:
    """Edge-side frame stream to a gateway (or directly to a cloud).

    Incoming frames are handed to the runtime's scheduler so the sync state
    machine stays single-threaded.
    """

    def __init__(self, runtime, addr: tuple[str, int], timeout: float = 10.0):
        sock = socket.create_connection(addr, timeout=timeout)
        sock.settimeout(None)
        self.conn = FrameConn(sock, name=f"{addr[0]}:{addr[1]}")
        self.runtime = runtime
        self._thread = threading.Thread(
            target=self._run, name="edge-client", daemon=True)

    def send(self, raw: bytes) -> None:
        self.conn.send(raw)

    def start(self) -> None:
        self._thread.start()

    def _run(self) -> None:
        def on_frame(raw, msg_type, payload, error):
            del msg_type, payload
            if error is not None:
                return  # corrupt inbound frame: let the request time out
            self.runtime.scheduler.call_later(
                0.0, lambda: self.runtime.on_frame(raw))

        self.conn.read_loop(on_frame)

    def close(self) -> None:
        self.conn.close()
        self._thread.join(timeout=2.0)
