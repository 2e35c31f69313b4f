"""Threaded TCP server hosting concurrent, isolated sessions.

One connection drives one request at a time; frames are routed to sessions by
the frame's session_id, so a migration tool can address an existing session
from a second connection.
"""

from __future__ import annotations

import logging
import socket
import threading

from . import wire
from .errors import UnknownSession, error_code
from .executor import InterpreterExecutor
from .interp import InterpLimits
from .session import Session

log = logging.getLogger("girp.server")


class Server:
    def __init__(self, host: str = "127.0.0.1", port: int = wire.DEFAULT_PORT,
                 backend: str = "interp", limits: InterpLimits | None = None):
        if backend != "interp":
            raise ValueError(f"backend {backend!r} is not built into this host")
        self.host = host
        self.port = port
        self.limits = limits or InterpLimits()
        self.sessions: dict[bytes, Session] = {}
        self._sessions_lock = threading.Lock()
        self._sock: socket.socket | None = None
        self._accept_thread: threading.Thread | None = None
        self._running = threading.Event()
        self._conns: set[socket.socket] = set()
        self._conns_lock = threading.Lock()

    # --- lifecycle -----------------------------------------------------------

    def start(self) -> None:
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((self.host, self.port))
        self.port = self._sock.getsockname()[1]
        self._sock.listen()
        self._running.set()
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()
        log.info("listening on %s:%d", self.host, self.port)

    def stop(self) -> None:
        self._running.clear()
        if self._sock is not None:
            try:
                # wake the thread blocked in accept(); close() alone leaves
                # the fd referenced by that syscall and the port in LISTEN
                self._sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                self._sock.close()
            except OSError:
                pass
        self._sock = None
        # close live connections too, so the port is immediately rebindable
        with self._conns_lock:
            conns, self._conns = self._conns, set()
        for conn in conns:
            try:
                conn.close()
            except OSError:
                pass

    def serve_forever(self) -> None:
        self.start()
        try:
            self._accept_thread.join()
        except KeyboardInterrupt:
            self.stop()

    # --- connection handling ---------------------------------------------------

    def _accept_loop(self) -> None:
        while self._running.is_set():
            try:
                conn, addr = self._sock.accept()
            except OSError:
                break
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            # accepted sockets must also carry SO_REUSEADDR, or their
            # FIN_WAIT state blocks rebinding the port after stop()
            conn.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            with self._conns_lock:
                self._conns.add(conn)
            threading.Thread(target=self._serve_connection, args=(conn, addr),
                             daemon=True).start()

    def _session_for(self, session_id: bytes) -> Session:
        with self._sessions_lock:
            session = self.sessions.get(session_id)
        if session is None:
            raise UnknownSession(f"no session {session_id.hex()}")
        return session

    def _new_session(self) -> Session:
        session = Session(executor=InterpreterExecutor(limits=self.limits))
        with self._sessions_lock:
            self.sessions[session.session_id] = session
        log.info("session %s created", session.session_id.hex()[:16])
        return session

    def _serve_connection(self, sock: socket.socket, addr) -> None:
        conn = wire.Connection(sock)
        try:
            while self._running.is_set():
                try:
                    frame, message = conn.recv()
                except wire.UnknownMsgType as exc:
                    conn.send(wire.Error(code=error_code(exc), message=str(exc)),
                              request_id=0)
                    continue
                except (ConnectionError, OSError):
                    break
                response, session_id = self._route(frame, message)
                conn.send(response, request_id=frame.request_id,
                          session_id=session_id)
        finally:
            with self._conns_lock:
                self._conns.discard(sock)
            conn.close()

    def _route(self, frame: wire.Frame, message) -> tuple[object, bytes]:
        if isinstance(message, wire.Hello):
            session = self._new_session()
            caps = session.executor.capabilities()
            descr = f"{caps.backend};max_invocations={caps.max_invocations}"
            return (
                wire.HelloAck(session_id=session.session_id, capabilities=descr),
                session.session_id,
            )
        try:
            session = self._session_for(frame.session_id)
        except UnknownSession as exc:
            return wire.Error(code=error_code(exc), message=str(exc)), frame.session_id
        return session.handle(message, flags=frame.flags), frame.session_id
