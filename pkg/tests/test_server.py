import socket

import pytest

from girp import errors, fixtures, wire
from girp.reflect import hash_module


def connect(host, port, session_id=wire.ZERO_SESSION):
    sock = socket.create_connection((host, port), timeout=5.0)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return wire.Connection(sock, session_id=session_id)


def hello(conn):
    _, ack = conn.request(wire.Hello(), timeout_s=5.0)
    assert isinstance(ack, wire.HelloAck)
    conn.session_id = ack.session_id
    return ack


def test_hello_creates_session(running_server):
    host, port, server = running_server
    conn = connect(host, port)
    try:
        ack = hello(conn)
        assert len(ack.session_id) == 16
        assert ack.session_id != wire.ZERO_SESSION
        assert "interp" in ack.capabilities
        assert ack.session_id in server.sessions
    finally:
        conn.close()


def test_two_hellos_two_sessions(running_server):
    host, port, _ = running_server
    a, b = connect(host, port), connect(host, port)
    try:
        assert hello(a).session_id != hello(b).session_id
    finally:
        a.close()
        b.close()


def test_unknown_session_rejected(running_server):
    host, port, _ = running_server
    conn = connect(host, port, session_id=b"\xAB" * 16)
    try:
        _, response = conn.request(wire.Ping(1), timeout_s=5.0)
        assert isinstance(response, wire.Error)
        assert response.code == errors.ERROR_CODES[errors.UnknownSession]
    finally:
        conn.close()


def test_full_offload_cycle_over_tcp(running_server, multiply_module):
    host, port, _ = running_server
    conn = connect(host, port)
    try:
        hello(conn)
        mhash = hash_module(multiply_module)
        _, ack = conn.request(wire.LoadModule(mhash, multiply_module), timeout_s=5.0)
        assert isinstance(ack, wire.ModuleAck) and ack.already_cached == 0
        _, pack = conn.request(wire.CreatePipeline(mhash, "main"), timeout_s=5.0)
        a, b = fixtures.multiply_inputs()
        conn.request(wire.AllocBuffer(1, len(a)), timeout_s=5.0)
        conn.request(wire.AllocBuffer(2, len(b)), timeout_s=5.0)
        conn.request(wire.WriteBuffer(1, 0, bytes(a)), timeout_s=30.0)
        conn.request(wire.WriteBuffer(2, 0, bytes(b)), timeout_s=30.0)
        _, dack = conn.request(
            wire.Dispatch(pack.pipeline_id, fixtures.MULTIPLY_GROUPS,
                          ((0, 0, 1), (0, 1, 2))), timeout_s=30.0)
        assert isinstance(dack, wire.DispatchAck)
        _, data = conn.request(wire.ReadBuffer(2, 0, len(b)), timeout_s=30.0)
        assert data.data == fixtures.multiply_expected()
    finally:
        conn.close()


def test_session_survives_reconnect(running_server):
    host, port, _ = running_server
    conn = connect(host, port)
    hello(conn)
    sid = conn.session_id
    conn.request(wire.AllocBuffer(1, 16), timeout_s=5.0)
    conn.request(wire.WriteBuffer(1, 0, b"\x01\x02\x03\x04"), timeout_s=5.0)
    conn.close()
    conn2 = connect(host, port, session_id=sid)
    try:
        _, data = conn2.request(wire.ReadBuffer(1, 0, 4), timeout_s=5.0)
        assert data.data == b"\x01\x02\x03\x04"
    finally:
        conn2.close()


def test_rtt_measurement(running_server):
    host, port, _ = running_server
    conn = connect(host, port)
    try:
        hello(conn)
        rtt_ns = wire.measure_rtt(conn, timeout_s=2.0)
        assert 0 < rtt_ns < 2_000_000_000
    finally:
        conn.close()


def test_gpu_backend_not_built():
    from girp.server import Server

    with pytest.raises(ValueError):
        Server(backend="gpu")
