import pytest

from girp import fixtures
from girp.server import Server


@pytest.fixture
def multiply_module() -> bytes:
    return fixtures.multiply_kernel()


@pytest.fixture
def running_server():
    """A live loopback server; yields (host, port, server)."""
    server = Server(host="127.0.0.1", port=0)
    server.start()
    try:
        yield ("127.0.0.1", server.port, server)
    finally:
        server.stop()


@pytest.fixture
def two_servers():
    a = Server(host="127.0.0.1", port=0)
    b = Server(host="127.0.0.1", port=0)
    a.start()
    b.start()
    try:
        yield a, b
    finally:
        a.stop()
        b.stop()
