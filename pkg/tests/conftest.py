import socket
import threading

import pytest

from sedro.body import ASSET_DIR
from sedro.session import RunConfig, Session, SocketTransport

SCENES = ASSET_DIR / "scenes"


@pytest.fixture
def nursery_path():
    return SCENES / "nursery.json"


@pytest.fixture
def womb_path():
    return SCENES / "womb.json"


@pytest.fixture
def eval_room_path():
    return SCENES / "eval_room.json"


class ServerHandle:
    """One session served on an ephemeral port from a background thread."""

    def __init__(self, config: RunConfig, controller=None):
        self.config = config
        self.controller = controller
        self.log = None
        self.session = None
        self.error = None
        self._ready = threading.Event()
        self._thread = threading.Thread(target=self._serve, daemon=True)
        self._thread.start()
        self._ready.wait(timeout=10)

    def _serve(self):
        srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        try:
            srv.bind(("127.0.0.1", 0))
            srv.listen(1)
            srv.settimeout(30)
            self.port = srv.getsockname()[1]
            self._ready.set()
            conn, _ = srv.accept()
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            transport = SocketTransport(conn, timeout_s=30)
            self.session = Session(self.config, controller=self.controller)
            self.log = self.session.run(transport)
            transport.close()
        except Exception as e:  # surfaced via .join()
            self.error = e
            self._ready.set()
        finally:
            srv.close()

    def join(self, timeout=240):
        self._thread.join(timeout=timeout)
        if self.error is not None:
            raise self.error
        assert not self._thread.is_alive(), "server thread did not finish"
        return self.log


@pytest.fixture
def serve():
    handles = []

    def _serve(config, controller=None):
        h = ServerHandle(config, controller)
        handles.append(h)
        return h

    yield _serve
    for h in handles:
        h._thread.join(timeout=5)
