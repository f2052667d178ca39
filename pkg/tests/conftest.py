import socket
import threading
import time

import pytest
import uvicorn

from viz.gateway import create_app
from viz.marketplace import Marketplace, MarketplaceConfig, init_data_dir

# 2026-03-01 00:00:00 UTC; simulations and e2e runs live inside 2026-03
CLOCK_START = 1772323200


def make_market(tmp_path, clock_start=CLOCK_START) -> Marketplace:
    data_dir = str(tmp_path / "data")
    init_data_dir(data_dir, clock_mode="manual", clock_start=clock_start)
    return Marketplace(MarketplaceConfig.load(data_dir))


@pytest.fixture
def market(tmp_path):
    return make_market(tmp_path)


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class GatewayServer:
    """uvicorn in a daemon thread, for tests that need a live HTTP gateway."""

    def __init__(self, market: Marketplace):
        self.market = market
        self.port = free_port()
        config = uvicorn.Config(
            create_app(market), host="127.0.0.1", port=self.port, log_level="error"
        )
        self.server = uvicorn.Server(config)
        self.thread = threading.Thread(target=self.server.run, daemon=True)

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def __enter__(self):
        self.thread.start()
        deadline = time.time() + 10
        while not self.server.started:
            if time.time() > deadline:
                raise RuntimeError("gateway did not start in time")
            time.sleep(0.02)
        return self

    def __exit__(self, *exc):
        self.server.should_exit = True
        self.thread.join(timeout=10)


@pytest.fixture
def live_gateway(market):
    with GatewayServer(market) as server:
        yield server
