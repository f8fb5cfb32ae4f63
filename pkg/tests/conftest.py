from __future__ import annotations

import time
from typing import Callable

import pytest

from fogdeck.clock import SCENARIO_EPOCH_MS, VirtualClock
from fogdeck.store import Datastore, DatastoreServer


def wait_until(cond: Callable[[], bool], timeout_s: float = 2.0) -> bool:
    """Poll for a cross-thread effect; virtual time never depends on this."""
    deadline = time.monotonic() + timeout_s
    while time.monotonic() < deadline:
        if cond():
            return True
        time.sleep(0.002)
    return cond()


@pytest.fixture
def vclock() -> VirtualClock:
    return VirtualClock(start_ms=SCENARIO_EPOCH_MS)


@pytest.fixture
def store_env(vclock, tmp_path):
    """A live datastore server on an ephemeral port, persisting to tmp."""
    store = Datastore(data_dir=tmp_path / "store")
    server = DatastoreServer(store, port=0, clock=vclock)
    server.start()
    url = f"http://127.0.0.1:{server.http.port}"
    yield store, server, url
    server.stop(compact=False)
