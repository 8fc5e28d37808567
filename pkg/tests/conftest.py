import pytest

from asyncckpt.storage import SimulatedBackend


@pytest.fixture
def fast_backend():
    """In-memory backend with negligible transfer time."""
    backend = SimulatedBackend(bandwidth=1e12, latency=0.0)
    yield backend
    backend.close()
