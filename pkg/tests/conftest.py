import numpy as np
import pytest

import gdnn.backend as backend


@pytest.fixture(params=["numba", "numpy"])
def kernel_backend(request):
    """Run the test once per kernel backend, restoring the default after."""
    name = request.param
    if name not in backend.available_backends():
        pytest.skip(f"backend {name!r} not importable")
    previous = backend.active_name()
    backend.set_backend(name)
    yield name
    backend.set_backend(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
