import numpy as np
import pytest

from edlab import _fast


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the optional numba kernels once so runtime-budget assertions
    never include JIT time."""
    if _fast.HAVE_NUMBA:
        _fast.normals_kernel(np.uint64(1), np.uint64(0), 8)
        _fast.uniforms_kernel(np.uint64(1), np.uint64(0), 8)
        _fast.gauss_consistency_terms(np.uint64(1), np.uint64(0), 4, 2, 1.0, 1.0, 0.5)
