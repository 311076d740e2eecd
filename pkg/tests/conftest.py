import pytest

from z2gauge import build_complex


@pytest.fixture(scope="session")
def sheet():
    """One plaquette: 4 vertices, 4 edges."""
    return build_complex(3, [2, 2, 1])


@pytest.fixture(scope="session")
def strip():
    """Two plaquettes in a row: 7 edges."""
    return build_complex(3, [3, 2, 1])


@pytest.fixture(scope="session")
def sheet22():
    """A 2x2 patch of plaquettes: 12 edges."""
    return build_complex(3, [3, 3, 1])


@pytest.fixture(scope="session")
def cube():
    """The unit cube: 12 edges, 6 plaquettes, one 3-cell."""
    return build_complex(3, [2, 2, 2])
