from __future__ import annotations

import pytest

from kpe.toydata import generate_toy_corpus


@pytest.fixture(scope="session")
def toy():
    """One shared toy corpus; generation is deterministic, so sharing is safe."""
    return generate_toy_corpus()
