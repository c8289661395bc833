import warnings

import pytest


@pytest.fixture(autouse=True)
def _quiet_scheme_warnings():
    """The 2D cross-derivative stencil legitimately warns about
    monotonicity; keep test output readable."""
    with warnings.catch_warnings():
        warnings.filterwarnings(
            "ignore", message=".*positive off-diagonal entries.*")
        warnings.filterwarnings(
            "ignore", message=".*one-sided stencils.*")
        yield
