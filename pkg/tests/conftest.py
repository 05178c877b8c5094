import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=30, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def textured(shape, seed=0, sigma=2.0, scale=100.0, offset=1000.0):
    """Smooth random texture, useful for flow and denoising tests."""
    from scipy import ndimage as ndi

    r = np.random.default_rng(seed)
    img = ndi.gaussian_filter(r.standard_normal(shape), sigma)
    return offset + scale * img / img.std()


# acceptance outcomes, printed once at the end of the session
OUTCOMES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(OUTCOMES):
        ok, detail = OUTCOMES[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
