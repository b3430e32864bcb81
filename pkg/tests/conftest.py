import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from demosync.geometry import RigidTransform, UnitQuaternion

settings.register_profile(
    "default",
    deadline=None,
    max_examples=100,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

finite = st.floats(-1.0, 1.0, allow_nan=False, allow_infinity=False)


@st.composite
def unit_quaternions(draw):
    v = np.array([draw(finite) for _ in range(4)])
    if np.linalg.norm(v) < 1e-3:
        v = np.array([1.0, 0.0, 0.0, 0.0])
    return UnitQuaternion.from_array(v)


@st.composite
def transforms(draw):
    q = draw(unit_quaternions())
    t = tuple(draw(st.floats(-2.0, 2.0)) for _ in range(3))
    return RigidTransform(q, t)


def random_quats(rng, n):
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from _report import LINES

    if LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(LINES):
            terminalreporter.write_line(line)
