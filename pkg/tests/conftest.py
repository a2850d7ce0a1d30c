import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from so3sync.config import bundled
from so3sync.potential import PotentialParams
from so3sync.so3 import quat_to_rotation
from so3sync.topology import build_tree

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

REF_EDGES = [(1, 2), (2, 3), (3, 4), (4, 5), (3, 6), (6, 7)]
REF_U = np.array([0.0, 0.6455, 0.7638])

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
vectors = st.tuples(finite, finite, finite).map(np.array)
matrices = st.lists(finite, min_size=9, max_size=9).map(lambda v: np.array(v).reshape(3, 3))
angles = st.floats(-np.pi, np.pi, allow_nan=False)


@st.composite
def rotations(draw):
    q = draw(st.tuples(*[st.floats(-1, 1, allow_nan=False)] * 4))
    q = np.array(q)
    if np.linalg.norm(q) < 1e-3:
        q = np.array([1.0, 0, 0, 0])
    return quat_to_rotation(q)


@st.composite
def unit_vectors(draw):
    v = draw(vectors)
    if np.linalg.norm(v) < 1e-3:
        v = np.array([0.0, 0.0, 1.0])
    return v / np.linalg.norm(v)


@pytest.fixture(scope="session")
def ref_params():
    return PotentialParams(np.diag([5.0, 8.57, 12.0]), REF_U / np.linalg.norm(REF_U),
                           1.9251, 0.3848, (0.9 * np.pi,))


@pytest.fixture(scope="session")
def ref_tree():
    return build_tree(7, REF_EDGES)


@pytest.fixture(scope="session")
def hybrid_cfg():
    return bundled("paper_fig3_hybrid")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
