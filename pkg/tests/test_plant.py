import numpy as np
import pytest

from so3sync.plant import (AgentState, attitude_rate, check_inertia, edge_relative,
                           kinetic_energy_sum, omega_rate)
from so3sync.so3 import axis_angle, dist_id_sq, exp_so3, hat, random_rotation

E3 = np.array([0.0, 0.0, 1.0])


def test_attitude_rate_examples(rng):
    assert np.array_equal(attitude_rate(AgentState(np.eye(3), np.zeros(3))), np.zeros((3, 3)))
    assert np.array_equal(attitude_rate(AgentState(np.eye(3), E3)), hat(E3))


def test_dist_rate_matches_finite_difference(rng):
    for _ in range(20):
        s = AgentState(random_rotation(rng), rng.normal(size=3))
        eps = 1e-6
        fd = (dist_id_sq(s.r @ exp_so3(eps * s.w)) - dist_id_sq(s.r @ exp_so3(-eps * s.w))) / (2 * eps)
        assert fd == pytest.approx(0.25 * np.trace(-attitude_rate(s)), abs=1e-6)


def test_omega_rate_examples():
    j = np.diag([1.0, 2.0, 3.0])
    assert np.array_equal(omega_rate(AgentState(np.eye(3), np.zeros(3), j), np.zeros(3)), np.zeros(3))
    tau = np.array([0.3, -0.2, 1.0])
    assert np.allclose(omega_rate(AgentState(np.eye(3), [1, 2, 3], np.eye(3)), tau), tau)
    assert np.allclose(omega_rate(AgentState(np.eye(3), [1, 1, 1], j), np.zeros(3)), [-1, 1, -1 / 3])


def test_edge_relative_examples(rng):
    r = random_rotation(rng)
    assert np.allclose(edge_relative(AgentState(r, np.zeros(3)), AgentState(r, np.zeros(3))), np.eye(3))
    head = AgentState(axis_angle(-np.pi / 2, E3), np.zeros(3))
    tail = AgentState(axis_angle(np.pi / 2, E3), np.zeros(3))
    assert np.allclose(edge_relative(head, tail), axis_angle(np.pi, E3), atol=1e-15)
    a = AgentState(random_rotation(rng), np.zeros(3))
    b = AgentState(random_rotation(rng), np.zeros(3))
    assert dist_id_sq(edge_relative(a, b)) == pytest.approx(dist_id_sq(edge_relative(b, a)))
    g = random_rotation(rng)
    ga, gb = AgentState(g @ a.r, np.zeros(3)), AgentState(g @ b.r, np.zeros(3))
    assert np.allclose(edge_relative(ga, gb), edge_relative(a, b), atol=1e-12)


def test_kinetic_energy_examples():
    j = np.diag([1.0, 2.0, 3.0])
    assert kinetic_energy_sum([AgentState(np.eye(3), np.zeros(3))]) == 0
    one = AgentState(np.eye(3), [1, 1, 1], j)
    assert kinetic_energy_sum([one]) == pytest.approx(6.0)
    assert kinetic_energy_sum([one, one]) == pytest.approx(12.0)


def test_state_validation():
    with pytest.raises(ValueError):
        check_inertia(np.diag([1.0, -1.0, 1.0]))
    with pytest.raises(ValueError):
        check_inertia([[1, 0.1, 0], [0, 1, 0], [0, 0, 1]])
    with pytest.raises(ValueError):
        AgentState(2 * np.eye(3), np.zeros(3))
