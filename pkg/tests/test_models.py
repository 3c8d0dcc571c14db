import numpy as np
import pytest

from reachcert.bloch import SuperOpMatrix, from_bloch, make_basis, unital_decompose
from reachcert.criteria import decay_rates
from reachcert.dynamics import choi, expm
from reachcert.errors import InvalidInputError, ValidationError
from reachcert.models import (
    SIGMA_MINUS,
    GeneratorSpec,
    LindbladData,
    amplitude_damping,
    dephasing,
    depolarizing,
    drift_from_descriptor,
    fixed_points,
    from_descriptor,
    gad,
    lambda_skew,
    lambda_system,
    lindbladian,
    parse_descriptor,
    random_lindbladian,
    random_markovian_channel,
    random_unital_lindbladian,
)


def test_empty_lindbladian_is_zero():
    G = lindbladian(LindbladData(np.zeros((2, 2)), ()))
    assert np.array_equal(G.mat, np.zeros((4, 4)))


def test_negative_rate_rejected():
    with pytest.raises(InvalidInputError):
        LindbladData(np.zeros((2, 2)), ((SIGMA_MINUS, -1.0),))


def test_dephasing_block():
    g = 0.7
    G = lindbladian(dephasing(g))
    assert np.allclose(G.tilde, np.diag([-2 * g, -2 * g, 0]), atol=1e-14)
    rates = np.sort(np.linalg.eigvalsh(G.tilde))
    assert np.allclose(rates / abs(np.trace(G.tilde)), [-0.5, -0.5, 0])


@pytest.mark.parametrize("g", [0.3, 1.0, 2.5])
def test_amplitude_damping_block(g):
    G = lindbladian(amplitude_damping(g))
    assert np.allclose(G.tilde, np.diag([-g / 2, -g / 2, -g]), atol=1e-14)
    assert np.allclose(G.v, [0, 0, g], atol=1e-14)
    # Bloch equations: x' = -g x / 2, z' = -g (z - 1) in standard Bloch coordinates
    r = np.array([0.3, -0.2, 0.5])
    x = np.concatenate([[1 / np.sqrt(2)], r / np.sqrt(2)])
    dr = np.sqrt(2) * G.apply(x)[1:]
    assert np.allclose(dr, [-g * r[0] / 2, -g * r[1] / 2, -g * (r[2] - 1)])


def _purity_of_fixed_point(G):
    (x,) = fixed_points(G)
    rho = from_bloch(x)
    return np.trace(rho @ rho).real


@pytest.mark.parametrize("p", [0.5, 0.6, 0.75, 0.9, 1.0])
def test_gad_fixed_point_purity(p):
    G = lindbladian(gad(1.3, p))
    assert abs(_purity_of_fixed_point(G) - p) < 1e-10
    assert np.allclose(G.mat[0], 0, atol=1e-12)
    assert (np.max(np.abs(G.v)) < 1e-14) == (p == 0.5)


def test_gad_limits():
    data = gad(1.0, 1.0)
    rates = {tuple(L.ravel()): r for L, r in data.jumps}
    assert min(r for _, r in data.jumps) == 0.0
    (x,) = fixed_points(lindbladian(data))
    assert np.allclose(from_bloch(x), np.diag([1.0, 0.0]), atol=1e-12)
    half = gad(1.0, 0.5)
    assert half.jumps[0][1] == half.jumps[1][1]
    assert rates


def test_gad_total_rate_and_trace_independent_of_p():
    for p in (0.5, 0.7, 1.0):
        G = lindbladian(gad(2.0, p))
        assert np.isclose(G.trace(), -4.0)
        assert np.allclose(G.tilde, np.diag([-1.0, -1.0, -2.0]), atol=1e-13)


@pytest.mark.parametrize("p", [0.49, 1.01, -1.0])
def test_gad_invalid_purity(p):
    with pytest.raises(InvalidInputError):
        gad(1.0, p)


def test_lambda_swap_symmetry():
    G = lindbladian(lambda_system(0.8, 0.8))
    P = np.zeros((3, 3))
    P[0, 1] = P[1, 0] = P[2, 2] = 1
    rho = np.diag([0.2, 0.3, 0.5]) + 0.05 * (np.ones((3, 3)) - np.eye(3))
    lhs = P @ G.apply_state(rho) @ P
    rhs = G.apply_state(P @ rho @ P)
    assert np.allclose(lhs, rhs)


def test_lambda_excited_population_decay():
    g1, g2, t = 0.4, 1.1, 0.9
    G = lindbladian(lambda_system(g1, g2))
    S = SuperOpMatrix(3, expm(G.mat * t))
    rho = S.apply_state(np.diag([0.1, 0.2, 0.7]))
    assert np.isclose(rho[2, 2].real, 0.7 * np.exp(-(g1 + g2) * t))
    assert np.isclose(rho[0, 0].real, 0.1 + 0.7 * g1 / (g1 + g2) * (1 - np.exp(-(g1 + g2) * t)))


def test_lambda_asymptotic_state():
    g1, g2 = 0.3, 0.9
    G = lindbladian(lambda_system(g1, g2))
    S = SuperOpMatrix(3, expm(G.mat * 200.0))
    rho = S.apply_state(np.eye(3) / 3)
    expect = np.diag([1 / 3 + g1 / (3 * (g1 + g2)), 1 / 3 + g2 / (3 * (g1 + g2)), 0])
    assert np.allclose(rho, expect, atol=1e-12)


def test_lambda_rates_sum_to_trace():
    G = lindbladian(lambda_system(0.2, 1.7))
    assert np.isclose(decay_rates(G).total(), G.trace(), atol=1e-12)
    assert np.isclose(G.trace(), -3 * (0.2 + 1.7))


@pytest.mark.parametrize("g1,g2", [(0, 1), (1, -1)])
def test_lambda_invalid_rates(g1, g2):
    with pytest.raises(InvalidInputError):
        lambda_system(g1, g2)


def test_lambda_skew_parametrization():
    data = lambda_skew(4.0, total_rate=2.0)
    rates = [r for _, r in data.jumps]
    assert np.isclose(rates[0] / rates[1], 4.0) and np.isclose(sum(rates), 2.0)


def test_depolarizing_block():
    for d in (2, 3):
        G = lindbladian(depolarizing(0.6, d))
        assert np.allclose(G.tilde, -0.6 * np.eye(d * d - 1), atol=1e-13)
        assert np.allclose(G.v, 0)


@pytest.mark.parametrize("d", [2, 3])
def test_random_lindbladian_properties(d):
    data = random_lindbladian(d, 1.5, rng_seed=7)
    G = lindbladian(data)
    assert np.max(np.abs(G.mat[0])) < 1e-12
    radius = np.max(np.abs(np.linalg.eigvalsh(0.5 * (G.mat + G.mat.T))))
    assert np.isclose(radius, 1.5)
    for t in (0.1, 1.0, 10.0):
        S = SuperOpMatrix(d, expm(G.mat * t))
        assert np.min(np.linalg.eigvalsh(choi(S))) >= -1e-9
    again = lindbladian(random_lindbladian(d, 1.5, rng_seed=7))
    assert np.array_equal(again.mat, G.mat)


def test_random_unital_lindbladian_is_unital():
    G = lindbladian(random_unital_lindbladian(3, rng_seed=3))
    assert G.is_unital(1e-12) and G.is_trace_preserving(1e-12)


def test_random_markovian_channel():
    spec, S = random_markovian_channel(2, 1, rng_seed=5)
    (tau, G), = spec.segments
    assert np.allclose(S.mat, expm(G.mat * tau))
    for seed in range(30):
        spec, S = random_markovian_channel(3, 3, rng_seed=seed)
        assert len(spec.segments) == 3
        assert all(0.1 <= tau <= 1.0 for tau in spec.durations)
        assert 0 < S.det() <= 1
        assert np.min(np.linalg.eigvalsh(choi(S))) >= -1e-9
        assert spec.channel().allclose(S, 1e-12)
    a = random_markovian_channel(2, 2, rng_seed=11)[1]
    b = random_markovian_channel(2, 2, rng_seed=11)[1]
    assert np.array_equal(a.mat, b.mat)


def test_generator_spec_validation():
    G = lindbladian(dephasing(1.0))
    with pytest.raises(ValidationError):
        GeneratorSpec(((0.0, G),))
    with pytest.raises(ValidationError):
        GeneratorSpec(((1.0, SuperOpMatrix(2, np.eye(4))),))
    with pytest.raises(ValidationError):
        GeneratorSpec(())
    spec = GeneratorSpec(((0.5, G), (1.5, G.scaled(2.0))))
    assert spec.total_time == 2.0
    assert list(spec.breakpoints()) == [0.0, 0.5, 2.0]
    assert spec.generator_at(0.2) is G
    assert [tau for tau, _ in spec.pieces(3.0)] == [0.5, 2.5]


def test_descriptors():
    assert parse_descriptor("gad:gamma=1,p=0.75") == {"family": "gad", "gamma": 1, "p": 0.75}
    assert parse_descriptor('{"family": "lambda", "skew": 10}')["skew"] == 10
    G = lindbladian(from_descriptor({"family": "gad", "gamma": 1.0, "p": 0.75}))
    assert G.allclose(lindbladian(gad(1.0, 0.75)))
    spec = drift_from_descriptor({"family": "lambda", "gamma1": 0.5, "gamma2": 0.5})
    assert spec.d == 3
    with pytest.raises(ValidationError):
        from_descriptor({"family": "nope"})
    with pytest.raises(ValidationError):
        parse_descriptor("gad:gamma")
    with pytest.raises(ValidationError):
        from_descriptor({"family": "gad", "p": "high"})


def test_zero_first_row_for_all_families():
    for data in (gad(1.0, 0.8), dephasing(0.3), depolarizing(1.0, 3), lambda_system(0.1, 2.0),
                 random_lindbladian(4, rng_seed=1)):
        G = lindbladian(data)
        assert np.max(np.abs(G.mat[0])) < 1e-12
