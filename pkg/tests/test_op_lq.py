import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cubicstring import op_l0, op_lq
from cubicstring.errors import InvalidInputError, ValidationError
from cubicstring.gtrig import free_solution
from cubicstring.numerics import gauss_legendre
from cubicstring.op_l0 import L0Config, NearSpectrumWarning
from cubicstring.potential import Potential

# q = 0.3 cos(2 pi x) on [0, 1]: constants a = s_2(0, 1), b = s_0(0, 1) and
# the zeros for theta = exp(1.4 i), from a 30-digit Taylor-series ODE solver.
ORACLE_A = 0.50000004373714980876 - 0.0011549230245175223889j
ORACLE_B = 1.0000360913443632698 + 0.0075990877097281649262j
ORACLE_ZEROS = [-10.118903192635493627, -3.9047697989745996204, 6.6324323113151115417,
                12.919174114935612506, 19.20235656686307077]


@pytest.fixture(scope="module")
def cos_spectrum(cosine_pot, theta07):
    return op_lq.lq_real_zeros(cosine_pot, theta07, -30, 30)


def test_boundary_constants_match_oracle(cosine_pot):
    a, b = op_lq.boundary_constants(cosine_pot)
    assert a == pytest.approx(ORACLE_A, rel=1e-13)
    assert b == pytest.approx(ORACLE_B, rel=1e-13)


def test_zeros_match_oracle(cos_spectrum):
    assert np.allclose([cos_spectrum.zero(n) for n in range(-2, 3)], ORACLE_ZEROS, rtol=1e-13, atol=0)
    assert np.max(cos_spectrum.residuals) <= 1e-10


def test_zero_potential_reproduces_free_spectrum(zero_pot, theta07):
    free = op_l0.l0_real_zeros(L0Config(1.0, 0.7), -20, 20).zeros
    assert np.allclose(op_lq.lq_real_zeros(zero_pot, theta07, -20, 20).zeros, free, rtol=1e-13)


def test_value_at_origin(cosine_pot, theta07):
    a, b = op_lq.boundary_constants(cosine_pot)
    theta0, theta1, h = a.conjugate() / a, b.conjugate() / b, 0.5
    assert op_lq.delta_q(cosine_pot, theta07, 0.0) == pytest.approx(-a * (theta07 + theta0), rel=1e-12)
    expected = -a * (theta07 + theta0) - 1j * h * b * (theta07 - theta1)
    assert op_lq.delta_qh(cosine_pot, theta07, h, 0.0) == pytest.approx(expected, rel=1e-12)


def test_perturbation_defect_decreases(cos_spectrum):
    free = op_l0.l0_real_zeros(L0Config(1.0, 0.7), -30, 30).zeros
    defect = np.abs(cos_spectrum.zeros - free) * free**2
    positive, negative = defect[40:], defect[:21][::-1]
    assert np.all(np.diff(positive) < 0) and np.all(np.diff(negative) < 0)


@settings(max_examples=6)
@given(s=st.floats(0.5, 2.0))
def test_zeros_scale_with_potential(s):
    pot = Potential.cosine(1.0, 0.3)
    theta = complex(math.cos(1.4), math.sin(1.4))
    base = op_lq.lq_real_zeros(pot, theta, -3, 3).zeros
    scaled = op_lq.lq_real_zeros(pot.rescaled(s), theta, -3, 3).zeros
    assert np.allclose(scaled, s * base, rtol=1e-10)


def test_h_problem_zeros_are_sign_changes(cosine_pot, theta07):
    spectrum = op_lq.lq_real_zeros(cosine_pot, theta07, -5, 5, h=0.5)
    assert np.max(spectrum.residuals) <= 1e-10
    step = 1e-6 * np.abs(spectrum.zeros)
    left = op_lq.real_characteristic_q(cosine_pot, 0.7, 0.5, spectrum.zeros - step)
    right = op_lq.real_characteristic_q(cosine_pot, 0.7, 0.5, spectrum.zeros + step)
    assert np.all(left * right < 0)


def test_product_matches_direct(cosine_pot, theta07):
    spectrum = op_lq.lq_real_zeros(cosine_pot, theta07, -301, 300)
    for lam in (0.4, -2.2, 3.7 + 0.5j):
        direct = op_lq.delta_q(cosine_pot, theta07, lam)
        assert abs(spectrum.product(lam).value - direct) <= 5e-4 * abs(direct)


@pytest.mark.parametrize("lam", [0.5, 2.0 + 0.5j, -3.0, 9.0 - 2j])
def test_decomposition_into_free_part_and_correction(cosine_pot, theta07, lam):
    residual = op_lq.delta_q_decomposition_residual(cosine_pot, theta07, lam)
    assert residual <= 1e-8 * max(1.0, abs(op_lq.delta_q(cosine_pot, theta07, lam)))


@pytest.mark.parametrize("lam", [2.0, 3.0 + 1.0j, -4.0, 2.5j])
def test_neumann_series_within_tail_bound(cosine_pot, lam):
    assert float(cosine_pot.sigma(cosine_pot.l)) <= 0.5
    est = op_lq.neumann_oracle(cosine_pot, lam)
    fs = op_lq.fundamental_system(cosine_pot, lam, starred=False)
    ode = np.array([fs.at_end(p) for p in range(3)])
    assert np.all(np.abs(est.values - ode) <= est.tail_bound + 1e-6)


@pytest.mark.parametrize("x", [0.15, 0.3, 0.5, 0.7, 0.9])
def test_kernel_diagonal_limit(cosine_pot, x):
    limit = op_lq.kernel_diagonal_limit(cosine_pot, 2.5 + 0.5j, x)
    expected = 0.5j * cosine_pot(x)
    assert abs(limit - expected) <= 1e-3 * abs(expected)


@pytest.mark.parametrize("lam", [0.7, 2 + 1j, 5.0, 4 - 3j])
def test_determinant_is_one(cosine_pot, lam):
    fs = op_lq.fundamental_system(cosine_pot, lam, starred=False, method="rk", grid=np.linspace(0, 1, 5))
    assert np.allclose(fs.determinant(), 1.0, rtol=1e-8)


@pytest.mark.parametrize("lam", [1.3 + 0.4j, -2 + 3j])
def test_starred_solutions_are_reflections(cosine_pot, lam):
    fs = op_lq.fundamental_system(cosine_pot, lam)
    mirror = op_lq.fundamental_system(cosine_pot, np.conj(lam), starred=False)
    for p in range(3):
        assert fs.at_end(p, starred=True) == pytest.approx(np.conj(mirror.at_end(p)), rel=1e-11)


@pytest.mark.parametrize("lam", [50.0, 79 + 10j])
def test_magnus_and_runge_kutta_agree(cosine_pot, lam):
    rk = op_lq.fundamental_system(cosine_pot, lam, starred=False, method="rk")
    mg = op_lq.fundamental_system(cosine_pot, lam, starred=False, method="magnus")
    for p in range(3):
        assert mg.at_end(p) == pytest.approx(rk.at_end(p), rel=1e-8)


def test_unit_theta_required(cosine_pot):
    with pytest.raises(InvalidInputError):
        op_lq.delta_q(cosine_pot, 1.1, 1.0)


def test_admissibility():
    with pytest.raises(ValidationError):
        op_lq.check_admissible(0.5, 1.0, -1.0, 0.0)
    with pytest.raises(ValidationError):
        op_lq.check_admissible(0.0, 1.0, 1j, 0.0)
    with pytest.raises(ValidationError):
        # a(theta + theta0) + i h b (theta - theta1) = 0 for these values
        op_lq.check_admissible(0.5, 1.0, 1j, 0.5)
    op_lq.check_admissible(0.5, 1.0, 1j, 0.3)


# --- eigenfunctions ----------------------------------------------------------

def test_zero_potential_eigenfunctions_match_free(zero_pot, theta07):
    cfg = L0Config(1.0, 0.7)
    x = np.linspace(0, 1, 9)
    spectrum = op_lq.lq_real_zeros(zero_pot, theta07, -4, 4)
    for n in (-4, 0, 3):
        psi = op_lq.eigenfunction_q(zero_pot, theta07, n, spectrum=spectrum)
        assert np.max(np.abs(psi(x) - op_l0.eigenfunction0(cfg, n, x))) <= 1e-8


def test_gram_matrix(cosine_pot, theta07, cos_spectrum):
    psis = [op_lq.eigenfunction_q(cosine_pot, theta07, n, spectrum=cos_spectrum) for n in range(-4, 4)]
    nodes, weights = gauss_legendre(0.0, 1.0, 24, 16)
    values = np.array([psi(nodes) for psi in psis])
    gram = (values * weights) @ values.conj().T
    assert np.max(np.abs(gram - np.eye(8))) <= 1e-6


@pytest.mark.parametrize("n", [-3, 1])
def test_eigenfunction_boundary_conditions(cosine_pot, theta07, cos_spectrum, n):
    psi = op_lq.eigenfunction_q(cosine_pot, theta07, n, spectrum=cos_spectrum)
    assert abs(psi(0.0)) < 1e-9 and abs(psi(1.0)) < 1e-9
    assert abs(psi(1.0, 1) - theta07 * psi(0.0, 1)) < 1e-8 * abs(psi(0.0, 1))


@pytest.mark.parametrize("n", [-2, 0, 3])
def test_normalisation_two_ways(cosine_pot, theta07, cos_spectrum, n):
    quad = op_lq.normalization_q_squared(cosine_pot, theta07, n, "quadrature", cos_spectrum)
    limit = op_lq.normalization_q_squared(cosine_pot, theta07, n, "limit", cos_spectrum)
    assert limit == pytest.approx(quad, rel=1e-6)


def test_green_kernel_free_case(zero_pot):
    lam = 1.5 + 0.5j
    x = np.linspace(0, 1, 5)[:, None]
    t = np.array([0.1, 0.3, 0.5, 0.7, 0.9])[None, :]
    assert np.allclose(op_lq.green_kernel(zero_pot, lam, x, t), free_solution(2, lam, x - t), atol=1e-10)


def test_resolvent_of_eigenfunction(cosine_pot, theta07, cos_spectrum):
    grid = np.linspace(0, 1, 51)
    psi = op_lq.eigenfunction_q(cosine_pot, theta07, 1, spectrum=cos_spectrum)
    lam = 1.5 + 0.5j
    y = op_lq.resolvent_q(cosine_pot, theta07, lam, psi, grid)
    assert np.max(np.abs(y - psi(grid) / (cos_spectrum.zero(1) ** 3 - lam**3))) <= 1e-9


def test_resolvent_at_large_real_lambda(cosine_pot, theta07, cos_spectrum):
    """lambda_3 is about 25.5, where a separated Green-kernel formula loses every digit."""
    grid = np.linspace(0, 1, 11)
    psi = op_lq.eigenfunction_q(cosine_pot, theta07, 3, spectrum=cos_spectrum)
    lam = cos_spectrum.zero(3) * (1 + 1e-3)
    y = op_lq.resolvent_q(cosine_pot, theta07, lam, psi, grid)
    expected = psi(grid) / (cos_spectrum.zero(3) ** 3 - lam**3)
    assert np.max(np.abs(y - expected)) <= 1e-9 * np.max(np.abs(expected))


def test_resolvent_matches_free_case(zero_pot, theta07):
    grid = np.linspace(0, 1, 11)
    f = lambda t: np.exp(t) + 0j  # noqa: E731
    for lam in (3.0 + 0.5j, 22.0 + 0.1j):
        expected = op_l0.resolvent0(L0Config(1.0, 0.7), lam, f, grid)
        assert np.allclose(op_lq.resolvent_q(zero_pot, theta07, lam, f, grid), expected, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("n", [-1, 1])
def test_resolvent_limit_is_projection(cosine_pot, theta07, cos_spectrum, n):
    grid = np.linspace(0, 1, 51)
    nodes, weights = gauss_legendre(0.0, 1.0, 16, 48)
    psi = op_lq.eigenfunction_q(cosine_pot, theta07, n, spectrum=cos_spectrum)
    lam_n = cos_spectrum.zero(n)
    f = lambda t: np.exp(t) + 0j  # noqa: E731
    eps = 1e-5
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NearSpectrumWarning)
        ends = [(lam_n**3 - lam**3) * op_lq.resolvent_q(cosine_pot, theta07, lam, f, grid)
                for lam in (lam_n * (1 + eps), lam_n * (1 - eps))]
    coefficient = np.dot(weights, f(nodes) * np.conj(psi(nodes)))
    assert np.max(np.abs(0.5 * (ends[0] + ends[1]) - coefficient * psi(grid))) <= 1e-5


def test_spectrum_csv(tmp_path, cos_spectrum):
    path = tmp_path / "lq.csv"
    cos_spectrum.to_csv(path)
    assert path.read_text().splitlines()[0] == "n,lambda_n,residual"
