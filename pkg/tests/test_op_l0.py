import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cubicstring import op_l0
from cubicstring.errors import InvalidInputError
from cubicstring.numerics import shooting_solve
from cubicstring.op_l0 import L0Config, NearSpectrumWarning

# lambda_n(0, theta) for l = 1, phi = 0.7 (n = -3..3), root-finding on the
# 30-digit series form of the characteristic function.
ORACLE_ZEROS = {
    -3: -16.402359725314782009,
    -2: -10.118860256398644464,
    -1: -3.902048375960254777,
    0: 6.6327818676304637522,
    1: 12.919186762496070364,
    2: 19.202358310973605504,
    3: 25.485543677779017013,
}

CFG = L0Config(1.0, 0.7)
phis = st.floats(0.05, math.pi / 2 - 0.05) | st.floats(math.pi / 2 + 0.05, math.pi - 0.05)
lengths = st.floats(0.5, 3.0)


def test_zeros_match_oracle():
    spectrum = op_l0.l0_real_zeros(CFG, -3, 3)
    expected = [ORACLE_ZEROS[int(n)] for n in spectrum.indices]
    assert np.allclose(spectrum.zeros, expected, rtol=1e-15, atol=4e-15)
    assert np.allclose(spectrum.eigenvalues, np.array(expected) ** 3, rtol=1e-14)


@given(phi=phis, l=lengths)
def test_one_zero_per_interval(phi, l):
    cfg = L0Config(l, phi)
    spectrum = op_l0.l0_real_zeros(cfg, -15, 15)
    for n, lam in zip(spectrum.indices, spectrum.zeros):
        lo, hi = cfg.interval(int(n))
        assert lo <= lam <= hi
    assert np.max(spectrum.residuals) <= 1e-10


@given(phi=phis, l=lengths)
def test_value_at_origin(phi, l):
    cfg = L0Config(l, phi)
    assert complex(op_l0.delta0(cfg, 0.0)) == pytest.approx(-0.5 * l**2 * (cfg.theta + 1), abs=1e-14)


@given(phi=phis)
def test_asymptotic_location(phi):
    cfg = L0Config(1.0, phi)
    spectrum = op_l0.l0_real_zeros(cfg, -20, 20)
    for n, lam in zip(spectrum.indices, spectrum.zeros):
        if abs(n) >= 10:
            assert abs(lam - op_l0.asymptotic_zero(cfg, int(n))) <= 0.3 / abs(n)


@given(phi=phis, s=st.floats(0.5, 2.0))
def test_zeros_scale_with_length(phi, s):
    base = op_l0.l0_real_zeros(L0Config(1.0, phi), -5, 5).zeros
    scaled = op_l0.l0_real_zeros(L0Config(1.0 / s, phi), -5, 5).zeros
    assert np.allclose(scaled, s * base, rtol=1e-13)


def test_phi_is_reduced_modulo_pi():
    assert L0Config(1.0, 0.7 + math.pi).phi == pytest.approx(0.7)
    assert L0Config.from_theta(1.0, CFG.theta).phi == pytest.approx(0.7)


@pytest.mark.parametrize("phi", [0.0, math.pi / 2])
def test_degenerate_theta_rejected(phi):
    cfg = L0Config(1.0, phi)
    assert cfg.degenerate
    with pytest.raises(InvalidInputError):
        op_l0.l0_real_zeros(cfg, -2, 2)
    with pytest.raises(InvalidInputError):
        op_l0.delta0_product(cfg, 1.0, 10)


@pytest.mark.parametrize("kwargs", [{"l": 0.0, "phi": 0.3}, {"l": 1.0, "phi": math.inf}])
def test_config_validation(kwargs):
    with pytest.raises(InvalidInputError):
        L0Config(**kwargs)


def test_theta_minus_one_zero_mode():
    x = np.linspace(0, 1, 2001)
    mode = op_l0.zero_mode_theta_minus_one(1.0, x)
    assert np.trapezoid(mode**2, x) == pytest.approx(1.0, rel=1e-6)
    # theta = -1 makes lambda = 0 a zero of the characteristic function
    cfg = L0Config(1.0, math.pi / 2)
    assert abs(op_l0.delta0(cfg, 0.0)) < 1e-15


def test_derivative_matches_difference_quotient():
    lam = np.array([0.7, 3.1, -5.2 + 0.3j])
    h = 1e-6
    numeric = (op_l0.delta0(CFG, lam + h) - op_l0.delta0(CFG, lam - h)) / (2 * h)
    assert np.allclose(op_l0.delta0_derivative(CFG, lam), numeric, rtol=1e-7)


@pytest.mark.parametrize("lam", [0.3, -2.5, 4.9, 1.5 + 1j])
def test_product_matches_direct(lam):
    value = op_l0.delta0_product(CFG, lam, 2000)
    direct = complex(op_l0.delta0(CFG, lam))
    assert abs(value.value - direct) <= 1e-4 * abs(direct)


def test_product_converges_with_N():
    direct = complex(op_l0.delta0(CFG, 4.0))
    errors = [abs(op_l0.delta0_product(CFG, 4.0, N).value - direct) for N in (50, 200, 800)]
    assert errors[0] > errors[1] > errors[2]


def test_eigenfunctions_orthonormal():
    idx = range(-4, 4)
    gram = np.array([[op_l0.inner_product(CFG, lambda t, n=n: op_l0.eigenfunction0(CFG, n, t),
                                          lambda t, m=m: op_l0.eigenfunction0(CFG, m, t), lam_scale=40.0)
                      for m in idx] for n in idx])
    assert np.max(np.abs(gram - np.eye(8))) <= 1e-8


@pytest.mark.parametrize("n", [-3, 0, 4])
def test_eigenfunction_boundary_conditions(n):
    psi = lambda x, d=0: op_l0.eigenfunction0(CFG, n, x, d)  # noqa: E731
    assert abs(psi(0.0)) < 1e-12 and abs(psi(1.0)) < 1e-12
    assert abs(psi(1.0, 1) - CFG.theta * psi(0.0, 1)) < 1e-9 * abs(psi(0.0, 1))


@pytest.mark.parametrize("n", [-2, 1, 3])
def test_eigenfunction_solves_equation(n):
    lam = op_l0.eigenvalue0(CFG, n)
    x = np.linspace(0.05, 0.95, 7)
    third = op_l0.eigenfunction0(CFG, n, x, 3)
    assert np.allclose(1j * third, lam**3 * op_l0.eigenfunction0(CFG, n, x), rtol=1e-9, atol=1e-9)


@pytest.mark.parametrize("n", [-3, 0, 2, 5])
def test_normalizations_agree(n):
    values = [op_l0.normalization_squared(CFG, n, m) for m in ("quadrature", "derivative", "product")]
    assert values[1] == pytest.approx(values[0], rel=1e-9)
    assert values[2] == pytest.approx(values[0], rel=1e-3)


def test_resolvent_of_eigenfunction():
    grid = np.linspace(0, 1, 21)
    lam = 1.5 + 0.5j
    psi = op_l0.eigenfunction0(CFG, 2, grid)
    y = op_l0.resolvent0(CFG, lam, lambda t: op_l0.eigenfunction0(CFG, 2, t), grid)
    assert np.allclose(y, psi / (op_l0.eigenvalue0(CFG, 2) ** 3 - lam**3), atol=1e-10)


@pytest.mark.parametrize("n", [-1, 1])
def test_resolvent_limit_is_projection(n):
    lam_n = op_l0.eigenvalue0(CFG, n)
    grid = np.linspace(0, 1, 11)
    f = lambda t: np.exp(t) + 0j  # noqa: E731
    eps = 1e-5
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NearSpectrumWarning)
        ends = [(lam_n**3 - lam**3) * op_l0.resolvent0(CFG, lam, f, grid)
                for lam in (lam_n * (1 + eps), lam_n * (1 - eps))]
    limit = 0.5 * (ends[0] + ends[1])
    assert np.max(np.abs(limit - op_l0.projection0(CFG, n, f, grid))) <= 1e-5


def test_near_spectrum_warning():
    lam = op_l0.eigenvalue0(CFG, 0)
    with pytest.warns(NearSpectrumWarning):
        op_l0.resolvent0(CFG, lam, lambda t: np.ones_like(t, dtype=complex), np.linspace(0, 1, 3))


def test_parseval_partial_sum():
    f = lambda t: np.sin(np.pi * t) ** 2 + 0j  # noqa: E731
    norm = op_l0.inner_product(CFG, f, f).real
    total = sum(abs(op_l0.inner_product(CFG, f, lambda t, n=n: op_l0.eigenfunction0(CFG, n, t),
                                        lam_scale=abs(op_l0.eigenvalue0(CFG, n)))) ** 2
                for n in range(-20, 20))
    assert total / norm == pytest.approx(1.0, abs=1e-4)


def test_spectrum_csv(tmp_path):
    path = tmp_path / "zeros.csv"
    op_l0.l0_real_zeros(CFG, -1, 1).to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "n,lambda_n,lambda_n_cubed,delta_residual"
    assert len(lines) == 4


@pytest.mark.parametrize("n", [3, -4, 6])
def test_resolvent_of_eigenfunction_at_large_lambda(n):
    """Above |lambda| l = 8 the resolvent is computed by multiple shooting."""
    grid = np.linspace(0, 1, 21)
    lam_n = op_l0.eigenvalue0(CFG, n)
    lam = lam_n + 0.5j
    assert abs(lam) > 8
    y = op_l0.resolvent0(CFG, lam, lambda t: op_l0.eigenfunction0(CFG, n, t), grid)
    expected = op_l0.eigenfunction0(CFG, n, grid) / (lam_n**3 - lam**3)
    assert np.max(np.abs(y - expected)) <= 1e-10 * np.max(np.abs(expected))


@pytest.mark.parametrize("lam", [7.5 + 0.3j, -6.0 + 1j])
def test_resolvent_branches_agree(lam):
    grid = np.linspace(0, 1, 11)
    f = lambda t: np.cos(3 * t) + 0j  # noqa: E731
    closed = op_l0.resolvent0(CFG, lam, f, grid)
    shot = shooting_solve(lambda x: -1j * lam**3, lambda x: -1j * f(x), grid,
                                np.array([[1, 0, 0], [0, 0, 0], [0, -CFG.theta, 0]]),
                                np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]]), 6, abs(lam)).y
    assert np.max(np.abs(closed - shot)) <= 1e-10 * np.max(np.abs(closed))
