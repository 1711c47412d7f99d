import cmath
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cubicstring import gtrig
from cubicstring.errors import InvalidInputError
from cubicstring.gtrig import SectorKind

from conftest import relative_error

# Values of s_p(z) from the power series summed in 40-digit arithmetic.
SERIES_VALUES = [
    (0, 1.0, 1.1680583133759185255),
    (0, 2.5, 3.9538883007281287637),
    (0, -3.0, -2.5406425075039299914),
    (0, 1 + 2j, -0.67411300242969867632 - 0.27417944734913085216j),
    (0, -4 + 1j, -6.4652680426870183473 + 1.7982549816032272006j),
    (0, 5j, -20.192298168387373986 - 15.474372381639267309j),
    (1, 1.0, 1.0418653550989098463),
    (1, 2.5, 4.2513577793405235508),
    (1, -3.0, -0.042910235147861055059),
    (1, 1 + 2j, 0.71415120083243663157 + 1.0543054554727599966j),
    (1, -4 + 1j, 2.9997289968993511084 - 5.2724850851290106792j),
    (1, 5j, 23.357812993805505537 - 10.305115590492004351j),
    (2, 1.0, 0.50835815998421686354),
    (2, 2.5, 3.9772478806348211235),
    (2, -3.0, 2.6333398110196549895),
    (2, 1 + 2j, -1.1712425821595515937 + 1.6916006638811897832j),
    (2, -4 + 1j, 3.4754350277126984886 + 3.4896421822188724365j),
    (2, 5j, -2.8818526399549052862 + 24.820563697468133191j),
]

# Positive x with s_p(-x) = 0, k = 2..6 (k = 1 for s_0), by root finding on the series.
SERIES_ZEROS = {
    0: [1.84981279919014348, 5.44123335502366336, 9.06899753487157766, 12.6965955465467573, 16.3241942781213629],
    1: [3.01674421208407852, 6.65062451890751558, 10.2781962809699762, 13.905795126299895, 17.5333938542619209],
    2: [4.23320719243895656, 7.85979286735154016, 11.487395992453511, 15.1149947018696099, 18.7425934304206074],
}

disc = st.builds(
    lambda r, t: r * cmath.exp(1j * t),
    st.floats(0.0, 5.0),
    st.floats(0.0, 2 * math.pi),
)


@pytest.mark.parametrize("p, z, expected", SERIES_VALUES)
@pytest.mark.parametrize("method", ["auto", "series", "exponential"])
def test_values_match_series_oracle(p, z, expected, method):
    assert relative_error(gtrig.s_eval(p, z, method=method), expected) < 1e-13


def test_vectorised_evaluation_keeps_shape():
    z = np.linspace(-2, 2, 12).reshape(3, 4) + 0.5j
    values = gtrig.s_eval(1, z)
    assert values.shape == (3, 4)
    assert values[1, 2] == pytest.approx(gtrig.s_eval(1, complex(z[1, 2])), rel=1e-15)


def test_initial_values():
    assert [complex(gtrig.s_eval(p, 0.0)) for p in range(3)] == [1, 0, 0]


@pytest.mark.parametrize("p", [-1, 3, 1.5])
def test_bad_index_rejected(p):
    with pytest.raises(InvalidInputError):
        gtrig.s_eval(p, 1.0)


def test_non_finite_argument_rejected():
    with pytest.raises(InvalidInputError):
        gtrig.s_eval(0, complex(math.nan, 0))


@pytest.mark.parametrize("p", range(3))
def test_log_scaled_evaluation_survives_large_arguments(p):
    z = np.array([800.0, 600 + 300j])
    mantissa, log_scale = gtrig.s_eval_log_scaled(p, z)
    direct = gtrig.s_eval(p, z / 4)
    assert np.all(np.isfinite(mantissa))
    # e^z / 3 dominates for large positive real part
    assert np.allclose(np.log(np.abs(mantissa)) + log_scale, z.real - math.log(3), atol=1e-10)
    assert np.all(np.isfinite(direct))


@pytest.mark.parametrize("name", sorted(gtrig.IDENTITIES))
@given(z=disc, w=disc)
def test_identity(name, z, w):
    lhs, rhs = gtrig.identity_sides(name, z, w)
    tol = 1e-12 if name in gtrig.ALGEBRAIC_IDENTITIES else 1e-9
    assert relative_error(lhs, rhs) <= tol


def test_unknown_identity():
    with pytest.raises(InvalidInputError):
        gtrig.identity_sides("no-such-identity", 1.0)


@pytest.mark.parametrize("p", [1, 2])
def test_first_zero_is_origin(p):
    assert gtrig.s_zero(p, 1) == 0.0


@pytest.mark.parametrize("p", range(3))
def test_zeros_match_series_oracle(p):
    first = 1 if p == 0 else 2
    located = [gtrig.s_zero(p, k) for k in range(first, first + 5)]
    assert np.allclose(located, SERIES_ZEROS[p], rtol=1e-14, atol=0)


@pytest.mark.parametrize("p", range(3))
def test_zeros_have_tiny_scaled_residual(p):
    assert max(gtrig.scaled_zero_residual(p, k) for k in range(1, 31)) <= 1e-10


@pytest.mark.parametrize("k", range(1, 40))
def test_zero_ordering_within_one_period(k):
    """Measured order: x_1(k) <= x_2(k) <= x_0(k) <= x_1(k+1)."""
    x0, x1, x2 = (gtrig.s_zero(p, k) for p in range(3))
    assert x1 <= x2 <= x0 <= gtrig.s_zero(1, k + 1)


@pytest.mark.parametrize("k", [20, 60, 200])
def test_zero_spacing_tends_to_period(k):
    gap = gtrig.s_zero(0, k + 1) - gtrig.s_zero(0, k)
    assert gap == pytest.approx(2 * math.pi / math.sqrt(3), rel=1e-12)


@pytest.mark.parametrize("bad", [0, -2])
def test_zero_index_validated(bad):
    with pytest.raises(InvalidInputError):
        gtrig.s_zero(0, bad)


# --- sectors ---------------------------------------------------------------

@pytest.mark.parametrize("lam, kind", [
    (-10j, SectorKind.OMEGA1),
    (-1.0, SectorKind.OMEGA2),
    (1.0, SectorKind.OMEGA3),
    (cmath.exp(1j * 5 * math.pi / 6), SectorKind.OMEGA2),
    (cmath.exp(1j * math.pi / 6), SectorKind.OMEGA3),
])
def test_sector_centres(lam, kind):
    assert gtrig.sector_of(lam).kind is kind


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("minus", [False, True])
def test_rays_are_boundaries(k, minus):
    lam = 3.0 * cmath.exp(1j * gtrig.ray_angle(k, minus))
    sid = gtrig.sector_of(lam, "minus" if minus else "plus")
    assert sid.kind is SectorKind.RAY_BOUNDARY
    assert sid.index == (-k if minus else k)


def test_minus_family_is_reflection():
    for lam in (2.0 + 1j, -3j, -1 + 0.1j):
        plus = gtrig.sector_of(lam)
        minus = gtrig.sector_of(-lam, "minus")
        assert minus.index == plus.index


def test_origin_has_no_sector():
    with pytest.raises(InvalidInputError):
        gtrig.sector_of(0.0)


@given(st.floats(0.0, 2 * math.pi))
def test_classification_is_exhaustive(angle):
    sid = gtrig.sector_of(cmath.exp(1j * angle))
    assert sid.index in (1, 2, 3)


@pytest.mark.parametrize("p", range(3))
@pytest.mark.parametrize("k, direction", [(1, -1j), (2, cmath.exp(5j * math.pi / 6)), (3, cmath.exp(1j * math.pi / 6))])
def test_asymptotic_factor_tends_to_one(p, k, direction):
    far = gtrig.asymptotic_factor(p, k, 50.0 * direction, 1.0)
    nearer = gtrig.asymptotic_factor(p, k, 5.0 * direction, 1.0)
    assert abs(far - 1) < 1e-15 + abs(nearer - 1)
    assert abs(far - 1) < 1e-12


def test_asymptotic_factor_matches_definition():
    lam, x, k, p = 2.0 - 3j, 0.7, 1, 2
    zk = gtrig.CUBE_ROOTS.zeta1
    expected = 3 * zk**p * gtrig.s_eval(p, 1j * lam * x) * cmath.exp(-1j * lam * zk * x)
    assert gtrig.asymptotic_factor(p, k, lam, x) == pytest.approx(expected, rel=1e-13)


def test_contour_derivative_vectorised():
    z = np.array([0.3, 1 + 1j, -2j])
    d = gtrig.contour_derivative(np.exp, z)
    assert np.allclose(d, np.exp(z), rtol=1e-14)
    assert isinstance(gtrig.contour_derivative(np.exp, 0.5), complex)
