"""Generalized trigonometric functions of the equation y''' = y.

The three functions

    s_p(z) = (1/3) * sum_k zeta_k^(-p) * exp(z * zeta_k),    p = 0, 1, 2,

play the role of cosine and sine for third-order equations.  This module
evaluates them stably (Taylor series near the origin, exponential averages
elsewhere, and an overflow-free scaled form for large arguments), exposes a
catalogue of algebraic identities as residual functions, locates their zeros
on the negative real axis, and classifies complex numbers into the angular
sectors where one exponential e^{i lambda zeta_k x} dominates.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .errors import BracketingError, InvalidInputError
from .numerics import find_bracketed_root

SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class CubeRoots:
    """The cube roots of unity, ordered as 1, e^{2 pi i/3}, e^{-2 pi i/3}."""

    zeta1: complex = complex(1.0, 0.0)
    zeta2: complex = complex(-0.5, 0.5 * SQRT3)
    zeta3: complex = complex(-0.5, -0.5 * SQRT3)

    def __getitem__(self, k: int) -> complex:
        """One-based access: ``roots[1] == 1``."""
        if k not in (1, 2, 3):
            raise InvalidInputError(f"cube-root index must be 1, 2 or 3, got {k!r}")
        return (self.zeta1, self.zeta2, self.zeta3)[k - 1]

    def as_array(self) -> np.ndarray:
        return np.array([self.zeta1, self.zeta2, self.zeta3], dtype=complex)


CUBE_ROOTS = CubeRoots()
ZETA = CUBE_ROOTS.as_array()
ZETA1, ZETA2, ZETA3 = (complex(v) for v in ZETA)

SWITCH_RADIUS = 1.5
RAY_TOLERANCE = 1e-12

# _INVERSE_POWERS[p, k] = zeta_{k+1}^(-p)
_INVERSE_POWERS = np.array([[np.conj(zk) ** p for zk in ZETA] for p in range(3)])


def _check_index(p: int) -> int:
    if p not in (0, 1, 2):
        raise InvalidInputError(f"function index p must be 0, 1 or 2, got {p!r}")
    return int(p)


def _as_complex_array(z, what: str = "argument") -> np.ndarray:
    arr = np.asarray(z, dtype=complex)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{what} must be finite")
    return arr


def _restore_shape(value: np.ndarray, like):
    if np.ndim(like) == 0:
        return complex(value)
    return value


def taylor_reduced(p: int, z) -> np.ndarray:
    """Return sum_n z^{3n} / (3n+p)!, so that s_p(z) = z^p * taylor_reduced(p, z).

    Terms are added until they fall below double precision relative to the
    running sum, which makes the series usable well beyond the switch radius
    (it is the reference path in the identity checks).
    """
    z = np.asarray(z, dtype=complex)
    cube = z**3
    term = np.full(z.shape, 1.0 / math.factorial(p), dtype=complex)
    total = term.copy()
    k = p
    bound = float(np.max(np.abs(z), initial=0.0))
    for _ in range(2000):
        term = term * cube / ((k + 1) * (k + 2) * (k + 3))
        k += 3
        total = total + term
        if k > bound and np.all(np.abs(term) <= 1e-18 * np.abs(total)):
            break
    return total


def _series(p: int, z: np.ndarray) -> np.ndarray:
    return z**p * taylor_reduced(p, z)


def _exponential(p: int, z: np.ndarray) -> np.ndarray:
    total = np.zeros(z.shape, dtype=complex)
    for k in range(3):
        total = total + _INVERSE_POWERS[p, k] * np.exp(z * ZETA[k])
    return total / 3.0


def _exponential_all(z: np.ndarray) -> np.ndarray:
    """s_0, s_1, s_2 at z from one set of exponentials; shape ``(3,) + z.shape``."""
    waves = np.exp(z[..., None] * ZETA)
    return np.moveaxis(waves @ (_INVERSE_POWERS.T / 3.0), -1, 0)


_SCALAR_INV = [[complex(c) for c in row] for row in _INVERSE_POWERS]
_SCALAR_ZETA = [complex(c) for c in ZETA]


def _scalar_eval(p: int, z: complex) -> complex:
    if not cmath.isfinite(z):
        raise InvalidInputError("argument must be finite")
    if abs(z) < SWITCH_RADIUS:
        return complex(_series(p, np.asarray(z)))
    c = _SCALAR_INV[p]
    return (c[0] * cmath.exp(z) + c[1] * cmath.exp(z * _SCALAR_ZETA[1])
            + c[2] * cmath.exp(z * _SCALAR_ZETA[2])) / 3.0


def s_eval(p: int, z, method: str = "auto"):
    """Evaluate s_p(z) for scalar or array ``z``.

    ``method`` selects the evaluation path: ``"series"``, ``"exponential"``
    or ``"auto"`` (series below the switch radius, exponential above).
    """
    p = _check_index(p)
    if method == "auto" and isinstance(z, (int, float, complex)):
        return _scalar_eval(p, complex(z))
    arr = _as_complex_array(z)
    if method == "series":
        out = _series(p, arr)
    elif method == "exponential":
        out = _exponential(p, arr)
    elif method == "auto":
        out = np.empty(arr.shape, dtype=complex)
        small = np.abs(arr) < SWITCH_RADIUS
        if np.any(small):
            out[small] = _series(p, arr[small])
        if np.any(~small):
            out[~small] = _exponential(p, arr[~small])
    else:
        raise InvalidInputError(f"unknown evaluation method {method!r}")
    return _restore_shape(out, z)


def s_eval_log_scaled(p: int, z) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(mantissa, exponent)`` with s_p(z) = mantissa * exp(exponent).

    The exponent is the real part of the dominant exponential, so the
    mantissa stays O(1) for arbitrarily large |z|.  Below the switch radius
    the exponent is zero and the mantissa is the series value.
    """
    p = _check_index(p)
    arr = _as_complex_array(z)
    exponent = np.zeros(arr.shape)
    mantissa = np.empty(arr.shape, dtype=complex)
    small = np.abs(arr) < SWITCH_RADIUS
    if np.any(small):
        mantissa[small] = _series(p, arr[small])
    big = ~small
    if np.any(big):
        zb = arr[big]
        args = zb[..., None] * ZETA
        shift = np.max(args.real, axis=-1)
        terms = _INVERSE_POWERS[p] * np.exp(args - shift[..., None])
        mantissa[big] = terms.sum(axis=-1) / 3.0
        exponent[big] = shift
    return mantissa, exponent


def s_eval_scaled(p: int, lam, x: float):
    """Return s_p(i lambda x) / (i lambda)^p, the free solution with unit Cauchy data.

    The removable singularity at lambda = 0 is handled by the reduced series,
    whose limit is x^p / p!.
    """
    p = _check_index(p)
    lam_arr = _as_complex_array(lam, "lambda")
    z = 1j * lam_arr * x
    out = np.empty(lam_arr.shape, dtype=complex)
    small = np.abs(z) < SWITCH_RADIUS
    if np.any(small):
        out[small] = x**p * taylor_reduced(p, z[small])
    if np.any(~small):
        out[~small] = _exponential(p, z[~small]) / (1j * lam_arr[~small]) ** p
    return _restore_shape(out, lam)


def free_solution(p: int, lam, x):
    """Broadcasting form of s_p(i lam x)/(i lam)^p over both lambda and x."""
    p = _check_index(p)
    lam_b, x_b = np.broadcast_arrays(np.asarray(lam, dtype=complex), np.asarray(x, dtype=float))
    z = 1j * lam_b * x_b
    out = np.empty(z.shape, dtype=complex)
    small = np.abs(z) < SWITCH_RADIUS
    if np.any(small):
        out[small] = x_b[small] ** p * taylor_reduced(p, z[small])
    big = ~small
    if np.any(big):
        out[big] = _exponential(p, z[big]) / (1j * lam_b[big]) ** p
    return out if out.ndim else complex(out)


def s_eval_scaled_log(p: int, lam, x: float) -> tuple[np.ndarray, np.ndarray]:
    """Overflow-free variant of :func:`s_eval_scaled` returning ``(mantissa, exponent)``."""
    p = _check_index(p)
    lam_arr = _as_complex_array(lam, "lambda")
    z = 1j * lam_arr * x
    mantissa, exponent = s_eval_log_scaled(p, z)
    small = np.abs(z) < SWITCH_RADIUS
    if np.any(small):
        mantissa[small] = x**p * taylor_reduced(p, z[small])
    if np.any(~small):
        mantissa[~small] = mantissa[~small] / (1j * lam_arr[~small]) ** p
    return mantissa, exponent


# ---------------------------------------------------------------------------
# identity catalogue
# ---------------------------------------------------------------------------

_EXTENDED = np.clongdouble


def _ext(p: int, z) -> np.clongdouble:
    return _EXTENDED(s_eval(p, complex(z)))


def contour_derivative(f: Callable[[complex], complex], z: complex,
                       radius: float = 0.5, nodes: int = 64) -> complex:
    """Derivative of a holomorphic ``f`` at ``z`` by the trapezoidal Cauchy integral.

    ``f`` must accept arrays; ``z`` may be an array, the result has its shape.
    """
    circle = np.exp(2j * np.pi * np.arange(nodes) / nodes)
    z_arr = np.asarray(z, dtype=complex)
    values = np.asarray(f(z_arr[..., None] + radius * circle), dtype=complex)
    derivative = np.mean(values / circle, axis=-1) / radius
    return complex(derivative) if z_arr.ndim == 0 else derivative


_ZETA_EXT = [_EXTENDED(complex(zk)) for zk in ZETA]

# (a, b) -> (c, e2, e3): 3 s_a(z) s_b(w) = s_c(z+w) + zeta_e2 s_c(z+zeta2 w) + zeta_e3 s_c(z+zeta3 w)
PRODUCT_TABLE = {
    (0, 0): (0, 1, 1),
    (1, 2): (0, 2, 3),
    (1, 0): (1, 1, 1),
    (2, 2): (1, 2, 3),
    (2, 0): (2, 1, 1),
    (1, 1): (2, 3, 2),
}


def _sides_derivative(p):
    target = (2, 0, 1)[p]

    def sides(z, w):
        d = contour_derivative(lambda u: s_eval(p, u), complex(z))
        return _EXTENDED(d), _ext(target, z)

    return sides


def _sides_conjugation(p):
    def sides(z, w):
        return np.conj(_ext(p, z)), _ext(p, np.conj(complex(z)))

    return sides


def _sides_evenness(p):
    def sides(z, w):
        return _ext(p, complex(z) * ZETA2), _ZETA_EXT[1] ** p * _ext(p, z)

    return sides


def _sides_euler(k):
    def sides(z, w):
        zk = _ZETA_EXT[k - 1]
        lhs = _EXTENDED(np.exp(complex(z) * ZETA[k - 1]))
        rhs = _ext(0, z) + zk * _ext(1, z) + zk * zk * _ext(2, z)
        return lhs, rhs

    return sides


def _sides_initial(z, w):
    values = []
    for p in range(3):
        values.append(s_eval(p, 0.0))
        values.append(contour_derivative(lambda u, p=p: s_eval(p, u), 0.0))
        values.append(contour_derivative(
            lambda u, p=p: contour_derivative(lambda v: s_eval(p, v), u, radius=0.25), 0.0))
    expected = np.eye(3).ravel()
    return np.array(values, dtype=_EXTENDED), expected.astype(_EXTENDED)


def _sides_main(z, w):
    a, b, c = (_ext(p, z) for p in range(3))
    return a**3 + b**3 + c**3 - 3 * a * b * c, _EXTENDED(1.0)


def _sides_addition(p):
    def sides(z, w):
        sz = [_ext(k, z) for k in range(3)]
        sw = [_ext(k, w) for k in range(3)]
        rhs = sum(sz[i] * sw[(p - i) % 3] for i in range(3))
        return _ext(p, complex(z) + complex(w)), rhs

    return sides


def _sides_product(a, b):
    c, e2, e3 = PRODUCT_TABLE[(a, b)]

    def sides(z, w):
        z, w = complex(z), complex(w)
        lhs = 3 * _ext(a, z) * _ext(b, w)
        rhs = (_ext(c, z + w) + _ZETA_EXT[e2 - 1] * _ext(c, z + ZETA2 * w)
               + _ZETA_EXT[e3 - 1] * _ext(c, z + ZETA3 * w))
        return lhs, rhs

    return sides


def _sides_square(p):
    target = (0, 2, 1)[p]

    def sides(z, w):
        z = complex(z)
        return 3 * _ext(p, z) ** 2, _ext(target, 2 * z) + 2 * _ext(target, -z)

    return sides


def _sides_reflection(p):
    others = {0: (1, 2), 1: (0, 2), 2: (0, 1)}[p]
    target = (0, 2, 1)[p]

    def sides(z, w):
        z = complex(z)
        lhs = _ext(p, z) ** 2 - _ext(others[0], z) * _ext(others[1], z)
        return lhs, _ext(target, -z)

    return sides


def _sides_taylor(p):
    def sides(z, w):
        arr = np.asarray(complex(z))
        return _EXTENDED(complex(_series(p, arr))), _EXTENDED(complex(_exponential(p, arr)))

    return sides


def _sides_wronskian_shift(z, w):
    z, w = complex(z), complex(w)
    lhs = _ext(2, z) * _ext(1, w) - _ext(1, z) * _ext(2, w)
    rhs = (_ext(0, z + ZETA2 * w) - _ext(0, z + ZETA3 * w)) / _EXTENDED(1j * SQRT3)
    return lhs, rhs


IDENTITIES: dict[str, Callable] = {}
for _p in range(3):
    IDENTITIES[f"derivative-s{_p}"] = _sides_derivative(_p)
for _p in range(3):
    IDENTITIES[f"conjugation-s{_p}"] = _sides_conjugation(_p)
for _p in range(3):
    IDENTITIES[f"p-evenness-s{_p}"] = _sides_evenness(_p)
for _k in (1, 2, 3):
    IDENTITIES[f"euler-{_k}"] = _sides_euler(_k)
IDENTITIES["initial-data"] = _sides_initial
IDENTITIES["main-identity"] = _sides_main
for _p in range(3):
    IDENTITIES[f"addition-s{_p}"] = _sides_addition(_p)
for (_a, _b) in PRODUCT_TABLE:
    IDENTITIES[f"product-s{_a}s{_b}"] = _sides_product(_a, _b)
for _p in range(3):
    IDENTITIES[f"square-s{_p}"] = _sides_square(_p)
for _p in range(3):
    IDENTITIES[f"reflection-s{_p}"] = _sides_reflection(_p)
for _p in range(3):
    IDENTITIES[f"taylor-s{_p}"] = _sides_taylor(_p)
IDENTITIES["wronskian-shift"] = _sides_wronskian_shift

# identities that are purely algebraic in already-evaluated values; the
# derivative and initial-data checks go through numerical differentiation
ALGEBRAIC_IDENTITIES = tuple(
    name for name in IDENTITIES if not name.startswith(("derivative", "initial"))
)


def identity_sides(name: str, z: complex, w: complex = 0.0) -> tuple[complex, complex]:
    """Return (LHS, RHS) of a catalogued identity, combined in extended precision."""
    try:
        sides = IDENTITIES[name]
    except KeyError:
        raise InvalidInputError(f"unknown identity {name!r}; known: {sorted(IDENTITIES)}") from None
    _as_complex_array([z, w])
    return sides(z, w)


def identity_residual(name: str, z: complex, w: complex = 0.0) -> float:
    """Absolute residual |LHS - RHS| of the named identity at (z, w)."""
    lhs, rhs = identity_sides(name, z, w)
    return float(np.max(np.abs(np.asarray(lhs) - np.asarray(rhs))))


# ---------------------------------------------------------------------------
# zeros on the negative real axis
# ---------------------------------------------------------------------------

# phase offsets c_p and signs: s_p(-x) = 0  <=>  cos(sqrt3 x/2 + c_p) = sign_p * e^{-3x/2}/2
_ZERO_EQUATIONS = {
    0: (0.0, -1.0),
    1: (-math.pi / 3.0, 1.0),
    2: (math.pi / 3.0, 1.0),
}


def zero_equation(p: int, x: float) -> float:
    """Left minus right side of the transcendental equation whose roots are x_p(k)."""
    shift, sign = _ZERO_EQUATIONS[_check_index(p)]
    return math.cos(0.5 * SQRT3 * x + shift) - sign * 0.5 * math.exp(-1.5 * x)


def _extremum(p: int, m: int) -> float:
    """Location of the m-th extremum of cos(sqrt3 x/2 + c_p)."""
    shift, _ = _ZERO_EQUATIONS[p]
    return (math.pi * m - shift) * 2.0 / SQRT3


def s_zero(p: int, k: int) -> float:
    """Return x_p(k), the k-th nonnegative root of the zero equation for s_p.

    s_p vanishes at -x_p(k) and along the rotated rays -x_p(k) zeta_2^m.
    Each root is bracketed between consecutive extrema of the cosine term,
    where the exponential correction cannot change the sign.
    """
    p = _check_index(p)
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise InvalidInputError(f"zero index k must be a positive integer, got {k!r}")
    if p in (1, 2) and k == 1:
        return 0.0
    if p == 0:
        lo, hi = (0.0, _extremum(0, 1)) if k == 1 else (_extremum(0, k - 1), _extremum(0, k))
    elif p == 1:
        lo, hi = _extremum(1, k - 2), _extremum(1, k - 1)
    else:
        lo, hi = _extremum(2, k - 1), _extremum(2, k)
    f = lambda x: zero_equation(p, x)  # noqa: E731
    if f(lo) * f(hi) >= 0.0:
        raise BracketingError(f"no sign change for x_{p}({k})", (lo, hi))
    return find_bracketed_root(f, lo, hi, tol=1e-15)


def scaled_zero_residual(p: int, k: int) -> float:
    """|s_p(-x_p(k))| divided by the dominant growth e^{x_p(k)/2}."""
    x = s_zero(p, k)
    mantissa, exponent = s_eval_log_scaled(p, -x)
    return float(abs(mantissa) * math.exp(float(exponent) - 0.5 * x))


# ---------------------------------------------------------------------------
# sectors
# ---------------------------------------------------------------------------

class SectorKind(Enum):
    OMEGA1 = "Omega1"
    OMEGA2 = "Omega2"
    OMEGA3 = "Omega3"
    OMEGA_MINUS1 = "OmegaMinus1"
    OMEGA_MINUS2 = "OmegaMinus2"
    OMEGA_MINUS3 = "OmegaMinus3"
    RAY_BOUNDARY = "RayBoundary"


@dataclass(frozen=True)
class SectorId:
    """Sector classification; ``ray`` is set for boundary points.

    For the Omega family the boundary rays are i*l_{zeta_k} (ray = k); for the
    OmegaMinus family they are -i*l_{zeta_k} (ray = -k).
    """

    kind: SectorKind
    ray: int | None = None

    @property
    def index(self) -> int | None:
        if self.kind is SectorKind.RAY_BOUNDARY:
            return self.ray
        return int(self.kind.value[-1])


TWO_PI = 2.0 * math.pi

# Omega_k is the open 120-degree wedge around the direction where
# Re(i lambda zeta_k) is largest; centres at 3pi/2, 5pi/6, pi/6.
_SECTOR_CENTRES = {1: 1.5 * math.pi, 2: 5.0 * math.pi / 6.0, 3: math.pi / 6.0}
# direction of the ray i*l_{zeta_k}
_RAY_ANGLES = {1: 0.5 * math.pi, 2: 7.0 * math.pi / 6.0, 3: 11.0 * math.pi / 6.0}


def _angle_distance(a: float, b: float) -> float:
    d = (a - b) % TWO_PI
    return min(d, TWO_PI - d)


def ray_angle(k: int, minus: bool = False) -> float:
    """Argument in [0, 2 pi) of the ray i*l_{zeta_k} (or of -i*l_{zeta_k})."""
    angle = _RAY_ANGLES[k] + (math.pi if minus else 0.0)
    return angle % TWO_PI


def sector_of(lam: complex, family: str = "plus", tol: float = RAY_TOLERANCE) -> SectorId:
    """Classify ``lam`` into Omega_k (``family='plus'``) or -Omega_k (``family='minus'``).

    Points within ``tol`` radians of a bounding ray are reported as
    :attr:`SectorKind.RAY_BOUNDARY` and never folded into a sector.
    """
    lam = complex(lam)
    if not (math.isfinite(lam.real) and math.isfinite(lam.imag)):
        raise InvalidInputError("lambda must be finite")
    if lam == 0:
        raise InvalidInputError("the origin belongs to no sector")
    if family not in ("plus", "minus"):
        raise InvalidInputError(f"family must be 'plus' or 'minus', got {family!r}")
    minus = family == "minus"
    arg = math.atan2(lam.imag, lam.real) % TWO_PI
    for k in (1, 2, 3):
        if _angle_distance(arg, ray_angle(k, minus)) <= tol:
            return SectorId(SectorKind.RAY_BOUNDARY, -k if minus else k)
    for k in (1, 2, 3):
        centre = _SECTOR_CENTRES[k] + (math.pi if minus else 0.0)
        if _angle_distance(arg, centre) < math.pi / 3.0:
            kind = SectorKind[f"OMEGA_MINUS{k}"] if minus else SectorKind[f"OMEGA{k}"]
            return SectorId(kind)
    raise AssertionError("sector classification is exhaustive")  # pragma: no cover


def in_sector(lam: complex, k: int, minus: bool = False) -> bool:
    """True when ``lam`` lies strictly inside Omega_k (or -Omega_k)."""
    sid = sector_of(lam, "minus" if minus else "plus")
    return sid.kind is not SectorKind.RAY_BOUNDARY and sid.index == k


def asymptotic_factor(p: int, k: int, lam, x: float):
    """Return 3 zeta_k^p s_p(i lambda x) e^{-i lambda zeta_k x}.

    Inside Omega_k this tends to 1 as |lambda| grows.  The value is computed
    as sum_j (zeta_k/zeta_j)^p e^{i lambda x (zeta_j - zeta_k)}, which never
    overflows inside the sector.
    """
    p = _check_index(p)
    if k not in (1, 2, 3):
        raise InvalidInputError(f"sector index must be 1, 2 or 3, got {k!r}")
    lam_arr = _as_complex_array(lam, "lambda")
    zk = ZETA[k - 1]
    z = 1j * lam_arr * x
    small = np.abs(z) < SWITCH_RADIUS
    total = np.zeros(lam_arr.shape, dtype=complex)
    for j in range(3):
        total = total + (zk / ZETA[j]) ** p * np.exp(z * (ZETA[j] - zk))
    if np.any(small):
        total[small] = 3.0 * zk**p * _series(p, z[small]) * np.exp(-z[small] * zk)
    return _restore_shape(total, lam)
