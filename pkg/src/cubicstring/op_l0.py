"""Spectral theory of the unperturbed operator L_0(theta) y = i y''' on [0, l].

Boundary conditions: y(0) = 0, y(l) = 0, y'(l) = theta y'(0), |theta| = 1.
The characteristic function, its real zeros, the canonical product, the
orthonormal eigenfunctions, the resolvent and the spectral projections are
all built from the generalised trigonometric functions of :mod:`gtrig`.
"""

from __future__ import annotations

import csv
import functools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import interpolate

from .errors import BracketingError, InvalidInputError, NumericError
from .gtrig import ZETA, free_solution, s_eval, s_eval_scaled, s_eval_scaled_log
from .numerics import ProductValue, gauss_legendre, refine_brackets, shooting_solve, truncated_product


class NearSpectrumWarning(UserWarning):
    """The resolvent was requested at a point close to the spectrum."""


@dataclass(frozen=True)
class L0Config:
    """Length l and boundary parameter theta = exp(2 i phi), phi in [0, pi)."""

    l: float
    phi: float

    def __post_init__(self):
        if not (math.isfinite(self.l) and self.l > 0):
            raise InvalidInputError(f"l must be positive, got {self.l!r}")
        if not math.isfinite(self.phi):
            raise InvalidInputError("phi must be finite")
        object.__setattr__(self, "phi", float(self.phi) % math.pi)

    @classmethod
    def from_theta(cls, l: float, theta: complex) -> "L0Config":
        theta = complex(theta)
        if abs(abs(theta) - 1.0) > 1e-12:
            raise InvalidInputError(f"|theta| must be 1, got {abs(theta)!r}")
        return cls(l, 0.5 * math.atan2(theta.imag, theta.real))

    @property
    def theta(self) -> complex:
        return complex(math.cos(2 * self.phi), math.sin(2 * self.phi))

    @property
    def degenerate(self) -> bool:
        """True for theta = 1 or theta = -1."""
        return min(self.phi, abs(self.phi - 0.5 * math.pi), math.pi - self.phi) < 1e-14

    def interval(self, n: int) -> tuple[float, float]:
        """The localisation interval of the n-th zero."""
        return (2.0 / self.l * (math.pi * n + self.phi), 2.0 / self.l * (math.pi * (n + 1) + self.phi))


@dataclass(frozen=True)
class L0Spectrum:
    """Real zeros lambda_n(0, theta) for n = n_lo .. n_hi."""

    config: L0Config
    indices: np.ndarray
    zeros: np.ndarray
    residuals: np.ndarray = field(repr=False)

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.zeros**3

    def zero(self, n: int) -> float:
        j = n - int(self.indices[0])
        if not 0 <= j < self.indices.size:
            raise InvalidInputError(f"index {n} outside the computed window")
        return float(self.zeros[j])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n", "lambda_n", "lambda_n_cubed", "delta_residual"])
            for n, lam, res in zip(self.indices, self.zeros, self.residuals):
                writer.writerow([int(n), repr(float(lam)), repr(float(lam) ** 3), repr(float(res))])


# ---------------------------------------------------------------------------
# characteristic function
# ---------------------------------------------------------------------------

def delta0(cfg: L0Config, lam):
    """Characteristic function -(theta s_2(i lam l) + s_2(-i lam l)) / (i lam)^2."""
    return -(cfg.theta * s_eval_scaled(2, lam, cfg.l) + s_eval_scaled(2, -np.asarray(lam), cfg.l))


def delta0_derivative(cfg: L0Config, lam):
    """d/d lambda of :func:`delta0`, from the x-derivatives of the free solutions.

    With S_p(lam, x) = s_p(i lam x)/(i lam)^p one has
    d/d lam S_2(lam, x) = (x S_1(lam, x) - 2 S_2(lam, x)) / lam.
    """
    lam = np.asarray(lam, dtype=complex)
    l = cfg.l

    def d_s2(mu):
        with np.errstate(divide="ignore", invalid="ignore"):
            value = (l * s_eval_scaled(1, mu, l) - 2.0 * s_eval_scaled(2, mu, l)) / mu
        # S_2 = x^2/2 + O(lam^3) so the derivative vanishes at the origin
        return np.where(np.abs(mu) < 1e-8, 0.0, value)

    return -(cfg.theta * d_s2(lam) - d_s2(-lam))


def real_characteristic(cfg: L0Config, lam) -> np.ndarray:
    """Real-valued function with the same sign changes as exp(-i phi) delta0 on the real axis.

    For real lambda, exp(-i phi) delta0 = -2 Re(exp(i phi) s_2(i lam l)/(i lam)^2).
    The positive growth factor is divided out so large |lambda| stay finite.
    """
    mantissa, _ = s_eval_scaled_log(2, np.asarray(lam, dtype=float), cfg.l)
    return -2.0 * np.real(np.exp(1j * cfg.phi) * mantissa)


# ---------------------------------------------------------------------------
# zeros and product
# ---------------------------------------------------------------------------

def l0_real_zeros(cfg: L0Config, n_lo: int, n_hi: int) -> L0Spectrum:
    """Locate the zeros lambda_n, n_lo <= n <= n_hi, one per localisation interval."""
    if cfg.degenerate:
        raise InvalidInputError("theta = 1 and theta = -1 are degenerate and not supported")
    if n_hi < n_lo:
        raise InvalidInputError("empty index window")
    indices = np.arange(n_lo, n_hi + 1)
    lo = 2.0 / cfg.l * (np.pi * indices + cfg.phi)
    hi = 2.0 / cfg.l * (np.pi * (indices + 1) + cfg.phi)
    f = functools.partial(real_characteristic, cfg)
    flo, fhi = f(lo), f(hi)
    bad = np.sign(flo) * np.sign(fhi) >= 0
    if np.any(bad):
        j = int(np.flatnonzero(bad)[0])
        raise BracketingError(f"no sign change for n={indices[j]} on [{lo[j]}, {hi[j]}]", (lo[j], hi[j]))
    zeros = refine_brackets(f, lo, hi)
    return L0Spectrum(cfg, indices, zeros, scaled_residual(cfg, zeros))


def scaled_residual(cfg: L0Config, lam) -> np.ndarray:
    """|delta0(lam)| divided by the dominant growth factor of s_2(i lam l)."""
    m_plus, e_plus = s_eval_scaled_log(2, lam, cfg.l)
    m_minus, e_minus = s_eval_scaled_log(2, -np.asarray(lam), cfg.l)
    top = np.maximum(e_plus, e_minus)
    return np.abs(cfg.theta * m_plus * np.exp(e_plus - top) + m_minus * np.exp(e_minus - top))


def asymptotic_zero(cfg: L0Config, n: int) -> float:
    """Leading-order location of lambda_n for large |n|.

    With the labelling of :func:`l0_real_zeros` (one zero per interval
    ``cfg.interval(n)``) the positive zeros sit pi/6 below the right end of
    their interval and the negative zeros pi/6 above the left end.
    """
    if n >= 0:
        return 2.0 / cfg.l * (math.pi * (n + 1) + cfg.phi - math.pi / 6.0)
    return 2.0 / cfg.l * (math.pi * n + cfg.phi + math.pi / 6.0)


@functools.lru_cache(maxsize=4096)
def _zero(cfg: L0Config, n: int) -> float:
    return float(l0_real_zeros(cfg, n, n).zeros[0])


def delta0_product(cfg: L0Config, lam: complex, N: int) -> ProductValue:
    """Canonical product -(l^2/2)(theta+1) prod_{|n|<=N}(1 - lam^3/lambda_n^3).

    The window is n = -N-1 .. N so that positive and negative zeros pair up
    around the origin.  The tail bound is relative to the returned value.
    """
    if cfg.degenerate:
        raise InvalidInputError("the product representation needs theta != 1, -1")
    if N < 1:
        raise InvalidInputError("N must be at least 1")
    spectrum = l0_real_zeros(cfg, -N - 1, N)
    product = truncated_product(spectrum.zeros, lam, index_offset=-N - 1)
    prefactor = -0.5 * cfg.l**2 * (cfg.theta + 1.0)
    return ProductValue(prefactor * product.value, product.tail_bound)


# ---------------------------------------------------------------------------
# eigenfunctions
# ---------------------------------------------------------------------------

_DIRECT_LIMIT = 3.0
# coefficient of exp(i lam (zeta_j x + zeta_k l)) in 9 (i lam)^3 u(x)
_PAIR = np.array([[ZETA[j] ** -2 * ZETA[k] ** -1 - ZETA[j] ** -1 * ZETA[k] ** -2 for k in range(3)]
                  for j in range(3)])


def _free_derivative(p: int, m: int, lam: complex, x) -> np.ndarray:
    """m-th x-derivative of S_p(lam, x) = s_p(i lam x)/(i lam)^p."""
    factor = 1.0 + 0j
    for _ in range(m):
        if p == 0:
            factor *= (1j * lam) ** 3
            p = 2
        else:
            p -= 1
    return factor * free_solution(p, lam, x)


def _raw_log_factor(lam: float, l: float) -> float:
    """log of the positive factor by which u exceeds the value returned by :func:`_raw_eigen`."""
    if abs(lam) * l < _DIRECT_LIMIT:
        return 0.0
    off = ~np.eye(3, dtype=bool)
    arg_x = 1j * lam * ZETA
    return float(max(np.max((arg_x[None, :] * l + xv * arg_x[:, None]).real[off]) for xv in (0.0, l)))


def _raw_eigen(lam: float, l: float, x: np.ndarray, m: int = 0) -> np.ndarray:
    """m-th derivative of u = S_2(x) S_1(l) - S_1(x) S_2(l), divided by exp(_raw_log_factor).

    Beyond small |lam| l the diagonal exponentials, which cancel exactly,
    are dropped analytically instead of numerically.
    """
    x = np.asarray(x, dtype=float)
    if abs(lam) * l < _DIRECT_LIMIT:
        return (_free_derivative(2, m, lam, x) * complex(s_eval_scaled(1, lam, l))
                - _free_derivative(1, m, lam, x) * complex(s_eval_scaled(2, lam, l)))
    arg_x = 1j * lam * ZETA
    arg_l = 1j * lam * ZETA * l
    top = _raw_log_factor(lam, l)
    phase = (1j * np.sign(lam)) ** -3
    total = np.zeros(x.shape, dtype=complex)
    for j in range(3):
        for k in range(3):
            if j == k:
                continue
            total = total + _PAIR[j, k] * arg_x[j] ** m * np.exp(arg_x[j] * x + arg_l[k] - top)
    return phase * total / (9.0 * abs(lam) ** 3)


@functools.lru_cache(maxsize=1024)
def _eigen_norm(cfg: L0Config, n: int) -> tuple[float, float]:
    lam = _zero(cfg, n)
    panels = max(8, int(math.ceil(abs(lam) * cfg.l / 2.0)))
    nodes, weights = gauss_legendre(0.0, cfg.l, 16, panels)
    values = _raw_eigen(lam, cfg.l, nodes)
    norm = math.sqrt(float(np.dot(weights, np.abs(values) ** 2)))
    if not norm > 0 or not math.isfinite(norm):
        raise NumericError(f"eigenfunction {n} is not normalisable; spurious root at {lam}")
    return lam, norm


def eigenvalue0(cfg: L0Config, n: int) -> float:
    """lambda_n(0, theta)."""
    return _zero(cfg, n)


def eigenfunction0(cfg: L0Config, n: int, x, derivative: int = 0):
    """Orthonormal eigenfunction psi_n (or its x-derivative) at the points x."""
    if derivative not in (0, 1, 2, 3):
        raise InvalidInputError("derivative order must be 0..3")
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < -1e-12) or np.any(x_arr > cfg.l * (1 + 1e-12)):
        raise InvalidInputError("x must lie in [0, l]")
    lam, norm = _eigen_norm(cfg, n)
    values = _raw_eigen(lam, cfg.l, np.atleast_1d(x_arr), derivative) / norm
    return values.reshape(x_arr.shape) if x_arr.ndim else complex(values[0])


def normalization_squared(cfg: L0Config, n: int, method: str = "quadrature", N: int = 2000) -> float:
    """Squared L2 norm of u = S_2(x) S_1(l) - S_1(x) S_2(l) at lambda_n, three ways.

    ``quadrature`` integrates |u|^2 directly.  ``derivative`` uses the
    residue relation i Delta'(lambda_n) S_2(lambda_n, l) / (3 lambda_n^2).
    ``product`` uses (s_2(z) - s_2(-z))/(2i) l^2 / lambda_n^5
    times the product over the other zeros (|p| <= N), z = i lambda_n l.
    """
    lam = eigenvalue0(cfg, n)
    l = cfg.l
    if method == "quadrature":
        _, norm = _eigen_norm(cfg, n)
        return norm**2 * math.exp(2.0 * _raw_log_factor(lam, l))
    if method == "derivative":
        value = 1j * complex(delta0_derivative(cfg, lam)) * free_solution(2, lam, l) / (3.0 * lam**2)
        return float(value.real)
    if method == "product":
        if abs(n) >= N:
            raise InvalidInputError("N must exceed |n|")
        spectrum = l0_real_zeros(cfg, -N - 1, N)
        others = np.delete(spectrum.zeros, n + N + 1)
        z = 1j * lam * l
        head = (s_eval(2, z) - s_eval(2, -z)) / 2j * l**2 / lam**5
        return float((head * np.prod(1.0 - (lam / others) ** 3)).real)
    raise InvalidInputError(f"unknown method {method!r}")

def zero_mode_theta_minus_one(l: float, x):
    """Normalised eigenfunction for the eigenvalue 0 when theta = -1: c (x^2 - x l)."""
    x = np.asarray(x, dtype=float)
    return math.sqrt(30.0 / l**5) * (x**2 - x * l)


# ---------------------------------------------------------------------------
# inner products, projections and resolvent
# ---------------------------------------------------------------------------

_QUAD_ORDER = 16


def _quadrature(l: float, lam_scale: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    panels = max(16, int(math.ceil(lam_scale * l / 2.0)))
    return gauss_legendre(0.0, l, _QUAD_ORDER, panels)


def _as_function(f, grid: np.ndarray | None) -> Callable[[np.ndarray], np.ndarray]:
    """Accept a callable or samples on ``grid`` (interpolated by a cubic spline)."""
    if callable(f):
        return lambda t: np.asarray(f(t), dtype=complex)
    if grid is None:
        raise InvalidInputError("samples need their grid")
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(f, dtype=complex)
    if values.shape != grid.shape:
        raise InvalidInputError("samples and grid differ in shape")
    spline = interpolate.CubicSpline(grid, values)
    return lambda t: spline(t)


def inner_product(cfg: L0Config, f, g, grid: np.ndarray | None = None, lam_scale: float = 0.0) -> complex:
    """<f, g> = int_0^l f conj(g)."""
    nodes, weights = _quadrature(cfg.l, lam_scale)
    fv = _as_function(f, grid)(nodes)
    gv = _as_function(g, grid)(nodes)
    return complex(np.dot(weights, fv * np.conj(gv)))


def projection0(cfg: L0Config, n: int, f, grid: np.ndarray) -> np.ndarray:
    """Spectral projection <f, psi_n> psi_n, sampled on ``grid``.

    ``f`` may be a callable or samples on ``grid``.
    """
    lam = abs(eigenvalue0(cfg, n))
    psi = functools.partial(eigenfunction0, cfg, n)
    coefficient = inner_product(cfg, f, psi, grid if not callable(f) else None, lam)
    return coefficient * psi(np.asarray(grid, dtype=float))


_CLOSED_FORM_LIMIT = 8.0


def resolvent0(cfg: L0Config, lam: complex, f, grid: np.ndarray, near_threshold: float = 1e-8) -> np.ndarray:
    """Solve i y''' - lam^3 y = f with the boundary conditions, sampled on ``grid``.

    The closed-form kernel combines free solutions S_2(a) = s_2(i lam a)/(i lam)^2:
    y(x) = (i/Delta) [S_2(x-l) A - theta S_2(x) B + theta S_2(l) C(x) - S_2(-l) D(x)]
    with A = int S_2(-t) f, B = int S_2(l-t) f, C(x) = int_0^x S_2(x-t) f and
    D(x) = int_x^l S_2(x-t) f.  ``f`` is a callable or samples on ``grid``.
    The kernel terms grow like exp(sqrt3 |lam| l / 2) and cancel, so for
    |lam| l > 8 the equation is solved by multiple shooting instead.
    """
    lam = complex(lam)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise InvalidInputError("grid must be strictly increasing")
    if grid[0] < -1e-12 or grid[-1] > cfg.l * (1 + 1e-12):
        raise InvalidInputError("grid must lie inside [0, l]")
    l, theta = cfg.l, cfg.theta
    s2_l, s2_minus_l = free_solution(2, lam, l), free_solution(2, lam, -l)
    delta = -(theta * s2_l + s2_minus_l)
    if abs(delta) < near_threshold * (1.0 + abs(s2_l) + abs(s2_minus_l)):
        warnings.warn(f"lambda={lam} is within |Delta|={abs(delta):.3e} of the spectrum",
                      NearSpectrumWarning, stacklevel=2)
    fun = _as_function(f, None if callable(f) else grid)
    if abs(lam) * l > _CLOSED_FORM_LIMIT:
        cube = lam**3
        left = np.array([[1, 0, 0], [0, 0, 0], [0, -theta, 0]], dtype=complex)
        right = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=complex)
        full = np.unique(np.concatenate([[0.0], grid, [l]]))
        solution = shooting_solve(lambda x: -1j * cube, lambda x: -1j * complex(fun(np.array([x]))[0]), full,
                                  left, right, max(4, int(math.ceil(abs(lam) * l / 2.0))), max(abs(lam), 1.0))
        return solution.y[np.searchsorted(full, grid)]

    nodes, weights = _quadrature(l, abs(lam))
    fw = fun(nodes) * weights
    big_a = np.dot(free_solution(2, lam, -nodes), fw)
    big_b = np.dot(free_solution(2, lam, l - nodes), fw)
    out = np.empty(grid.shape, dtype=complex)
    for i, x in enumerate(grid):
        partial = []
        for a, b in ((0.0, x), (x, l)):
            if b - a <= 0:
                partial.append(0.0)
                continue
            t, w = gauss_legendre(a, b, _QUAD_ORDER, max(1, int(math.ceil(16 * (b - a) / l))))
            partial.append(np.dot(free_solution(2, lam, x - t), fun(t) * w))
        c_x, d_x = partial
        out[i] = (free_solution(2, lam, x - l) * big_a - theta * free_solution(2, lam, x) * big_b
                  + theta * s2_l * c_x - s2_minus_l * d_x)
    return 1j * out / delta
