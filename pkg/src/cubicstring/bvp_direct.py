"""Exponential-type solutions, the coefficients B_k and the associated jump problem.

For the equation i y''' + q y = lambda^3 y on [0, l] the exponential-type
solutions e_k(lambda, x) carry the Cauchy data (1, i lambda zeta_k,
(i lambda zeta_k)^2) at the origin and reduce to exp(i lambda zeta_k x) when
q vanishes.  The solution w(lambda, x) vanishing at both ends is expanded
as w = B_1 e_1 + B_2 e_2 + B_3 e_3, and the ratios c_2 = B_2/B_1,
c_3 = B_3/B_1 drive a sectorial jump problem for the normalised functions
E_k = e_k exp(-i lambda zeta_k x).

The module evaluates every ingredient of that jump problem (B_k, c_k, the
pole set, the canonical factor chi, the kernels D_2 and D_3), assembles the
discretised singular system and solves it.  Forward diagnostics compare
each stage with quantities obtained by direct ODE integration.

Starred functions follow f*(lambda) = conj(f(conj(lambda))).
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize

from .errors import InvalidInputError, NumericError, StiffnessError
from .gtrig import ZETA1, ZETA2, ZETA3
from .magnus import propagate
from .numerics import OdeTolerance, integrate_third_order
from .potential import Potential

__all__ = [
    "BCoefficients",
    "CanonicalSolution",
    "DEFAULT_FIT_POWERS",
    "IllConditionedError",
    "JUMP_RELATIONS",
    "JumpData",
    "JumpSolution",
    "PoleSet",
    "SingularSystem",
    "TauGrid",
    "assemble_singular_system",
    "asymptotic_integral",
    "b1_function",
    "b_coeffs",
    "build_jump_data",
    "canonical_solution",
    "coefficients_from_b1",
    "conservation_residual",
    "default_radii",
    "e_k",
    "euler_residual",
    "forward_consistency",
    "free_pole",
    "jump_residual",
    "lambda_q_zeros",
    "normalized_e",
    "ode_integral_estimate",
    "ratio_identity_residuals",
    "rearrangement_defect",
    "solve_jump",
    "tau_grid",
    "wronskian_e",
    "wronskian_e_residual",
]

SQRT3 = math.sqrt(3.0)
_ZETAS = (ZETA1, ZETA2, ZETA3)
_ODE_TOL = OdeTolerance(rel=1e-12, abs=1e-15)


def _zeta(k: int) -> complex:
    if k not in (1, 2, 3):
        raise InvalidInputError(f"index k must be 1, 2 or 3, got {k!r}")
    return _ZETAS[k - 1]


def _star(f: Callable) -> Callable:
    """The reflection f*(lambda) = conj(f(conj lambda))."""
    return lambda lam: np.conj(f(np.conj(np.asarray(lam, dtype=complex))))


# ---------------------------------------------------------------------------
# exponential-type solutions
# ---------------------------------------------------------------------------

def _normalized_table(pot: Potential, kappa: np.ndarray, grid: np.ndarray, tol: OdeTolerance):
    """E, E', E'' on ``grid`` for E = e exp(-kappa x), one column per kappa.

    With e''' = -i(lambda^3 - q) e and kappa^3 = -i lambda^3 the deviation
    u = E - 1 solves u''' + 3 kappa u'' + 3 kappa^2 u' = i q (1 + u) with zero
    Cauchy data, which keeps the small quantity E - 1 at full relative
    accuracy.
    """
    m = kappa.size
    grid = np.asarray(grid, dtype=float)
    end = float(grid[-1])
    if end == 0.0:
        ones = np.ones((grid.size, m), dtype=complex)
        zeros = np.zeros_like(ones)
        return ones, zeros, zeros.copy()

    def rhs(x, state):
        u, du, d2u = state.reshape(3, m)
        forcing = 1j * float(pot(x)) * (1.0 + u)
        return np.concatenate([du, d2u, forcing - 3.0 * kappa * d2u - 3.0 * kappa**2 * du])

    sol = integrate.solve_ivp(rhs, (0.0, end), np.zeros(3 * m, dtype=complex), method="DOP853",
                              dense_output=True, rtol=tol.rel, atol=tol.abs, max_step=tol.max_step)
    if sol.status != 0:
        raise StiffnessError(f"normalised solution integration failed: {sol.message}",
                             float(sol.t[-1]) if sol.t.size else 0.0)
    values = sol.sol(grid).reshape(3, m, grid.size).transpose(0, 2, 1)
    return 1.0 + values[0], values[1], values[2]


def _sorted_grid(x) -> tuple[np.ndarray, np.ndarray, tuple]:
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs < 0):
        raise InvalidInputError("x must be non-negative")
    order = np.argsort(xs, kind="stable")
    uniq, inverse = np.unique(xs[order], return_inverse=True)
    grid = uniq if uniq[0] == 0.0 else np.concatenate([[0.0], uniq])
    shift = 0 if uniq[0] == 0.0 else 1
    back = np.empty(xs.size, dtype=int)
    back[order] = inverse + shift
    return grid, back, np.shape(x)


def _restore(values: np.ndarray, shape: tuple):
    return complex(values[0]) if shape == () else values.reshape(shape)


def normalized_e(pot: Potential, k: int, lam, x, tol: OdeTolerance = _ODE_TOL):
    """E_k(lambda, x) = e_k(lambda, x) exp(-i lambda zeta_k x).

    ``lam`` may be an array, in which case all values are integrated in one
    batched run and the result has shape ``lam.shape + x.shape``.
    """
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=complex))
    kappa = 1j * lam_arr.ravel() * _zeta(k)
    grid, back, shape = _sorted_grid(x)
    if grid[-1] > pot.l * (1 + 1e-12):
        raise InvalidInputError(f"x must lie in [0, {pot.l}]")
    table = _normalized_table(pot, kappa, grid, tol)[0][back]  # (len(x), m)
    if np.ndim(lam) == 0:
        return _restore(table[:, 0], shape)
    return table.T.reshape(np.shape(lam) + shape)


def e_k(pot: Potential, k: int, lam: complex, x, starred: bool = False, tol: OdeTolerance = _ODE_TOL):
    """Values and first derivatives of e_k(lambda, .) (or of e_k*) at ``x``."""
    lam = complex(lam)
    if starred:
        value, derivative = e_k(pot, k, lam.conjugate(), x, tol=tol)
        return np.conj(value), np.conj(derivative)
    kappa = 1j * lam * _zeta(k)
    grid, back, shape = _sorted_grid(x)
    if grid[-1] > pot.l * (1 + 1e-12):
        raise InvalidInputError(f"x must lie in [0, {pot.l}]")
    big_e, d_e, _ = _normalized_table(pot, np.array([kappa]), grid, tol)
    growth = np.exp(kappa * grid)
    value = (big_e[:, 0] * growth)[back]
    derivative = ((d_e[:, 0] + kappa * big_e[:, 0]) * growth)[back]
    return _restore(value, shape), _restore(derivative, shape)


def _hat_table(pot: Potential, lam: complex, grid: np.ndarray):
    """(s^_p, s^_p') for p = 0, 1, 2 on ``grid`` by Runge-Kutta, s^_p = (i lambda)^p s_p."""
    coeff = lambda t: -1j * (lam**3 - float(pot(t)))
    traj = integrate_third_order(coeff, np.eye(3, dtype=complex), grid, _ODE_TOL)
    powers = (1j * lam) ** np.arange(3)
    return traj.y * powers, traj.dy * powers


def euler_residual(pot: Potential, k: int, lam: complex, x: float) -> float:
    """|e_k - (s^_0 + zeta_k s^_1 + zeta_k^2 s^_2)| relative to max(1, |e_k|)."""
    value, _ = e_k(pot, k, lam, x)
    hat, _ = _hat_table(pot, complex(lam), np.array([0.0, float(x)]) if x > 0 else np.array([0.0]))
    z = _zeta(k)
    combo = hat[-1, 0] + z * hat[-1, 1] + z**2 * hat[-1, 2]
    return abs(value - combo) / max(1.0, abs(value))


# pair (k, s) -> (cyclic partner j, coefficient zeta) in W_{k,s} = sqrt(3) lambda zeta e_j*
_WRONSKIAN_RULES = {(1, 2): (2, ZETA3), (2, 3): (1, ZETA1), (3, 1): (3, ZETA2)}


def wronskian_e(pot: Potential, lam: complex, x, pair: tuple[int, int]):
    """W^e_{k,s} = e_k e_s' - e_s e_k' at ``x``."""
    k, s = pair
    ek, dek = e_k(pot, k, lam, x)
    es, des = e_k(pot, s, lam, x)
    return ek * des - es * dek


def wronskian_e_residual(pot: Potential, lam: complex, x: float, pair: tuple[int, int] = (1, 2)) -> float:
    """Defect of W^e_{k,s} = sqrt(3) lambda zeta e_j* for the cyclic pairs.

    The reversed pairs follow from antisymmetry.
    """
    k, s = pair
    sign = 1.0
    if (k, s) not in _WRONSKIAN_RULES:
        if (s, k) not in _WRONSKIAN_RULES:
            raise InvalidInputError(f"pair must be a cyclic pair of distinct indices, got {pair!r}")
        k, s, sign = s, k, -1.0
    j, zeta = _WRONSKIAN_RULES[(k, s)]
    lam = complex(lam)
    w = sign * wronskian_e(pot, lam, x, (k, s))
    partner, _ = e_k(pot, j, lam, x, starred=True)
    expected = sign * SQRT3 * lam * zeta * partner
    return float(abs(w - expected) / max(1.0, abs(expected)))


# ---------------------------------------------------------------------------
# coefficients B_k and ratios c_k
# ---------------------------------------------------------------------------

def _free_b1(lam, x: float):
    """(2i/(3 sqrt3)) exp(-i lambda x/2) sinh(sqrt3 lambda x/2), the value of B_1 for q = 0."""
    lam = np.asarray(lam, dtype=complex)
    return 2j / (3.0 * SQRT3) * np.exp(-0.5j * lam * x) * np.sinh(0.5 * SQRT3 * lam * x)


def b1_function(pot: Potential, x: float | None = None, n_steps: int | None = None) -> Callable:
    """Vectorised lambda -> B_1(lambda, x) = (s^_1(lambda, x) - s^_2(lambda, x)) / 3.

    Evaluated with the batched Magnus propagator, so complex arguments with
    large |lambda| x are cheap; the zero potential uses the closed form.
    ``x`` defaults to l.  In the lower half-plane B_1 is a small difference
    of large solutions and loses about 1.5 |Im lambda| x / ln(10) digits.
    """
    end = pot.l if x is None else float(x)
    if pot.is_zero:
        return lambda lam: (complex(_free_b1(lam, end)) if np.ndim(lam) == 0 else _free_b1(lam, end))

    def b1(lam):
        lam_arr = np.asarray(lam, dtype=complex)
        flat = lam_arr.ravel()
        if flat.size == 0:
            return lam_arr.copy()
        prop = propagate(pot, flat, x_end=end, n_steps=n_steps)
        s1, log1 = prop.solution_log(1)
        s2, _ = prop.solution_log(2)
        il = 1j * flat
        out = (il * s1 - il**2 * s2) / 3.0 * np.exp(log1)
        return complex(out[0]) if lam_arr.ndim == 0 else out.reshape(lam_arr.shape)

    return b1


@dataclass(frozen=True)
class BCoefficients:
    B1: np.ndarray
    B2: np.ndarray
    B3: np.ndarray

    @property
    def c2(self) -> np.ndarray:
        return self.B2 / self.B1

    @property
    def c3(self) -> np.ndarray:
        return self.B3 / self.B1


def coefficients_from_b1(b1: Callable, lam, pole_tol: float = 1e-13) -> BCoefficients:
    """B_1, B_2(lambda) = B_1(lambda zeta_2), B_3(lambda) = B_1(lambda zeta_3).

    Raises :class:`NumericError` where B_1 vanishes (a pole of c_2, c_3).
    """
    lam = np.asarray(lam, dtype=complex)
    b1v, b2v, b3v = (np.asarray(b1(lam * z), dtype=complex) for z in _ZETAS)
    scale = np.maximum(np.abs(b2v), np.abs(b3v))
    if np.any(np.abs(b1v) <= pole_tol * scale):
        raise NumericError("B_1 vanishes: lambda is a pole of the ratios c_2, c_3")
    return BCoefficients(b1v, b2v, b3v)


def b_coeffs(pot: Potential, lam) -> tuple:
    """(B_1, B_2, B_3, c_2, c_3) at ``lam`` for the potential ``pot``."""
    c = coefficients_from_b1(b1_function(pot), lam)
    return c.B1, c.B2, c.B3, c.c2, c.c3


def _ratio_function(b1: Callable, zeta: complex) -> Callable:
    """lambda -> B_1(lambda zeta) / B_1(lambda), with its limit zeta at lambda = 0.

    B_1 vanishes simply at the origin with B_1'(0) = i s_1(0, l) / 3, so the
    ratio tends to zeta there.
    """

    def ratio(lam):
        lam = np.asarray(lam, dtype=complex)
        at_zero = lam == 0
        safe = np.where(at_zero, 1.0, lam)
        value = np.where(at_zero, zeta, np.asarray(b1(safe * zeta)) / np.asarray(b1(safe)))
        return complex(value) if value.ndim == 0 else value

    return ratio


def _c2(b1: Callable) -> Callable:
    return _ratio_function(b1, ZETA2)


def _c3(b1: Callable) -> Callable:
    return _ratio_function(b1, ZETA3)


def ratio_identity_residuals(b1: Callable, lam) -> tuple[np.ndarray, np.ndarray]:
    """Defects of c_2(l) c_2(l zeta_2) c_2(l zeta_3) = 1 and c_2(l zeta_3) c_3(l) = 1."""
    lam = np.asarray(lam, dtype=complex)
    c2, c3 = _c2(b1), _c3(b1)
    first = c2(lam) * c2(lam * ZETA2) * c2(lam * ZETA3) - 1.0
    second = c2(lam * ZETA3) * c3(lam) - 1.0
    return np.abs(first), np.abs(second)


def conservation_residual(pot: Potential, lam) -> np.ndarray:
    """Defect of zeta_3 c_2 c_3* + zeta_2 c_3 c_2* + 1 = s^_2 s^_2* / (3 B_1 B_1*).

    Returned relative to max(1, |right-hand side|).
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    b1 = b1_function(pot)
    c2, c3 = _c2(b1), _c3(b1)

    def hat2(z):
        prop = propagate(pot, z.ravel())
        s2, log = prop.solution_log(2)
        return ((1j * z.ravel()) ** 2 * s2 * np.exp(log)).reshape(z.shape)

    lhs = ZETA3 * c2(lam) * _star(c3)(lam) + ZETA2 * c3(lam) * _star(c2)(lam) + 1.0
    rhs = hat2(lam) * _star(hat2)(lam) / (3.0 * b1(lam) * _star(b1)(lam))
    return np.abs(lhs - rhs) / np.maximum(1.0, np.abs(rhs))


# ---------------------------------------------------------------------------
# the pole set
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PoleSet:
    """Zeros mu_n of B_1* near the free values mu_n(0) = 2 pi i n / (sqrt(3) l).

    ``indices`` holds n for every located zero.  Negative n give the zeros
    with Im mu < 0 that enter the jump problem (``lower``), ordered by
    increasing |mu|.  ``residuals`` are |B_1| at the conjugate roots divided
    by its size a quarter spacing away.  ``a`` and ``b`` are the residue constants
    B_1'(mu)/B_3(mu) and B_1'(mu)/B_2(mu).
    """

    l: float
    indices: np.ndarray
    mu: np.ndarray
    residuals: np.ndarray
    b1_derivative: np.ndarray
    a: np.ndarray
    b: np.ndarray

    @property
    def lower_mask(self) -> np.ndarray:
        return self.indices < 0

    @property
    def lower(self) -> np.ndarray:
        return self.mu[self.lower_mask]

    @property
    def max_real_part(self) -> float:
        return float(np.max(np.abs(self.mu.real))) if self.mu.size else 0.0

    def free_values(self) -> np.ndarray:
        return np.array([free_pole(int(n), self.l) for n in self.indices])


def free_pole(n: int, l: float) -> complex:
    """mu_n(0) = 2 pi i n / (sqrt(3) l)."""
    return 2j * math.pi * n / (SQRT3 * l)


def _b1_roots(b1: Callable, seeds: np.ndarray, spacing: float, indices: np.ndarray, tol: float,
              residual_tol: float) -> np.ndarray:
    """Zeros of B_1 near every seed by one vectorised secant iteration, with scaled residuals.

    A root is accepted when B_1 there, relative to its size a quarter
    spacing away, is below ``residual_tol``; the secant's own step test is
    not used because B_1 obtained from data carries noise well above ``tol``.
    """
    scale = np.abs(b1(seeds + 0.25j * spacing)) + np.abs(b1(seeds - 0.25 * spacing))

    def g(lam):
        return b1(lam) / scale

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            roots = optimize.newton(g, seeds, x1=seeds + 1e-3 * spacing * (1 + 1j),
                                    tol=tol * max(1.0, float(np.max(np.abs(seeds)))), maxiter=100)
        except (RuntimeError, OverflowError, ZeroDivisionError) as exc:
            raise NumericError(f"zeros of B_1*: secant iteration failed ({exc})") from exc
    roots = np.atleast_1d(np.asarray(roots, dtype=complex))
    residual = np.abs(g(roots))
    for n, root, seed, res in zip(indices, roots, seeds, residual):
        if not np.isfinite(root) or not res <= residual_tol:
            raise NumericError(f"zero of B_1* near index {n}: secant iteration did not converge "
                               f"(scaled residual {res:.3g})")
        if abs(root - seed) > 0.4 * spacing:
            raise NumericError(f"zero of B_1* for index {n} left its seed window (|drift|={abs(root - seed):.3g})")
    return roots, residual


def lambda_q_zeros(b1: Callable, l: float, count: int, include_upper: bool = False,
                   tol: float = 1e-14, residual_tol: float = 1e-8) -> PoleSet:
    """Zeros of B_1*(lambda, l) for n = -1 .. -count (and n = 1 .. count on request).

    Each zero is the conjugate of a zero of B_1 found by a complex secant
    iteration from the conjugated free seed.  The zeros with Im mu < 0 come
    from B_1 in the upper half-plane, where it is well conditioned.  The
    upper zeros need B_1 in the lower half-plane, where it is a small
    difference of large solutions, so for a nonzero potential they are only
    reliable for moderate |n|.  A zero that drifts farther than 0.4 of the
    free spacing from its seed is reported as a failed seed window, and one
    whose scaled residual exceeds ``residual_tol`` as unconverged.  The
    residue constants use central differences of B_1 with step 1e-5 |mu|.
    """
    if count < 1:
        raise InvalidInputError("count must be positive")
    spacing = 2.0 * math.pi / (SQRT3 * l)
    indices = list(range(-1, -count - 1, -1))
    if include_upper:
        indices += list(range(1, count + 1))
    indices = np.array(indices)
    seeds = np.conj(np.array([free_pole(int(n), l) for n in indices]))
    roots, residuals = _b1_roots(b1, seeds, spacing, indices, tol, residual_tol)
    mu = np.conj(roots)
    step = 1e-5 * np.abs(mu)
    derivative = (b1(mu + step) - b1(mu - step)) / (2.0 * step)
    c = coefficients_from_b1(b1, mu, pole_tol=0.0)
    return PoleSet(float(l), indices, mu, residuals, derivative, derivative / c.B3, derivative / c.B2)


# ---------------------------------------------------------------------------
# canonical solution chi
# ---------------------------------------------------------------------------

def _panel_nodes(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()


@dataclass(frozen=True)
class CanonicalSolution:
    """chi(lambda) = exp{(1/2 pi i) int_0^T L(tau) / (tau + i lambda) dtau}, L = ln d(i tau).

    L is the continuous logarithm of the sampled datum, with the branch at
    the cut-off T taken as the principal one.  The Cauchy integral is
    evaluated by singularity subtraction at the projection of z = -i lambda
    onto [0, T], which keeps it accurate up to the contour and yields the
    Plemelj boundary values.  ``tail`` is |L(T)|, the size of the truncated
    datum at the cut-off.
    """

    T: float
    nodes: np.ndarray
    weights: np.ndarray
    log_values: np.ndarray
    datum: Callable[[np.ndarray], np.ndarray]
    phase_grid: np.ndarray
    phase_values: np.ndarray

    @property
    def tail(self) -> float:
        return float(abs(self.log_values[-1]))

    def log_datum(self, tau) -> np.ndarray:
        """Continuous logarithm of d(i tau) at arbitrary points of [0, T]."""
        tau = np.asarray(tau, dtype=float)
        d = np.asarray(self.datum(tau), dtype=complex)
        guess = np.interp(tau, self.phase_grid, self.phase_values)
        angle = np.angle(d)
        angle = angle + 2.0 * np.pi * np.round((guess - angle) / (2.0 * np.pi))
        return np.log(np.abs(d)) + 1j * angle

    def cauchy(self, z) -> np.ndarray:
        """int_0^T L(tau) / (tau - z) dtau for z off [0, T]."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        anchor = np.clip(z.real, 0.0, self.T)
        l_anchor = self.log_datum(anchor)
        diff = self.nodes[None, :] - z[:, None]
        smooth = ((self.log_values[None, 1:-1] - l_anchor[:, None]) / diff) @ self.weights
        return smooth + l_anchor * np.log((self.T - z) / (-z))

    def __call__(self, lam):
        lam_arr = np.asarray(lam, dtype=complex)
        value = np.exp(self.cauchy(-1j * lam_arr.ravel()) / (2j * math.pi))
        return complex(value[0]) if lam_arr.ndim == 0 else value.reshape(lam_arr.shape)


def canonical_solution(datum: Callable[[np.ndarray], np.ndarray], T: float, panels: int | None = None,
                       order: int = 16, max_refinements: int = 4, oscillation: float = 0.0) -> CanonicalSolution:
    """Build chi for the boundary datum tau -> d(i tau, x) on [0, T].

    ``oscillation`` is an estimate of the phase speed of d used to size the
    panels.  The grid is refined until consecutive samples differ in phase
    by less than pi/2; if that fails the continuous logarithm is ambiguous
    and :class:`NumericError` is raised.
    """
    if not T > 0:
        raise InvalidInputError("cut-off T must be positive")
    n_panels = panels if panels is not None else max(64, int(math.ceil(2.0 * T * (1.0 + oscillation) / math.pi)))
    for _ in range(max_refinements + 1):
        # quadratic grading clusters panels near tau = 0, where d has its endpoint behaviour
        edges = T * (np.arange(n_panels + 1) / n_panels) ** 2
        nodes, weights = _panel_nodes(edges, order)
        grid = np.concatenate([[0.0], nodes, [T]])
        d = np.asarray(datum(grid), dtype=complex)
        if not np.all(np.isfinite(d)) or np.any(d == 0):
            raise NumericError("boundary datum of the canonical solution is zero or non-finite")
        angle = np.angle(d)
        steps = np.angle(d[1:] / d[:-1])
        if np.max(np.abs(steps)) < 0.5 * math.pi:
            phase = angle[0] + np.concatenate([[0.0], np.cumsum(steps)])
            phase -= 2.0 * np.pi * np.round(phase[-1] / (2.0 * np.pi) - (angle[-1] / (2.0 * np.pi)))
            logs = np.log(np.abs(d)) + 1j * phase
            return CanonicalSolution(float(T), nodes, weights, logs, datum, grid, phase)
        n_panels *= 2
    raise NumericError("log-branch of the boundary datum could not be resolved by grid refinement")


# ---------------------------------------------------------------------------
# jump data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JumpData:
    """Inputs of the jump problem derived from a single function B_1(lambda).

    ``b1`` is vectorised over lambda and evaluated at x = l.  ``T`` is the
    cut-off of every tau integral.  Canonical solutions are cached per x.
    """

    l: float
    b1: Callable
    poles: PoleSet
    T: float
    potential: Potential | None = None
    _chi_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def B(self, k: int, lam):
        return self.b1(np.asarray(lam, dtype=complex) * _zeta(k))

    def c2(self, lam):
        return _c2(self.b1)(lam)

    def c3(self, lam):
        return _c3(self.b1)(lam)

    def c2_star(self, lam):
        return _star(_c2(self.b1))(lam)

    def c3_star(self, lam):
        return _star(_c3(self.b1))(lam)

    def datum(self, tau, x: float):
        """d(i tau, x) = -zeta_2 exp(-sqrt(3) i tau x) c_2*(i tau zeta_3)."""
        tau = np.asarray(tau, dtype=float)
        return -ZETA2 * np.exp(-1j * SQRT3 * tau * x) * self.c2_star(1j * tau * ZETA3)

    def canonical(self, x: float) -> CanonicalSolution:
        key = round(float(x), 14)
        if key not in self._chi_cache:
            self._chi_cache[key] = canonical_solution(lambda tau: self.datum(tau, x), self.T,
                                                      oscillation=SQRT3 * x / 2.0)
        return self._chi_cache[key]

    def chi(self, lam, x: float):
        return self.canonical(x)(lam)

    def D3(self, lam, x: float):
        """c_2*(lambda) chi^{-1}(lambda zeta_2, x) exp(-sqrt(3) zeta_3 lambda x)."""
        lam = np.asarray(lam, dtype=complex)
        return self.c2_star(lam) / self.chi(lam * ZETA2, x) * np.exp(-SQRT3 * ZETA3 * lam * x)

    def D2(self, lam, x: float):
        """c_3*(lambda) chi^{-1}(lambda zeta_3, x) exp(sqrt(3) zeta_2 lambda x)."""
        lam = np.asarray(lam, dtype=complex)
        return self.c3_star(lam) / self.chi(lam * ZETA3, x) * np.exp(SQRT3 * ZETA2 * lam * x)


def default_cutoff(l: float, poles: PoleSet) -> float:
    """T = max(40 / l, 4 max |mu_n|)."""
    top = float(np.max(np.abs(poles.mu))) if poles.mu.size else 0.0
    return max(40.0 / l, 4.0 * top)


def build_jump_data(source: Potential | Callable, l: float | None = None, n_poles: int = 12,
                    T: float | None = None, residual_tol: float = 1e-8) -> JumpData:
    """Jump data from a potential (forward use) or from a B_1 callable (inverse use)."""
    if isinstance(source, Potential):
        pot, b1, length = source, b1_function(source), source.l
    else:
        if l is None:
            raise InvalidInputError("l is required when B_1 is given as a callable")
        pot, b1, length = None, source, float(l)
    poles = lambda_q_zeros(b1, length, n_poles, residual_tol=residual_tol)
    cutoff = default_cutoff(length, poles) if T is None else float(T)
    return JumpData(length, b1, poles, cutoff, pot)


# ---------------------------------------------------------------------------
# forward checks of the jump relations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Forward:
    """All ODE quantities at one (lambda, x) needed by the jump relations."""

    lam: complex
    x: float
    e: tuple  # e_k(lambda, x)
    de: tuple
    w: complex
    dw: complex
    b: tuple  # B_1, B_2, B_3 at lambda


def _forward(pot: Potential, lam: complex, x: float) -> _Forward:
    lam = complex(lam)
    grid = np.array([0.0, x, pot.l]) if 0 < x < pot.l else np.array([0.0, pot.l])
    hat, dhat = _hat_table(pot, lam, grid)
    ix = 1 if 0 < x < pot.l else (0 if x == 0 else 1)
    w = hat[ix, 2] * hat[-1, 1] - hat[ix, 1] * hat[-1, 2]
    dw = dhat[ix, 2] * hat[-1, 1] - dhat[ix, 1] * hat[-1, 2]
    e, de = zip(*(e_k(pot, k, lam, x) for k in (1, 2, 3)))
    # B_k from the end values: s^_p = (1/3) sum_k zeta_k^{-p} e_k
    s1, s2 = hat[-1, 1], hat[-1, 2]
    b = tuple((z.conjugate() ** 2 * s1 - z.conjugate() * s2) / 3.0 for z in _ZETAS)
    return _Forward(lam, float(x), tuple(e), tuple(de), complex(w), complex(dw), b)


def _omega(fw: _Forward, p: int, s: int) -> complex:
    """omega_{p,s} = omega_p e_s' - omega_p' e_s with omega_p = w / B_p."""
    bp = fw.b[p - 1]
    return (fw.w * fw.de[s - 1] - fw.dw * fw.e[s - 1]) / bp


def _ratio(fw: _Forward, top: int, bottom: int) -> complex:
    return fw.b[top - 1] / fw.b[bottom - 1]


# c_2(lambda zeta) and c_3(lambda zeta) as ratios of B_k(lambda):
#   c_2(l)=B2/B1, c_2(l z2)=B3/B2, c_2(l z3)=B1/B3; c_3(l)=B3/B1, c_3(l z2)=B1/B2, c_3(l z3)=B2/B3
_ADJOINT_RELATIONS = {
    # name: (ratio (top, bottom), starred e on the left, coefficient and starred e on the right,
    #        omega sign, omega coefficient, omega pair)
    "c2_rot0": ((2, 1), 1, ZETA2, 3, +1.0, ZETA1, (1, 3)),
    "c2_rot1": ((3, 2), 3, ZETA2, 2, +1.0, ZETA3, (2, 1)),
    "c2_rot2": ((1, 3), 2, ZETA2, 1, +1.0, ZETA2, (3, 2)),
    "c3_rot0": ((3, 1), 1, ZETA3, 2, -1.0, ZETA1, (1, 2)),
    "c3_rot1": ((1, 2), 3, ZETA3, 1, -1.0, ZETA3, (2, 3)),
    "c3_rot2": ((2, 3), 2, ZETA3, 3, -1.0, ZETA2, (3, 1)),
}

# Normalised ("jump") forms: zeta e^{i lam (zeta_a - zeta_b) x} c*(rotated) E_a = E_b - sign f,
# obtained by starring an adjoint relation.  name: (adjoint relation, zeta prefactor, a, b)
_JUMP_FORMS = {
    "f12": ("c3_rot0", ZETA3, 1, 2),
    "f23": ("c3_rot1", ZETA3, 3, 1),
    "f31": ("c3_rot2", ZETA3, 2, 3),
    "g13": ("c2_rot0", ZETA2, 1, 3),
    "g21": ("c2_rot1", ZETA2, 3, 2),
    "g32": ("c2_rot2", ZETA2, 2, 1),
}

JUMP_RELATIONS = tuple(_ADJOINT_RELATIONS) + tuple(_JUMP_FORMS)


def _adjoint_sides(fw: _Forward, fw_conj: _Forward, name: str) -> tuple[complex, complex]:
    """Both sides of an adjoint relation at lambda; starred e_k come from conj(lambda)."""
    (top, bottom), left, zeta_r, right, sign, zeta_w, (p, s) = _ADJOINT_RELATIONS[name]
    e_star = [np.conj(v) for v in fw_conj.e]
    lhs = _ratio(fw, top, bottom) * e_star[left - 1]
    rhs = zeta_r * e_star[right - 1] + sign * zeta_w / (SQRT3 * fw.lam) * _omega(fw, p, s)
    return lhs, rhs


def jump_residual(pot: Potential, relation: str, lam: complex, x: float) -> float:
    """Relative defect of one of the twelve jump relations, all terms by ODE integration.

    ``c2_rot*`` and ``c3_rot*`` are the adjoint relations
    c_2(lambda zeta) e_j* = zeta_2 e_k* + ... omega_{p,s} and their c_3
    counterparts; ``f12, f23, f31, g13, g21, g32`` are the same relations
    starred and rewritten for the normalised functions E_k.
    """
    lam = complex(lam)
    x = float(x)
    if relation in _ADJOINT_RELATIONS:
        fw, fw_conj = _forward(pot, lam, x), _forward(pot, lam.conjugate(), x)
        lhs, rhs = _adjoint_sides(fw, fw_conj, relation)
    elif relation in _JUMP_FORMS:
        base, zeta, _, b = _JUMP_FORMS[relation]
        # starring the adjoint relation taken at conj(lambda), then scaling by
        # zeta exp(-i lambda zeta_b x), gives the normalised form
        fw_c, fw = _forward(pot, lam.conjugate(), x), _forward(pot, lam, x)
        lhs_c, rhs_c = _adjoint_sides(fw_c, fw, base)
        scale = zeta * np.exp(-1j * lam * _zeta(b) * x)
        lhs, rhs = scale * np.conj(lhs_c), scale * np.conj(rhs_c)
    else:
        raise InvalidInputError(f"unknown relation {relation!r}; choose from {JUMP_RELATIONS}")
    return float(abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs)))


def rearrangement_defect(pot: Potential, lam: complex, x: float) -> float:
    """Difference of two B-scaled forms of the first c_2 and second c_3 relations.

    Form A: B_2 e_1* - zeta_2 B_1 e_3* - (1/(sqrt3 lambda)) W;
    form B: B_1 e_3* - zeta_3 B_2 e_1* + (zeta_3/(sqrt3 lambda)) W,
    with W = w e_3' - w' e_3.  The two coincide up to the factor -zeta_3.
    """
    lam = complex(lam)
    fw, fw_conj = _forward(pot, lam, x), _forward(pot, lam.conjugate(), x)
    e1s, e3s = np.conj(fw_conj.e[0]), np.conj(fw_conj.e[2])
    b1, b2, _ = fw.b
    wr = fw.w * fw.de[2] - fw.dw * fw.e[2]
    form_a = b2 * e1s - ZETA2 * b1 * e3s - wr / (SQRT3 * lam)
    form_b = b1 * e3s - ZETA3 * b2 * e1s + ZETA3 * wr / (SQRT3 * lam)
    scale = max(1.0, abs(b1 * e3s), abs(b2 * e1s), abs(wr / lam))
    return float(abs(form_b + ZETA3 * form_a) / scale)


# ---------------------------------------------------------------------------
# discretised singular system
# ---------------------------------------------------------------------------

def _differentiation_matrix(x: np.ndarray) -> np.ndarray:
    """Barycentric differentiation matrix for interpolation on the nodes x."""
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    bary = 1.0 / np.prod(diff, axis=1)
    mat = (bary[None, :] / bary[:, None]) / diff
    np.fill_diagonal(mat, 0.0)
    np.fill_diagonal(mat, -mat.sum(axis=1))
    return mat


@dataclass(frozen=True)
class TauGrid:
    """Composite Gauss-Legendre nodes on (0, T] with per-panel differentiation."""

    T: float
    nodes: np.ndarray
    weights: np.ndarray
    derivative: np.ndarray  # block-diagonal differentiation matrix

    @property
    def size(self) -> int:
        return self.nodes.size


def tau_grid(T: float, M: int = 200, order: int = 10) -> TauGrid:
    """M nodes in M/order panels, graded quadratically towards tau = 0."""
    if M < order or M % order:
        raise InvalidInputError(f"M must be a positive multiple of the panel order {order}")
    panels = M // order
    edges = T * (np.arange(panels + 1) / panels) ** 2
    nodes, weights = _panel_nodes(edges, order)
    blocks = [_differentiation_matrix(nodes[j * order:(j + 1) * order]) for j in range(panels)]
    derivative = np.zeros((M, M))
    for j, block in enumerate(blocks):
        derivative[j * order:(j + 1) * order, j * order:(j + 1) * order] = block
    return TauGrid(float(T), nodes, weights, derivative)


def _pv_matrix(grid: TauGrid) -> np.ndarray:
    """Matrix P with (P g)_i approximating PV int_0^T g(tau) / (tau - t_i) dtau.

    Singularity subtraction: sum_{j != i} w_j (g_j - g_i)/(tau_j - t_i), the
    diagonal limit w_i g'(t_i) from the panel differentiation matrix, and
    g_i ln((T - t_i)/t_i).
    """
    t, w = grid.nodes, grid.weights
    diff = t[None, :] - t[:, None]
    np.fill_diagonal(diff, 1.0)
    mat = w[None, :] / diff
    np.fill_diagonal(mat, 0.0)
    mat[np.diag_indices_from(mat)] = -mat.sum(axis=1) + np.log((grid.T - t) / t)
    mat += w[:, None] * grid.derivative
    return mat


@dataclass(frozen=True)
class SingularSystem:
    """Dense system A z = rhs in z = (E_2(i tau_j), E_3(i tau_j), r_n, p_n)."""

    x: float
    grid: TauGrid
    matrix: np.ndarray
    rhs: np.ndarray
    n_poles: int

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def condition(self) -> float:
        return float(np.linalg.cond(self.matrix))

    def residual(self, z: np.ndarray) -> float:
        return float(np.linalg.norm(self.matrix @ z - self.rhs) / max(np.linalg.norm(self.rhs), 1e-300))


def _kernels(jump: JumpData, x: float, tau: np.ndarray):
    """D_3(i zeta_2 tau, x) and D_2(i zeta_3 tau, x) on the tau nodes."""
    return jump.D3(1j * ZETA2 * tau, x), jump.D2(1j * ZETA3 * tau, x)


def assemble_singular_system(jump: JumpData, x: float, grid: TauGrid | None = None,
                             n_poles: int | None = None) -> SingularSystem:
    """Discretise the two boundary-value equations and the 2 N residue equations.

    Rows 0..M-1 collocate the equation for E_2(i t, x) chi^{-1}(i t zeta_2),
    rows M..2M-1 the one for E_3(i t, x) chi^{-1}(i t zeta_3); the remaining
    rows are the residue conditions at zeta_3 mu_m and zeta_2 mu_m, written
    with the prefactor 1/B_1'(mu_m) and the right-hand factors
    B_1'(mu_m)/B_2*(mu_m), B_1'(mu_m)/B_3*(mu_m).
    """
    grid = tau_grid(jump.T) if grid is None else grid
    mu = jump.poles.lower
    if n_poles is not None:
        mu = mu[:n_poles]
    n = mu.size
    M = grid.size
    t, w = grid.nodes, grid.weights
    d3, d2 = _kernels(jump, x, t)
    chi = jump.canonical(x)
    pv = _pv_matrix(grid)
    c = 1.0 / (2j * math.pi)
    size = 2 * M + 2 * n
    A = np.zeros((size, size), dtype=complex)
    rhs = np.zeros(size, dtype=complex)
    e2, e3, rr, pp = slice(0, M), slice(M, 2 * M), slice(2 * M, 2 * M + n), slice(2 * M + n, size)

    # first boundary equation, lambda -> i zeta_2 t
    lam2 = 1j * ZETA2 * t
    A[e2, e2] = np.diag(1.0 / chi(lam2)) - ZETA3 * c * w[None, :] * d3[None, :] / (t[None, :] - ZETA3 * t[:, None])
    A[e2, e3] = ZETA2 * c * pv * d2[None, :] + np.diag(0.5 * ZETA2 * d2)
    A[e2, rr] = -1.0 / (lam2[:, None] - ZETA2 * mu[None, :])
    A[e2, pp] = -1.0 / (lam2[:, None] - ZETA3 * mu[None, :])
    rhs[e2] = 1.0

    # second boundary equation, lambda -> i zeta_3 t
    lam3 = 1j * ZETA3 * t
    A[e3, e2] = -ZETA3 * c * pv * d3[None, :] - np.diag(0.5 * ZETA3 * d3)
    A[e3, e3] = np.diag(1.0 / chi(lam3)) + ZETA2 * c * w[None, :] * d2[None, :] / (t[None, :] - ZETA2 * t[:, None])
    A[e3, rr] = -1.0 / (lam3[:, None] - ZETA2 * mu[None, :])
    A[e3, pp] = -1.0 / (lam3[:, None] - ZETA3 * mu[None, :])
    rhs[e3] = 1.0

    if n:
        mask = jump.poles.lower_mask
        dot_b1 = jump.poles.b1_derivative[mask][:n]
        b2_star = np.conj(jump.B(2, np.conj(mu)))
        b3_star = np.conj(jump.B(3, np.conj(mu)))
        chi_mu = chi(mu)
        off = ~np.eye(n, dtype=bool)
        for rows, at, own, own_factor in (
            (slice(2 * M, 2 * M + n), ZETA3 * mu, pp,
             -ZETA3 * np.exp(-SQRT3 * ZETA2 * mu * x) * chi(ZETA3 * mu) / chi_mu * dot_b1 / b2_star),
            (slice(2 * M + n, size), ZETA2 * mu, rr,
             -ZETA2 * np.exp(SQRT3 * ZETA3 * mu * x) * chi(ZETA2 * mu) / chi_mu * dot_b1 / b3_star),
        ):
            # regular part of 1 + b(lambda) + integrals at lambda = at_m, minus the own-pole coefficient
            gap_r = at[:, None] - ZETA2 * mu[None, :]
            gap_p = at[:, None] - ZETA3 * mu[None, :]
            if own is rr:
                to_r = np.where(off, 1.0 / np.where(off, gap_r, 1.0), 0.0)
                to_p = 1.0 / gap_p
            else:
                to_r = 1.0 / gap_r
                to_p = np.where(off, 1.0 / np.where(off, gap_p, 1.0), 0.0)
            A[rows, rr] = to_r
            A[rows, pp] = to_p
            A[rows, own] -= np.diag(own_factor)
            A[rows, e2] = ZETA3 * c * w[None, :] * d3[None, :] / (t[None, :] + 1j * ZETA2 * at[:, None])
            A[rows, e3] = -ZETA2 * c * w[None, :] * d2[None, :] / (t[None, :] + 1j * ZETA3 * at[:, None])
            rhs[rows] = -1.0
    return SingularSystem(float(x), grid, A, rhs, n)


@dataclass(frozen=True)
class JumpSolution:
    x: float
    tau_grid: np.ndarray
    weights: np.ndarray
    E2: np.ndarray
    E3: np.ndarray
    r: np.ndarray
    p: np.ndarray
    residual: float
    condition: float
    jump: JumpData = field(repr=False)

    def E1(self, lam):
        """E_1(lambda, x) = chi(lambda) [1 + b(lambda) + Cauchy integrals] for lambda in Omega_1."""
        return _e1_from(self.jump, self.x, self.tau_grid, self.weights, self.E2, self.E3, self.r, self.p, lam)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tau", "E2_re", "E2_im", "E3_re", "E3_im"])
            for row in zip(self.tau_grid, self.E2, self.E3):
                writer.writerow([repr(float(row[0])), repr(row[1].real), repr(row[1].imag),
                                 repr(row[2].real), repr(row[2].imag)])

    def diagnostics(self) -> dict:
        mu = self.jump.poles.lower[: self.r.size]
        return {
            "x": self.x,
            "condition": self.condition,
            "residual": self.residual,
            "cutoff": self.jump.T,
            "chi_tail": self.jump.canonical(self.x).tail,
            "poles": [{"re": float(m.real), "im": float(m.imag)} for m in mu],
            "r": [{"re": float(v.real), "im": float(v.imag)} for v in self.r],
            "p": [{"re": float(v.real), "im": float(v.imag)} for v in self.p],
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.diagnostics(), fh, indent=2)


def _e1_from(jump: JumpData, x, tau, weights, e2, e3, r, p, lam):
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=complex))
    mu = jump.poles.lower[: r.size]
    d3, d2 = _kernels(jump, x, tau)
    c = 1.0 / (2j * math.pi)
    b = (r[None, :] / (lam_arr[:, None] - ZETA2 * mu[None, :])).sum(axis=1) \
        + (p[None, :] / (lam_arr[:, None] - ZETA3 * mu[None, :])).sum(axis=1)
    i3 = (weights * d3 * e2)[None, :] / (tau[None, :] + 1j * ZETA2 * lam_arr[:, None])
    i2 = (weights * d2 * e3)[None, :] / (tau[None, :] + 1j * ZETA3 * lam_arr[:, None])
    value = jump.chi(lam_arr, x) * (1.0 + b + ZETA3 * c * i3.sum(axis=1) - ZETA2 * c * i2.sum(axis=1))
    return complex(value[0]) if np.ndim(lam) == 0 else value.reshape(np.shape(lam))


class IllConditionedError(NumericError):
    """The discretised jump system is too ill-conditioned to trust; ``diagnostics`` holds the estimate."""

    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


def solve_jump(jump: JumpData, x: float, M: int = 200, n_poles: int | None = None,
               condition_limit: float | None = 1e14) -> JumpSolution:
    """Solve the discretised system at ``x`` and expose E_1 through the Cauchy representation.

    With ``condition_limit=None`` the system is solved by least squares
    whatever its condition, which is useful for inspecting failures.
    """
    system = assemble_singular_system(jump, x, tau_grid(jump.T, M), n_poles)
    cond = system.condition
    if condition_limit is None:
        z = np.linalg.lstsq(system.matrix, system.rhs, rcond=None)[0]
    elif not math.isfinite(cond) or cond > condition_limit:
        raise IllConditionedError(
            f"singular system at x={x} is ill-conditioned (cond={cond:.3g})",
            {"x": float(x), "condition": float(cond), "size": system.size, "cutoff": jump.T,
             "chi_tail": jump.canonical(x).tail, "n_poles": system.n_poles},
        )
    else:
        z = np.linalg.solve(system.matrix, system.rhs)
    M_ = system.grid.size
    n = system.n_poles
    return JumpSolution(float(x), system.grid.nodes, system.grid.weights, z[:M_], z[M_:2 * M_],
                        z[2 * M_:2 * M_ + n], z[2 * M_ + n:], system.residual(z), cond, jump)


def forward_consistency(jump: JumpData, pot: Potential, x: float, M: int = 200,
                        n_poles: int | None = None) -> dict:
    """Inject ODE values of E_2(i tau, x), E_3(i tau, x) into the assembled system.

    The residues r_n, p_n are not independently available, so they are
    chosen by least squares; the returned relative residual is therefore a
    lower bound for the defect of the exact solution.
    """
    system = assemble_singular_system(jump, x, tau_grid(jump.T, M), n_poles)
    t = system.grid.nodes
    e2 = normalized_e(pot, 2, 1j * t, x)
    e3 = normalized_e(pot, 3, 1j * t, x)
    Mn = t.size
    known = np.concatenate([e2, e3])
    remainder = system.rhs - system.matrix[:, :2 * Mn] @ known
    if system.n_poles:
        coeffs, *_ = np.linalg.lstsq(system.matrix[:, 2 * Mn:], remainder, rcond=None)
    else:
        coeffs = np.zeros(0, dtype=complex)
    z = np.concatenate([known, coeffs])
    rows = slice(0, 2 * Mn)
    boundary = np.linalg.norm((system.matrix @ z - system.rhs)[rows]) / np.linalg.norm(system.rhs[rows])
    return {"x": float(x), "residual": system.residual(z), "boundary_residual": float(boundary),
            "E2_range": [float(np.min(np.abs(e2))), float(np.max(np.abs(e2)))],
            "E3_range": [float(np.min(np.abs(e3))), float(np.max(np.abs(e3)))]}


# ---------------------------------------------------------------------------
# asymptotic extraction of int_0^x q
# ---------------------------------------------------------------------------

DEFAULT_FIT_POWERS = (0, 1, 2, 3)


def default_radii(l: float, x: float | None = None, count: int = 8) -> np.ndarray:
    """Geometric radii in [max(10/l, 4/x), max(60/l, 24/x)].

    Near x = 0 the terms exp(-3 R x / 2) q(0) / lambda^3 only become
    negligible once R x is large, hence the lower bound growing like 1/x.
    """
    lo, hi = 10.0 / l, 60.0 / l
    if x is not None and x > 0:
        lo, hi = max(lo, 4.0 / x), max(hi, 24.0 / x)
    return np.geomspace(lo, hi, count)


def asymptotic_integral(e1_values: Sequence[complex], lams: Sequence[complex],
                        powers: Sequence[int] = DEFAULT_FIT_POWERS) -> tuple[float, float]:
    """Fit 3 i lambda^2 (E_1 - 1) = sum_j c_j lambda^{-j} and return (Re c_0, max fit residual).

    Along lambda = -i R inside Omega_1 the leading term c_0 approximates
    int_0^x q.  The remainder contains odd powers of 1/lambda (boundary
    values of q enter at order lambda^{-3} in E_1), so the default model
    keeps j = 0, 1, 2, 3.
    """
    lams = np.asarray(lams, dtype=complex)
    powers = tuple(int(p) for p in powers)
    if 0 not in powers or lams.size < len(powers):
        raise InvalidInputError("the fit needs the constant term and at least as many radii as powers")
    vals = 3j * lams**2 * (np.asarray(e1_values, dtype=complex) - 1.0)
    design = np.stack([lams ** (-p) for p in powers], axis=1)
    coeffs, *_ = np.linalg.lstsq(design, vals, rcond=None)
    fit = float(np.max(np.abs(design @ coeffs - vals)))
    return float(coeffs[powers.index(0)].real), fit


def ode_integral_estimate(pot: Potential, x: float, radii: Sequence[float] | None = None,
                          powers: Sequence[int] = DEFAULT_FIT_POWERS) -> float:
    """int_0^x q recovered from ODE values of E_1(-i R, x) by the asymptotic fit."""
    radii = default_radii(pot.l, x) if radii is None else np.asarray(radii, dtype=float)
    lams = -1j * radii
    values = normalized_e(pot, 1, lams, float(x))
    return asymptotic_integral(values, lams, powers)[0]
