"""Spectral objects of the perturbed operator L_q(theta) y = i y''' + q y.

Boundary conditions are those of the unperturbed operator.  The auxiliary
family L_q(theta, h) replaces Delta_theta by Delta_theta - i h (theta s_0 - s_0*),
where s_0 and s_0* are taken at x = l.

Solutions s_p(lambda, x) carry the Cauchy data s_p^{(j)}(lambda, 0) = delta_{jp}.
The adjoint ("starred") solutions s_p*(lambda, x) solve i y''' - q y = -lambda^3 y
with the same data; for real lambda they are the complex conjugates.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import InvalidInputError, NumericError, ValidationError
from .gtrig import free_solution, s_eval_scaled_log
from .magnus import default_steps, propagate
from .numerics import (OdeTolerance, gauss_legendre, integrate_third_order, refine_brackets, shooting_solve,
                       truncated_product)
from .op_l0 import L0Config, NearSpectrumWarning, l0_real_zeros
from .potential import BUILTIN_POTENTIALS, Potential, builtin_potential

__all__ = [
    "BUILTIN_POTENTIALS",
    "FundamentalSystem",
    "LqEigenfunction",
    "LqSpectrum",
    "NeumannEstimate",
    "Potential",
    "boundary_constants",
    "builtin_potential",
    "check_admissible",
    "correction_bound",
    "delta_q",
    "delta_q_correction",
    "delta_q_decomposition_residual",
    "delta_qh",
    "eigenfunction_q",
    "free_real_zeros",
    "fundamental_system",
    "green_kernel",
    "growth_bound",
    "kernel_diagonal_limit",
    "lq_real_zeros",
    "neumann_oracle",
    "normalization_q_squared",
    "real_characteristic_q",
    "resolvent_q",
    "transformation_kernel",
]

RK_LIMIT = 80.0
_TIGHT = OdeTolerance(rel=1e-13, abs=1e-15)


def _coefficient(pot: Potential, lam: complex, starred: bool) -> Callable[[float], complex]:
    cube = complex(lam) ** 3
    sign = -1.0 if starred else 1.0
    return lambda x: -1j * sign * (cube - float(pot(x)))


# ---------------------------------------------------------------------------
# fundamental system
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FundamentalSystem:
    """s_p and (optionally) s_p* with derivatives on a grid.

    ``values[j, i, p]`` is the j-th derivative of s_p at ``grid[i]`` divided
    by ``exp(log_scale)``; ``starred`` is laid out the same way.
    """

    lam: complex
    grid: np.ndarray
    values: np.ndarray
    starred: np.ndarray | None = None
    log_scale: float = 0.0
    starred_log_scale: float = 0.0

    def s(self, p: int, derivative: int = 0, starred: bool = False) -> np.ndarray:
        table, shift = (self.starred, self.starred_log_scale) if starred else (self.values, self.log_scale)
        if table is None:
            raise InvalidInputError("starred solutions were not computed")
        return table[derivative, :, p] * math.exp(shift)

    def at_end(self, p: int, derivative: int = 0, starred: bool = False) -> complex:
        return complex(self.s(p, derivative, starred)[-1])

    def wronskian(self, k: int, p: int) -> np.ndarray:
        """W_{k,p} = s_k s_p' - s_p s_k' along the grid."""
        return self.s(k) * self.s(p, 1) - self.s(p) * self.s(k, 1)

    def determinant(self) -> np.ndarray:
        """det of the 3x3 matrix of values and derivatives; identically one."""
        mats = np.transpose(self.values, (1, 0, 2))
        return np.linalg.det(mats) * math.exp(3 * self.log_scale)


def _rk_table(pot: Potential, lam: complex, grid: np.ndarray, starred: bool, tol: OdeTolerance) -> np.ndarray:
    traj = integrate_third_order(_coefficient(pot, lam, starred), np.eye(3, dtype=complex), grid, tol)
    return np.stack([traj.y, traj.dy, traj.d2y])


def fundamental_system(pot: Potential, lam: complex, starred: bool = True, grid=None,
                       method: str = "auto", tol: OdeTolerance = OdeTolerance()) -> FundamentalSystem:
    """Integrate the fundamental system from the canonical Cauchy data.

    ``method="rk"`` integrates with an embedded Runge-Kutta scheme on
    ``grid`` (default ``[0, l]``).  ``method="magnus"`` uses the batched
    Magnus propagator and only returns the end point, with the growth kept
    in ``log_scale``; ``auto`` picks Runge-Kutta when |lambda| l <= 80.
    """
    lam = complex(lam)
    if not (math.isfinite(lam.real) and math.isfinite(lam.imag)):
        raise InvalidInputError("lambda must be finite")
    grid = np.array([0.0, pot.l]) if grid is None else np.asarray(grid, dtype=float)
    if grid[0] != 0.0:
        grid = np.concatenate([[0.0], grid])
    if method == "auto":
        method = "rk" if abs(lam) * pot.l <= RK_LIMIT else "magnus"
    if method == "rk":
        values = _rk_table(pot, lam, grid, False, tol)
        star = _rk_table(pot, lam, grid, True, tol) if starred else None
        return FundamentalSystem(lam, grid, values, star)
    if method != "magnus":
        raise InvalidInputError(f"unknown method {method!r}")
    if grid.size != 2:
        raise InvalidInputError("the Magnus path only returns the end point; use method='rk' for grids")
    tables, logs = [], []
    for adjoint in ((False, True) if starred else (False,)):
        prop = propagate(pot, [lam], x_end=grid[-1], adjoint=adjoint)
        table = np.zeros((3, 2, 3), dtype=complex)
        table[:, 0, :] = np.eye(3) * math.exp(-prop.log_scale[0])
        for j in range(3):
            for p in range(3):
                table[j, 1, p] = prop.entry_log(j, p)[0][0]
        tables.append(table)
        logs.append(float(prop.log_scale[0]))
    if starred:
        return FundamentalSystem(lam, grid, tables[0], tables[1], logs[0], logs[1])
    return FundamentalSystem(lam, grid, tables[0], None, logs[0])


# ---------------------------------------------------------------------------
# Neumann series oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NeumannEstimate:
    values: np.ndarray  # s_0, s_1, s_2 at x
    tail_bound: np.ndarray  # bound on the omitted terms for each p
    n_terms: int


def growth_bound(lam: complex) -> float:
    """d(lambda) = exp(|Im lambda|) cosh(sqrt(3) Re lambda / 2), a bound for |s_p(i lambda)|."""
    lam = complex(lam)
    return math.exp(abs(lam.imag)) * math.cosh(math.sqrt(3.0) * lam.real / 2.0)


def _kernel_stack(pot: Potential, lam: complex, x: float, n_terms: int, nodes: int):
    u = np.linspace(0.0, x, nodes)
    h = u[1] - u[0] if nodes > 1 else 0.0
    diff = u[:, None] - u[None, :]
    k1 = np.where(diff >= 0, free_solution(2, lam, np.maximum(diff, 0.0)), 0.0)
    qv = pot(u)
    kernels = [k1]
    for _ in range(n_terms - 1):
        # the integrand vanishes at both ends, so the trapezoidal rule is a plain sum
        kernels.append(h * k1 @ (qv[:, None] * kernels[-1]))
    return u, qv, kernels


def transformation_kernel(pot: Potential, lam: complex, x: float, n_terms: int = 4,
                          nodes: int = 601) -> tuple[np.ndarray, np.ndarray]:
    """T(lambda, x, t) = sum_n i^n K_n(lambda, x, t) q(t) on a uniform t-grid of [0, x]."""
    if not 1 <= n_terms <= 6:
        raise InvalidInputError("n_terms must be between 1 and 6")
    u, qv, kernels = _kernel_stack(pot, complex(lam), float(x), n_terms, nodes)
    row = sum((1j) ** (n + 1) * kernels[n][-1] for n in range(n_terms))
    return u, row * qv


def kernel_diagonal_limit(pot: Potential, lam: complex, x: float, n_terms: int = 4, nodes: int = 601) -> complex:
    """lim_{t -> x} T(lambda, x, t)/(x - t)^2, which equals i q(x)/2.

    The quotient is sampled at the 29 grid points nearest the diagonal and a
    cubic in x - t is extrapolated to zero.
    """
    u, row = transformation_kernel(pot, lam, x, n_terms, nodes)
    gap = float(x) - u[-30:-1]
    coeffs = np.polyfit(gap, row[-30:-1] / gap**2, 3)
    return complex(coeffs[-1])


def neumann_oracle(pot: Potential, lam: complex, x: float | None = None, n_terms: int = 3,
                   nodes: int = 601, tol: float | None = None) -> NeumannEstimate:
    """s_p(lambda, x) from the truncated Neumann series of the transformation kernel.

    The kernels obey |K_n| <= d(lambda(x-t)) sigma^{n-1} / (|lambda|^{2n} (n-1)!),
    which bounds the omitted terms.  When ``tol`` is given and the bound
    exceeds it, a warning is issued.
    """
    lam = complex(lam)
    x = pot.l if x is None else float(x)
    if not 1 <= n_terms <= 6:
        raise InvalidInputError("n_terms must be between 1 and 6")
    if nodes % 2 == 0:
        nodes += 1
    u, qv, kernels = _kernel_stack(pot, lam, x, n_terms, nodes)
    series_row = sum((1j) ** (n + 1) * kernels[n][-1] for n in range(n_terms))
    values = np.empty(3, dtype=complex)
    for p in range(3):
        free = free_solution(p, lam, u)
        values[p] = free[-1] + integrate.simpson(series_row * qv * free, x=u)
    sigma = float(pot.sigma(x))
    tails = np.empty(3)
    if lam == 0:
        ratio_terms = [((x * x / 2.0) ** n) * sigma**n / (n ** (2 * n) * math.factorial(n - 1))
                       for n in range(n_terms + 1, n_terms + 40)]
        base = sum(ratio_terms)
        for p in range(3):
            tails[p] = base * x**p / math.factorial(p)
    else:
        r = sigma / abs(lam) ** 2
        partial = sum(r**m / math.factorial(m) for m in range(n_terms))
        series_tail = r * max(math.exp(r) - partial, 0.0)
        for p in range(3):
            tails[p] = growth_bound(lam * x) * series_tail / abs(lam) ** p
    if tol is not None and np.max(tails) > tol:
        warnings.warn(f"Neumann tail bound {np.max(tails):.3e} exceeds {tol:.3e}", RuntimeWarning, stacklevel=2)
    return NeumannEstimate(values, tails, n_terms)


# ---------------------------------------------------------------------------
# characteristic functions
# ---------------------------------------------------------------------------

def _unit(theta: complex) -> complex:
    theta = complex(theta)
    if abs(abs(theta) - 1.0) > 1e-12:
        raise InvalidInputError(f"|theta| must be 1, got {abs(theta)!r}")
    return theta


def delta_q(pot: Potential, theta: complex, lam: complex, method: str = "auto") -> complex:
    """Delta_theta(q, lambda) = -(theta s_2(lambda, l) + s_2*(lambda, l))."""
    theta = _unit(theta)
    fs = fundamental_system(pot, lam, starred=True, method=method)
    return -(theta * fs.at_end(2) + fs.at_end(2, starred=True))


def delta_qh(pot: Potential, theta: complex, h: float, lam: complex, method: str = "auto") -> complex:
    """Delta_{theta,h}(q, lambda) = Delta_theta(q, lambda) - i h (theta s_0(lambda, l) - s_0*(lambda, l))."""
    theta = _unit(theta)
    fs = fundamental_system(pot, lam, starred=True, method=method)
    base = -(theta * fs.at_end(2) + fs.at_end(2, starred=True))
    return base - 1j * h * (theta * fs.at_end(0) - fs.at_end(0, starred=True))


def delta_q_correction(pot: Potential, theta: complex, lam: complex, order: int = 16) -> complex:
    """Q_theta(lambda) = -i int q(t) [theta s_2(t) S_2(l-t) - s_2*(t) S_2*(l-t)] dt.

    S_2(a) = s_2(i lambda a)/(i lambda)^2 and S_2*(a) its adjoint counterpart.
    """
    theta = _unit(theta)
    lam = complex(lam)
    panels = max(16, int(math.ceil(abs(lam) * pot.l)))
    nodes, weights = gauss_legendre(0.0, pot.l, order, panels)
    grid = np.concatenate([[0.0], nodes])
    fs = fundamental_system(pot, lam, starred=True, grid=grid, method="rk", tol=_TIGHT)
    s2 = fs.s(2)[1:]
    s2_star = fs.s(2, starred=True)[1:]
    rest = pot.l - nodes
    integrand = pot(nodes) * (theta * s2 * free_solution(2, lam, rest) - s2_star * free_solution(2, -lam, rest))
    return complex(-1j * np.dot(weights, integrand))


def delta_q_decomposition_residual(pot: Potential, theta: complex, lam: complex) -> float:
    """|Delta_theta(q) - Delta_theta(0) - Q_theta| with all three terms computed independently."""
    theta = _unit(theta)
    lam = complex(lam)
    free = -(theta * free_solution(2, lam, pot.l) + free_solution(2, -lam, pot.l))
    direct = delta_q(pot, theta, lam, method="rk")
    return abs(direct - free - delta_q_correction(pot, theta, lam))


def correction_bound(pot: Potential, lam: complex) -> float:
    """Upper bound 2 d(lambda l) (sigma + sigma^2/(2|lambda|^2) exp(sigma/|lambda|^2)) / |lambda|^4."""
    lam = complex(lam)
    if lam == 0:
        raise InvalidInputError("the bound needs lambda != 0")
    sigma = float(pot.sigma(pot.l))
    m2 = abs(lam) ** 2
    return 2.0 / m2**2 * growth_bound(lam * pot.l) * (sigma + sigma**2 / (2.0 * m2) * math.exp(sigma / m2))


def real_characteristic_q(pot: Potential, phi: float, h: float, lam, n_steps: int | None = None) -> np.ndarray:
    """Growth-normalised exp(-i phi) Delta_{theta,h}(q, lambda) on the real axis.

    For real lambda, s_p* = conj(s_p), so the function equals
    -2 Re(e^{i phi} s_2) + 2 h Im(e^{i phi} s_0), which is real.
    """
    lam = np.asarray(lam, dtype=float)
    prop = propagate(pot, lam, n_steps=n_steps)
    rot = np.exp(1j * phi)
    value = -2.0 * np.real(rot * prop.solution_log(2)[0])
    if h:
        value = value + 2.0 * h * np.imag(rot * prop.solution_log(0)[0])
    return value.reshape(lam.shape)


def _free_real_characteristic(l: float, phi: float, h: float, lam) -> np.ndarray:
    rot = np.exp(1j * phi)
    m2, _ = s_eval_scaled_log(2, lam, l)
    value = -2.0 * np.real(rot * m2)
    if h:
        m0, _ = s_eval_scaled_log(0, lam, l)
        value = value + 2.0 * h * np.imag(rot * m0)
    return value


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LqSpectrum:
    """Real zeros of Delta_theta(q, .) (h = 0) or Delta_{theta,h}(q, .).

    For h = 0 and theta != +-1 the indices follow the unperturbed spectrum;
    otherwise n = 0 labels the smallest non-negative zero.
    """

    potential: Potential
    theta: complex
    h: float
    indices: np.ndarray
    zeros: np.ndarray
    residuals: np.ndarray = field(repr=False)
    a: complex = 0j
    b: complex = 0j

    @property
    def theta0(self) -> complex:
        return self.a.conjugate() / self.a

    @property
    def theta1(self) -> complex:
        return self.b.conjugate() / self.b

    def zero(self, n: int) -> float:
        j = n - int(self.indices[0])
        if not 0 <= j < self.indices.size:
            raise InvalidInputError(f"index {n} outside the computed window")
        return float(self.zeros[j])

    def product(self, lam: complex):
        """-a(theta + theta0) prod (1 - lam^3/lambda_n^3) over the computed zeros (h = 0)."""
        result = truncated_product(self.zeros, lam, index_offset=int(self.indices[0]))
        factor = -self.a * (self.theta + self.theta0)
        return result._replace(value=factor * result.value)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n", "lambda_n", "residual"])
            for n, lam, res in zip(self.indices, self.zeros, self.residuals):
                writer.writerow([int(n), repr(float(lam)), repr(float(res))])


def boundary_constants(pot: Potential) -> tuple[complex, complex]:
    """a = s_2(0, l) and b = s_0(0, l) from the lambda = 0 equation."""
    fs = fundamental_system(pot, 0.0, starred=False, method="rk", tol=_TIGHT)
    return fs.at_end(2), fs.at_end(0)


def check_admissible(a: complex, b: complex, theta: complex, h: float, tol: float = 1e-12) -> None:
    """Raise ValidationError unless lambda = 0 is outside the spectrum."""
    if abs(a) <= tol:
        raise ValidationError("s_2(0, l) vanishes")
    theta0 = a.conjugate() / a
    if abs(theta + theta0) <= tol:
        raise ValidationError("theta + theta0 = 0: lambda = 0 is an eigenvalue")
    if h and abs(b) > tol:
        theta1 = b.conjugate() / b
        if abs(a * (theta + theta0) + 1j * h * b * (theta - theta1)) <= tol * (1 + abs(a) + abs(h * b)):
            raise ValidationError("lambda = 0 is an eigenvalue of the h-problem")


def free_real_zeros(l: float, theta: complex, h: float, n_lo: int, n_hi: int) -> np.ndarray:
    """Zeros of the unperturbed (q = 0) characteristic function, n = 0 the smallest non-negative one."""
    theta = _unit(theta)
    phi = 0.5 * math.atan2(theta.imag, theta.real)
    gap = 2.0 * math.pi / l
    step = gap / 64.0
    f = lambda x: _free_real_characteristic(l, phi, h, x)  # noqa: E731

    def scan(lo, hi):
        xs = np.arange(lo, hi + step, step)
        vals = f(xs)
        exact = xs[vals == 0.0]
        idx = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)
        roots = refine_brackets(f, xs[idx], xs[idx + 1]) if idx.size else np.empty(0)
        return np.sort(np.concatenate([roots, exact]))

    out = {}
    if n_hi >= 0:
        pos = scan(0.0, gap * (n_hi + 3))
        pos = pos[pos >= 0]
        for n in range(max(n_lo, 0), n_hi + 1):
            out[n] = pos[n]
    if n_lo < 0:
        neg = scan(-gap * (-n_lo + 3), 0.0)
        neg = neg[neg < 0][::-1]
        for n in range(n_lo, min(n_hi, -1) + 1):
            out[n] = neg[-n - 1]
    return np.array([out[n] for n in range(n_lo, n_hi + 1)])


def _seeds(pot: Potential, theta: complex, h: float, n_lo: int, n_hi: int) -> tuple[np.ndarray, bool]:
    cfg = L0Config.from_theta(pot.l, theta)
    if h == 0 and not cfg.degenerate:
        return l0_real_zeros(cfg, n_lo - 1, n_hi + 1).zeros, True
    return free_real_zeros(pot.l, theta, h, n_lo - 1, n_hi + 1), False


def lq_real_zeros(pot: Potential, theta: complex, n_lo: int, n_hi: int, h: float = 0.0,
                  samples: int = 8, expansions: int = 3) -> LqSpectrum:
    """Real zeros lambda_n(q, theta[, h]) for n_lo <= n <= n_hi.

    Each zero is searched in a window of half-width 0.4 times the local gap
    around the unperturbed zero, widened by a factor two up to ``expansions``
    times when no sign change is found.  A window with several sign changes
    is resampled more finely and the change nearest the seed is taken.
    """
    theta = _unit(theta)
    if n_hi < n_lo:
        raise InvalidInputError("empty index window")
    a, b = boundary_constants(pot)
    check_admissible(a, b, theta, h)
    phi = 0.5 * math.atan2(theta.imag, theta.real)
    seeds_ext, _ = _seeds(pot, theta, h, n_lo, n_hi)
    seeds = seeds_ext[1:-1]
    gaps = 0.5 * (seeds_ext[2:] - seeds_ext[:-2])
    indices = np.arange(n_lo, n_hi + 1)
    reach = np.max(np.abs(seeds)) + (2 ** expansions) * 0.4 * np.max(gaps)
    n_steps = default_steps(reach, pot.l)

    def g(x):
        return real_characteristic_q(pot, phi, h, x, n_steps=n_steps)

    lo = np.full(seeds.size, np.nan)
    hi = np.full(seeds.size, np.nan)
    pending = np.arange(seeds.size)
    half = 0.4 * gaps
    failures: dict[int, str] = {}
    for attempt in range(expansions + 1):
        if pending.size == 0:
            break
        offsets = np.linspace(-1.0, 1.0, samples)
        xs = seeds[pending, None] + half[pending, None] * offsets[None, :]
        vals = g(xs.ravel()).reshape(xs.shape)
        changes = np.sign(vals[:, :-1]) * np.sign(vals[:, 1:]) <= 0
        counts = changes.sum(axis=1)
        still = []
        for row, j in enumerate(pending):
            if counts[row] == 1:
                k = int(np.flatnonzero(changes[row])[0])
                lo[j], hi[j] = xs[row, k], xs[row, k + 1]
            elif counts[row] > 1:
                fine = np.linspace(xs[row, 0], xs[row, -1], 8 * samples)
                fv = g(fine)
                idx = np.flatnonzero(np.sign(fv[:-1]) * np.sign(fv[1:]) <= 0)
                mids = 0.5 * (fine[idx] + fine[idx + 1])
                k = int(idx[np.argmin(np.abs(mids - seeds[j]))])
                lo[j], hi[j] = fine[k], fine[k + 1]
            else:
                still.append(j)
        pending = np.array(still, dtype=int)
        half = half * 2.0
    for j in pending:
        failures[int(indices[j])] = "no sign change in the expanded window"
    if failures:
        raise NumericError(f"zero search failed: {failures}")
    zeros = refine_brackets(g, lo, hi)
    if np.any(np.diff(zeros) <= 0):
        bad = int(indices[np.flatnonzero(np.diff(zeros) <= 0)[0]])
        raise NumericError(f"zeros {bad} and {bad + 1} collide; refine the potential sampling")
    residuals = np.abs(g(zeros))
    return LqSpectrum(pot, theta, float(h), indices, zeros, residuals, a, b)


# ---------------------------------------------------------------------------
# eigenfunctions by multiple shooting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LqEigenfunction:
    """Normalised eigenfunction stored as Cauchy data at shooting nodes.

    ``states[k]`` holds (psi, psi', psi'') at ``nodes[k]``; values elsewhere
    are obtained by integrating from the nearest node on the left.
    """

    potential: Potential
    lam: float
    nodes: np.ndarray
    states: np.ndarray
    singular_ratio: float

    def __call__(self, x, derivative: int = 0):
        if derivative not in (0, 1, 2, 3):
            raise InvalidInputError("derivative order must be 0..3")
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x_arr < -1e-12) or np.any(x_arr > self.potential.l * (1 + 1e-12)):
            raise InvalidInputError("x must lie in [0, l]")
        out = np.empty(x_arr.shape, dtype=complex)
        seg = np.clip(np.searchsorted(self.nodes, x_arr, side="right") - 1, 0, self.nodes.size - 2)
        coeff = _coefficient(self.potential, self.lam, False)
        for k in np.unique(seg):
            mask = seg == k
            start = self.nodes[k]
            pts = np.unique(np.concatenate([[start], x_arr[mask]]))
            traj = integrate_third_order(coeff, self.states[k], pts, _TIGHT)
            if derivative == 3:
                table = np.array([coeff(t) for t in pts]) * traj.y
            else:
                table = (traj.y, traj.dy, traj.d2y)[derivative]
            out[mask] = table[np.searchsorted(pts, x_arr[mask])]
        return out.reshape(np.shape(x)) if np.ndim(x) else complex(out[0])


def _shooting(pot: Potential, lam: float, theta: complex) -> LqEigenfunction:
    l = pot.l
    segments = max(4, int(math.ceil(abs(lam) * l / 2.0)))
    edges = sorted(set(np.linspace(0.0, l, segments + 1).tolist()) | set(pot.breakpoints))
    nodes = np.array(edges)
    k_count = nodes.size - 1
    s = max(abs(lam), 1.0)
    d = np.array([1.0, s, s * s])
    coeff = _coefficient(pot, lam, False)
    size = 3 * (k_count + 1)
    system = np.zeros((size, size), dtype=complex)
    for k in range(k_count):
        traj = integrate_third_order(coeff, np.eye(3, dtype=complex), nodes[k:k + 2], _TIGHT)
        phi = np.stack([traj.y[-1], traj.dy[-1], traj.d2y[-1]])
        balanced = phi * d[None, :] / d[:, None]
        system[3 * k:3 * k + 3, 3 * k:3 * k + 3] = balanced
        system[3 * k:3 * k + 3, 3 * k + 3:3 * k + 6] = -np.eye(3)
    last = 3 * k_count
    system[last, 0] = 1.0
    system[last + 1, last] = 1.0
    system[last + 2, last + 1] = 1.0
    system[last + 2, 1] = -theta
    _, sv, vh = np.linalg.svd(system)
    null = vh[-1].conj()
    states = null.reshape(k_count + 1, 3) * d[None, :]
    ratio = float(sv[-1] / sv[0])
    provisional = LqEigenfunction(pot, lam, nodes, states, ratio)
    quad_nodes, weights = gauss_legendre(0.0, l, 16, k_count)
    values = provisional(quad_nodes)
    norm = math.sqrt(float(np.dot(weights, np.abs(values) ** 2)))
    if not norm > 0:
        raise NumericError(f"eigenfunction at lambda={lam} is not normalisable")
    # fix the phase so that psi is a positive multiple of s_2 s_1(l) - s_1 s_2(l)
    end = fundamental_system(pot, lam, starred=False, method="auto")
    s1_end = end.values[0, -1, 1]
    phase = states[0, 2] * np.conj(s1_end)
    phase = phase / abs(phase) if abs(phase) > 0 else 1.0
    return LqEigenfunction(pot, lam, nodes, states / (norm * phase), ratio)


def eigenfunction_q(pot: Potential, theta: complex, n: int, x=None, spectrum: LqSpectrum | None = None,
                    derivative: int = 0):
    """Normalised eigenfunction psi_n of L_q(theta).

    Returns the :class:`LqEigenfunction` when ``x`` is None, else its values.
    """
    theta = _unit(theta)
    if spectrum is None or not spectrum.indices[0] <= n <= spectrum.indices[-1]:
        spectrum = lq_real_zeros(pot, theta, n, n)
    psi = _shooting(pot, spectrum.zero(n), theta)
    return psi if x is None else psi(x, derivative)


def normalization_q_squared(pot: Potential, theta: complex, n: int, method: str = "quadrature",
                            spectrum: LqSpectrum | None = None, eps: float = 1e-6) -> float:
    """||u_n||^2 for u = s_2(x) s_1(l) - s_1(x) s_2(l).

    ``quadrature`` uses the normalised eigenfunction: u''(0) = s_1(l).
    ``limit`` evaluates Delta(lambda) s_2(lambda, l) / (i(lambda_n^3 - lambda^3))
    at lambda = lambda_n(1 - eps) and lambda_n(1 - 2 eps) and extrapolates
    linearly to eps = 0.
    """
    theta = _unit(theta)
    if spectrum is None or not spectrum.indices[0] <= n <= spectrum.indices[-1]:
        spectrum = lq_real_zeros(pot, theta, n, n)
    lam_n = spectrum.zero(n)
    if method == "quadrature":
        psi = _shooting(pot, lam_n, theta)
        s1_end = fundamental_system(pot, lam_n, starred=False, method="rk", tol=_TIGHT).at_end(1)
        return abs(s1_end) ** 2 / abs(psi.states[0, 2]) ** 2
    if method == "limit":
        def quotient(e):
            lam = lam_n * (1.0 - e)
            fs = fundamental_system(pot, lam, starred=True, method="rk", tol=_TIGHT)
            delta = -(theta * fs.at_end(2) + fs.at_end(2, starred=True))
            return delta * fs.at_end(2) / (1j * (lam_n**3 - lam**3))
        value = 2.0 * quotient(eps) - quotient(2.0 * eps)
        return float(value.real)
    raise InvalidInputError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# Green kernel and resolvent
# ---------------------------------------------------------------------------

_GREEN_SIGNS = (1.0, -1.0, 1.0)


def _tables_at(pot: Potential, lam: complex, points: np.ndarray):
    """Value tables of s_p and s_p* at arbitrary points in [0, l]."""
    pts = np.asarray(points, dtype=float)
    uniq, inverse = np.unique(np.concatenate([[0.0], pts.ravel()]), return_inverse=True)
    fs = fundamental_system(pot, lam, starred=True, grid=uniq, method="rk", tol=_TIGHT)
    idx = inverse[1:].reshape(pts.shape)
    return fs.values[:, idx, :], fs.starred[:, idx, :]


def green_kernel(pot: Potential, lam: complex, x, t, derivative: int = 0):
    """G(lambda, x, t) = s_0(x) s_2*(t) - s_1(x) s_1*(t) + s_2(x) s_0*(t), or its x-derivative."""
    x_b, t_b = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    vals_x, _ = _tables_at(pot, lam, x_b)
    _, star_t = _tables_at(pot, lam, t_b)
    out = sum(_GREEN_SIGNS[p] * vals_x[derivative, ..., p] * star_t[0, ..., 2 - p] for p in range(3))
    return out if out.ndim else complex(out)


def _resolvent_conditions(theta: complex) -> tuple[np.ndarray, np.ndarray]:
    """y(0) = 0, y(l) = 0 and y'(l) - theta y'(0) = 0 as rows acting on (y, y', y'') at 0 and l."""
    left = np.array([[1, 0, 0], [0, 0, 0], [0, -theta, 0]], dtype=complex)
    right = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=complex)
    return left, right


def resolvent_q(pot: Potential, theta: complex, lam: complex, f, grid,
                near_threshold: float = 1e-8) -> np.ndarray:
    """Solve i y''' + q y - lam^3 y = f with y(0) = y(l) = 0, y'(l) = theta y'(0), on ``grid``.

    Multiple shooting: on each segment the fundamental matrix and the
    particular solution with zero Cauchy data are integrated together, and
    the Cauchy data at the segment ends follow from one balanced linear
    system.  Segments are short enough (|lam| h <= 2) that the growing
    exponential never swamps the solution, which the separated Green-kernel
    formula does for large real lam.  ``f`` is a callable or samples on
    ``grid``.
    """
    from .op_l0 import _as_function

    theta = _unit(theta)
    lam = complex(lam)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise InvalidInputError("grid must be strictly increasing")
    if abs(grid[0]) > 1e-12 or abs(grid[-1] - pot.l) > 1e-12 * pot.l:
        raise InvalidInputError("grid must span [0, l]")
    fun = _as_function(f, None if callable(f) else grid)
    solution = shooting_solve(_coefficient(pot, lam, False), lambda x: -1j * complex(fun(np.array([x]))[0]),
                              grid, *_resolvent_conditions(theta), max(4, int(math.ceil(abs(lam) * pot.l / 2.0))),
                              max(abs(lam), 1.0), pot.breakpoints)
    if solution.singular_ratio < near_threshold:
        warnings.warn(f"lambda={lam} is within relative distance {solution.singular_ratio:.3e} of the spectrum",
                      NearSpectrumWarning, stacklevel=2)
    return solution.y
