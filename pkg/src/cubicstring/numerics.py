"""Numerical plumbing shared by the spectral modules.

Complex third-order ODE integration, bracketed real root finding, adaptive
and principal-value quadrature, truncated infinite products over real zeros,
and differentiation of sampled data.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import integrate, interpolate, optimize

from .errors import (
    BracketingError,
    InvalidInputError,
    QuadratureError,
    StiffnessError,
)


# ---------------------------------------------------------------------------
# ODE integration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OdeTolerance:
    rel: float = 1e-12
    abs: float = 1e-14
    max_step: float = math.inf
    min_step: float = 0.0

    def __post_init__(self):
        if not (self.rel > 0 and self.abs > 0):
            raise InvalidInputError("ODE tolerances must be positive")
        if not self.min_step < self.max_step:
            raise InvalidInputError("min_step must be smaller than max_step")


@dataclass(frozen=True)
class Trajectory:
    """Solution samples on a grid.

    ``y``, ``dy`` and ``d2y`` have shape ``(len(grid),)`` for a single
    solution or ``(len(grid), m)`` when ``m`` solutions were integrated
    together.
    """

    grid: np.ndarray
    y: np.ndarray
    dy: np.ndarray
    d2y: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.grid) <= 0):
            raise InvalidInputError("trajectory grid must be strictly increasing")
        for arr in (self.y, self.dy, self.d2y):
            if not np.all(np.isfinite(arr)):
                raise StiffnessError("non-finite samples in trajectory")


def integrate_third_order(
    coeff: Callable[[float], complex],
    init,
    grid: Sequence[float],
    tol: OdeTolerance = OdeTolerance(),
    x0: float | None = None,
    forcing: Callable[[float], np.ndarray] | None = None,
) -> Trajectory:
    """Solve y''' = c(x) y [+ g(x)] from Cauchy data given at ``x0`` (default ``grid[0]``).

    ``init`` is a triple (y, y', y'') or a 3 x m array of triples, in which
    case m independent solutions are advanced in one embedded Runge-Kutta
    (Dormand-Prince 8(5,3)) run.  With c(x) = -i(lambda^3 - q(x)) the
    solutions satisfy i y''' + q y = lambda^3 y.  ``forcing`` returns g(x),
    a scalar or one value per solution, added to the third derivative.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise InvalidInputError("grid must be a non-empty 1-D array")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise InvalidInputError("grid must be strictly increasing")
    start = float(grid[0]) if x0 is None else float(x0)
    if start > grid[0]:
        raise InvalidInputError("initial point must not exceed the first grid node")
    init_arr = np.asarray(init, dtype=complex)
    single = init_arr.ndim == 1
    state0 = init_arr.reshape(3, -1)
    m = state0.shape[1]

    def rhs(x, state):
        y = state.reshape(3, m)
        third = coeff(x) * y[0]
        if forcing is not None:
            third = third + forcing(x)
        return np.concatenate([y[1], y[2], third])

    end = float(grid[-1])
    if end == start:
        values = np.repeat(state0.reshape(3, 1, m), grid.size, axis=1)
    else:
        sol = integrate.solve_ivp(
            rhs,
            (start, end),
            state0.ravel(),
            method="DOP853",
            dense_output=True,
            rtol=tol.rel,
            atol=tol.abs,
            max_step=tol.max_step,
        )
        if sol.status != 0:
            location = float(sol.t[-1]) if sol.t.size else start
            raise StiffnessError(f"integration stopped near x={location:.6g}: {sol.message}", location)
        steps = np.diff(sol.t)
        if tol.min_step > 0 and steps.size > 1 and np.min(steps[:-1]) < tol.min_step:
            j = int(np.argmin(steps[:-1]))
            raise StiffnessError(
                f"step size {steps[j]:.3g} fell below min_step near x={sol.t[j]:.6g}", float(sol.t[j])
            )
        values = sol.sol(grid).reshape(3, m, grid.size).transpose(0, 2, 1)
    if single:
        return Trajectory(grid, values[0][:, 0], values[1][:, 0], values[2][:, 0])
    return Trajectory(grid, values[0], values[1], values[2])


class ShootingSolution(NamedTuple):
    y: np.ndarray
    singular_ratio: float


def shooting_solve(
    coeff: Callable[[float], complex],
    forcing: Callable[[float], complex],
    grid: Sequence[float],
    left: np.ndarray,
    right: np.ndarray,
    segments: int,
    scale: float = 1.0,
    breakpoints: Sequence[float] = (),
    tol: OdeTolerance = OdeTolerance(rel=1e-13, abs=1e-15),
) -> ShootingSolution:
    """Solve y''' = c(x) y + g(x) on [grid[0], grid[-1]] with left @ U(a) + right @ U(b) = 0.

    U = (y, y', y'') and ``left``, ``right`` are 3 x 3.  On each of
    ``segments`` pieces the fundamental matrix and the particular solution
    with zero Cauchy data are integrated in one run; the Cauchy data at the
    segment ends come from one linear system balanced by powers of ``scale``.
    Choosing segments with |growth rate| h of order one keeps the exponentially
    growing solutions from swamping the result.  ``singular_ratio`` is the
    ratio of extreme singular values of that system.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise InvalidInputError("grid must be strictly increasing")
    a, b = float(grid[0]), float(grid[-1])
    inner = [x for x in breakpoints if a < x < b]
    nodes = np.array(sorted(set(np.linspace(a, b, max(1, int(segments)) + 1).tolist()) | set(inner)))
    k_count = nodes.size - 1
    init = np.zeros((3, 4), dtype=complex)
    init[:, :3] = np.eye(3)
    forced = np.array([0.0, 0.0, 0.0, 1.0])
    seg = np.clip(np.searchsorted(nodes, grid, side="right") - 1, 0, k_count - 1)
    d = np.array([1.0, scale, scale * scale])
    size = 3 * (k_count + 1)
    system = np.zeros((size, size), dtype=complex)
    rhs = np.zeros(size, dtype=complex)
    tracks = []
    for k in range(k_count):
        pts = np.unique(np.concatenate([nodes[k:k + 2], grid[seg == k]]))
        traj = integrate_third_order(coeff, init, pts, tol, forcing=lambda x: forcing(x) * forced)
        phi = np.stack([traj.y[-1], traj.dy[-1], traj.d2y[-1]])
        system[3 * k:3 * k + 3, 3 * k:3 * k + 3] = phi[:, :3] * d[None, :] / d[:, None]
        system[3 * k:3 * k + 3, 3 * k + 3:3 * k + 6] = -np.eye(3)
        rhs[3 * k:3 * k + 3] = -phi[:, 3] / d
        tracks.append((pts, traj.y))
    last = 3 * k_count
    system[last:, :3] = np.asarray(left) * d[None, :]
    system[last:, last:] = np.asarray(right) * d[None, :]
    sv = np.linalg.svd(system, compute_uv=False)
    states = np.linalg.solve(system, rhs).reshape(k_count + 1, 3) * d[None, :]
    y = np.empty(grid.size, dtype=complex)
    for k, (pts, values) in enumerate(tracks):
        mask = seg == k
        rows = values[np.searchsorted(pts, grid[mask])]
        y[mask] = rows[:, :3] @ states[k] + rows[:, 3]
    return ShootingSolution(y, float(sv[-1] / sv[0]))


# ---------------------------------------------------------------------------
# roots
# ---------------------------------------------------------------------------

def find_bracketed_root(f: Callable[[float], float], a: float, b: float, tol: float = 1e-14) -> float:
    """Root of a continuous real function on a sign-changing bracket.

    Brent's method keeps the bracket at every step, so convergence is
    guaranteed; the result is within ``|b - a| * tol + tol`` of a root.
    """
    fa, fb = f(a), f(b)
    if fa == 0.0:
        return float(a)
    if fb == 0.0:
        return float(b)
    if not (np.isfinite(fa) and np.isfinite(fb)) or fa * fb > 0:
        raise BracketingError(
            f"no sign change on [{a:.17g}, {b:.17g}] (f(a)={fa:.3g}, f(b)={fb:.3g})", (a, b)
        )
    xtol = tol * (1.0 + abs(b - a))
    return float(optimize.brentq(f, a, b, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500))


def refine_brackets(
    f: Callable[[np.ndarray], np.ndarray],
    lo: np.ndarray,
    hi: np.ndarray,
    xtol: float = 0.0,
    rtol: float = 4e-16,
    max_iter: int = 200,
) -> np.ndarray:
    """Vectorised bracketed root refinement for a batch of independent brackets.

    ``f`` maps an array of abscissae to an array of real values.  Each
    iteration takes an Illinois (modified false-position) step: when the same
    endpoint survives twice its stored value is halved, which restores
    superlinear convergence.  Steps that leave the bracket fall back to
    bisection.
    """
    a = np.array(lo, dtype=float)
    b = np.array(hi, dtype=float)
    fa = np.asarray(f(a), dtype=float).copy()
    fb = np.asarray(f(b), dtype=float).copy()
    bad = np.sign(fa) * np.sign(fb) > 0
    if np.any(bad):
        j = int(np.flatnonzero(bad)[0])
        raise BracketingError(f"no sign change on [{a[j]:.17g}, {b[j]:.17g}]", (a[j], b[j]))
    root = np.where(fa == 0, a, np.where(fb == 0, b, np.nan))
    active = np.isnan(root)
    kept = np.zeros(a.shape, dtype=int)  # +1: a survived last step, -1: b survived
    for _ in range(max_iter):
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        aa, bb, fA, fB = a[idx], b[idx], fa[idx], fb[idx]
        with np.errstate(divide="ignore", invalid="ignore"):
            trial = bb - fB * (bb - aa) / (fB - fA)
        outside = ~np.isfinite(trial) | (trial <= aa) | (trial >= bb)
        trial = np.where(outside, 0.5 * (aa + bb), trial)
        # keep at least one tolerance away from the endpoints so a root sitting
        # on an endpoint collapses the bracket instead of stalling it
        step_tol = xtol + rtol * np.maximum(np.abs(aa), np.abs(bb))
        trial = np.clip(trial, aa + step_tol, bb - step_tol)
        ft = np.asarray(f(trial), dtype=float)
        replace_a = np.sign(ft) == np.sign(fA)
        prev = kept[idx]
        # a survives when b is replaced, and vice versa
        fA = np.where(~replace_a & (prev == 1), 0.5 * fA, fA)
        fB = np.where(replace_a & (prev == -1), 0.5 * fB, fB)
        a[idx] = np.where(replace_a, trial, aa)
        fa[idx] = np.where(replace_a, ft, fA)
        b[idx] = np.where(replace_a, bb, trial)
        fb[idx] = np.where(replace_a, fB, ft)
        kept[idx] = np.where(replace_a, -1, 1)
        exact = ft == 0
        width = b[idx] - a[idx]
        tol_here = xtol + rtol * np.maximum(np.abs(a[idx]), np.abs(b[idx]))
        done = exact | (width <= 2.0 * tol_here)
        pick = np.where(exact, trial, np.where(np.abs(fa[idx]) < np.abs(fb[idx]), a[idx], b[idx]))
        root[idx[done]] = pick[done]
        active[idx[done]] = False
    if np.any(active):
        root[active] = 0.5 * (a[active] + b[active])
    return root


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

def _quad_real(f, a, b, tol, limit, points=None):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            value, err = integrate.quad(f, a, b, epsabs=tol, epsrel=tol, limit=limit, points=points)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"adaptive quadrature on [{a}, {b}] did not converge: {exc}") from None
    return value, err


def quad_adaptive(f: Callable[[float], complex], a: float, b: float, tol: float = 1e-10,
                  limit: int = 400, points: Sequence[float] | None = None) -> complex:
    """Adaptive Gauss-Kronrod integral of a complex-valued function of a real variable."""
    re, err_re = _quad_real(lambda t: complex(f(t)).real, a, b, tol, limit, points)
    im, err_im = _quad_real(lambda t: complex(f(t)).imag, a, b, tol, limit, points)
    value = complex(re, im)
    if math.hypot(err_re, err_im) > tol * (1.0 + abs(value)):
        raise QuadratureError(f"quadrature error estimate {math.hypot(err_re, err_im):.3g} exceeds tolerance")
    return value


def quad_principal_value(f: Callable[[float], complex], a: float, b: float, t: float,
                         tol: float = 1e-10) -> complex:
    """Cauchy principal value of the integral of f(tau)/(tau - t) over (a, b).

    The singularity is subtracted: the smooth remainder (f(tau)-f(t))/(tau-t)
    is integrated adaptively and f(t) ln((b-t)/(t-a)) is added analytically.
    """
    if not a < t < b:
        raise InvalidInputError(f"singular point t={t} must lie strictly inside ({a}, {b})")
    ft = complex(f(t))

    def remainder(tau):
        if tau == t:
            return 0.0
        return (complex(f(tau)) - ft) / (tau - t)

    smooth = quad_adaptive(remainder, a, b, tol=tol, points=[t])
    return smooth + ft * math.log((b - t) / (t - a))


def gauss_legendre(a: float, b: float, n: int, panels: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(n)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


# ---------------------------------------------------------------------------
# truncated products
# ---------------------------------------------------------------------------

class ProductValue(NamedTuple):
    value: complex
    tail_bound: float


def truncated_product(zeros: Sequence[float], lam: complex, N: int | None = None,
                      index_offset: int = 0) -> ProductValue:
    """prod_{|n| <= N} (1 - lambda^3 / lambda_n^3) over indexed real zeros.

    ``zeros[j]`` carries index ``n = index_offset + j``.  Factors with indices
    n and -n are multiplied pairwise before accumulating, which cancels the
    leading 1/n terms of the logarithm.  The returned ``tail_bound`` estimates
    the relative size of the omitted factors from the mean zero spacing.
    """
    zeros = np.asarray(zeros, dtype=float)
    if zeros.size == 0:
        raise InvalidInputError("zeros list is empty")
    if np.any(zeros == 0):
        raise InvalidInputError("a zero located at the origin cannot enter the product")
    idx = index_offset + np.arange(zeros.size)
    if N is not None:
        keep = np.abs(idx) <= N
        zeros, idx = zeros[keep], idx[keep]
    lam = complex(lam)
    lam3 = lam**3
    factors = 1.0 - lam3 / zeros.astype(complex) ** 3
    by_index = dict(zip(idx.tolist(), factors))
    value = complex(1.0)
    seen = set()
    for n in sorted(by_index, key=abs):
        if n in seen:
            continue
        pair = by_index[n]
        if n != 0 and -n in by_index:
            pair = pair * by_index[-n]
            seen.add(-n)
        seen.add(n)
        value *= pair
    spacing = (zeros.max() - zeros.min()) / max(zeros.size - 1, 1)
    n_max = max(int(np.max(np.abs(idx))), 1)
    tail = abs(lam3) / (spacing**3 * n_max**2) if spacing > 0 else math.inf
    return ProductValue(value, float(tail))


# ---------------------------------------------------------------------------
# differentiation of samples
# ---------------------------------------------------------------------------

# worst absolute row sum of the fourth-order stencils (endpoint row), divided by h
FD4_NOISE_AMPLIFICATION = 128.0 / 12.0


def differentiate_smooth(samples, grid, method: str = "fd4", smoothing: float | None = None) -> np.ndarray:
    """Derivative of sampled data.

    ``method="fd4"`` applies fourth-order central differences on a uniform
    grid with one-sided fourth-order stencils at the two nodes nearest each
    end; a perturbation of size eps in the samples changes the result by at
    most ``FD4_NOISE_AMPLIFICATION * eps / h``.  ``method="spline"`` fits a
    smoothing spline (``smoothing`` is its penalty; ``None`` lets the
    generalized cross-validation choose it) and differentiates the fit.
    Complex samples are differentiated part by part.
    """
    y = np.asarray(samples)
    if np.iscomplexobj(y):
        return (differentiate_smooth(y.real, grid, method, smoothing)
                + 1j * differentiate_smooth(y.imag, grid, method, smoothing))
    y = y.astype(float)
    x = np.asarray(grid, dtype=float)
    if y.shape != x.shape or x.ndim != 1:
        raise InvalidInputError("samples and grid must be 1-D arrays of equal length")
    if x.size < 5:
        raise InvalidInputError("at least 5 nodes are required")
    if np.any(np.diff(x) <= 0):
        raise InvalidInputError("grid must be strictly increasing")
    if method == "spline":
        spline = interpolate.make_smoothing_spline(x, y, lam=smoothing)
        return spline.derivative()(x)
    if method != "fd4":
        raise InvalidInputError(f"unknown differentiation method {method!r}")
    h = np.diff(x)
    if np.max(np.abs(h - h.mean())) > 1e-9 * h.mean():
        raise InvalidInputError("fd4 differentiation requires a uniform grid")
    h = h.mean()
    d = np.empty_like(y)
    d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
    d[0] = (-25 * y[0] + 48 * y[1] - 36 * y[2] + 16 * y[3] - 3 * y[4]) / (12 * h)
    d[1] = (-3 * y[0] - 10 * y[1] + 18 * y[2] - 6 * y[3] + y[4]) / (12 * h)
    d[-1] = (25 * y[-1] - 48 * y[-2] + 36 * y[-3] - 16 * y[-4] + 3 * y[-5]) / (12 * h)
    d[-2] = (3 * y[-1] + 10 * y[-2] - 18 * y[-3] + 6 * y[-4] - y[-5]) / (12 * h)
    return d
