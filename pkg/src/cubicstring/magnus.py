"""Batched fourth-order commutator-free Magnus propagator for y''' = c(x) y.

The coefficient is c(x) = -i sign (lambda^3 - q(x)), with sign = +1 for the
operator and sign = -1 for its adjoint.  Every sub-step uses the exact
constant-coefficient propagator built from the generalised trigonometric
functions, so the step size is limited by the variation of q and not by
|lambda|.  Matrices are kept in balanced coordinates z = D^{-1} y with
D = diag(1, s, s^2), s = max(|lambda|, 1), and renormalised after each step
with the logarithm of the scale accumulated separately.  This makes the
propagator usable for |lambda| l in the thousands, where explicit
Runge-Kutta integration of the raw system becomes prohibitively slow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .gtrig import SWITCH_RADIUS, _exponential_all
from .potential import Potential

_ALPHA1 = 0.25 + math.sqrt(3.0) / 6.0
_ALPHA2 = 0.25 - math.sqrt(3.0) / 6.0
_GAUSS = (0.5 - math.sqrt(3.0) / 6.0, 0.5 + math.sqrt(3.0) / 6.0)
_MAX_SUBSTEP_ARGUMENT = 100.0


@dataclass(frozen=True)
class Propagation:
    """Fundamental matrix at x_end: Phi = exp(log_scale) * D @ balanced @ D^{-1}.

    Column p of Phi holds (y_p, y_p', y_p'') for the solution with Cauchy
    data e_p at the origin.
    """

    lam: np.ndarray
    balanced: np.ndarray  # shape (n, 3, 3)
    log_scale: np.ndarray  # shape (n,)
    scale: np.ndarray  # s = max(|lambda|, 1)

    def solution_log(self, p: int) -> tuple[np.ndarray, np.ndarray]:
        """``(mantissa, exponent)`` of y_p(x_end) with y_p^{(j)}(0) = delta_{jp}."""
        return self.balanced[:, 0, p] / self.scale**p, self.log_scale

    def entry_log(self, row: int, col: int) -> tuple[np.ndarray, np.ndarray]:
        """``(mantissa, exponent)`` of Phi[row, col]."""
        factor = self.scale ** (row - col)
        return self.balanced[:, row, col] * factor, self.log_scale

    def matrix(self) -> np.ndarray:
        """Unscaled fundamental matrices; overflows for large |lambda| x_end."""
        d = np.stack([np.ones_like(self.scale), self.scale, self.scale**2], axis=-1)
        return np.exp(self.log_scale)[:, None, None] * d[:, :, None] * self.balanced / d[:, None, :]


_SERIES_TERMS = 10
# _SERIES_COEFFS[p][n] = 1/(3n+p)!
_SERIES_COEFFS = [[1.0 / math.factorial(3 * n + p) for n in range(_SERIES_TERMS)] for p in range(3)]


def _reduced_all(c: np.ndarray, tau: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """s_p(mu tau) / mu^p for p = 0, 1, 2 and mu^3 = c, independent of the cube root.

    Below the switch radius the series in w = c tau^3 is summed with a fixed
    number of Horner steps (|w| < 3.4 makes ten terms exact to rounding).
    """
    c = np.asarray(c, dtype=complex)
    w = c * tau**3
    small = np.abs(w) < SWITCH_RADIUS**3
    out = [np.empty(c.shape, dtype=complex) for _ in range(3)]
    if np.any(small):
        ws = w[small]
        for p in range(3):
            acc = np.full(ws.shape, _SERIES_COEFFS[p][-1], dtype=complex)
            for coeff in reversed(_SERIES_COEFFS[p][:-1]):
                acc = acc * ws + coeff
            out[p][small] = tau**p * acc
    big = ~small
    if np.any(big):
        mu = c[big] ** (1.0 / 3.0)
        values = _exponential_all(mu * tau)
        for p in range(3):
            out[p][big] = values[p] / mu**p
    return out[0], out[1], out[2]


def _constant_step(c: np.ndarray, tau: float, scale: np.ndarray) -> np.ndarray:
    """Balanced propagator over length tau for constant coefficient c."""
    r0, r1, r2 = _reduced_all(c, tau)
    step = np.empty(c.shape + (3, 3), dtype=complex)
    step[:, 0, 0] = step[:, 1, 1] = step[:, 2, 2] = r0
    step[:, 0, 1] = step[:, 1, 2] = scale * r1
    step[:, 0, 2] = scale**2 * r2
    step[:, 1, 0] = step[:, 2, 1] = c * r2 / scale
    step[:, 2, 0] = c * r1 / scale**2
    return step


def default_steps(lam, l: float, minimum: int = 256) -> int:
    """Step count keeping every constant-coefficient sub-step argument moderate."""
    top = float(np.max(np.abs(np.atleast_1d(lam)), initial=0.0))
    return max(minimum, int(math.ceil(top * l / _MAX_SUBSTEP_ARGUMENT)))


def _step_layout(potential: Potential, end: float, n: int):
    """Uniform steps on each piece between the potential's breakpoints."""
    edges = [0.0] + [b for b in potential.breakpoints if b < end] + [end]
    for a, b in zip(edges[:-1], edges[1:]):
        pieces = max(1, int(round(n * (b - a) / end)))
        h = (b - a) / pieces
        yield h, a + np.arange(pieces) * h


def propagate(potential: Potential, lam, x_end: float | None = None, n_steps: int | None = None,
              adjoint: bool = False) -> Propagation:
    """Propagate the fundamental system from 0 to ``x_end`` for every lambda.

    Parameters
    ----------
    potential
        Real potential on [0, l].
    lam
        Spectral parameters (any shape, flattened internally).
    x_end
        End point, defaults to l.
    n_steps
        Number of Magnus steps; by default chosen from max |lambda| x_end.
    adjoint
        Use the adjoint equation i y''' - q y = -lambda^3 y.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=complex)).ravel()
    end = potential.l if x_end is None else float(x_end)
    if not 0.0 <= end <= potential.l * (1 + 1e-12):
        raise InvalidInputError(f"x_end={end} outside [0, {potential.l}]")
    n = default_steps(lam, max(end, 1e-300)) if n_steps is None else int(n_steps)
    if n < 1:
        raise InvalidInputError("n_steps must be positive")
    scale = np.maximum(np.abs(lam), 1.0)
    total = np.broadcast_to(np.eye(3, dtype=complex), (lam.size, 3, 3)).copy()
    log_scale = np.zeros(lam.size)
    if end == 0.0:
        return Propagation(lam, total, log_scale, scale)

    sign = -1.0 if adjoint else 1.0
    cube = lam**3
    for h, starts in _step_layout(potential, end, n):
        q1 = potential(starts + _GAUSS[0] * h)
        q2 = potential(starts + _GAUSS[1] * h)
        # the two exponentials each span a half step with these averaged potentials
        q_first = 2.0 * (_ALPHA1 * q1 + _ALPHA2 * q2)
        q_second = 2.0 * (_ALPHA2 * q1 + _ALPHA1 * q2)
        for j in range(starts.size):
            for q_eff in (q_first[j], q_second[j]):
                c = -1j * sign * (cube - q_eff)
                total = _constant_step(c, 0.5 * h, scale) @ total
            norm = np.max(np.abs(total), axis=(1, 2))
            total /= norm[:, None, None]
            log_scale += np.log(norm)
    return Propagation(lam, total, log_scale, scale)
