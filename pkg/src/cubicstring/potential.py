"""Real potentials q on [0, l] and the builtin test corpus."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, interpolate

from .errors import InvalidInputError

_SIGMA_NODES = 4001


@dataclass(frozen=True)
class Potential:
    """A real potential with its accumulated modulus sigma(x) = int_0^x |q|.

    ``q`` must accept numpy arrays.  ``name`` and ``params`` describe the
    potential for manifests and reports.  ``breakpoints`` lists interior
    points where q jumps; integrators align their steps with them.
    """

    l: float
    q: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    params: dict = field(default_factory=dict)
    breakpoints: tuple[float, ...] = ()
    _sigma_grid: np.ndarray = field(init=False, repr=False, compare=False)
    _sigma_values: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.l > 0 and math.isfinite(self.l)):
            raise InvalidInputError(f"interval length must be positive, got {self.l!r}")
        grid = np.linspace(0.0, self.l, _SIGMA_NODES)
        values = np.asarray(self.q(grid), dtype=float)
        if values.shape != grid.shape:
            raise InvalidInputError("potential must be vectorised and real-valued")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("potential has non-finite values")
        sigma = integrate.cumulative_simpson(np.abs(values), x=grid, initial=0.0)
        sigma = np.maximum.accumulate(np.maximum(sigma, 0.0))
        inside = tuple(sorted(float(b) for b in self.breakpoints if 0.0 < b < self.l))
        object.__setattr__(self, "breakpoints", inside)
        object.__setattr__(self, "_sigma_grid", grid)
        object.__setattr__(self, "_sigma_values", sigma)

    def __call__(self, x):
        return np.asarray(self.q(np.asarray(x, dtype=float)), dtype=float)

    def sigma(self, x):
        """Accumulated modulus int_0^x |q(t)| dt."""
        return np.interp(x, self._sigma_grid, self._sigma_values)

    @property
    def is_zero(self) -> bool:
        return self.name == "zero"

    def integral(self, x):
        """F(x) = int_0^x q(t) dt, by Gauss-Legendre quadrature per node."""
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        nodes, weights = np.polynomial.legendre.leggauss(40)
        out = np.empty(xs.shape)
        for j, xv in enumerate(xs):
            panels = max(1, int(math.ceil(8 * xv / self.l)))
            edges = np.linspace(0.0, xv, panels + 1)
            total = 0.0
            for a, b in zip(edges[:-1], edges[1:]):
                t = 0.5 * (a + b) + 0.5 * (b - a) * nodes
                total += 0.5 * (b - a) * float(np.dot(weights, self(t)))
            out[j] = total
        return out if np.ndim(x) else float(out[0])

    def rescaled(self, s: float) -> "Potential":
        """The potential s^3 q(s x) on [0, l/s]; spectra scale as lambda -> s lambda."""
        base = self.q
        params = dict(self.params, rescale=s)
        return Potential(self.l / s, lambda x: s**3 * base(s * np.asarray(x)), self.name, params,
                         tuple(b / s for b in self.breakpoints))

    # -- corpus ---------------------------------------------------------------

    @classmethod
    def zero(cls, l: float = 1.0) -> "Potential":
        return cls(l, lambda x: np.zeros_like(np.asarray(x, dtype=float)), "zero", {})

    @classmethod
    def cosine(cls, l: float = 1.0, amplitude: float = 0.3, k: int = 1) -> "Potential":
        return cls(
            l,
            lambda x: amplitude * np.cos(2.0 * np.pi * k * np.asarray(x, dtype=float) / l),
            "cosine",
            {"amplitude": amplitude, "k": k},
        )

    @classmethod
    def gaussian(cls, l: float = 1.0, amplitude: float = 0.5, center: float | None = None,
                 width: float = 0.1) -> "Potential":
        c = 0.5 * l if center is None else center
        return cls(
            l,
            lambda x: amplitude * np.exp(-(((np.asarray(x, dtype=float) - c) / width) ** 2)),
            "gaussian",
            {"amplitude": amplitude, "center": c, "width": width},
        )

    @classmethod
    def step(cls, l: float = 1.0, amplitude: float = 0.3, position: float | None = None) -> "Potential":
        p = 0.5 * l if position is None else position
        return cls(
            l,
            lambda x: np.where(np.asarray(x, dtype=float) < p, amplitude, 0.0),
            "step",
            {"amplitude": amplitude, "position": p},
            (p,),
        )

    @classmethod
    def from_samples(cls, x, values, name: str = "samples") -> "Potential":
        """Cubic-spline interpolant of samples covering [0, l]."""
        x = np.asarray(x, dtype=float)
        values = np.asarray(values, dtype=float)
        if x.ndim != 1 or x.shape != values.shape or x.size < 4:
            raise InvalidInputError("need at least 4 matching (x, q) samples")
        if abs(x[0]) > 1e-12 or np.any(np.diff(x) <= 0):
            raise InvalidInputError("sample grid must start at 0 and increase strictly")
        spline = interpolate.CubicSpline(x, values)
        return cls(float(x[-1]), lambda t: spline(np.asarray(t, dtype=float)), name, {"nodes": int(x.size)})


BUILTIN_POTENTIALS = ("zero", "cosine", "gaussian", "step")


def builtin_potential(name: str, l: float = 1.0, **params) -> Potential:
    """Construct one of the builtin potentials by name."""
    factories = {
        "zero": Potential.zero,
        "cosine": Potential.cosine,
        "gaussian": Potential.gaussian,
        "step": Potential.step,
    }
    if name not in factories:
        raise InvalidInputError(f"unknown builtin potential {name!r}; choose from {BUILTIN_POTENTIALS}")
    return factories[name](l, **params)
