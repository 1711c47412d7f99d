"""Recovery of the potential from four spectra.

Pipeline:

1. The four characteristic functions are rebuilt as Hadamard products from
   their real zeros and the values at lambda = 0.
2. s_2(lambda, l) and s_0(lambda, l) follow from linear combinations of
   those products.
3. s_1(lambda, l) follows from the factorisation s_2* s_0 + s_0* s_2 = s_1* s_1.
4. B_1 is assembled from the recovered functions and handed to the jump
   solver of :mod:`cubicstring.bvp_direct`.
5. F(x) = int_0^x q is extracted from the large-|lambda| behaviour of E_1(lambda, x).
6. q = F' is obtained by smooth differentiation.

All characteristic functions here are functions of mu = lambda^3 of order
1/3, so their Hadamard products carry no exponential factor.
"""

from __future__ import annotations

import cmath
import functools
import itertools
import json
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import jsonschema
import numpy as np
from scipy import optimize

from . import bvp_direct as bvp
from .errors import InvalidInputError, NumericError, ValidationError
from .gtrig import s_zero
from .numerics import differentiate_smooth
from .op_lq import check_admissible, free_real_zeros, fundamental_system, lq_real_zeros
from .potential import Potential

__all__ = [
    "REPORT_SCHEMA",
    "ReconstructionConfig",
    "ReconstructionError",
    "ReconstructionResult",
    "S1Reconstruction",
    "SpectralFunction",
    "SpectralSet",
    "characteristic_function",
    "default_thetas",
    "forward_spectral_data",
    "reconstruct_potential",
    "reconstruct_s0",
    "reconstruct_s1",
    "reconstruct_s2",
    "roundtrip_report",
    "s0_from_characteristics",
    "s2_from_characteristics",
    "validate_report",
]

DEFAULT_PHI = 0.4
DEFAULT_PHI_HAT = 1.1
DEFAULT_H = 0.5


def default_thetas() -> tuple[complex, complex, float]:
    """(theta, theta_hat, h) = (exp(0.8 i), exp(2.2 i), 0.5)."""
    return cmath.exp(2j * DEFAULT_PHI), cmath.exp(2j * DEFAULT_PHI_HAT), DEFAULT_H


def _cx(z: complex) -> dict:
    return {"re": float(z.real), "im": float(z.imag)}


def _from_cx(d: dict) -> complex:
    return complex(float(d["re"]), float(d["im"]))


# ---------------------------------------------------------------------------
# spectral data sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralSet:
    """One spectral data set: boundary constants, theta, optional h and indexed real zeros.

    ``lambdas[j]`` carries the index ``index_offset + j``.  Sets without ``h``
    describe the spectrum of Delta_theta; sets with ``h`` that of
    Delta_{theta,h} and must also carry ``b``.
    """

    l: float
    theta: complex
    a: complex
    lambdas: np.ndarray
    index_offset: int = 0
    h: float | None = None
    b: complex | None = None

    def __post_init__(self):
        object.__setattr__(self, "theta", complex(self.theta))
        object.__setattr__(self, "a", complex(self.a))
        object.__setattr__(self, "lambdas", np.asarray(self.lambdas, dtype=float))
        if not (self.l > 0 and math.isfinite(self.l)):
            raise InvalidInputError(f"interval length must be positive, got {self.l!r}")
        if abs(abs(self.theta) - 1.0) > 1e-12:
            raise InvalidInputError(f"|theta| must be 1, got {abs(self.theta)!r}")
        if self.lambdas.ndim != 1 or self.lambdas.size == 0:
            raise InvalidInputError("lambdas must be a non-empty 1-D list")
        if np.any(np.diff(self.lambdas) <= 0):
            raise ValidationError("lambdas must be strictly increasing")
        if np.any(self.lambdas == 0):
            raise ValidationError("lambda = 0 cannot be a point of the spectrum")
        if self.h is not None:
            if self.b is None:
                raise InvalidInputError("a set with h also needs b = s_0(0, l)")
            object.__setattr__(self, "h", float(self.h))
            object.__setattr__(self, "b", complex(self.b))
            if self.h == 0:
                raise InvalidInputError("h must be non-zero; omit it for the theta-only problem")
        elif self.b is not None:
            object.__setattr__(self, "b", complex(self.b))
        check_admissible(self.a, self.b or 0j, self.theta, self.h or 0.0)

    @property
    def kind(self) -> str:
        return "theta" if self.h is None else "theta-h"

    @property
    def indices(self) -> np.ndarray:
        return self.index_offset + np.arange(self.lambdas.size)

    @property
    def theta0(self) -> complex:
        return self.a.conjugate() / self.a

    @property
    def value_at_zero(self) -> complex:
        """Delta(0) = -a (theta + theta0) - i h b (theta - theta1)."""
        value = -self.a * (self.theta + self.theta0)
        if self.h is not None:
            value -= 1j * self.h * (self.theta * self.b - self.b.conjugate())
        return value

    def rescaled(self, s: float) -> "SpectralSet":
        """Data of s^3 q(s x) on [0, l/s]: zeros times s, a and h divided by s^2, b unchanged."""
        return SpectralSet(self.l / s, self.theta, self.a / s**2, self.lambdas * s, self.index_offset,
                           None if self.h is None else self.h / s**2, self.b)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "l": self.l, "theta": _cx(self.theta), "a": _cx(self.a),
               "lambdas": [float(v) for v in self.lambdas], "index_offset": int(self.index_offset)}
        if self.h is not None:
            out["h"] = self.h
        if self.b is not None:
            out["b"] = _cx(self.b)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SpectralSet":
        try:
            kind = data.get("kind", "theta-h" if "h" in data else "theta")
            if kind not in ("theta", "theta-h"):
                raise InvalidInputError(f"unknown spectral set kind {kind!r}")
            h = data.get("h")
            if (kind == "theta-h") != (h is not None):
                raise InvalidInputError(f"kind {kind!r} inconsistent with the presence of h")
            b = data.get("b")
            return cls(float(data["l"]), _from_cx(data["theta"]), _from_cx(data["a"]),
                       np.asarray(data["lambdas"], dtype=float), int(data.get("index_offset", 0)),
                       None if h is None else float(h), None if b is None else _from_cx(b))
        except (KeyError, TypeError) as exc:
            raise InvalidInputError(f"malformed spectral set: {exc!r}") from exc

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def from_json(cls, path) -> "SpectralSet":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidInputError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(data)


def forward_spectral_data(pot: Potential, theta: complex, h: float | None = None,
                          n_lo: int = -500, n_hi: int = 500) -> SpectralSet:
    """Compute a spectral data set of a known potential (zeros with n_lo <= n <= n_hi)."""
    spectrum = lq_real_zeros(pot, theta, n_lo, n_hi, h=0.0 if h is None else float(h))
    b = spectrum.b if h is not None else None
    return SpectralSet(pot.l, spectrum.theta, spectrum.a, spectrum.zeros, int(spectrum.indices[0]),
                       h, b)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReconstructionConfig:
    """Every tolerance, grid and truncation used by the reconstruction.

    N
        zeros with |n| <= N enter the products.
    tail
        free-spectrum surrogates extend the products up to |n| <= tail.
    s1_zeros
        number of zeros of s_1 located individually; free values beyond.
    s1_tail
        number of free zeros of s_1 used as surrogates.
    classification_tol
        zeros of s_2* s_0 + s_0* s_2 with |Im mu| below this fraction of
        |mu| are flagged as ambiguous.
    zero_tol
        accepted relative residual of those zeros.
    pole_tol
        accepted scaled residual of the zeros of the recovered B_1*.
    phase_radii
        radii R of lambda = -i R (in units of 1/l) for fixing the phase of s_1.
    x_nodes
        uniform spatial nodes on [0, l] at which F is extracted.
    tau_nodes, n_poles, cutoff
        discretisation of the jump problem (``cutoff=None`` picks the default).
    fit_powers
        inverse powers of lambda in the extraction model.
    fit_radii
        extraction radii in units of 1/l; ``None`` uses the x-dependent defaults.
    derivative, smoothing
        method and penalty for differentiating F.
    condition_limit
        jump systems above this condition number abort the run
        (``None`` forces a least-squares solve).
    workers
        threads used for the per-x jump solves.
    """

    N: int = 500
    tail: int = 2000
    s1_zeros: int = 8
    s1_tail: int = 2000
    classification_tol: float = 1e-6
    zero_tol: float = 1e-6
    pole_tol: float = 1e-4
    phase_radii: tuple[float, ...] = (10.0, 14.0, 20.0, 28.0, 40.0, 56.0)
    x_nodes: int = 21
    tau_nodes: int = 200
    n_poles: int = 12
    cutoff: float | None = None
    fit_powers: tuple[int, ...] = bvp.DEFAULT_FIT_POWERS
    fit_radii: tuple[float, ...] | None = None
    derivative: str = "fd4"
    smoothing: float | None = None
    condition_limit: float | None = 1e14
    workers: int = 4

    def __post_init__(self):
        for name in ("N", "tail", "s1_zeros", "s1_tail", "x_nodes", "tau_nodes", "n_poles", "workers"):
            if int(getattr(self, name)) <= 0:
                raise InvalidInputError(f"{name} must be positive")
        if self.tail < self.N:
            raise InvalidInputError("tail must be at least N")
        if self.x_nodes < 5:
            raise InvalidInputError("x_nodes must be at least 5 for differentiation")
        if len(self.phase_radii) < 3 or np.any(np.diff(self.phase_radii) <= 0) or min(self.phase_radii) <= 0:
            raise InvalidInputError("phase_radii must be at least 3 increasing positive radii")
        if self.fit_radii is not None:
            radii = np.asarray(self.fit_radii, dtype=float)
            if radii.size < len(self.fit_powers) or np.any(np.diff(radii) <= 0) or radii[0] <= 0:
                raise InvalidInputError("fit_radii must increase, be positive and outnumber fit_powers")
        if self.derivative not in ("fd4", "spline"):
            raise InvalidInputError(f"unknown differentiation method {self.derivative!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_mapping(cls, values: dict) -> "ReconstructionConfig":
        """Build from string or typed values; tuples accept comma-separated strings."""
        types = {f.name: f.type for f in cls.__dataclass_fields__.values()}
        kwargs = {}
        for key, raw in values.items():
            if key not in types:
                raise InvalidInputError(f"unknown reconstruction setting {key!r}")
            kwargs[key] = _coerce(key, types[key], raw)
        return cls(**kwargs)


def _coerce(key: str, kind: str, raw):
    if not isinstance(raw, str):
        return tuple(raw) if isinstance(raw, list) else raw
    text = raw.strip()
    try:
        if "None" in kind and text.lower() in ("none", ""):
            return None
        if "tuple[int" in kind:
            return tuple(int(v) for v in text.split(","))
        if "tuple[float" in kind:
            return tuple(float(v) for v in text.split(","))
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
        return text
    except ValueError as exc:
        raise InvalidInputError(f"cannot parse {key}={raw!r}") from exc


# ---------------------------------------------------------------------------
# characteristic functions from zeros
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=32)
def _free_zeros(l: float, theta: complex, h: float, count: int) -> np.ndarray:
    return free_real_zeros(l, theta, h, -count, count)


def _extended_zeros(ss: SpectralSet, N: int, tail: int) -> np.ndarray:
    """Zeros with |n| <= N, extended beyond the computed window by free-spectrum values."""
    keep = np.abs(ss.indices) <= N
    zeros = ss.lambdas[keep]
    if zeros.size == 0:
        raise InvalidInputError(f"no zeros with |n| <= {N} in the data set")
    if tail <= N:
        return zeros
    gap = 2.0 * math.pi / ss.l
    free = _free_zeros(ss.l, ss.theta, ss.h or 0.0, tail)
    above = free[free > zeros[-1] + 0.5 * gap]
    below = free[free < zeros[0] - 0.5 * gap]
    n_top = int(ss.indices[keep][-1])
    n_bottom = int(ss.indices[keep][0])
    above = above[: max(tail - n_top, 0)]
    below = below[::-1][: max(tail + n_bottom, 0)][::-1]
    return np.concatenate([below, zeros, above])


def _product(zeros: np.ndarray, lam) -> np.ndarray:
    """prod (1 - lambda^3 / lambda_n^3), vectorised over lambda."""
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    inv = 1.0 / zeros.astype(complex) ** 3
    cube = lam**3
    out = np.ones(lam.shape, dtype=complex)
    for chunk in np.array_split(inv, max(1, inv.size // 512)):
        out *= np.prod(1.0 - cube[..., None] * chunk, axis=-1)
    return out


def _omitted_cube_sum(zeros: np.ndarray, l: float) -> float:
    """Midpoint-rule estimate of sum lambda_n^-3 over the zeros beyond both ends of ``zeros``.

    Far zeros are spaced by g = 2 pi / l, so the sum over n > n_top is close
    to the integral of (g t)^-3 from lambda_top + g/2, i.e. 1/(2 g (lambda_top + g/2)^2).
    The leading 1/n^2 parts of the two sides cancel only up to the asymmetry
    of the zero offsets, which is what this correction captures.
    """
    g = 2.0 * math.pi / l
    top, bottom = float(zeros[-1]), float(zeros[0])
    total = 0.0
    if top > 0:
        total += 1.0 / (2.0 * g * (top + 0.5 * g) ** 2)
    if bottom < 0:
        total -= 1.0 / (2.0 * g * (-bottom + 0.5 * g) ** 2)
    return total


@dataclass(frozen=True)
class SpectralFunction:
    """A vectorised complex function of lambda with a truncation estimate.

    ``tail_bound(lam)`` bounds the relative contribution of the zeros
    omitted from the underlying products, assuming they follow the free
    spectrum to within its spacing.
    """

    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    l: float
    truncation: int

    def __call__(self, lam):
        arr = np.asarray(lam, dtype=complex)
        out = self.fn(arr.ravel()).reshape(arr.shape)
        return complex(out) if arr.ndim == 0 else out

    def star(self, lam):
        """f*(lambda) = conj f(conj lambda)."""
        return np.conj(self(np.conj(np.asarray(lam, dtype=complex))))

    def tail_bound(self, lam) -> np.ndarray:
        gap = 2.0 * math.pi / self.l
        return np.abs(np.asarray(lam)) ** 3 / (gap**3 * self.truncation**2)


def characteristic_function(ss: SpectralSet, N: int | None = None, tail: int | None = None) -> SpectralFunction:
    """Delta(lambda) = Delta(0) prod (1 - lambda^3 / lambda_n^3) rebuilt from a data set."""
    cfg = ReconstructionConfig()
    N = cfg.N if N is None else int(N)
    tail = max(N, cfg.tail if tail is None else int(tail))
    zeros = _extended_zeros(ss, N, tail)
    at_zero = ss.value_at_zero
    remainder = _omitted_cube_sum(zeros, ss.l)
    return SpectralFunction(lambda lam: at_zero * _product(zeros, lam) * np.exp(-np.asarray(lam) ** 3 * remainder),
                            ss.l, tail)


def s2_from_characteristics(delta: Callable, delta_hat: Callable, theta: complex,
                            theta_hat: complex) -> Callable:
    """s_2 = [Delta_theta_hat - Delta_theta] / (theta - theta_hat) from any two characteristic functions."""
    if abs(theta - theta_hat) < 1e-12:
        raise InvalidInputError("theta and theta_hat coincide; the pair is degenerate")
    return lambda lam: (delta_hat(lam) - delta(lam)) / (theta - theta_hat)


def s0_from_characteristics(delta: Callable, delta_hat: Callable, delta_h: Callable, delta_hat_h: Callable,
                            theta: complex, theta_hat: complex, h: float) -> Callable:
    """s_0 = [(Delta_theta - Delta_theta,h) - (Delta_theta_hat - Delta_theta_hat,h)] / (i h (theta - theta_hat))."""
    if abs(theta - theta_hat) < 1e-12:
        raise InvalidInputError("theta and theta_hat coincide; the pair is degenerate")
    if h == 0:
        raise InvalidInputError("h must be non-zero")
    scale = 1j * h * (theta - theta_hat)
    return lambda lam: ((delta(lam) - delta_h(lam)) - (delta_hat(lam) - delta_hat_h(lam))) / scale


def _same(u: complex, v: complex, tol: float = 1e-8) -> bool:
    return abs(u - v) <= tol * max(1.0, abs(u), abs(v))


def _check_pair(first: SpectralSet, second: SpectralSet, kind: str) -> None:
    if first.kind != kind or second.kind != kind:
        raise InvalidInputError(f"expected two {kind!r} data sets, got {first.kind!r} and {second.kind!r}")
    if not _same(first.l, second.l, 1e-12):
        raise ValidationError(f"data sets disagree on l ({first.l} vs {second.l})")
    if not _same(first.a, second.a):
        raise ValidationError("data sets disagree on a = s_2(0, l)")
    if _same(first.theta, second.theta, 1e-12):
        raise InvalidInputError("theta and theta_hat coincide; the pair is degenerate")


def reconstruct_s2(set_theta: SpectralSet, set_theta_hat: SpectralSet,
                   cfg: ReconstructionConfig | None = None) -> SpectralFunction:
    """s_2(lambda, l) from the spectra for theta and theta_hat (h = 0)."""
    cfg = cfg or ReconstructionConfig()
    _check_pair(set_theta, set_theta_hat, "theta")
    d = characteristic_function(set_theta, cfg.N, cfg.tail)
    d_hat = characteristic_function(set_theta_hat, cfg.N, cfg.tail)
    fn = s2_from_characteristics(d.fn, d_hat.fn, set_theta.theta, set_theta_hat.theta)
    return SpectralFunction(fn, set_theta.l, d.truncation)


def reconstruct_s0(set_theta: SpectralSet, set_theta_hat: SpectralSet, set_theta_h: SpectralSet,
                   set_theta_hat_h: SpectralSet, cfg: ReconstructionConfig | None = None) -> SpectralFunction:
    """s_0(lambda, l) from the four spectra."""
    cfg = cfg or ReconstructionConfig()
    _check_pair(set_theta, set_theta_hat, "theta")
    _check_pair(set_theta_h, set_theta_hat_h, "theta-h")
    for plain, shifted in ((set_theta, set_theta_h), (set_theta_hat, set_theta_hat_h)):
        if not _same(plain.theta, shifted.theta, 1e-12):
            raise ValidationError("each h-set must share theta with its partner set")
        if not _same(plain.a, shifted.a) or not _same(plain.l, shifted.l, 1e-12):
            raise ValidationError("the four data sets disagree on l or a")
    if set_theta_h.h != set_theta_hat_h.h:
        raise ValidationError("the two h-sets use different h")
    if not _same(set_theta_h.b, set_theta_hat_h.b):
        raise ValidationError("the two h-sets disagree on b = s_0(0, l)")
    fns = [characteristic_function(s, cfg.N, cfg.tail).fn
           for s in (set_theta, set_theta_hat, set_theta_h, set_theta_hat_h)]
    fn = s0_from_characteristics(*fns, set_theta.theta, set_theta_hat.theta, set_theta_h.h)
    return SpectralFunction(fn, set_theta.l, max(cfg.N, cfg.tail))


# ---------------------------------------------------------------------------
# s_1 from the factorisation s_1* s_1 = s_2* s_0 + s_0* s_2
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class S1Reconstruction:
    """s_1(lambda, l) = C prod (1 - lambda^3 / nu_k) with nu_k its zeros in mu = lambda^3.

    ``zeros`` are the located zeros (the free values of the remaining ones
    are appended internally), ``flagged`` lists the positions whose
    classification was ambiguous, and ``asymptotic_mismatch`` is
    | |c_0| - 1 | for the extrapolated value c_0 of 3 i lambda s_1 e^{-i lambda l}
    on the ray lambda = -i R.
    """

    l: float
    constant: complex
    zeros: np.ndarray
    surrogates: np.ndarray = field(repr=False)
    flagged: tuple[int, ...]
    asymptotic_mismatch: float
    product_of: Callable = field(repr=False)

    def __call__(self, lam):
        arr = np.asarray(lam, dtype=complex)
        out = self.constant * self.product_of(arr.ravel())
        out = out.reshape(arr.shape)
        return complex(out) if arr.ndim == 0 else out

    def star(self, lam):
        return np.conj(self(np.conj(np.asarray(lam, dtype=complex))))

    def lambda_zeros(self) -> np.ndarray:
        """The located zeros as lambda = principal cube root of nu_k."""
        return self.zeros.astype(complex) ** (1.0 / 3.0)


@functools.lru_cache(maxsize=8)
def _free_s1_table(l: float, count: int) -> np.ndarray:
    """mu-zeros -i (x_k / l)^3 of the unperturbed s_1(lambda, l), x_k the positive zeros of s_1(-x).

    Past the first sixty the zeros follow their asymptotic spacing 2 pi / sqrt(3).
    """
    base = [s_zero(1, k) for k in range(2, min(count, 60) + 2)]
    step = 2.0 * math.pi / math.sqrt(3.0)
    extra = base[-1] + step * np.arange(1, count - len(base) + 1)
    x = np.concatenate([base, extra])[:count]
    return -1j * (x / l) ** 3


def _mu_product(nus: np.ndarray, mu: np.ndarray, l: float) -> np.ndarray:
    """prod (1 - mu / nu_k) times the midpoint estimate of the factors beyond the last nu_k.

    The omitted zeros continue as -i (x / l)^3 with x spaced by g = 2 pi / sqrt(3).
    """
    out = np.ones(mu.shape, dtype=complex)
    for chunk in np.array_split(1.0 / nus, max(1, nus.size // 512)):
        out *= np.prod(1.0 - mu[..., None] * chunk, axis=-1)
    g = 2.0 * math.pi / math.sqrt(3.0)
    x_last = l * abs(nus[-1]) ** (1.0 / 3.0)
    remainder = 1j * l**3 / (2.0 * g * (x_last + 0.5 * g) ** 2)
    return out * np.exp(-mu * remainder)


def _phase_fit(values: np.ndarray, radii: np.ndarray) -> complex:
    """Extrapolate values(R) = c0 + c1/R + c2/R^2 to R -> infinity."""
    design = np.stack([radii**-p for p in range(3)], axis=1)
    coeffs, *_ = np.linalg.lstsq(design.astype(complex), values, rcond=None)
    return complex(coeffs[0])


def reconstruct_s1(s0_fn: Callable, s2_fn: Callable, l: float,
                   cfg: ReconstructionConfig | None = None) -> S1Reconstruction:
    """s_1(lambda, l) from s_0 and s_2 up to the unimodular constant, fixed on lambda = -i R.

    The zeros of P = s_2* s_0 + s_0* s_2 in mu = lambda^3 come in conjugate
    pairs.  Those in the lower half mu-plane (on the image of the rays that
    carry the zeros of s_1 for q = 0) are assigned to s_1.  Ambiguous pairs
    near the real mu-axis are resolved by the assignment that minimises the
    asymptotic mismatch.
    """
    cfg = cfg or ReconstructionConfig()

    def star(f, lam):
        return np.conj(f(np.conj(lam)))

    def P(lam):
        return star(s2_fn, lam) * s0_fn(lam) + star(s0_fn, lam) * s2_fn(lam)

    def P_mu(mu):
        return P(np.asarray(mu, dtype=complex) ** (1.0 / 3.0))

    seeds = _free_s1_table(l, cfg.s1_zeros + cfg.s1_tail)[: cfg.s1_zeros]
    with warnings.catch_warnings():
        # the free seeds are often already zeros to rounding, which trips the secant's own test
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            nus = optimize.newton(P_mu, seeds, x1=seeds * (1 + 1e-4), tol=1e-12, rtol=1e-13, maxiter=100)
        except (RuntimeError, OverflowError) as exc:
            raise NumericError(f"zeros of s_2* s_0 + s_0* s_2 could not be located ({exc})") from exc
    nus = np.atleast_1d(np.asarray(nus, dtype=complex))
    roots = nus ** (1.0 / 3.0)
    scale = (np.abs(star(s2_fn, roots) * s0_fn(roots)) + np.abs(star(s0_fn, roots) * s2_fn(roots)))
    relative = np.abs(P(roots)) / scale
    drift = np.abs(roots - seeds ** (1.0 / 3.0)) * l
    bad = np.flatnonzero(~(np.isfinite(relative) & (relative < cfg.zero_tol) & (drift < 0.4 * 2.0 * math.pi / math.sqrt(3.0))))
    if bad.size:
        raise NumericError(f"zeros {list(int(b) + 1 for b in bad)} of s_2* s_0 + s_0* s_2 not resolved "
                           f"(relative residuals {relative[bad]})")
    flagged = tuple(int(j) for j in np.flatnonzero(np.abs(nus.imag) < cfg.classification_tol * np.abs(nus)))
    nus = np.where(nus.imag > 0, np.conj(nus), nus)

    surrogates = _free_s1_table(l, cfg.s1_zeros + cfg.s1_tail)[cfg.s1_zeros:]
    p0 = P(np.array([0.0]))[0]
    if not (p0.real > 0 and abs(p0.imag) <= 1e-8 * abs(p0)):
        raise ValidationError(f"s_2* s_0 + s_0* s_2 at 0 must be positive, got {p0!r}")
    modulus = math.sqrt(p0.real)
    radii = np.asarray(cfg.phase_radii, dtype=float) / l
    lam_ray = -1j * radii

    def assemble(choice: np.ndarray):
        table = np.concatenate([choice, surrogates])
        product = lambda lam: _mu_product(table, np.asarray(lam, dtype=complex) ** 3, l)  # noqa: E731
        g = 3j * lam_ray * modulus * product(lam_ray) * np.exp(-1j * lam_ray * l)
        c0 = _phase_fit(g, radii)
        return product, c0

    candidates = []
    if len(flagged) > 8:
        raise NumericError(f"too many ambiguous zeros of s_1 ({len(flagged)}); refine the data")
    for flips in itertools.product((False, True), repeat=len(flagged)):
        choice = nus.copy()
        for j, flip in zip(flagged, flips):
            if flip:
                choice[j] = np.conj(choice[j])
        product, c0 = assemble(choice)
        candidates.append((abs(abs(c0) - 1.0), choice, product, c0))
    mismatch, choice, product, c0 = min(candidates, key=lambda item: item[0])
    constant = modulus * abs(c0) / c0
    return S1Reconstruction(float(l), complex(constant), choice, surrogates, flagged, float(mismatch), product)


# ---------------------------------------------------------------------------
# the full pipeline
# ---------------------------------------------------------------------------

class ReconstructionError(NumericError):
    """A pipeline stage failed; ``stage`` names it and ``diagnostics`` holds what was collected."""

    def __init__(self, stage: str, message: str, diagnostics: dict):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class ReconstructionResult:
    x: np.ndarray
    q: np.ndarray
    F: np.ndarray
    diagnostics: dict

    def to_csv(self, path, q_true: Callable | None = None) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["x", "q_reconstructed"] + (["q_true"] if q_true is not None else []) + ["F"]
            writer.writerow(header)
            truth = q_true(self.x) if q_true is not None else None
            for j, x in enumerate(self.x):
                row = [repr(float(x)), repr(float(self.q[j]))]
                if truth is not None:
                    row.append(repr(float(truth[j])))
                row.append(repr(float(self.F[j])))
                writer.writerow(row)


def _b1_from(s1: Callable, s2: Callable) -> Callable:
    """B_1 = (i lambda s_1 + lambda^2 s_2) / 3."""

    def b1(lam):
        arr = np.asarray(lam, dtype=complex)
        out = (1j * arr * s1(arr) + arr**2 * s2(arr)) / 3.0
        return complex(out) if arr.ndim == 0 else out

    return b1


def _extract_F(jump: bvp.JumpData, x: float, cfg: ReconstructionConfig) -> tuple[float, dict]:
    solution = bvp.solve_jump(jump, x, M=cfg.tau_nodes, n_poles=cfg.n_poles, condition_limit=cfg.condition_limit)
    radii = (bvp.default_radii(jump.l, x) if cfg.fit_radii is None
             else np.asarray(cfg.fit_radii, dtype=float) / jump.l)
    lams = -1j * radii
    value, fit = bvp.asymptotic_integral(solution.E1(lams), lams, cfg.fit_powers)
    return value, {"x": float(x), "condition": solution.condition, "residual": solution.residual,
                   "fit_residual": fit}


def reconstruct_potential(sets: Sequence[SpectralSet], cfg: ReconstructionConfig | None = None
                          ) -> ReconstructionResult:
    """Recover q on a uniform grid from the four data sets (theta, theta_hat, (theta, h), (theta_hat, h))."""
    cfg = cfg or ReconstructionConfig()
    if len(sets) != 4:
        raise InvalidInputError("reconstruction needs exactly four data sets")
    A, B, Ah, Bh = sets
    diag: dict = {"config": cfg.to_dict(), "stages": {}}
    stage = "s2"
    started = time.perf_counter()
    try:
        s2 = reconstruct_s2(A, B, cfg)
        diag["stages"]["s2"] = {"value_at_zero_error": abs(s2(0.0) - A.a)}
        stage = "s0"
        s0 = reconstruct_s0(A, B, Ah, Bh, cfg)
        diag["stages"]["s0"] = {"value_at_zero_error": abs(s0(0.0) - Ah.b)}
        stage = "s1"
        s1 = reconstruct_s1(s0, s2, A.l, cfg)
        diag["stages"]["s1"] = {"flagged": list(s1.flagged), "asymptotic_mismatch": s1.asymptotic_mismatch}
        stage = "poles"
        b1 = _b1_from(s1, s2)
        jump = bvp.build_jump_data(b1, A.l, n_poles=cfg.n_poles, T=cfg.cutoff, residual_tol=cfg.pole_tol)
        diag["stages"]["poles"] = {"count": int(jump.poles.lower.size), "cutoff": jump.T,
                                   "max_residual": float(np.max(jump.poles.residuals))}
        stage = "jump"
        x = np.linspace(0.0, A.l, cfg.x_nodes)
        F = np.zeros_like(x)
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(lambda xv: _extract_F(jump, xv, cfg), x[1:]))
        F[1:] = [value for value, _ in results]
        diag["stages"]["jump"] = {"per_x": [info for _, info in results]}
        stage = "differentiation"
        q = differentiate_smooth(F, x, cfg.derivative, cfg.smoothing)
    except ReconstructionError:
        raise
    except bvp.IllConditionedError as exc:
        diag["stages"][stage] = {"error": str(exc), **exc.diagnostics}
        raise ReconstructionError(stage, str(exc), diag) from exc
    except (NumericError, ValidationError, FloatingPointError) as exc:
        diag["stages"][stage] = {"error": str(exc)}
        raise ReconstructionError(stage, str(exc), diag) from exc
    diag["seconds"] = time.perf_counter() - started
    return ReconstructionResult(x, q, F, diag)


# ---------------------------------------------------------------------------
# round-trip report
# ---------------------------------------------------------------------------

STAGE_TOLERANCES = {"s2": 5e-3, "s0": 5e-3, "s1": 5e-3, "poles": 1e-3, "q": 0.10}

REPORT_SCHEMA = {
    "type": "object",
    "required": ["potential", "l", "theta", "theta_hat", "h", "N", "config", "stages", "status"],
    "properties": {
        "potential": {"type": "object", "required": ["name", "params"]},
        "l": {"type": "number"},
        "theta": {"$ref": "#/$defs/complex"},
        "theta_hat": {"$ref": "#/$defs/complex"},
        "h": {"type": "number"},
        "N": {"type": "integer"},
        "config": {"type": "object"},
        "status": {"enum": ["ok", "failed"]},
        "failed_stage": {"type": ["string", "null"]},
        "error": {"type": ["string", "null"]},
        "seconds": {"type": "number"},
        "stages": {
            "type": "object",
            "required": ["s2", "s0", "s1"],
            "additionalProperties": {
                "type": "object",
                "properties": {
                    "error": {"type": ["number", "string", "null"]},
                    "tolerance": {"type": "number"},
                    "passed": {"type": "boolean"},
                },
            },
        },
    },
    "$defs": {
        "complex": {"type": "object", "required": ["re", "im"],
                    "properties": {"re": {"type": "number"}, "im": {"type": "number"}}},
    },
}


def validate_report(report: dict) -> None:
    """Raise ValidationError unless ``report`` satisfies :data:`REPORT_SCHEMA`."""
    try:
        jsonschema.validate(report, REPORT_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ValidationError(f"report does not match the schema: {exc.message}") from exc


def _ode_values(pot: Potential, p: int, lams: np.ndarray) -> np.ndarray:
    return np.array([fundamental_system(pot, complex(lam), starred=False).at_end(p) for lam in lams])


def _sup_relative(approx: np.ndarray, exact: np.ndarray) -> float:
    return float(np.max(np.abs(approx - exact)) / max(1.0, float(np.max(np.abs(exact)))))


def roundtrip_report(pot: Potential, theta: complex | None = None, theta_hat: complex | None = None,
                     h: float | None = None, cfg: ReconstructionConfig | None = None,
                     lam_grid: np.ndarray | None = None) -> dict:
    """Forward spectra, reconstruction and a per-stage error table against ODE values.

    Stage errors are sup-norm errors relative to max(1, sup |exact|) on
    ``lam_grid`` (default 61 points on [-3, 3]); the final q error is the
    relative L2 error on [0.05 l, 0.95 l].
    """
    cfg = cfg or ReconstructionConfig()
    t0, t1, h0 = default_thetas()
    theta = t0 if theta is None else complex(theta)
    theta_hat = t1 if theta_hat is None else complex(theta_hat)
    h = h0 if h is None else float(h)
    lam_grid = np.linspace(-3.0, 3.0, 61) if lam_grid is None else np.asarray(lam_grid, dtype=float)
    started = time.perf_counter()
    report = {"potential": {"name": pot.name, "params": pot.params}, "l": pot.l,
              "theta": _cx(theta), "theta_hat": _cx(theta_hat), "h": h, "N": cfg.N,
              "config": cfg.to_dict(), "stages": {}, "status": "ok", "failed_stage": None, "error": None}
    stages = report["stages"]

    def record(name, error):
        tol = STAGE_TOLERANCES[name]
        stages[name] = {"error": error, "tolerance": tol, "passed": bool(error <= tol)}

    sets = [forward_spectral_data(pot, theta, None, -cfg.N, cfg.N),
            forward_spectral_data(pot, theta_hat, None, -cfg.N, cfg.N),
            forward_spectral_data(pot, theta, h, -cfg.N, cfg.N),
            forward_spectral_data(pot, theta_hat, h, -cfg.N, cfg.N)]
    s2 = reconstruct_s2(sets[0], sets[1], cfg)
    s0 = reconstruct_s0(*sets, cfg)
    record("s2", _sup_relative(s2(lam_grid), _ode_values(pot, 2, lam_grid)))
    record("s0", _sup_relative(s0(lam_grid), _ode_values(pot, 0, lam_grid)))
    try:
        s1 = reconstruct_s1(s0, s2, pot.l, cfg)
        record("s1", _sup_relative(s1(lam_grid), _ode_values(pot, 1, lam_grid)))
        stages["s1"]["flagged"] = list(s1.flagged)
        stages["s1"]["asymptotic_mismatch"] = s1.asymptotic_mismatch
    except NumericError as exc:
        stages["s1"] = {"error": str(exc), "passed": False}
        report.update(status="failed", failed_stage="s1", error=str(exc))
    if report["status"] == "ok":
        try:
            rec = bvp.lambda_q_zeros(_b1_from(s1, s2), pot.l, cfg.n_poles, residual_tol=cfg.pole_tol)
            ref = bvp.lambda_q_zeros(bvp.b1_function(pot), pot.l, cfg.n_poles)
            record("poles", float(np.max(np.abs(rec.mu - ref.mu) / np.abs(ref.mu))))
        except NumericError as exc:
            stages["poles"] = {"error": str(exc), "passed": False}
            report.update(status="failed", failed_stage="poles", error=str(exc))
    if report["status"] == "ok":
        try:
            result = reconstruct_potential(sets, cfg)
            interior = (result.x >= 0.05 * pot.l) & (result.x <= 0.95 * pot.l)
            truth = pot(result.x[interior])
            err = float(np.linalg.norm(result.q[interior] - truth)
                        / max(np.linalg.norm(truth), np.sqrt(interior.sum()) * 1e-2))
            record("q", err)
            stages["q"]["max_abs"] = float(np.max(np.abs(result.q[interior] - truth)))
            stages["jump"] = {"error": None, "per_x": result.diagnostics["stages"]["jump"]["per_x"]}
        except ReconstructionError as exc:
            failed = exc.diagnostics["stages"].get(exc.stage, {})
            stages[exc.stage] = {"error": str(exc), "passed": False,
                                 **{k: v for k, v in failed.items() if k != "error"}}
            report.update(status="failed", failed_stage=exc.stage, error=str(exc))
    report["seconds"] = time.perf_counter() - started
    return report
