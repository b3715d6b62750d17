"""Closed-form gap edges for periodically screened traps.

Cell geometry: the unit cube contains a concentric cube of edge ``b`` whose
boundary is a screen with one small aperture of radius ``d^eps`` centred on
the top face.  As ``eps -> 0`` the spectrum of the Neumann Laplacian has a
single gap in any window ``[0, L]`` converging to ``(sigma, mu)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal, Optional

from .errors import GeometryError, ParameterError

Radicand = Literal["printed", "symmetric"]


def _check_n(n: int) -> None:
    if int(n) != n or n < 2:
        raise ParameterError(f"dimension n must be an integer >= 2, got {n!r}")


def _check_capacity(n: int, capT: Optional[float]) -> float:
    if n == 2:
        return math.nan
    if capT is None or not capT > 0:
        raise ParameterError(f"n={n} requires a positive disc capacity capT, got {capT!r}")
    return float(capT)


@dataclass(frozen=True)
class ScreenParams:
    """Design parameters of one screen.

    ``eps`` may be omitted when only the limit (eps -> 0) quantities are needed;
    everything that depends on the aperture size requires it.
    """

    n: int
    d: float
    b: float
    eps: Optional[float] = None

    def __post_init__(self):
        _check_n(self.n)
        if not self.d > 0 or not math.isfinite(self.d):
            raise ParameterError(f"aperture strength d must be positive, got {self.d!r}")
        if not 0 < self.b < 1:
            raise ParameterError(f"screen edge b must lie in (0, 1), got {self.b!r}")
        if self.eps is not None:
            if not self.eps > 0:
                raise ParameterError(f"eps must be positive, got {self.eps!r}")
            r = _raw_hole_radius(self.n, self.d, self.eps)
            if not r < self.b / 2:
                raise GeometryError(
                    f"hole radius {r:.6g} does not fit the screen face (needs < b/2 = {self.b / 2:.6g})"
                )

    @property
    def aperture_center(self) -> tuple:
        return (0.0,) * (self.n - 1) + (self.b / 2,)

    @property
    def volume(self) -> float:
        """Volume of the trap, ``b**n``."""
        return self.b ** self.n

    def with_eps(self, eps: float) -> "ScreenParams":
        return replace(self, eps=eps)


@dataclass(frozen=True)
class GapSpec:
    sigma: float
    mu: float
    sigma_eps: Optional[float] = None
    mu_eps: Optional[float] = None
    window_L: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.sigma < self.mu:
            raise ParameterError(f"gap edges must satisfy 0 < sigma < mu, got ({self.sigma!r}, {self.mu!r})")
        if (self.sigma_eps is None) != (self.mu_eps is None):
            raise ParameterError("finite-eps edges must be given together")
        if self.sigma_eps is not None and not self.sigma_eps < self.mu_eps:
            raise ParameterError(
                f"finite-eps edges must satisfy sigma_eps < mu_eps, got ({self.sigma_eps!r}, {self.mu_eps!r})"
            )
        if self.window_L is not None and not self.window_L > 0:
            raise ParameterError(f"window bound must be positive, got {self.window_L!r}")

    @property
    def window(self) -> float:
        """Spectral window bound; defaults to ``2 mu``."""
        return self.window_L if self.window_L is not None else 2.0 * self.mu


def _raw_hole_radius(n: int, d: float, eps: float) -> float:
    if n > 2:
        return d * eps ** (2.0 / (n - 2))
    return math.exp(-1.0 / (d * eps * eps)) / eps


def hole_radius(params: ScreenParams) -> float:
    """Aperture radius in cell units.

    ``d * eps**(2/(n-2))`` for n > 2 and ``exp(-1/(d eps^2)) / eps`` for n = 2.
    """
    if params.eps is None:
        raise ParameterError("hole_radius needs eps")
    # ScreenParams already rejected d^eps >= b/2
    return _raw_hole_radius(params.n, params.d, params.eps)


def _sigma(n: int, d: float, volume: float, capT: Optional[float]) -> float:
    if n == 2:
        return math.pi * d / (2.0 * volume)
    return capT * d ** (n - 2) / (4.0 * volume)


def gap_edges(params: ScreenParams, capT: Optional[float] = None) -> GapSpec:
    """Limit gap ``(sigma, mu)``; ``capT`` is the unit-disc capacity (n > 2 only)."""
    capT = _check_capacity(params.n, capT)
    sigma = _sigma(params.n, params.d, params.volume, capT)
    mu = sigma / (1.0 - params.volume)
    return GapSpec(sigma=sigma, mu=mu)


def inverse_design(sigma: float, mu: float, n: int, capT: Optional[float] = None) -> tuple:
    """Return ``(d, b)`` whose limit gap is ``(sigma, mu)``."""
    _check_n(n)
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma!r}")
    if not sigma < mu:
        raise ParameterError(f"need sigma < mu, got ({sigma!r}, {mu!r})")
    capT = _check_capacity(n, capT)
    # b^n = 1 - sigma/mu; the pair only resolves it to ~eps_mach / b^n
    q = (mu - sigma) / mu
    b = q ** (1.0 / n)
    if n == 2:
        d = 2.0 * sigma * q / math.pi
    else:
        d = (4.0 * sigma * q / capT) ** (1.0 / (n - 2))
    return d, b


@dataclass(frozen=True)
class TwoScreenSpec:
    """Two traps per cell; ``vol1``, ``vol2`` are the trap volumes |B_j|.

    The computed fields are filled in by :func:`two_screen_gaps`.
    """

    d1: float
    d2: float
    vol1: float
    vol2: float
    n: int = 2
    sigma1: Optional[float] = None
    sigma2: Optional[float] = None
    mu1: Optional[float] = None
    mu2: Optional[float] = None
    rho1: Optional[float] = None
    rho2: Optional[float] = None

    def __post_init__(self):
        _check_n(self.n)
        for name in ("d1", "d2"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        for name in ("vol1", "vol2"):
            if not 0 < getattr(self, name) < 1:
                raise ParameterError(f"{name} must lie in (0, 1)")
        if not self.vol1 + self.vol2 < 1:
            raise ParameterError("trap volumes must leave room for the exterior: vol1 + vol2 < 1")


def two_screen_edges(
    sigma1: float, sigma2: float, vol1: float, vol2: float, radicand: Radicand = "printed"
) -> tuple:
    """``(mu1, mu2, rho1, rho2)`` from the trap resonances and trap volumes.

    ``radicand="printed"`` evaluates the constant term of the quadratic as
    ``rho1*sigma2 + rho1*sigma2 + sigma1*sigma2``; ``"symmetric"`` uses
    ``rho1*sigma2 + rho2*sigma1 + sigma1*sigma2``, which is what the
    characteristic polynomial ``(s1-x)(s2-x) + rho1(s2-x) + rho2(s1-x)`` gives.
    """
    s1, s2 = float(sigma1), float(sigma2)
    if not 0 < s1 < s2:
        raise ParameterError(f"trap resonances must satisfy 0 < sigma1 < sigma2, got ({s1!r}, {s2!r})")
    for v in (vol1, vol2):
        if not 0 < v < 1:
            raise ParameterError(f"trap volumes must lie in (0, 1), got {v!r}")
    r1 = s1 * vol1 / (1.0 - vol1)
    r2 = s2 * vol2 / (1.0 - vol2)
    if radicand == "printed":
        const = r1 * s2 + r1 * s2 + s1 * s2
    elif radicand == "symmetric":
        const = r1 * s2 + r2 * s1 + s1 * s2
    else:
        raise ParameterError(f"unknown radicand reading {radicand!r}")
    total = r1 + r2 + s1 + s2
    disc = total * total - 4.0 * const
    if disc < 0:
        raise ParameterError(f"negative discriminant {disc!r} for radicand={radicand!r}")
    root = math.sqrt(disc)
    # the smaller root is computed from the product to avoid cancellation
    mu2 = 0.5 * (total + root)
    mu1 = const / mu2
    if not s1 < mu1 < s2 < mu2:
        raise ParameterError(
            f"edges not interlaced for radicand={radicand!r}: "
            f"sigma1={s1:.6g}, mu1={mu1:.6g}, sigma2={s2:.6g}, mu2={mu2:.6g}"
        )
    return mu1, mu2, r1, r2


def two_screen_gaps(
    spec: TwoScreenSpec, capT: Optional[float] = None, radicand: Radicand = "printed"
) -> TwoScreenSpec:
    """Gap edges ``sigma_j < mu_j`` for two traps per period cell.

    ``sigma_j`` follows the one-trap formula with ``vol_j`` in place of ``b^n``;
    see :func:`two_screen_edges` for the ``radicand`` switch.
    """
    capT = _check_capacity(spec.n, capT)
    s1 = _sigma(spec.n, spec.d1, spec.vol1, capT)
    s2 = _sigma(spec.n, spec.d2, spec.vol2, capT)
    if not s1 < s2:
        raise ParameterError(f"trap resonances must be ordered, got sigma1={s1!r} >= sigma2={s2!r}")
    mu1, mu2, r1, r2 = two_screen_edges(s1, s2, spec.vol1, spec.vol2, radicand)
    return replace(spec, sigma1=s1, sigma2=s2, mu1=mu1, mu2=mu2, rho1=r1, rho2=r2)


def maxwell_gap(gap: GapSpec) -> tuple:
    """Frequency gaps of the H-polarised Maxwell operator: ``±(sqrt(sigma), sqrt(mu))``."""
    lo, hi = math.sqrt(gap.sigma), math.sqrt(gap.mu)
    return (-hi, -lo), (lo, hi)
