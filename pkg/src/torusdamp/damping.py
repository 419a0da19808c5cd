"""Damping profiles a(z) >= 0 on the flat torus T^2 = R^2 / (2 pi Z)^2.

Two families are provided: the convex disk ``(r0 - |z - c|)_+^beta`` and the
vertical strip ``sum_j V_j(x)`` whose pieces vanish like ``dist^gamma`` at the
interval ends. Both come with analytic first and second derivatives so the
Hölder-vanishing class ``D^{m,k,sigma}`` can be checked on a grid.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi


class UnsupportedGeometryError(ValueError):
    """Raised when an operation needs a Disk or Strip geometry."""


class DampingKind(enum.Enum):
    DISK = "disk"
    STRIP = "strip"
    CUSTOM = "custom"


def wrap(x):
    """Map coordinates to the fundamental interval [-pi, pi)."""
    x = np.asarray(x, dtype=float)
    # floor is much cheaper than np.mod on large arrays
    return x - TWO_PI * np.floor((x + np.pi) / TWO_PI)


def torus_distance(x, y, cx: float, cy: float):
    """Flat distance on T^2 between (x, y) and (cx, cy).

    Wrapping each coordinate difference is the same as minimising over the
    nine nearest lattice translates, since the metric splits per coordinate.
    """
    return np.hypot(wrap(np.asarray(x) - cx), wrap(np.asarray(y) - cy))


@dataclass(frozen=True)
class HolderParams:
    """Parameters (m, k, sigma) of the class D^{m,k,sigma}, with sigma = 1/beta."""

    beta: float
    m: int = 10
    k: int = 2
    sigma: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.m < 0 or self.k < 0:
            raise ValueError("m and k must be non-negative")
        sigma = 1.0 / self.beta
        if not math.isfinite(sigma):
            raise ValueError(f"beta={self.beta} is too small to invert")
        if self.sigma is None:
            object.__setattr__(self, "sigma", sigma)
        elif self.sigma != sigma:
            raise ValueError(f"sigma={self.sigma} is not 1/beta={sigma}")
        if not self.k * self.sigma < 1:
            raise ValueError(f"class requires k*sigma < 1, got k={self.k}, sigma={self.sigma}")

    @classmethod
    def for_beta(cls, beta: float, m: int = 10, k: Optional[int] = None) -> "HolderParams":
        """Largest admissible k (capped at 2) unless given explicitly."""
        if k is None:
            k = min(2, int(math.ceil(beta)) - 1)
        return cls(beta=float(beta), m=m, k=max(k, 0))


@dataclass(frozen=True)
class DampingProfile:
    """An evaluable damping on T^2.

    ``eval``, ``grad`` and ``hess`` take broadcastable arrays ``(x, y)``.
    ``grad`` returns ``(a_x, a_y)`` and ``hess`` returns ``(a_xx, a_xy, a_yy)``.
    """

    kind: DampingKind
    params: Optional[HolderParams]
    eval: Callable
    grad: Optional[Callable] = None
    hess: Optional[Callable] = None
    center: Optional[tuple] = None
    r0: Optional[float] = None
    intervals: Optional[tuple] = None
    gamma: Optional[float] = None
    name: str = ""
    amplitude: float = 1.0

    def __call__(self, x, y):
        return self.eval(np.asarray(x, dtype=float), np.asarray(y, dtype=float))

    @property
    def depends_on_x_only(self) -> bool:
        return self.kind is DampingKind.STRIP

    def sample(self, n: int, offset: float = 0.0):
        """Samples on the n x n grid ``-pi + (i + offset) 2 pi / n`` (indexing 'ij')."""
        g = -np.pi + (np.arange(n) + offset) * TWO_PI / n
        X, Y = np.meshgrid(g, g, indexing="ij")
        return self(X, Y)

    def derivative(self, alpha: tuple, x, y, step: Optional[float] = None):
        """Partial derivative d^alpha a for |alpha| <= 2.

        Analytic when the profile carries derivatives, otherwise second-order
        centred differences with the given step.
        """
        i, j = alpha
        order = i + j
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if order == 0:
            return self(x, y)
        if order == 1 and self.grad is not None:
            return self.grad(x, y)[0 if i else 1]
        if order == 2 and self.hess is not None:
            return self.hess(x, y)[{(2, 0): 0, (1, 1): 1, (0, 2): 2}[(i, j)]]
        if order > 2:
            raise ValueError("only derivatives up to order 2 are supported")
        return finite_difference(self, alpha, x, y, step if step is not None else TWO_PI / 1024)

    def scaled(self, c: float) -> "DampingProfile":
        """The profile ``c a``; same geometry, amplitude multiplied by ``c``."""
        if not c > 0:
            raise ValueError("scale factor must be positive")
        grad, hess = self.grad, self.hess
        return replace(
            self,
            eval=lambda x, y: c * self.eval(x, y),
            grad=None if grad is None else (lambda x, y: tuple(c * g for g in grad(x, y))),
            hess=None if hess is None else (lambda x, y: tuple(c * g for g in hess(x, y))),
            amplitude=self.amplitude * c,
            name=f"{c:g}*{self.name}" if self.name else self.name,
        )

    def to_config(self) -> dict:
        if self.kind is DampingKind.DISK:
            return {"kind": "disk", "center": list(self.center), "r0": self.r0,
                    "beta": self.params.beta, "amplitude": self.amplitude}
        if self.kind is DampingKind.STRIP:
            return {"kind": "strip", "intervals": [list(iv) for iv in self.intervals],
                    "gamma": self.gamma, "amplitude": self.amplitude}
        if self.name in _NAMED_CUSTOM:
            return {"kind": self.name}
        raise UnsupportedGeometryError("custom profiles are not serializable")


def finite_difference(f: DampingProfile, alpha: tuple, x, y, step: float):
    i, j = alpha
    s = step
    if (i, j) == (1, 0):
        return (f(x + s, y) - f(x - s, y)) / (2 * s)
    if (i, j) == (0, 1):
        return (f(x, y + s) - f(x, y - s)) / (2 * s)
    if (i, j) == (2, 0):
        return (f(x + s, y) - 2 * f(x, y) + f(x - s, y)) / s**2
    if (i, j) == (0, 2):
        return (f(x, y + s) - 2 * f(x, y) + f(x, y - s)) / s**2
    if (i, j) == (1, 1):
        return (f(x + s, y + s) - f(x + s, y - s) - f(x - s, y + s) + f(x - s, y - s)) / (4 * s**2)
    raise ValueError(f"unsupported multi-index {alpha}")


# ---------------------------------------------------------------------------
# disk


def make_disk_damping(center=(0.0, 0.0), r0: float = 0.1, beta: float = 5.0,
                      amplitude: float = 1.0) -> DampingProfile:
    """Disk damping ``a(z) = amplitude * (r0 - |z - c|)_+^beta``.

    The damped region is the open disc of radius ``r0``. Analytic derivatives
    are attached for ``beta >= 2``; they are undefined (NaN) at the centre,
    where the profile has a conical tip.
    """
    if not 0 < r0 < np.pi:
        raise ValueError(f"r0 must lie in (0, pi), got {r0}")
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    cx, cy = float(center[0]), float(center[1])
    b = float(beta)

    def rho(x, y):
        dx, dy = wrap(x - cx), wrap(y - cy)
        d = np.sqrt(dx * dx + dy * dy)
        return dx, dy, d, np.maximum(r0 - d, 0.0)

    def ev(x, y):
        p = rho(x, y)[3]
        out = np.zeros_like(p)
        m = p > 0
        out[m] = p[m] ** b
        return out

    def grad(x, y):
        dx, dy, d, p = rho(x, y)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = -b * p ** (b - 1) / d
        g = np.where(d > 0, g, np.nan)
        return g * dx, g * dy

    def hess(x, y):
        dx, dy, d, p = rho(x, y)
        with np.errstate(divide="ignore", invalid="ignore"):
            nx, ny = dx / d, dy / d
            radial = b * (b - 1) * p ** (b - 2)
            tang = -b * p ** (b - 1) / d
        inside = p > 0
        radial = np.where(inside, radial, 0.0)
        tang = np.where(inside, tang, 0.0)
        hxx = radial * nx * nx + tang * (1 - nx * nx)
        hxy = radial * nx * ny - tang * nx * ny
        hyy = radial * ny * ny + tang * (1 - ny * ny)
        bad = d == 0
        return (np.where(bad, np.nan, hxx), np.where(bad, np.nan, hxy),
                np.where(bad, np.nan, hyy))

    prof = DampingProfile(
        kind=DampingKind.DISK,
        params=HolderParams.for_beta(b),
        eval=ev,
        grad=grad if b >= 2 else None,
        hess=hess if b >= 2 else None,
        center=(cx, cy),
        r0=float(r0),
        name=f"disk(r0={r0:g}, beta={b:g})",
    )
    return prof if amplitude == 1.0 else prof.scaled(amplitude)


# ---------------------------------------------------------------------------
# strip


def _bridge_coefficients(q: float, gamma: float):
    """Quartic p(s) = v + d1 s + d2 s^2/2 + c3 s^3 + c4 s^4 on [0, q].

    Matches value, slope and curvature of ``s -> (q + s)^gamma`` at s = 0 and
    has p'(q) = p''(q) = 0, so mirroring about the midpoint gives a C^2
    plateau-shaped bridge.
    """
    v = q**gamma
    d1 = gamma * q ** (gamma - 1) if gamma != 0 else 0.0
    d2 = gamma * (gamma - 1) * q ** (gamma - 2) if gamma not in (0, 1) else 0.0
    lhs = np.array([[3 * q**2, 4 * q**3], [6 * q, 12 * q**2]])
    rhs = -np.array([d1 + d2 * q, d2])
    c3, c4 = np.linalg.solve(lhs, rhs)
    return v, d1, d2, c3, c4


def _strip_piece(alpha: float, beta: float, gamma: float):
    """Value and first two derivatives of V_j as functions of wrapped x."""
    q = (beta - alpha) / 4.0
    xl, xr = alpha + q, beta - q
    mid = 0.5 * (alpha + beta)
    v, d1, d2, c3, c4 = _bridge_coefficients(q, gamma)

    def p(s):
        return v + d1 * s + 0.5 * d2 * s**2 + c3 * s**3 + c4 * s**4

    def dp(s):
        return d1 + d2 * s + 3 * c3 * s**2 + 4 * c4 * s**3

    def ddp(s):
        return d2 + 6 * c3 * s + 12 * c4 * s**2

    def pieces(x):
        out = np.zeros((3,) + x.shape)
        left = (x > alpha) & (x <= xl)
        right = (x >= xr) & (x < beta)
        brl = (x > xl) & (x <= mid)
        brr = (x > mid) & (x < xr)
        t = x[left] - alpha
        out[0][left] = t**gamma
        if gamma != 0:
            out[1][left] = gamma * t ** (gamma - 1)
            out[2][left] = gamma * (gamma - 1) * t ** (gamma - 2) if gamma != 1 else 0.0
        t = beta - x[right]
        out[0][right] = t**gamma
        if gamma != 0:
            out[1][right] = -gamma * t ** (gamma - 1)
            out[2][right] = gamma * (gamma - 1) * t ** (gamma - 2) if gamma != 1 else 0.0
        s = x[brl] - xl
        out[0][brl], out[1][brl], out[2][brl] = p(s), dp(s), ddp(s)
        s = xr - x[brr]
        out[0][brr], out[1][brr], out[2][brr] = p(s), -dp(s), ddp(s)
        return out

    return pieces


def make_strip_damping(intervals: Sequence, gamma: float = 5.0,
                       amplitude: float = 1.0) -> DampingProfile:
    """Strip damping ``a(x, y) = sum_j V_j(x)`` supported on the given x-intervals.

    ``V_j`` equals ``(x - alpha_j)^gamma`` on the left quarter of
    ``(alpha_j, beta_j)``, ``(beta_j - x)^gamma`` on the right quarter, and a
    C^2 quartic bridge with a flat top in between; the sum is multiplied by
    ``amplitude``.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be non-negative, got {gamma}")
    ivs = sorted((float(a), float(b)) for a, b in intervals)
    if not ivs:
        raise ValueError("at least one interval is required")
    for a, b in ivs:
        if not (-np.pi <= a < b <= np.pi):
            raise ValueError(f"interval ({a}, {b}) must satisfy -pi <= a < b <= pi")
    for (a0, b0), (a1, b1) in zip(ivs, ivs[1:]):
        if a1 < b0:
            raise ValueError(f"intervals ({a0}, {b0}) and ({a1}, {b1}) overlap")
    if sum(b - a for a, b in ivs) >= TWO_PI:
        raise ValueError("the closure of the strips must not cover the whole circle")
    g = float(gamma)
    pieces = [_strip_piece(a, b, g) for a, b in ivs]

    def all_pieces(x):
        xw = np.atleast_1d(wrap(x))
        return sum(pc(xw) for pc in pieces).reshape((3,) + np.shape(x))

    def ev(x, y):
        x, _ = np.broadcast_arrays(x, y)
        return all_pieces(x)[0]

    def grad(x, y):
        x, _ = np.broadcast_arrays(x, y)
        return all_pieces(x)[1], np.zeros(x.shape)

    def hess(x, y):
        x, _ = np.broadcast_arrays(x, y)
        z = np.zeros(x.shape)
        return all_pieces(x)[2], z, z

    smooth = g >= 2 or g == 0
    prof = DampingProfile(
        kind=DampingKind.STRIP,
        params=HolderParams.for_beta(g) if g > 0 else None,
        eval=ev,
        grad=grad if smooth else None,
        hess=hess if smooth else None,
        intervals=tuple(ivs),
        gamma=g,
        name=f"strip({ivs}, gamma={g:g})",
    )
    return prof if amplitude == 1.0 else prof.scaled(amplitude)


def strip_profile_1d(intervals: Sequence, gamma: float, x, amplitude: float = 1.0):
    """The strip profile W(x) evaluated on a 1D grid."""
    prof = make_strip_damping(intervals, gamma, amplitude)
    return prof(x, np.zeros_like(np.asarray(x, dtype=float)))


# ---------------------------------------------------------------------------
# custom


def make_custom_damping(func: Callable, params: Optional[HolderParams] = None,
                        grad: Optional[Callable] = None, hess: Optional[Callable] = None,
                        name: str = "custom") -> DampingProfile:
    """Wrap an arbitrary vectorised ``func(x, y) >= 0`` as a profile without geometry."""
    return DampingProfile(kind=DampingKind.CUSTOM, params=params, eval=func, grad=grad,
                          hess=hess, name=name)


def constant_damping(c: float) -> DampingProfile:
    if c < 0:
        raise ValueError("damping must be non-negative")
    zeros = lambda x, y: np.zeros(np.broadcast(x, y).shape)  # noqa: E731
    return make_custom_damping(lambda x, y: np.full(np.broadcast(x, y).shape, float(c)),
                               grad=lambda x, y: (zeros(x, y),) * 2,
                               hess=lambda x, y: (zeros(x, y),) * 3,
                               name="zero" if c == 0 else f"constant({c:g})")


_NAMED_CUSTOM = ("zero",)


def profile_from_config(cfg: dict) -> DampingProfile:
    """Inverse of :meth:`DampingProfile.to_config`."""
    kind = cfg.get("kind")
    if kind == "disk":
        return make_disk_damping(tuple(cfg.get("center", (0.0, 0.0))), cfg["r0"], cfg["beta"],
                                 cfg.get("amplitude", 1.0))
    if kind == "strip":
        return make_strip_damping([tuple(iv) for iv in cfg["intervals"]], cfg["gamma"],
                                  cfg.get("amplitude", 1.0))
    if kind == "zero":
        return constant_damping(0.0)
    if kind == "constant":
        return constant_damping(cfg["value"])
    raise ValueError(f"unknown damping kind {kind!r}")


# ---------------------------------------------------------------------------
# class membership and boundary distance


@dataclass
class ClassCheckReport:
    """Worst-case ratios sup |d^alpha f| / |f|^(1 - |alpha| sigma) over a grid."""

    ratios: dict
    grid_n: int
    floor: float
    cap: float
    sigma: float
    n_points: int
    n_excluded: int
    passed: bool

    def summary(self) -> str:
        parts = ", ".join(f"{k}: {v:.3g}" for k, v in sorted(self.ratios.items()))
        flag = "pass" if self.passed else "FAIL"
        return (f"{flag} (cap {self.cap:g}, sigma {self.sigma:.4g}, grid {self.grid_n}, "
                f"floor {self.floor:g}, {self.n_points} pts, {self.n_excluded} excluded): {parts}")


def multi_indices(k: int):
    return [(i, order - i) for order in range(k + 1) for i in range(order, -1, -1)]


def check_class_membership(f: DampingProfile, grid_n: int = 512, floor: float = 1e-12,
                           cap: float = 50.0, sigma: Optional[float] = None,
                           k: Optional[int] = None) -> ClassCheckReport:
    """Sample the D^{m,k,sigma} ratios of ``f`` on a cell-centred grid.

    Points with ``f < floor`` are skipped (the ratio is 0/0 at the boundary of
    the support), as are points where a derivative is undefined, e.g. the tip
    of a disk profile. Never raises on failure; see ``passed``.
    """
    if grid_n < 64:
        raise ValueError("grid_n must be at least 64")
    if floor <= 0:
        raise ValueError("floor must be positive")
    if sigma is None:
        sigma = f.params.sigma if f.params is not None else 0.0
    if k is None:
        k = f.params.k if f.params is not None else 2
    step = TWO_PI / grid_n
    g = -np.pi + (np.arange(grid_n) + 0.5) * step
    X, Y = np.meshgrid(g, g, indexing="ij")
    vals = f(X, Y)
    keep = vals >= floor
    derivs = {alpha: f.derivative(alpha, X, Y, step=step) for alpha in multi_indices(k)}
    finite = np.ones_like(keep)
    for d in derivs.values():
        finite &= np.isfinite(d)
    excluded = int(np.count_nonzero(keep & ~finite))
    keep &= finite
    ratios = {}
    for alpha, d in derivs.items():
        order = alpha[0] + alpha[1]
        if not keep.any():
            ratios[alpha] = 0.0
            continue
        ratios[alpha] = float(np.max(np.abs(d[keep]) / vals[keep] ** (1 - order * sigma)))
    passed = all(np.isfinite(r) and r <= cap for r in ratios.values())
    return ClassCheckReport(ratios=ratios, grid_n=grid_n, floor=floor, cap=cap, sigma=sigma,
                            n_points=int(np.count_nonzero(keep)), n_excluded=excluded,
                            passed=passed)


def dist_to_boundary(f: DampingProfile, x, y=0.0):
    """Flat periodic distance from z = (x, y) to the boundary of {f > 0}."""
    if f.kind is DampingKind.DISK:
        d = torus_distance(x, y, *f.center)
        return np.abs(f.r0 - d)
    if f.kind is DampingKind.STRIP:
        xw = np.asarray(x, dtype=float)
        ends = np.array([e for iv in f.intervals for e in iv])
        return np.min(np.abs(wrap(xw[..., None] - ends)), axis=-1)
    raise UnsupportedGeometryError(f"{f.kind.value} profile has no boundary geometry")


def holder_envelope_constant(f: DampingProfile, n: int = 256, near: float = 0.05) -> float:
    """Smallest R0 >= 1 with R0^-1 dist^beta <= f <= R0 dist^beta for points near the boundary."""
    g = -np.pi + (np.arange(n) + 0.5) * TWO_PI / n
    X, Y = np.meshgrid(g, g, indexing="ij")
    vals = f(X, Y)
    d = dist_to_boundary(f, X, Y)
    m = (vals > 0) & (d <= near) & (d > 0)
    if not m.any():
        return 1.0
    ratio = vals[m] / d[m] ** f.params.beta
    return float(max(1.0, ratio.max(), 1.0 / ratio.min()))


__all__ = [
    "ClassCheckReport", "DampingKind", "DampingProfile", "HolderParams",
    "UnsupportedGeometryError", "check_class_membership", "constant_damping",
    "dist_to_boundary", "finite_difference", "holder_envelope_constant", "make_custom_damping",
    "make_disk_damping", "make_strip_damping", "multi_indices", "profile_from_config",
    "strip_profile_1d", "torus_distance", "wrap",
]
