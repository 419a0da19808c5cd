"""Averages of a damping along closed geodesics of the torus.

For a rational direction v = (p, q) the orbit ``z + t v/|v|`` closes after
``T_v = 2 pi |v|``. The average is a function of the transversal coordinate
on the covering torus spanned by ``e_perp = (q, -p)/|v|`` and ``e_v``; for
``v = (0, 1)`` that coordinate is simply x.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .damping import DampingProfile, TWO_PI, make_custom_damping
from .fitting import FitError, linear_fit

ZERO_LEVEL = 1e-14


@dataclass(frozen=True)
class RationalDirection:
    p: int
    q: int

    def __post_init__(self):
        if self.p == 0 and self.q == 0:
            raise ValueError("direction (0, 0) is not allowed")
        if math.gcd(abs(self.p), abs(self.q)) != 1:
            raise ValueError(f"({self.p}, {self.q}) is not a primitive lattice vector")

    @property
    def degree(self) -> float:
        return math.hypot(self.p, self.q)

    @property
    def n_sheets(self) -> int:
        """Number of copies of T^2 in one fundamental cell of the covering torus."""
        return self.p**2 + self.q**2

    @property
    def period(self) -> float:
        return TWO_PI * self.degree

    @property
    def unit(self) -> np.ndarray:
        return np.array([self.p, self.q], dtype=float) / self.degree

    @property
    def transversal(self) -> np.ndarray:
        return np.array([self.q, -self.p], dtype=float) / self.degree


E2 = RationalDirection(0, 1)


def _as_direction(v) -> RationalDirection:
    return v if isinstance(v, RationalDirection) else RationalDirection(*v)


@dataclass
class AveragedDamping:
    """Samples of W = A(a)_v on a uniform transversal grid."""

    x: np.ndarray
    samples: np.ndarray
    period: float
    boundary_points: list = field(default_factory=list)
    fitted_exponent: Optional[float] = None
    direction: Optional[RationalDirection] = None
    profile: Optional[DampingProfile] = None

    @property
    def grid_n(self) -> int:
        return len(self.samples)

    @classmethod
    def from_samples(cls, x, samples, period: float = TWO_PI) -> "AveragedDamping":
        x = np.asarray(x, dtype=float)
        w = np.asarray(samples, dtype=float)
        out = cls(x=x, samples=w, period=period)
        out.boundary_points = detect_boundary(x, w, period)
        return out

    def mean(self) -> float:
        return float(np.mean(self.samples))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["x", "W"])
            for xi, wi in zip(self.x, self.samples):
                wr.writerow([repr(float(xi)), repr(float(wi))])

    @classmethod
    def from_csv(cls, path, period: float = TWO_PI) -> "AveragedDamping":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls.from_samples(data[:, 0], data[:, 1], period)


def orbit_points(v: RationalDirection, X, t):
    """Points ``X e_perp + t e_v`` in R^2 (broadcast over X and t)."""
    ep, ev = v.transversal, v.unit
    X = np.asarray(X, dtype=float)
    t = np.asarray(t, dtype=float)
    return X * ep[0] + t * ev[0], X * ep[1] + t * ev[1]


def transversal_grid(v: RationalDirection, n: int) -> np.ndarray:
    return -v.period / 2 + np.arange(n) * v.period / n


def average_samples(f: DampingProfile, v, X, n_orbit: int, chunk: int = 1 << 14) -> np.ndarray:
    """Periodic trapezoid average of ``f`` along the orbits through ``X e_perp``."""
    v = _as_direction(v)
    X = np.atleast_1d(np.asarray(X, dtype=float))
    t = -v.period / 2 + np.arange(n_orbit) * v.period / n_orbit
    rows = max(1, chunk // n_orbit)
    out = np.empty(len(X))
    for s in range(0, len(X), rows):
        px, py = orbit_points(v, X[s:s + rows, None], t[None, :])
        out[s:s + rows] = f(px, py).mean(axis=1)
    return out


def average_along(f: DampingProfile, v=E2, grid_n: int = 1024, refine: bool = True
                  ) -> AveragedDamping:
    """Average ``f`` along the rational direction ``v``.

    The transversal coordinate runs over one period of the covering torus with
    ``grid_n`` points, and each orbit integral uses ``grid_n`` equally spaced
    nodes per period. Boundary points of the support of W are located on the
    grid and, if ``refine``, sharpened by bisection on the orbit integral.
    """
    if grid_n < 256:
        raise ValueError("grid_n must be at least 256")
    v = _as_direction(v)
    X = transversal_grid(v, grid_n)
    W = average_samples(f, v, X, grid_n)
    out = AveragedDamping(x=X, samples=W, period=v.period, direction=v, profile=f)
    pts = detect_boundary(X, W, v.period)
    if refine:
        pts = [(refine_boundary(f, v, xb, side, v.period / grid_n), side) for xb, side in pts]
    out.boundary_points = pts
    return out


def detect_boundary(x, w, period: float, zero: float = ZERO_LEVEL):
    """Grid zeros of ``w`` adjacent to positive samples, tagged 'left'/'right'.

    A 'left' boundary has the support on its right (W grows with x), a 'right'
    boundary has it on the left.
    """
    n = len(w)
    pts = []
    for i in range(n):
        if w[i] >= zero:
            continue
        if w[(i + 1) % n] >= zero:
            pts.append((float(x[i]), "left"))
        if w[(i - 1) % n] >= zero:
            pts.append((float(x[i]), "right"))
    return pts


def _orbit_touches_support(f, v, X, t_lo, t_hi, n=4096):
    t = np.linspace(t_lo, t_hi, n)
    px, py = orbit_points(v, X, t)
    vals = f(px, py)
    pos = vals > 0
    if not pos.any():
        return False, None
    return True, (t[pos].min(), t[pos].max())


def refine_boundary(f: DampingProfile, v: RationalDirection, x_zero: float, side: str,
                    dx: float, iters: int = 60) -> float:
    """Locate the edge of the support of W between grid points by bisection.

    A grid sample may fall under the zero threshold while the orbit still
    meets the support, so the bracket is first widened outwards until the
    orbit misses it. Positivity is tested on a fine sampling of the part of
    the orbit where the inner point meets the support, padded by a few grid
    cells; for convex supports the chord only shrinks towards the boundary.
    """
    outward = -1.0 if side == "left" else 1.0
    x_in = x_zero - outward * dx
    ok, span = _orbit_touches_support(f, v, x_in, -v.period / 2, v.period / 2,
                                      n=1 << 16)
    if not ok:
        return x_zero
    pad = 4 * dx
    x_out = x_zero
    for _ in range(64):
        ok, new_span = _orbit_touches_support(f, v, x_out, span[0] - pad, span[1] + pad)
        if not ok:
            break
        x_in, span = x_out, new_span
        x_out += outward * dx
    lo, hi = x_out, x_in
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        ok, new_span = _orbit_touches_support(f, v, mid, span[0] - pad, span[1] + pad)
        if ok:
            hi, span = mid, new_span
            pad = 0.5 * (new_span[1] - new_span[0]) + 1e-12
        else:
            lo = mid
        if abs(hi - lo) < 1e-13:
            break
    return 0.5 * (lo + hi)


def _boundary_for_side(W: AveragedDamping, side: str) -> float:
    cands = [xb for xb, s in W.boundary_points if s == side]
    if not cands:
        raise FitError(f"no {side} boundary point detected")
    if len(cands) == 1:
        return cands[0]
    # the boundary of the component holding the maximum of W
    xm = W.x[int(np.argmax(W.samples))]
    sign = 1 if side == "left" else -1
    dists = [(sign * (xm - xb)) % W.period for xb in cands]
    return cands[int(np.argmin(dists))]


def fit_vanishing_exponent(W: AveragedDamping, side: str = "left",
                           window: tuple = (1e-3, 1e-1), min_samples: int = 8):
    """Least-squares slope of log W against log dist(x, boundary) on one side.

    Returns ``(exponent, r2)`` and stores the exponent on ``W``.
    """
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    d_min, d_max = window
    if not 0 < d_min < d_max:
        raise ValueError("window must satisfy 0 < d_min < d_max")
    xb = _boundary_for_side(W, side)
    sign = 1.0 if side == "left" else -1.0
    d = np.mod(sign * (W.x - xb), W.period)
    m = (d >= d_min) & (d <= d_max)
    if np.count_nonzero(m) < min_samples:
        raise FitError(f"only {np.count_nonzero(m)} samples in window {window}")
    if np.any(W.samples[m] <= 0):
        raise FitError("W vanishes inside the fitting window")
    slope, _, r2 = linear_fit(np.log(d[m]), np.log(W.samples[m]))
    W.fitted_exponent = slope
    return slope, r2


def pullback_to_covering(f: DampingProfile, v=E2, grid=(256, 256)) -> np.ndarray:
    """Samples of ``f`` on one fundamental cell of the covering torus.

    Rows follow the transversal coordinate X, columns the orbit coordinate Y
    along ``v``; both have period ``2 pi |v|``.
    """
    v = _as_direction(v)
    nX, nY = grid
    X = transversal_grid(v, nX)
    Y = -v.period / 2 + np.arange(nY) * v.period / nY
    px, py = orbit_points(v, X[:, None], Y[None, :])
    return f(px, py)


def count_periodic_components(mask: np.ndarray) -> int:
    """Connected components of a boolean array with periodic wrap-around."""
    labels, n = ndimage.label(mask)
    if n == 0:
        return 0
    parent = list(range(n + 1))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def join(a_edge, b_edge):
        for a, b in zip(a_edge, b_edge):
            if a and b:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[ra] = rb

    join(labels[0, :], labels[-1, :])
    join(labels[:, 0], labels[:, -1])
    return len({find(i) for i in range(1, n + 1)})


# ---------------------------------------------------------------------------
# primitive A(x, y)


@dataclass
class PrimitiveField:
    """A(x, y) = int_{-pi}^{y} (a(x, y') - A(a)(x)) dy' with its bounds report."""

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    average: np.ndarray
    bounds: dict = field(default_factory=dict)

    def endpoint_defect(self) -> float:
        """max_x |A(x, pi)|, zero up to rounding."""
        return float(np.max(np.abs(self.values[:, -1])))


def _cumtrapz_periodic(g: np.ndarray, dy: float) -> np.ndarray:
    """Cumulative trapezoid along axis 1 of samples at y_0..y_{n-1}, closed at y_n = y_0."""
    closed = np.concatenate([g, g[:, :1]], axis=1)
    inc = 0.5 * dy * (closed[:, 1:] + closed[:, :-1])
    return np.concatenate([np.zeros((g.shape[0], 1)), np.cumsum(inc, axis=1)], axis=1)


def primitive_A(a: DampingProfile, grid=(256, 256), x=None, derivatives: int = 2,
                floor: float = 1e-12) -> PrimitiveField:
    """Cumulative trapezoid primitive in y of ``a - A(a)``.

    ``x`` defaults to the cell-centred grid, which keeps columns off the
    conical tip of a centred disk. The ``bounds`` report holds, per x, the
    sup over y of ``|d_x^j A|`` for ``j <= derivatives`` (x-derivatives are
    integrated from the profile's derivatives) together with the profile's
    class constant ``C_j = max |d_x^j a| / a^(1 - j sigma)`` on the grid.
    """
    n_x, n_y = grid
    if n_y < 256 or (x is None and n_x < 256):
        raise ValueError("grid sizes must be at least 256")
    if x is None:
        x = -np.pi + (np.arange(n_x) + 0.5) * TWO_PI / n_x
    x = np.asarray(x, dtype=float)
    dy = TWO_PI / n_y
    y = -np.pi + np.arange(n_y + 1) * dy
    X, Y = np.meshgrid(x, y[:-1], indexing="ij")
    vals = a(X, Y)
    avg = vals.mean(axis=1)
    values = _cumtrapz_periodic(vals - avg[:, None], dy)
    sigma = a.params.sigma if a.params is not None else 0.0
    bounds = {"sup_abs": np.max(np.abs(values), axis=1), "sigma": sigma, "derivatives": {}}
    pos = vals > floor
    for j in range(1, derivatives + 1):
        if a.params is not None and j > a.params.k:
            break
        dj = a.derivative((j, 0), X, Y, step=TWO_PI / max(n_x, 1024))
        dj = np.where(np.isfinite(dj), dj, 0.0)
        Fj = _cumtrapz_periodic(dj - dj.mean(axis=1)[:, None], dy)
        ratio = np.abs(dj[pos]) / vals[pos] ** (1 - j * sigma)
        bounds["derivatives"][j] = {"sup_abs": np.max(np.abs(Fj), axis=1),
                                    "class_constant": float(ratio.max()) if ratio.size else 0.0}
    return PrimitiveField(x=x, y=y, values=values, average=avg, bounds=bounds)


def primitive_bound_ratios(P: PrimitiveField, normalized: bool = True) -> dict:
    """Largest ratio of ``sup_y |d_x^j A|`` to ``4 pi C_j A(a)^(1 - j sigma)`` over x.

    The 4 pi bounds assume the class inequality with constant one; with
    ``normalized`` the measured class constant ``C_j`` of the profile is put
    back in (``C_0 = 1``), which is the same as testing ``a / c`` for the
    rescaling ``c`` that makes every constant one. Ratios <= 1 mean the bound
    holds at every grid column. Where A(a) vanishes the integrand does too,
    and the ``outside_support`` entry reports sup |A| there.
    """
    avg = P.average
    pos = avg > 0
    out = {}
    if pos.any():
        out[0] = float(np.max(P.bounds["sup_abs"][pos] / (4 * np.pi * avg[pos])))
    else:
        out[0] = 0.0
    sigma = P.bounds["sigma"]
    for j, d in P.bounds["derivatives"].items():
        c = d["class_constant"] if normalized else 1.0
        if not pos.any() or c == 0:
            out[j] = 0.0
            continue
        out[j] = float(np.max(d["sup_abs"][pos] / (4 * np.pi * c * avg[pos] ** (1 - j * sigma))))
    out["outside_support"] = float(np.max(P.bounds["sup_abs"][~pos])) if (~pos).any() else 0.0
    return out


def jensen_gap(f: DampingProfile, s: float, v=E2, grid_n: int = 1024) -> np.ndarray:
    """``A(f^(1-s)) - A(f)^(1-s)`` on the transversal grid; never positive for f >= 0."""
    v = _as_direction(v)
    X = transversal_grid(v, grid_n)
    g = make_custom_damping(lambda x, y: np.maximum(f(x, y), 0.0) ** (1 - s))
    return average_samples(g, v, X, grid_n) - average_samples(f, v, X, grid_n) ** (1 - s)


def check_class_1d(W: AveragedDamping, sigma: float, k: int = 2, floor: float = 1e-12,
                   mask: Optional[np.ndarray] = None) -> dict:
    """Class ratios ``max |W^(j)| / W^(1 - j sigma)`` of a 1D periodic sample.

    Derivatives are centred finite differences on the uniform grid; ``mask``
    restricts the maximum, e.g. away from an interior kink.
    """
    w = W.samples
    dx = W.period / len(w)
    derivs = {1: (np.roll(w, -1) - np.roll(w, 1)) / (2 * dx),
              2: (np.roll(w, -1) - 2 * w + np.roll(w, 1)) / dx**2}
    m = w > floor
    if mask is not None:
        m &= mask
    return {j: float(np.max(np.abs(derivs[j][m]) / w[m] ** (1 - j * sigma)))
            for j in range(1, k + 1)}


__all__ = [
    "AveragedDamping", "E2", "PrimitiveField", "RationalDirection", "average_along",
    "average_samples", "check_class_1d", "count_periodic_components", "detect_boundary",
    "fit_vanishing_exponent", "jensen_gap", "primitive_bound_ratios", "orbit_points",
    "primitive_A", "pullback_to_covering", "refine_boundary", "transversal_grid",
]
