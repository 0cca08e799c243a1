"""Conic-section geometry in focus-directrix and quadratic-form coordinates.

A conic is described either by the focus-directrix vector ``(h, k, phi, l, e)``
(focus location, axis angle, semi-latus rectum, eccentricity) or by the
normalized coefficients ``(A, B, C, D, E, F)`` of the general second-degree
equation ``A x^2 + 2 B x y + C y^2 + 2 D x + 2 E y + F = 0``.  The polar form
around the focus is ``r(t) = l / (1 + e cos t)`` with ``t`` measured from the
conic axis, which points from the focus toward the nearest vertex.

The conversion between the two parameterizations goes through the standard
form (center at the origin, axis angle zero):

* ellipse   ``u^2/a^2 + v^2/b^2 = 1`` with ``a >= b``; the focus used by the
  polar form is ``center + a*e*(cos phi, sin phi)``,
* hyperbola ``u^2/a^2 - v^2/b^2 = 1``; the polar form traces the branch
  around the focus ``center - a*e*(cos phi, sin phi)`` (the left branch when
  ``phi = 0``; the right branch is the same curve with ``phi = pi``),
* parabola  ``v^2 = -4 a u`` (left-opening at ``phi = 0``); the vertex sits
  at ``focus + (l/2)*(cos phi, sin phi)``.

Axis-angle identifiability: ellipses and hyperbolas recovered from quadratic
coefficients report ``phi`` in ``(-pi/2, pi/2]`` (the coefficients do not
distinguish the two foci / branches); parabolas determine ``phi`` uniquely in
``(-pi, pi]``; circles use ``phi = 0``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

# Degeneracy thresholds for quadratic-form classification.  The determinant
# test is scale-relative (|det| < DEGENERACY_TOL * scale^3) so that it is
# invariant under rescaling of the coefficient vector.
DEGENERACY_TOL = 1e-10
PARABOLA_J_TOL = 1e-8
CIRCLE_COEF_TOL = 1e-12


class DegenerateConicError(ValueError):
    """The quadratic form does not describe a real, non-degenerate conic."""


class ConicType(enum.Enum):
    CIRCLE = "circle"
    ELLIPSE = "ellipse"  # non-circular
    PARABOLA = "parabola"
    HYPERBOLA = "hyperbola"

    @staticmethod
    def from_eccentricity(e: float) -> "ConicType":
        """Map eccentricity to conic type (exact comparisons at 0 and 1)."""
        if e < 0:
            raise ValueError(f"eccentricity must be >= 0, got {e}")
        if e == 0.0:
            return ConicType.CIRCLE
        if e < 1.0:
            return ConicType.ELLIPSE
        if e == 1.0:
            return ConicType.PARABOLA
        return ConicType.HYPERBOLA


def wrap_angle(x: float) -> float:
    """Wrap an angle to the half-open interval (-pi, pi]."""
    return x - TWO_PI * math.ceil((x - math.pi) / TWO_PI)


def wrap_angles(x: np.ndarray) -> np.ndarray:
    """Vectorized :func:`wrap_angle`."""
    x = np.asarray(x, dtype=float)
    return x - TWO_PI * np.ceil((x - math.pi) / TWO_PI)


@dataclass(frozen=True)
class ConicFD:
    """Focus-directrix parameters (h, k, phi, l, e).

    ``(h, k)`` is the focus, ``phi`` the axis angle in ``(-pi, pi]`` (wrapped
    on construction), ``l > 0`` the semi-latus rectum and ``e >= 0`` the
    eccentricity.
    """

    h: float
    k: float
    phi: float
    l: float
    e: float

    def __post_init__(self):
        vals = (self.h, self.k, self.phi, self.l, self.e)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite conic parameters: {vals}")
        if not self.l > 0:
            raise ValueError(f"semi-latus rectum must be positive, got {self.l}")
        if self.e < 0:
            raise ValueError(f"eccentricity must be >= 0, got {self.e}")
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "k", float(self.k))
        object.__setattr__(self, "phi", wrap_angle(float(self.phi)))
        object.__setattr__(self, "l", float(self.l))
        object.__setattr__(self, "e", float(self.e))

    @property
    def conic_type(self) -> ConicType:
        return ConicType.from_eccentricity(self.e)

    def as_array(self) -> np.ndarray:
        return np.array([self.h, self.k, self.phi, self.l, self.e])


@dataclass(frozen=True)
class ConicQuad:
    """Quadratic-form coefficients with A^2 + B^2 + C^2 = 1."""

    A: float
    B: float
    C: float
    D: float
    E: float
    F: float

    def __post_init__(self):
        vals = self.as_array()
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"non-finite coefficients: {vals}")
        qnorm = self.A**2 + self.B**2 + self.C**2
        if abs(qnorm - 1.0) > 1e-12:
            raise ValueError(
                f"coefficients not normalized: A^2+B^2+C^2 = {qnorm!r}; "
                "use ConicQuad.from_coefficients"
            )

    @classmethod
    def from_coefficients(cls, A, B, C, D, E, F) -> "ConicQuad":
        """Normalize arbitrary coefficients to the unit-norm sign convention.

        The scale is fixed by A^2+B^2+C^2 = 1 and the sign by making the
        largest-magnitude quadratic coefficient positive.
        """
        v = np.array([A, B, C, D, E, F], dtype=float)
        qnorm = math.hypot(v[0], v[1], v[2])
        if qnorm == 0.0 or not np.all(np.isfinite(v)):
            raise ValueError(f"quadratic part (A, B, C) must be nonzero: {v[:3]}")
        v /= qnorm
        lead = max(range(3), key=lambda i: abs(v[i]))
        if v[lead] < 0:
            v = -v
        return cls(*v)

    def as_array(self) -> np.ndarray:
        return np.array([self.A, self.B, self.C, self.D, self.E, self.F])

    def matrix(self) -> np.ndarray:
        """Symmetric 3x3 matrix Q with [x y 1] Q [x y 1]^T = 0 on the conic."""
        A, B, C, D, E, F = self.as_array()
        return np.array([[A, B, D], [B, C, E], [D, E, F]])

    def residual(self, x, y):
        """Evaluate A x^2 + 2Bxy + C y^2 + 2Dx + 2Ey + F."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (
            self.A * x * x
            + 2.0 * self.B * x * y
            + self.C * y * y
            + 2.0 * self.D * x
            + 2.0 * self.E * y
            + self.F
        )


@dataclass(frozen=True)
class StandardForm:
    """Standard-form description: semi-axes, center and axis angle.

    For parabolas ``a`` is the vertex-to-focus distance and ``b`` is None.
    """

    kind: ConicType
    a: float
    b: float | None
    center: tuple[float, float]
    phi: float


def angle_support(e: float) -> float:
    """Half-width R(e) of the admissible angle interval (-R, R)."""
    if e < 0:
        raise ValueError(f"eccentricity must be >= 0, got {e}")
    if e <= 1.0:
        return math.pi
    return math.acos(-1.0 / e)


def radius(t: float, conic: ConicFD) -> float:
    """Focal distance r(t) = l / (1 + e cos t); requires 1 + e cos t > 0."""
    denom = 1.0 + conic.e * math.cos(t)
    if denom <= 0.0:
        raise ValueError(
            f"angle t={t} outside the angular support (1 + e cos t = {denom} <= 0)"
        )
    return conic.l / denom


def fd_to_point(t: float, conic: ConicFD) -> tuple[float, float]:
    """Cartesian point at polar angle t."""
    r = radius(t, conic)
    return (
        conic.h + r * math.cos(t + conic.phi),
        conic.k + r * math.sin(t + conic.phi),
    )


def conic_points(conic: ConicFD, ts: np.ndarray) -> np.ndarray:
    """Vectorized point generation; returns an (n, 2) array."""
    ts = np.asarray(ts, dtype=float)
    denom = 1.0 + conic.e * np.cos(ts)
    if np.any(denom <= 0.0):
        bad = ts[denom <= 0.0][:3]
        raise ValueError(f"angles outside the angular support, e.g. {bad}")
    r = conic.l / denom
    return np.column_stack(
        (conic.h + r * np.cos(ts + conic.phi), conic.k + r * np.sin(ts + conic.phi))
    )


def to_standard_point(point, center, phi: float):
    """Rotate ``point - center`` clockwise by phi (into standard coordinates)."""
    c, s = math.cos(phi), math.sin(phi)
    dx = point[0] - center[0]
    dy = point[1] - center[1]
    return (c * dx + s * dy, -s * dx + c * dy)


def to_standard_points(points: np.ndarray, center, phi: float) -> np.ndarray:
    """Vectorized :func:`to_standard_point` for an (n, 2) array."""
    pts = np.asarray(points, dtype=float) - np.asarray(center, dtype=float)
    c, s = math.cos(phi), math.sin(phi)
    rot = np.array([[c, s], [-s, c]])
    return pts @ rot.T


def standard_to_fd(kind: ConicType, a: float, b: float | None, center, phi: float) -> ConicFD:
    """Build focus-directrix parameters from standard-form quantities.

    For ellipses ``a`` and ``b`` are the semi-axes along the ``phi`` and
    ``phi + pi/2`` directions; if ``b > a`` the pair is swapped and the axis
    rotated by ``pi/2`` so that ``a`` is always the semi-major axis.
    """
    cx, cy = float(center[0]), float(center[1])
    if not a > 0:
        raise ValueError(f"semi-axis a must be positive, got {a}")
    if kind is ConicType.CIRCLE:
        return ConicFD(cx, cy, 0.0, a, 0.0)
    if kind is ConicType.PARABOLA:
        d = (math.cos(phi), math.sin(phi))
        return ConicFD(cx - a * d[0], cy - a * d[1], phi, 2.0 * a, 1.0)
    if b is None or not b > 0:
        raise ValueError(f"semi-axis b must be positive for {kind}, got {b}")
    if kind is ConicType.ELLIPSE:
        if b > a:
            a, b = b, a
            phi = phi + 0.5 * math.pi
        e = math.sqrt(max(0.0, 1.0 - (b / a) ** 2))
        if e == 0.0:
            return ConicFD(cx, cy, 0.0, a, 0.0)
        c = a * e
        d = (math.cos(phi), math.sin(phi))
        return ConicFD(cx + c * d[0], cy + c * d[1], phi, b * b / a, e)
    if kind is ConicType.HYPERBOLA:
        e = math.sqrt(1.0 + (b / a) ** 2)
        c = a * e
        d = (math.cos(phi), math.sin(phi))
        return ConicFD(cx - c * d[0], cy - c * d[1], phi, b * b / a, e)
    raise ValueError(f"unsupported conic type: {kind}")


def fd_to_standard(conic: ConicFD) -> StandardForm:
    """Standard-form quantities (semi-axes, center, axis angle) of a conic."""
    h, k, phi, l, e = conic.h, conic.k, conic.phi, conic.l, conic.e
    d = (math.cos(phi), math.sin(phi))
    if e == 0.0:
        return StandardForm(ConicType.CIRCLE, l, l, (h, k), 0.0)
    if e < 1.0:
        a = l / (1.0 - e * e)
        b = l / math.sqrt(1.0 - e * e)
        c = a * e
        return StandardForm(ConicType.ELLIPSE, a, b, (h - c * d[0], k - c * d[1]), phi)
    if e == 1.0:
        a = 0.5 * l
        return StandardForm(ConicType.PARABOLA, a, None, (h + a * d[0], k + a * d[1]), phi)
    a = l / (e * e - 1.0)
    b = a * math.sqrt(e * e - 1.0)
    c = a * e
    return StandardForm(ConicType.HYPERBOLA, a, b, (h + c * d[0], k + c * d[1]), phi)


def flip_axis(conic: ConicFD) -> ConicFD:
    """Equivalent-curve parameters with the axis angle rotated by pi.

    For an ellipse this switches to the other focus; for a hyperbola it
    switches the traced branch.  Parabolas have a unique representation, so
    flipping would change the curve and is rejected.
    """
    if conic.e == 1.0:
        raise ValueError("a parabola has a unique axis direction")
    if conic.e == 0.0:
        return conic
    std = fd_to_standard(conic)
    return standard_to_fd(std.kind, std.a, std.b, std.center, std.phi + math.pi)


def canonical_fd(conic: ConicFD) -> ConicFD:
    """Canonical representative under the axis-angle conventions.

    Ellipses and hyperbolas are reported with phi in (-pi/2, pi/2] (flipping
    focus/branch as needed); circles with phi = 0; parabolas are unchanged.
    """
    if conic.e == 0.0:
        return ConicFD(conic.h, conic.k, 0.0, conic.l, 0.0)
    if conic.e == 1.0:
        return conic
    if -0.5 * math.pi < conic.phi <= 0.5 * math.pi:
        return conic
    return flip_axis(conic)


def fd_to_quad(conic: ConicFD) -> ConicQuad:
    """Quadratic-form coefficients of the conic (normalized)."""
    std = fd_to_standard(conic)
    a = std.a
    if std.kind is ConicType.CIRCLE:
        qs = np.diag([1.0, 1.0, -a * a])
    elif std.kind is ConicType.ELLIPSE:
        qs = np.diag([1.0 / a**2, 1.0 / std.b**2, -1.0])
    elif std.kind is ConicType.HYPERBOLA:
        qs = np.diag([1.0 / a**2, -1.0 / std.b**2, -1.0])
    else:  # parabola: v^2 + 4 a u = 0
        qs = np.array([[0.0, 0.0, 2.0 * a], [0.0, 1.0, 0.0], [2.0 * a, 0.0, 0.0]])
    c, s = math.cos(std.phi), math.sin(std.phi)
    rot = np.array([[c, s], [-s, c]])
    shift = -rot @ np.asarray(std.center, dtype=float)
    tmat = np.array(
        [[rot[0, 0], rot[0, 1], shift[0]], [rot[1, 0], rot[1, 1], shift[1]], [0.0, 0.0, 1.0]]
    )
    q = tmat.T @ qs @ tmat
    return ConicQuad.from_coefficients(q[0, 0], q[0, 1], q[1, 1], q[0, 2], q[1, 2], q[2, 2])


@dataclass(frozen=True)
class _Reduced:
    """Translation-reduced decomposition shared by classify/convert.

    ``central`` carries the center and the constant term after translating
    there; the parabola branch carries the axis frame and its linear/constant
    terms.  The determinant test is performed on the reduced quantities so
    that it stays meaningful for conics far from the coordinate origin
    (translating a conic leaves its determinant unchanged but inflates the
    raw coefficients, which would otherwise swamp the relative threshold).
    """

    j: float
    i: float
    central: bool
    center: np.ndarray | None = None
    fprime: float = 0.0
    evals: np.ndarray | None = None
    evecs: np.ndarray | None = None
    lam: float = 0.0
    axis: np.ndarray | None = None
    perp: np.ndarray | None = None
    dstar: float = 0.0
    estar: float = 0.0


def _reduce(quad: ConicQuad) -> _Reduced:
    A, B, C, D, E, F = quad.as_array()
    j = A * C - B * B
    i = A + C
    q2 = np.array([[A, B], [B, C]])
    if abs(j) >= PARABOLA_J_TOL:
        center = np.linalg.solve(q2, [-D, -E])
        fprime = F + D * center[0] + E * center[1]  # constant term at the center
        if abs(fprime) <= DEGENERACY_TOL * max(1.0, abs(D * center[0]) + abs(E * center[1]) + abs(F)):
            raise DegenerateConicError("degenerate conic (point or crossing line pair)")
        evals, evecs = np.linalg.eigh(q2)
        return _Reduced(j, i, True, center=center, fprime=fprime, evals=evals, evecs=evecs)
    evals, evecs = np.linalg.eigh(q2)
    i0 = int(np.argmin(np.abs(evals)))
    axis = evecs[:, i0]
    perp = evecs[:, 1 - i0]
    lam = float(evals[1 - i0])
    dstar = float(axis @ (D, E))
    estar = float(perp @ (D, E))
    if abs(dstar) <= DEGENERACY_TOL * max(1.0, abs(D), abs(E)) or lam == 0.0:
        raise DegenerateConicError("degenerate conic (parallel line pair)")
    return _Reduced(j, i, False, lam=lam, axis=axis, perp=perp, dstar=dstar, estar=estar)


def classify_quad(quad: ConicQuad) -> ConicType:
    """Classify a non-degenerate quadratic form by its discriminants."""
    red = _reduce(quad)
    if not red.central:
        return ConicType.PARABOLA
    if red.j > 0:
        if red.fprime * red.j / red.i >= 0:  # Delta / I = J * F' / I
            raise DegenerateConicError("coefficients describe an imaginary ellipse")
        if abs(quad.B) <= CIRCLE_COEF_TOL and abs(quad.A - quad.C) <= CIRCLE_COEF_TOL:
            return ConicType.CIRCLE
        return ConicType.ELLIPSE
    return ConicType.HYPERBOLA


def quad_to_fd(quad: ConicQuad) -> ConicFD:
    """Focus-directrix parameters of a non-degenerate quadratic form.

    Inverse of :func:`fd_to_quad` up to the axis-angle conventions described
    in the module docstring.
    """
    red = _reduce(quad)
    F = quad.F

    if not red.central:
        g, mvec, lam = red.axis, red.perp, red.lam
        dstar, estar = red.dstar, red.estar
        if dstar / lam < 0.0:
            g = -g
            dstar = -dstar
        a = dstar / (2.0 * lam)
        u0 = (estar**2 / lam - F) / (2.0 * dstar)
        v0 = -estar / lam
        vertex = u0 * g + v0 * mvec
        phi = math.atan2(g[1], g[0])
        return standard_to_fd(ConicType.PARABOLA, a, None, vertex, phi)

    center = red.center
    kvals = red.evals / (-red.fprime)

    if red.j > 0:  # ellipse family
        if kvals[0] <= 0 or kvals[1] <= 0:
            raise DegenerateConicError("coefficients describe an imaginary ellipse")
        i_major = int(np.argmin(kvals))
        a = 1.0 / math.sqrt(kvals[i_major])
        b = 1.0 / math.sqrt(kvals[1 - i_major])
        ecc = math.sqrt(max(0.0, 1.0 - (b / a) ** 2))
        if ecc < 1e-7:
            return ConicFD(center[0], center[1], 0.0, 0.5 * (a + b), 0.0)
        v = red.evecs[:, i_major]
        phi = _fold_axis_angle(math.atan2(v[1], v[0]))
        return standard_to_fd(ConicType.ELLIPSE, a, b, center, phi)

    # hyperbola: transverse axis along the eigenvector with positive k
    i_pos = int(np.argmax(kvals))
    if kvals[i_pos] <= 0 or kvals[1 - i_pos] >= 0:
        raise DegenerateConicError("inconsistent hyperbola coefficients")
    a = 1.0 / math.sqrt(kvals[i_pos])
    b = 1.0 / math.sqrt(-kvals[1 - i_pos])
    v = red.evecs[:, i_pos]
    phi = _fold_axis_angle(math.atan2(v[1], v[0]))
    return standard_to_fd(ConicType.HYPERBOLA, a, b, center, phi)


def _fold_axis_angle(phi: float) -> float:
    """Fold an axis direction (defined mod pi) into (-pi/2, pi/2]."""
    phi = wrap_angle(phi)
    if phi <= -0.5 * math.pi:
        phi += math.pi
    elif phi > 0.5 * math.pi:
        phi -= math.pi
    return phi


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_minimize(f, a: float, b: float, tol: float = 1e-10) -> float:
    """Golden-section search for a scalar minimum on [a, b]."""
    while b - a > tol:
        c = b - _INVPHI * (b - a)
        d = a + _INVPHI * (b - a)
        if f(c) < f(d):
            b = d
        else:
            a = c
    return 0.5 * (a + b)


def _support_bounds(conic: ConicFD) -> tuple[float, float]:
    r = angle_support(conic.e)
    if conic.e <= 1.0:
        inset = 0.0 if conic.e < 1.0 else r * 1e-7
    else:
        inset = r * 1e-7
    return -r + inset, r - inset


def nearest_point_angles(
    points: np.ndarray, conic: ConicFD, n_grid: int = 512, tol: float = 1e-10
) -> np.ndarray:
    """Angles of the conic points nearest to each datum.

    A uniform grid over the angular support seeds a vectorized golden-section
    refinement, which guarantees the global basin for the (at most bimodal)
    distance function.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lo, hi = _support_bounds(conic)
    ts = np.linspace(lo, hi, n_grid)
    curve = conic_points(conic, ts)
    d2 = (pts[:, 0, None] - curve[None, :, 0]) ** 2 + (
        pts[:, 1, None] - curve[None, :, 1]
    ) ** 2
    idx = np.argmin(d2, axis=1)
    a = ts[np.clip(idx - 1, 0, n_grid - 1)]
    b = ts[np.clip(idx + 1, 0, n_grid - 1)]

    x, y = pts[:, 0], pts[:, 1]

    def d2_at(t):
        r = conic.l / (1.0 + conic.e * np.cos(t))
        return (x - (conic.h + r * np.cos(t + conic.phi))) ** 2 + (
            y - (conic.k + r * np.sin(t + conic.phi))
        ) ** 2

    while np.max(b - a) > tol:
        c = b - _INVPHI * (b - a)
        d = a + _INVPHI * (b - a)
        left = d2_at(c) < d2_at(d)
        b = np.where(left, d, b)
        a = np.where(left, a, c)
    return 0.5 * (a + b)


def nearest_point_angle(datum, conic: ConicFD) -> float:
    """Angle of the conic point nearest to a single datum."""
    return float(nearest_point_angles(np.asarray(datum, dtype=float)[None, :], conic)[0])
