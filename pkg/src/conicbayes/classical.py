"""Non-Bayesian conic fitters and the sampler initialization procedure.

``fit_pseudo_inverse`` minimizes the algebraic residual of the general
second-degree equation under the unit-norm constraint on the quadratic
coefficients (the smallest-eigenvalue solution of the reduced moment
problem).  ``fit_lemma_regression`` / ``lemma_to_conic`` implement the
per-type linear regressions available after rotating the data by a candidate
axis angle: for an ellipse or hyperbola the rotated points satisfy

    y*^2 = b0 + b1 x* + b2 x*^2 + b3 y*,

with b3 = 2 c2*, b2 = -delta b^2/a^2, b1 = 2 delta c1* b^2/a^2 and
b0 = -c2*^2 - delta c1*^2 b^2/a^2 + delta b^2 (delta = +1 ellipse,
-1 hyperbola, center (c1*, c2*) in rotated coordinates); a parabola satisfies

    y*^2 = b0 + b1 x* + b2 y*,

with b1 = -4a, b2 = 2 c2*, b0 = -c2*^2 + 4 a c1*.

``initialize`` combines both: candidate axis angles from the fitted quadratic
form, a per-type regression for each candidate, nearest-point latent angles
and the profile noise variance, keeping the highest-likelihood combination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    ConicFD,
    ConicQuad,
    ConicType,
    conic_points,
    flip_axis,
    nearest_point_angles,
    standard_to_fd,
    to_standard_points,
    wrap_angle,
)
from .simulate import NoisyDataset

# profile noise variance is floored at SIGMA2_FLOOR_REL * (data diagonal)^2
# so the log-likelihood stays finite on noiseless data
SIGMA2_FLOOR_REL = 1e-12

INIT_TYPES = (ConicType.ELLIPSE, ConicType.HYPERBOLA, ConicType.PARABOLA)


class RankDeficiencyError(ValueError):
    """The least-squares design matrix is numerically singular."""


class InadmissibleCoefficientsError(ValueError):
    """Regression coefficients contradict the claimed conic type."""


@dataclass(frozen=True)
class LemmaRegression:
    beta: np.ndarray
    residual_ss: float


@dataclass(frozen=True)
class InitEstimate:
    conic: ConicFD
    kind: ConicType
    angles: np.ndarray
    sigma2: float
    loglik: float


@dataclass(frozen=True)
class OdrResult:
    conic: ConicFD
    converged: bool
    iterations: int
    objective: float


def _as_points(data) -> np.ndarray:
    if isinstance(data, NoisyDataset):
        return data.points
    pts = np.asarray(data, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"expected (n, 2) points, got shape {pts.shape}")
    return pts


def data_scale(points: np.ndarray) -> float:
    """Bounding-box diagonal, used to set scale-relative floors."""
    span = points.max(axis=0) - points.min(axis=0)
    return float(max(np.hypot(span[0], span[1]), 1e-12))


def fit_pseudo_inverse(data) -> ConicQuad:
    """Algebraic least-squares conic through the data.

    Minimizes sum (A x^2 + 2Bxy + C y^2 + 2Dx + 2Ey + F)^2 subject to
    A^2 + B^2 + C^2 = 1.  The solve runs in centroid-centered, scaled
    coordinates: the constraint involves only the quadratic block, which
    transforms uniformly under translation and scaling, so the minimizing
    conic is unchanged while the moment matrix stays well conditioned.
    """
    pts = _as_points(data)
    n = len(pts)
    if n < 6:
        raise RankDeficiencyError(f"need at least 6 points, got {n}")
    mu = pts.mean(axis=0)
    scale = max(np.sqrt(((pts - mu) ** 2).sum(axis=1).mean()), 1e-12)
    x = (pts[:, 0] - mu[0]) / scale
    y = (pts[:, 1] - mu[1]) / scale
    design = np.column_stack([x * x, 2 * x * y, y * y, 2 * x, 2 * y, np.ones(n)])
    # noiseless on-conic data has rank exactly 5 (the true coefficient vector
    # spans the null space); anything lower leaves the minimizer non-unique
    if np.linalg.matrix_rank(design) < 5:
        raise RankDeficiencyError("design matrix is rank deficient (too few or collinear points)")
    moments = design.T @ design
    s11 = moments[:3, :3]
    s12 = moments[:3, 3:]
    s22 = moments[3:, 3:]
    try:
        t_block = np.linalg.solve(s22, s12.T)
    except np.linalg.LinAlgError as ex:
        raise RankDeficiencyError("singular reduced moment matrix") from ex
    reduced = s11 - s12 @ t_block
    evals, evecs = np.linalg.eigh(reduced)
    p = evecs[:, 0]
    q = -t_block @ p
    a_, b_, c_, d_, e_, f_ = p[0], p[1], p[2], q[0], q[1], q[2]
    # map coefficients from (x - mu)/scale coordinates back to raw ones
    s2 = scale * scale
    A = a_ / s2
    B = b_ / s2
    C = c_ / s2
    D = (-a_ * mu[0] - b_ * mu[1]) / s2 + d_ / scale
    E = (-b_ * mu[0] - c_ * mu[1]) / s2 + e_ / scale
    F = (
        (a_ * mu[0] ** 2 + 2 * b_ * mu[0] * mu[1] + c_ * mu[1] ** 2) / s2
        - 2 * (d_ * mu[0] + e_ * mu[1]) / scale
        + f_
    )
    return ConicQuad.from_coefficients(A, B, C, D, E, F)


def fit_lemma_regression(rotated_points: np.ndarray, kind: ConicType) -> LemmaRegression:
    """OLS of y*^2 on the type-specific regressors of rotated data."""
    pts = _as_points(rotated_points)
    x, y = pts[:, 0], pts[:, 1]
    n = len(pts)
    if kind is ConicType.PARABOLA:
        if n < 4:
            raise RankDeficiencyError(f"need at least 4 points, got {n}")
        design = np.column_stack([np.ones(n), x, y])
    elif kind in (ConicType.ELLIPSE, ConicType.HYPERBOLA):
        if n < 5:
            raise RankDeficiencyError(f"need at least 5 points, got {n}")
        design = np.column_stack([np.ones(n), x, x * x, y])
    else:
        raise ValueError(f"no regression for conic type {kind}")
    target = y * y
    beta, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < design.shape[1]:
        raise RankDeficiencyError("singular normal equations in rotated regression")
    resid = target - design @ beta
    return LemmaRegression(beta, float(resid @ resid))


def lemma_to_conic(reg: LemmaRegression, kind: ConicType, phi: float) -> ConicFD:
    """Invert the regression coefficients into focus-directrix parameters.

    ``phi`` is the candidate axis angle the data was rotated by.  For
    hyperbolas the sign of b0 + c2*^2 - b2 c1*^2 decides whether the
    transverse axis lies along the rotated x or y axis; the branch traced by
    the returned parameters follows the left-branch convention (callers with
    data can evaluate :func:`conicbayes.geometry.flip_axis` as well).
    """
    beta = reg.beta
    cos_p, sin_p = math.cos(phi), math.sin(phi)
    rot_t = np.array([[cos_p, -sin_p], [sin_p, cos_p]])  # inverse of the clockwise rotation

    if kind is ConicType.PARABOLA:
        b0, b1, b2 = beta
        a = -b1 / 4.0
        if not a > 0:
            raise InadmissibleCoefficientsError(f"implied vertex scale {a} <= 0 for a parabola")
        c2s = b2 / 2.0
        c1s = (b0 + c2s * c2s) / (4.0 * a)
        vertex = rot_t @ (c1s, c2s)
        return standard_to_fd(ConicType.PARABOLA, a, None, vertex, phi)

    b0, b1, b2, b3 = beta
    if kind is ConicType.ELLIPSE:
        if not b2 < 0:
            raise InadmissibleCoefficientsError(f"b2 = {b2} >= 0 contradicts an ellipse")
        c2s = b3 / 2.0
        c1s = -b1 / (2.0 * b2)
        b_sq = b0 + c2s * c2s - b2 * c1s * c1s
        if not b_sq > 0:
            raise InadmissibleCoefficientsError(f"implied b^2 = {b_sq} <= 0 for an ellipse")
        a_sq = -b_sq / b2
        center = rot_t @ (c1s, c2s)
        return standard_to_fd(ConicType.ELLIPSE, math.sqrt(a_sq), math.sqrt(b_sq), center, phi)

    if kind is ConicType.HYPERBOLA:
        if not b2 > 0:
            raise InadmissibleCoefficientsError(f"b2 = {b2} <= 0 contradicts a hyperbola")
        c2s = b3 / 2.0
        c1s = -b1 / (2.0 * b2)
        q_val = b0 + c2s * c2s - b2 * c1s * c1s
        center = rot_t @ (c1s, c2s)
        if q_val < 0:  # transverse axis along the rotated x axis
            b_sq = -q_val
            a_sq = b_sq / b2
            axis_phi = phi
        elif q_val > 0:  # transverse axis along the rotated y axis
            a_sq = q_val
            b_sq = a_sq / b2
            axis_phi = phi + 0.5 * math.pi
        else:
            raise InadmissibleCoefficientsError("degenerate hyperbola (asymptote pair)")
        return standard_to_fd(
            ConicType.HYPERBOLA, math.sqrt(a_sq), math.sqrt(b_sq), center, axis_phi
        )

    raise ValueError(f"no inversion for conic type {kind}")


def estimate_angles(data, conic: ConicFD) -> tuple[np.ndarray, float, float]:
    """Nearest-point angles, profile noise variance and log-likelihood."""
    pts = _as_points(data)
    n = len(pts)
    t_hat = nearest_point_angles(pts, conic)
    resid = pts - conic_points(conic, t_hat)
    rss = float((resid * resid).sum())
    sigma2 = rss / (2.0 * n)
    floor = SIGMA2_FLOOR_REL * data_scale(pts) ** 2
    sigma2_c = max(sigma2, floor)
    loglik = -n * math.log(2.0 * math.pi * sigma2_c) - rss / (2.0 * sigma2_c)
    return t_hat, sigma2_c, loglik


def candidate_axis_angles(quad: ConicQuad) -> list[float]:
    """Four wrapped axis-angle candidates from tan(2 phi) = 2B / (A - C).

    The two-argument arctangent resolves the axis line modulo pi/2; the four
    quarter-turn offsets cover both axis orderings and opening directions.
    Falls back to the axis-aligned candidates when A = C and B = 0.
    """
    if abs(quad.A - quad.C) < 1e-10 and abs(quad.B) < 1e-10:
        phi1 = 0.0
    else:
        phi1 = 0.5 * math.atan2(2.0 * quad.B, quad.A - quad.C)
    return [wrap_angle(phi1 + j * 0.5 * math.pi) for j in range(4)]


def initialize(data, allowed_types: tuple[ConicType, ...] | None = None) -> InitEstimate:
    """Full starting-point search over candidate axis angles and conic types."""
    pts = _as_points(data)
    if len(pts) < 6:
        raise RankDeficiencyError(f"initialization needs at least 6 points, got {len(pts)}")
    kinds = INIT_TYPES if allowed_types is None else tuple(allowed_types)
    if ConicType.CIRCLE in kinds:
        return _initialize_circle(pts)
    quad = fit_pseudo_inverse(pts)
    best: InitEstimate | None = None
    for cand in candidate_axis_angles(quad):
        rotated = to_standard_points(pts, (0.0, 0.0), cand)
        for kind in kinds:
            try:
                reg = fit_lemma_regression(rotated, kind)
                conic = lemma_to_conic(reg, kind, cand)
            except (InadmissibleCoefficientsError, RankDeficiencyError):
                continue
            variants = [conic] if kind is not ConicType.HYPERBOLA else [conic, flip_axis(conic)]
            for variant in variants:
                angles, sigma2, loglik = estimate_angles(pts, variant)
                if best is None or loglik > best.loglik:
                    best = InitEstimate(variant, kind, angles, sigma2, loglik)
    if best is None:
        raise RankDeficiencyError("no admissible starting conic found for any candidate angle")
    return best


def _initialize_circle(pts: np.ndarray) -> InitEstimate:
    """Least-squares circle (linearized) for type-restricted runs."""
    x, y = pts[:, 0], pts[:, 1]
    design = np.column_stack([x, y, np.ones(len(pts))])
    target = x * x + y * y
    sol, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < 3:
        raise RankDeficiencyError("circle fit is rank deficient")
    cx, cy = sol[0] / 2.0, sol[1] / 2.0
    r_sq = sol[2] + cx * cx + cy * cy
    if not r_sq > 0:
        raise RankDeficiencyError("circle fit produced a non-positive radius")
    conic = ConicFD(cx, cy, 0.0, math.sqrt(r_sq), 0.0)
    angles, sigma2, loglik = estimate_angles(pts, conic)
    return InitEstimate(conic, ConicType.CIRCLE, angles, sigma2, loglik)


def _free_params(kind: ConicType):
    if kind is ConicType.CIRCLE:
        return ("h", "k", "l")
    if kind is ConicType.PARABOLA:
        return ("h", "k", "phi", "l")
    return ("h", "k", "phi", "l", "e")


def _vector_to_conic(vec: np.ndarray, kind: ConicType, template: ConicFD) -> ConicFD | None:
    params = {"h": template.h, "k": template.k, "phi": template.phi, "l": template.l, "e": template.e}
    for name, value in zip(_free_params(kind), vec):
        params[name] = value
    if kind is ConicType.CIRCLE:
        params["e"] = 0.0
    elif kind is ConicType.PARABOLA:
        params["e"] = 1.0
    if not params["l"] > 0 or params["e"] < 0:
        return None
    if kind is ConicType.ELLIPSE and not 0.0 < params["e"] < 1.0:
        return None
    if kind is ConicType.HYPERBOLA and not params["e"] > 1.0:
        return None
    return ConicFD(params["h"], params["k"], params["phi"], params["l"], params["e"])


def _model_jacobian(conic: ConicFD, t: np.ndarray, kind: ConicType):
    """Stacked model values and Jacobian w.r.t. the free parameters."""
    cos_t = np.cos(t)
    sin_tp = np.sin(t + conic.phi)
    cos_tp = np.cos(t + conic.phi)
    denom = 1.0 + conic.e * cos_t
    r = conic.l / denom
    u = conic.h + r * cos_tp
    v = conic.k + r * sin_tp
    n = len(t)
    cols = {
        "h": (np.ones(n), np.zeros(n)),
        "k": (np.zeros(n), np.ones(n)),
        "phi": (-r * sin_tp, r * cos_tp),
        "l": (cos_tp / denom, sin_tp / denom),
        "e": (-r * cos_t / denom * cos_tp, -r * cos_t / denom * sin_tp),
    }
    names = _free_params(kind)
    jac = np.empty((2 * n, len(names)))
    for j, name in enumerate(names):
        du, dv = cols[name]
        jac[:n, j] = du
        jac[n:, j] = dv
    return np.concatenate([u, v]), jac


def _odr_objective(pts: np.ndarray, conic: ConicFD) -> float:
    t = nearest_point_angles(pts, conic)
    resid = pts - conic_points(conic, t)
    return float((resid * resid).sum())


def fit_orthogonal_distance(
    data,
    kind: ConicType,
    init: ConicFD,
    max_iter: int = 200,
    rel_tol: float = 1e-10,
) -> OdrResult:
    """Geometric (orthogonal-distance) fit with the conic type fixed.

    Alternates nearest-point angle assignment with a Gauss-Newton step on the
    stacked coordinate residuals; a backtracking line search on the true
    orthogonal objective keeps it non-increasing.
    """
    pts = _as_points(data)
    names = _free_params(kind)
    conic = init
    objective = _odr_objective(pts, conic)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        t = nearest_point_angles(pts, conic)
        model, jac = _model_jacobian(conic, t, kind)
        resid = np.concatenate([pts[:, 0], pts[:, 1]]) - model
        step, *_ = np.linalg.lstsq(jac, resid, rcond=None)
        vec = np.array([getattr(conic, name) for name in names])
        previous = objective
        improved = False
        alpha = 1.0
        while alpha > 1e-8:
            trial = _vector_to_conic(vec + alpha * step, kind, conic)
            if trial is not None:
                trial_obj = _odr_objective(pts, trial)
                if trial_obj < objective:
                    conic, objective = trial, trial_obj
                    improved = True
                    break
            alpha *= 0.5
        if not improved or previous - objective <= rel_tol * max(previous, 1e-30):
            converged = True
            break
    return OdrResult(conic, converged, it, objective)
