"""Hierarchical sampler for conic parameters with a trans-type eccentricity move.

The model: each datum is a latent conic point, located by a per-datum angle,
plus independent Gaussian noise on both coordinates.  Standardized angles get
a Bernstein (beta-mixture) prior with Dirichlet weights; the eccentricity
prior mixes point masses at 0 (circle) and 1 (parabola) with a continuous
exponential component, calibrated so the three non-circular families are
equally likely a priori.

One sweep updates, in order: the latent angles (per-point random-walk MH),
the focus and semi-latus rectum (exact Gibbs draw from the conjugate linear
model, latus truncated positive), the noise variance (inverse-gamma Gibbs),
the axis angle (wrapped random-walk MH), the eccentricity (mixed-measure
independence MH whose continuous component is a Laplace approximation around
the conditional mode, truncated to the admissible range), and the mixture
weights (auxiliary component indicators + Dirichlet).

Proposal scales adapt toward a 30% acceptance rate during burn-in only and
are frozen afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.special import betaln, ndtr, ndtri

from .classical import InitEstimate, initialize
from .geometry import ConicFD, ConicType, angle_support, golden_section_minimize, wrap_angle
from .simulate import NoisyDataset

LOG_2PI = math.log(2.0 * math.pi)
ACCEPT_TARGET = 0.30
CURVATURE_FLOOR = 1e-8
ECC_SEARCH_CAP = 25.0  # upper end of the mode search grid when unbounded


def default_bernstein_degree(n: int) -> int:
    """ceil(n / log n), the degree used throughout the experiments."""
    if n < 3:
        return 4
    return max(4, math.ceil(n / math.log(n)))


@dataclass(frozen=True)
class PriorSpec:
    """Hyperprior configuration; see :meth:`from_data` for the defaults."""

    location_mean: tuple[float, float]
    location_sd: float
    latus_mean: float
    latus_sd: float
    sigma2_shape: float = 2.01
    sigma2_scale: float = 1.0
    f0_mean: float = 1.557
    alpha: float = 1.0
    m: int = 20

    def __post_init__(self):
        if self.location_sd <= 0 or self.latus_sd <= 0:
            raise ValueError("prior standard deviations must be positive")
        if self.sigma2_shape <= 0 or self.sigma2_scale <= 0:
            raise ValueError("inverse-gamma prior parameters must be positive")
        if self.alpha <= 0:
            raise ValueError("Dirichlet concentration must be positive")
        if self.m < 4:
            raise ValueError(f"Bernstein degree must be >= 4, got {self.m}")
        if self.f0_cdf_at_1 >= 0.5:
            raise ValueError(
                f"exponential mean {self.f0_mean} gives F0(1) = {self.f0_cdf_at_1:.4f}; "
                "the continuous component must have median > 1"
            )

    @property
    def f0_cdf_at_1(self) -> float:
        return 1.0 - math.exp(-1.0 / self.f0_mean)

    @property
    def type_weights(self) -> tuple[float, float, float]:
        """(circle mass, parabola mass, continuous weight); sums to 1."""
        q = self.f0_cdf_at_1
        return (
            (1.0 - 2.0 * q) / (3.0 * (1.0 - q)),
            1.0 / 3.0,
            1.0 / (3.0 * (1.0 - q)),
        )

    @classmethod
    def from_data(cls, points: np.ndarray, init: InitEstimate, m: int | None = None, **kw) -> "PriorSpec":
        """Weakly informative, scale-adaptive defaults centered by the init."""
        pts = np.asarray(points, dtype=float)
        span = pts.max(axis=0) - pts.min(axis=0)
        diag = max(float(np.hypot(span[0], span[1])), 1e-6)
        centroid = pts.mean(axis=0)
        return cls(
            location_mean=(float(centroid[0]), float(centroid[1])),
            location_sd=10.0 * diag,
            latus_mean=init.conic.l,
            latus_sd=10.0 * init.conic.l,
            sigma2_shape=2.01,
            sigma2_scale=1.01 * init.sigma2,
            m=default_bernstein_degree(len(pts)) if m is None else m,
            **kw,
        )


@dataclass(frozen=True)
class ProposalScales:
    phi: float
    angle: float


@dataclass(frozen=True)
class ChainState:
    theta: ConicFD
    sigma2: float
    angles: np.ndarray
    weights: np.ndarray
    scales: ProposalScales
    iteration: int = 0

    def validate(self, m: int) -> None:
        """Invariant checks (test harness, not the hot path)."""
        assert self.sigma2 > 0
        assert len(self.weights) == m + 1
        assert abs(self.weights.sum() - 1.0) < 1e-9 and np.all(self.weights >= 0)
        r_sup = angle_support(self.theta.e)
        assert np.all(np.abs(self.angles) < r_sup)


@dataclass(frozen=True)
class ChainConfig:
    n_iterations: int = 10_000
    burn_in: int = 2_000
    thin: int = 1
    seed: int = 0
    adapt_window: int = 50

    def __post_init__(self):
        if not 0 <= self.burn_in < self.n_iterations:
            raise ValueError("burn_in must satisfy 0 <= burn_in < n_iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.adapt_window < 1:
            raise ValueError("adapt_window must be >= 1")


@dataclass
class ChainResult:
    states: list[ChainState]
    logliks: np.ndarray
    acceptance: dict[str, float]
    config: ChainConfig

    def theta_array(self) -> np.ndarray:
        """(n_samples, 5) array of (h, k, phi, l, e)."""
        return np.array([s.theta.as_array() for s in self.states])

    def sigma2_array(self) -> np.ndarray:
        return np.array([s.sigma2 for s in self.states])

    def conic_types(self) -> list[ConicType]:
        return [s.theta.conic_type for s in self.states]


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------


@lru_cache(maxsize=8)
def _bernstein_consts(m: int):
    s = np.arange(1, m + 2)
    return s - 1.0, (m + 1.0) - s, betaln(s, m + 2 - s)


def bernstein_pdf_matrix(tstar: np.ndarray, m: int) -> np.ndarray:
    """(n, m+1) matrix of beta(s, m+2-s) densities at the standardized angles."""
    am1, bm1, log_norm = _bernstein_consts(m)
    tstar = np.asarray(tstar, dtype=float)
    log_t = np.log(tstar)[:, None]
    log_1mt = np.log1p(-tstar)[:, None]
    return np.exp(am1 * log_t + bm1 * log_1mt - log_norm)


def _uv(theta: ConicFD, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    denom = 1.0 + theta.e * np.cos(t)
    r = theta.l / denom
    return theta.h + r * np.cos(t + theta.phi), theta.k + r * np.sin(t + theta.phi)


def _rss(theta: ConicFD, t: np.ndarray, pts: np.ndarray) -> float:
    u, v = _uv(theta, t)
    return float(np.sum((pts[:, 0] - u) ** 2 + (pts[:, 1] - v) ** 2))


def log_likelihood(state: ChainState, data: NoisyDataset) -> float:
    """Gaussian log-likelihood of both coordinates at the latent angles."""
    n = data.n
    rss = _rss(state.theta, state.angles, data.points)
    return -n * (LOG_2PI + math.log(state.sigma2)) - rss / (2.0 * state.sigma2)


def log_prior_e(e: float, prior: PriorSpec) -> float:
    """Log of the mixed eccentricity prior (mass at 0 and 1, density elsewhere)."""
    if e < 0:
        return -math.inf
    w_circle, w_parabola, w_cont = prior.type_weights
    if e == 0.0:
        return math.log(w_circle)
    if e == 1.0:
        return math.log(w_parabola)
    rate = 1.0 / prior.f0_mean
    return math.log(w_cont) + math.log(rate) - rate * e


def log_prior_angles(angles: np.ndarray, weights: np.ndarray, e: float, m: int) -> float:
    """Bernstein-mixture log-density of the angles, including the t -> t* Jacobian."""
    r_sup = angle_support(e)
    if np.any(np.abs(angles) >= r_sup):
        return -math.inf
    tstar = (angles + r_sup) / (2.0 * r_sup)
    dens = np.maximum(bernstein_pdf_matrix(tstar, m) @ weights, 1e-300)
    return float(np.sum(np.log(dens))) - len(angles) * math.log(2.0 * r_sup)


def log_posterior(state: ChainState, data: NoisyDataset, prior: PriorSpec) -> float:
    """Joint log-density up to a constant (diagnostic; finite at valid states)."""
    theta = state.theta
    lp = log_likelihood(state, data)
    lp += log_prior_e(theta.e, prior)
    lp += log_prior_angles(state.angles, state.weights, theta.e, prior.m)
    lp += -0.5 * ((theta.h - prior.location_mean[0]) / prior.location_sd) ** 2
    lp += -0.5 * ((theta.k - prior.location_mean[1]) / prior.location_sd) ** 2
    lp += -0.5 * ((theta.l - prior.latus_mean) / prior.latus_sd) ** 2
    lp += -(prior.sigma2_shape + 1.0) * math.log(state.sigma2) - prior.sigma2_scale / state.sigma2
    lp += (prior.alpha - 1.0) * float(np.sum(np.log(np.maximum(state.weights, 1e-300))))
    return lp


# ---------------------------------------------------------------------------
# truncated-normal helpers (inverse-CDF; deterministic given the generator)
# ---------------------------------------------------------------------------


def _truncnorm_sample(rng, mu, sd, lo, hi=math.inf):
    a = ndtr((lo - mu) / sd)
    b = 1.0 if math.isinf(hi) else ndtr((hi - mu) / sd)
    if b - a < 1e-14:  # numerically empty window: pin to the nearest bound
        return min(max(mu, lo + 1e-12), hi if math.isfinite(hi) else mu)
    u = rng.uniform(a, b)
    return mu + sd * ndtri(u)


def _truncnorm_logpdf(x, mu, sd, lo, hi=math.inf):
    if not lo < x < hi:
        return -math.inf
    a = ndtr((lo - mu) / sd)
    b = 1.0 if math.isinf(hi) else ndtr((hi - mu) / sd)
    width = max(b - a, 1e-300)
    return -0.5 * ((x - mu) / sd) ** 2 - math.log(sd) - 0.5 * LOG_2PI - math.log(width)


# ---------------------------------------------------------------------------
# block updates
# ---------------------------------------------------------------------------


def update_location_latus(
    state: ChainState, data: NoisyDataset, prior: PriorSpec, rng: np.random.Generator
) -> ChainState:
    """Exact Gibbs draw of (h, k, l) from the conjugate Gaussian linear model.

    Given angles, axis and eccentricity the model is linear: x = h + l c_i,
    y = k + l s_i with known c_i, s_i.  The latus marginal of the joint
    conditional is truncated to l > 0; (h, k) follow from their Gaussian
    conditional given the sampled l.
    """
    theta = state.theta
    t = state.angles
    n = data.n
    denom = 1.0 + theta.e * np.cos(t)
    c = np.cos(t + theta.phi) / denom
    s = np.sin(t + theta.phi) / denom
    x, y = data.points[:, 0], data.points[:, 1]
    sum_c, sum_s = float(c.sum()), float(s.sum())
    ztz = np.array(
        [
            [n, 0.0, sum_c],
            [0.0, n, sum_s],
            [sum_c, sum_s, float(c @ c + s @ s)],
        ]
    )
    ztw = np.array([float(x.sum()), float(y.sum()), float(c @ x + s @ y)])
    prior_prec = np.diag(
        [1.0 / prior.location_sd**2, 1.0 / prior.location_sd**2, 1.0 / prior.latus_sd**2]
    )
    prior_mean = np.array([prior.location_mean[0], prior.location_mean[1], prior.latus_mean])
    precision = ztz / state.sigma2 + prior_prec
    cov = np.linalg.inv(precision)
    mean = cov @ (ztw / state.sigma2 + prior_prec @ prior_mean)

    sd_l = math.sqrt(cov[2, 2])
    l_new = _truncnorm_sample(rng, mean[2], sd_l, 0.0)
    c_hl = cov[:2, 2]
    mu_hk = mean[:2] + c_hl * (l_new - mean[2]) / cov[2, 2]
    cov_hk = cov[:2, :2] - np.outer(c_hl, c_hl) / cov[2, 2]
    cov_hk[0, 0] = max(cov_hk[0, 0], 1e-300)
    cov_hk[1, 1] = max(cov_hk[1, 1], 1e-300)
    chol = np.linalg.cholesky(cov_hk + 1e-15 * np.trace(cov_hk) * np.eye(2))
    h_new, k_new = mu_hk + chol @ rng.standard_normal(2)
    theta_new = ConicFD(h_new, k_new, theta.phi, l_new, theta.e)
    return replace(state, theta=theta_new)


def update_sigma2(
    state: ChainState, data: NoisyDataset, prior: PriorSpec, rng: np.random.Generator
) -> ChainState:
    """Inverse-gamma Gibbs draw; shape grows by n (one per coordinate pair)."""
    rss = _rss(state.theta, state.angles, data.points)
    shape = prior.sigma2_shape + data.n
    scale = prior.sigma2_scale + rss / 2.0
    sigma2_new = scale / rng.gamma(shape)
    return replace(state, sigma2=sigma2_new)


def update_phi(
    state: ChainState, data: NoisyDataset, rng: np.random.Generator
) -> tuple[ChainState, bool]:
    """Wrapped Gaussian random-walk MH on the axis angle (uniform prior)."""
    theta = state.theta
    prop_phi = wrap_angle(theta.phi + rng.normal(0.0, state.scales.phi))
    theta_prop = ConicFD(theta.h, theta.k, prop_phi, theta.l, theta.e)
    delta = (
        _rss(theta, state.angles, data.points) - _rss(theta_prop, state.angles, data.points)
    ) / (2.0 * state.sigma2)
    if math.log(rng.uniform()) < delta:
        return replace(state, theta=theta_prop), True
    return state, False


def update_angles(
    state: ChainState, data: NoisyDataset, prior: PriorSpec, rng: np.random.Generator
) -> tuple[ChainState, float]:
    """Independent per-point random-walk MH on the latent angles.

    Proposals outside the angular support are auto-rejected (zero prior);
    the support half-width and the standardization Jacobian are unchanged
    within the move, so only the likelihood and mixture terms enter.
    """
    theta = state.theta
    t = state.angles
    n = data.n
    r_sup = angle_support(theta.e)
    prop = t + rng.normal(0.0, state.scales.angle, size=n)
    inside = np.abs(prop) < r_sup
    prop_safe = np.where(inside, prop, 0.0)

    x, y = data.points[:, 0], data.points[:, 1]
    u0, v0 = _uv(theta, t)
    u1, v1 = _uv(theta, prop_safe)
    d_loglik = ((x - u0) ** 2 + (y - v0) ** 2 - (x - u1) ** 2 - (y - v1) ** 2) / (
        2.0 * state.sigma2
    )

    tstar0 = (t + r_sup) / (2.0 * r_sup)
    tstar1 = (prop_safe + r_sup) / (2.0 * r_sup)
    # floor the mixture densities: beta factors underflow at extreme
    # standardized angles, and a zero current density must not auto-accept
    dens0 = np.maximum(bernstein_pdf_matrix(tstar0, prior.m) @ state.weights, 1e-300)
    dens1 = np.maximum(bernstein_pdf_matrix(tstar1, prior.m) @ state.weights, 1e-300)
    d_logprior = np.log(dens1) - np.log(dens0)
    log_ratio = np.where(inside, d_loglik + d_logprior, -np.inf)

    accept = np.log(rng.uniform(size=n)) < log_ratio
    t_new = np.where(accept, prop, t)
    return replace(state, angles=t_new), float(accept.mean())


def update_weights(state: ChainState, prior: PriorSpec, rng: np.random.Generator) -> ChainState:
    """Gibbs step: component indicators, then a Dirichlet draw for the weights."""
    m = prior.m
    t = state.angles
    if len(t) == 0:
        w = rng.dirichlet(np.full(m + 1, prior.alpha))
        return replace(state, weights=w)
    r_sup = angle_support(state.theta.e)
    tstar = (t + r_sup) / (2.0 * r_sup)
    probs = bernstein_pdf_matrix(tstar, m) * state.weights[None, :] + 1e-300
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(len(t)) * cdf[:, -1]
    s_idx = np.sum(cdf < u[:, None], axis=1)
    counts = np.bincount(s_idx, minlength=m + 1)
    w = rng.dirichlet(prior.alpha + counts)
    return replace(state, weights=w)


# -- eccentricity -----------------------------------------------------------


def eccentricity_upper_bound(angles: np.ndarray) -> float:
    """Largest admissible e given the current angles: -1/cos(max|t|) past pi/2."""
    max_abs = float(np.max(np.abs(angles))) if len(angles) else 0.0
    if max_abs > 0.5 * math.pi:
        return -1.0 / math.cos(max_abs)
    return math.inf


def _make_g(state: ChainState, data: NoisyDataset, prior: PriorSpec):
    """Conditional log-target in e (up to the e-prior), caching all fixed parts."""
    theta = state.theta
    t = state.angles
    pts = data.points
    n = data.n
    sigma2 = state.sigma2
    weights = state.weights
    m = prior.m
    cos_t = np.cos(t)
    cos_tp = np.cos(t + theta.phi)
    sin_tp = np.sin(t + theta.phi)
    x, y = pts[:, 0], pts[:, 1]
    # Bernstein term is constant in e on [0, 1]: the standardization uses R = pi
    tstar_le1 = (t + math.pi) / (2.0 * math.pi)
    mix_le1 = float(
        np.sum(np.log(np.maximum(bernstein_pdf_matrix(tstar_le1, m) @ weights, 1e-300)))
    )
    max_abs = float(np.max(np.abs(t)))

    def g(e_val: float) -> float:
        if e_val < 0:
            return -math.inf
        if e_val > 1.0:
            r_sup = math.acos(-1.0 / e_val)
            if max_abs >= r_sup:
                return -math.inf
        denom = 1.0 + e_val * cos_t
        r = theta.l / denom
        rss = float(np.sum((x - theta.h - r * cos_tp) ** 2 + (y - theta.k - r * sin_tp) ** 2))
        ll = -n * (LOG_2PI + math.log(sigma2)) - rss / (2.0 * sigma2)
        if e_val <= 1.0:
            lp = mix_le1 - n * math.log(2.0 * math.pi)
        else:
            tstar = (t + r_sup) / (2.0 * r_sup)
            dens = np.maximum(bernstein_pdf_matrix(tstar, m) @ weights, 1e-300)
            lp = float(np.sum(np.log(dens))) - n * math.log(2.0 * r_sup)
        return ll + lp

    return g


def _find_mode(f, lo: float, hi: float, n_seed: int = 24):
    """Grid-seeded mode search with a few safeguarded Newton steps.

    Returns (mode, curvature of -f at the mode, f(mode)).  Falls back to a
    golden-section refinement of the seeded bracket when Newton misbehaves.
    """
    seeds = np.linspace(lo, hi, n_seed)
    vals = np.array([f(e) for e in seeds])
    if not np.any(np.isfinite(vals)):
        return None
    best = int(np.nanargmax(np.where(np.isfinite(vals), vals, -np.inf)))
    a = seeds[max(best - 1, 0)]
    b = seeds[min(best + 1, n_seed - 1)]
    x = seeds[best]
    h_step = max(1e-6, 1e-5 * (hi - lo))
    converged = False
    for _ in range(12):
        f0, fp, fm = f(x), f(min(x + h_step, hi)), f(max(x - h_step, lo))
        d1 = (fp - fm) / (2.0 * h_step)
        d2 = (fp - 2.0 * f0 + fm) / (h_step * h_step)
        if not (math.isfinite(d1) and math.isfinite(d2)) or d2 >= 0:
            break
        step = -d1 / d2
        x_new = min(max(x + step, a), b)
        if abs(x_new - x) < 1e-9:
            x = x_new
            converged = True
            break
        x = x_new
    if not converged:
        x = golden_section_minimize(lambda e: -f(e), a, b, tol=1e-8)
    f0 = f(x)
    fp = f(min(x + h_step, hi))
    fm = f(max(x - h_step, lo))
    curv = -(fp - 2.0 * f0 + fm) / (h_step * h_step)
    if not math.isfinite(curv):
        curv = CURVATURE_FLOOR
    return x, max(curv, CURVATURE_FLOOR), f0


def update_eccentricity(
    state: ChainState,
    data: NoisyDataset,
    prior: PriorSpec,
    rng: np.random.Generator,
    fix_type: ConicType | None = None,
) -> tuple[ChainState, bool]:
    """Mixed-measure independence MH on e.

    Branch probabilities come from the conditional masses at e = 0 and e = 1
    and a Laplace approximation of the continuous component (Gaussian around
    the conditional mode, truncated to the admissible interval); the exact MH
    ratio corrects the approximation so the true conditional is invariant.
    With ``fix_type`` the move is restricted to that family's branch (and is
    a no-op for circles and parabolas, whose e is a point).
    """
    if fix_type in (ConicType.CIRCLE, ConicType.PARABOLA):
        return state, False
    theta = state.theta
    e_cur = theta.e
    e_max = eccentricity_upper_bound(state.angles)
    w_circle, w_parabola, w_cont = prior.type_weights
    rate = 1.0 / prior.f0_mean
    g = _make_g(state, data, prior)

    if fix_type is ConicType.ELLIPSE:
        cont_lo, cont_hi = 0.0, 1.0
        use_points = False
    elif fix_type is ConicType.HYPERBOLA:
        cont_lo, cont_hi = 1.0, e_max
        use_points = False
    else:
        cont_lo, cont_hi = 0.0, e_max
        use_points = True

    def log_target(e_val: float) -> float:
        if e_val == 0.0:
            return math.log(w_circle) + g(0.0) if use_points else -math.inf
        if e_val == 1.0:
            return math.log(w_parabola) + g(1.0) if use_points else -math.inf
        if not cont_lo < e_val < cont_hi:
            return -math.inf
        return math.log(w_cont) + math.log(rate) - rate * e_val + g(e_val)

    search_hi = min(cont_hi, ECC_SEARCH_CAP)
    found = _find_mode(
        lambda e_val: log_target(e_val),
        cont_lo + 1e-7 * max(1.0, search_hi - cont_lo),
        search_hi - 1e-9 * max(1.0, search_hi - cont_lo),
    )
    branches: list[tuple[str, float]] = []
    if use_points:
        branches.append(("circle", log_target(0.0)))
        branches.append(("parabola", log_target(1.0)))
    if found is not None:
        mode, curv, f_mode = found
        prop_sd = 1.0 / math.sqrt(curv)
        a_n = ndtr((cont_lo - mode) / prop_sd)
        b_n = 1.0 if math.isinf(cont_hi) else ndtr((cont_hi - mode) / prop_sd)
        log_integral = f_mode + 0.5 * (LOG_2PI - math.log(curv)) + math.log(max(b_n - a_n, 1e-300))
        branches.append(("continuous", log_integral))

    finite = [(name, lp) for name, lp in branches if math.isfinite(lp)]
    if not finite:
        return state, False
    names = [name for name, _ in finite]
    lps = np.array([lp for _, lp in finite])
    probs = np.exp(lps - lps.max())
    probs /= probs.sum()
    q_log = {name: math.log(p) if p > 0 else -math.inf for name, p in zip(names, probs)}

    pick = names[int(rng.choice(len(names), p=probs))]
    if pick == "circle":
        e_prop = 0.0
        log_q_prop = q_log["circle"]
    elif pick == "parabola":
        e_prop = 1.0
        log_q_prop = q_log["parabola"]
    else:
        e_prop = _truncnorm_sample(rng, mode, prop_sd, cont_lo, cont_hi)
        log_q_prop = q_log["continuous"] + _truncnorm_logpdf(e_prop, mode, prop_sd, cont_lo, cont_hi)

    def log_q(e_val: float) -> float:
        if e_val == 0.0:
            return q_log.get("circle", -math.inf)
        if e_val == 1.0:
            return q_log.get("parabola", -math.inf)
        if "continuous" not in q_log:
            return -math.inf
        return q_log["continuous"] + _truncnorm_logpdf(e_val, mode, prop_sd, cont_lo, cont_hi)

    log_alpha = (log_target(e_prop) - log_q_prop) - (log_target(e_cur) - log_q(e_cur))
    if math.log(rng.uniform()) < log_alpha:
        theta_new = ConicFD(theta.h, theta.k, theta.phi, theta.l, e_prop)
        return replace(state, theta=theta_new), True
    return state, False


# ---------------------------------------------------------------------------
# the chain driver
# ---------------------------------------------------------------------------


def _initial_scales(state: ChainState, data: NoisyDataset) -> ProposalScales:
    """Inverse-Fisher-style starting scales; adaptation refines them."""
    theta = state.theta
    t = state.angles
    denom = 1.0 + theta.e * np.cos(t)
    r = theta.l / denom
    sigma = math.sqrt(state.sigma2)
    fisher_phi = float(np.sum(r * r)) / state.sigma2
    phi_scale = 2.4 / math.sqrt(max(fisher_phi, 1e-12))
    drdt = theta.l * theta.e * np.sin(t) / denom**2
    speed = np.sqrt(r * r + drdt * drdt)
    angle_scale = 2.4 * sigma / max(float(np.median(speed)), 1e-12)
    return ProposalScales(
        phi=float(np.clip(phi_scale, 1e-5, 1.0)),
        angle=float(np.clip(angle_scale, 1e-5, 1.0)),
    )


def _adapt(scale: float, rate: float, batch: int, hi: float = 3.0) -> float:
    step = min(0.5, 2.0 / math.sqrt(batch))
    return float(np.clip(scale * math.exp(step * (rate - ACCEPT_TARGET)), 1e-7, hi))


def initial_state(
    data: NoisyDataset, prior: PriorSpec, init: InitEstimate
) -> ChainState:
    sigma2 = max(init.sigma2, 1e-12)
    weights = np.full(prior.m + 1, 1.0 / (prior.m + 1))
    state = ChainState(
        theta=init.conic,
        sigma2=sigma2,
        angles=np.asarray(init.angles, dtype=float).copy(),
        weights=weights,
        scales=ProposalScales(0.1, 0.1),
        iteration=0,
    )
    return replace(state, scales=_initial_scales(state, data))


def run_chain(
    data: NoisyDataset,
    prior: PriorSpec | None = None,
    config: ChainConfig | None = None,
    init: InitEstimate | None = None,
    fix_type: ConicType | None = None,
) -> ChainResult:
    """Run one chain and return the post-burn-in, thinned states.

    Deterministic given the seed.  Acceptance rates are recorded over the
    post-burn-in phase, after the proposal scales have been frozen.
    """
    config = config or ChainConfig()
    if init is None:
        allowed = (fix_type,) if fix_type is not None else None
        init = initialize(data.points, allowed_types=allowed)
    if fix_type is not None and init.conic.conic_type is not fix_type:
        init = _coerce_init(data, init, fix_type)
    prior = prior or PriorSpec.from_data(data.points, init)
    rng = np.random.default_rng(config.seed)
    state = initial_state(data, prior, init)

    window = {"phi": [0, 0], "angle_rate": [], "ecc": [0, 0]}
    post = {"phi": [0, 0], "angle_rates": [], "ecc": [0, 0]}
    states: list[ChainState] = []
    logliks: list[float] = []
    batch = 0

    for it in range(1, config.n_iterations + 1):
        adapting = it <= config.burn_in
        state, angle_rate = update_angles(state, data, prior, rng)
        state = update_location_latus(state, data, prior, rng)
        state = update_sigma2(state, data, prior, rng)
        state, phi_acc = update_phi(state, data, rng)
        state, ecc_acc = update_eccentricity(state, data, prior, rng, fix_type=fix_type)
        state = update_weights(state, prior, rng)
        state = replace(state, iteration=it)

        if adapting:
            window["phi"][0] += phi_acc
            window["phi"][1] += 1
            window["angle_rate"].append(angle_rate)
            if it % config.adapt_window == 0:
                batch += 1
                phi_rate = window["phi"][0] / max(window["phi"][1], 1)
                ang_rate = float(np.mean(window["angle_rate"]))
                state = replace(
                    state,
                    scales=ProposalScales(
                        phi=_adapt(state.scales.phi, phi_rate, batch),
                        angle=_adapt(state.scales.angle, ang_rate, batch, hi=2.0),
                    ),
                )
                window = {"phi": [0, 0], "angle_rate": [], "ecc": [0, 0]}
        else:
            post["phi"][0] += phi_acc
            post["phi"][1] += 1
            post["angle_rates"].append(angle_rate)
            post["ecc"][0] += ecc_acc
            post["ecc"][1] += 1
            if (it - config.burn_in) % config.thin == 0:
                states.append(state)
                logliks.append(log_likelihood(state, data))

    acceptance = {
        "phi": post["phi"][0] / max(post["phi"][1], 1),
        "angles": float(np.mean(post["angle_rates"])) if post["angle_rates"] else 0.0,
        "eccentricity": post["ecc"][0] / max(post["ecc"][1], 1),
    }
    return ChainResult(states, np.array(logliks), acceptance, config)


def _coerce_init(data: NoisyDataset, init: InitEstimate, fix_type: ConicType) -> InitEstimate:
    """Force the starting conic into the requested family."""
    from .classical import estimate_angles

    theta = init.conic
    e = theta.e
    if fix_type is ConicType.CIRCLE:
        e_new = 0.0
    elif fix_type is ConicType.PARABOLA:
        e_new = 1.0
    elif fix_type is ConicType.ELLIPSE:
        e_new = min(max(e, 1e-3), 1.0 - 1e-6) if e >= 1.0 else max(e, 1e-3)
    else:  # hyperbola
        e_new = max(e, 1.0 + 1e-6)
    conic = ConicFD(theta.h, theta.k, theta.phi, theta.l, e_new)
    angles, sigma2, loglik = estimate_angles(data.points, conic)
    return InitEstimate(conic, fix_type, angles, sigma2, loglik)
