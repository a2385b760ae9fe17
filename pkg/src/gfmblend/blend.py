"""Four-way blended controller and the constrained weight selection.

The blend mixes the droop, VSM, PSL and VOC outputs with weights
``(alpha, beta, gamma, nu)`` that sum to one, keep droop dominant
(``alpha >= 0.8``) and cap VSM and VOC (``beta <= 0.05``, ``nu <= 0.02``).

Weights are chosen by minimising the mean squared gap between a target
angular frequency and the weighted sum of the four controllers' frequency
traces.  That objective is a convex quadratic over a polytope, solved here
by projected gradient descent with an exact line search; an exhaustive grid
scan (:func:`brute_force_weights`) serves as an independent check.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintViolationError, InfeasibleError, InvalidInputError
from .sm_model import OMEGA_BASE

ALPHA_MIN = 0.8
BETA_MAX = 0.05
NU_MAX = 0.02
SUM_TOL = 1e-9

_LO = np.array([ALPHA_MIN, 0.0, 0.0, 0.0])
_HI = np.array([np.inf, BETA_MAX, np.inf, NU_MAX])

PUBLISHED_COEFFICIENTS = (0.974, 0.009, 0.012, 0.006)


@dataclass(frozen=True)
class BlendWeights:
    alpha: float
    beta: float
    gamma: float
    nu: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_tuple()):
            raise InvalidInputError("blend weights must be finite")

    def as_tuple(self):
        return (self.alpha, self.beta, self.gamma, self.nu)

    def as_array(self):
        return np.array(self.as_tuple(), dtype=float)

    @property
    def total(self):
        return math.fsum(self.as_tuple())

    @classmethod
    def from_array(cls, w):
        return cls(*(float(v) for v in w))


DROOP_ONLY = BlendWeights(1.0, 0.0, 0.0, 0.0)


def published_weights(renormalize=False):
    """The published hand-picked coefficients; they sum to 1.001 as printed."""
    w = np.array(PUBLISHED_COEFFICIENTS)
    if renormalize:
        w = w / w.sum()
    return BlendWeights.from_array(w)


@dataclass(frozen=True)
class Violation:
    name: str
    bound: float
    value: float
    margin: float  # how far outside the bound, always positive

    def __str__(self):
        return f"{self.name}={self.value:.12g} violates bound {self.bound:g} by {self.margin:.3g}"


def check_feasible(w):
    """Return ``(feasible, violations)`` for the blend constraints."""
    out = []
    total = w.total
    if abs(total - 1.0) > SUM_TOL:
        out.append(Violation("sum", 1.0, total, abs(total - 1.0)))
    if w.alpha < ALPHA_MIN:
        out.append(Violation("alpha", ALPHA_MIN, w.alpha, ALPHA_MIN - w.alpha))
    for name, hi in (("beta", BETA_MAX), ("nu", NU_MAX)):
        v = getattr(w, name)
        if v < 0:
            out.append(Violation(name, 0.0, v, -v))
        elif v > hi:
            out.append(Violation(name, hi, v, v - hi))
    if w.gamma < 0:
        out.append(Violation("gamma", 0.0, w.gamma, -w.gamma))
    return not out, out


def _require_feasible(w):
    ok, violations = check_feasible(w)
    if not ok:
        raise ConstraintViolationError("; ".join(str(v) for v in violations))


def blend_theta(w, theta_mp, theta_vsm, theta_psl, theta_voc):
    _require_feasible(w)
    return w.alpha * theta_mp + w.beta * theta_vsm + w.gamma * theta_psl + w.nu * theta_voc


def project_to_feasible(w_raw):
    """Euclidean projection onto the feasible polytope.

    The KKT conditions give ``w_i = clip(v_i - lam, lo_i, hi_i)`` with one
    multiplier ``lam`` for the sum; the sum is piecewise linear and
    non-increasing in ``lam``, so ``lam`` is found exactly between breakpoints.
    """
    v = np.asarray(w_raw.as_tuple() if isinstance(w_raw, BlendWeights) else w_raw, dtype=float)
    if v.shape != (4,) or not np.all(np.isfinite(v)):
        raise InvalidInputError("need four finite weights")

    def total(lam):
        return np.clip(v - lam, _LO, _HI).sum()

    bps = np.concatenate([v - _LO, (v - _HI)[np.isfinite(_HI)]])
    bps = np.unique(bps)
    # sum is +inf-sloped below the smallest breakpoint (alpha, gamma unbounded above)
    lo_lam, hi_lam = bps[0] - 1.0, bps[-1]
    for b in bps:
        if total(b) <= 1.0:
            hi_lam = b
            break
        lo_lam = b
    s_lo, s_hi = total(lo_lam), total(hi_lam)
    lam = hi_lam if s_lo == s_hi else lo_lam + (s_lo - 1.0) * (hi_lam - lo_lam) / (s_lo - s_hi)
    w = np.clip(v - lam, _LO, _HI)
    # absorb rounding in a free coordinate so the sum is 1 to the last bit
    free = [i for i in (0, 2) if w[i] > _LO[i]]
    k = free[0] if free else 0
    w[k] = 1.0 - (w.sum() - w[k])
    return BlendWeights.from_array(w)


@dataclass(frozen=True)
class ObjectiveSpec:
    sample_times: np.ndarray
    omega_target: float = OMEGA_BASE

    def __post_init__(self):
        st = np.asarray(self.sample_times, dtype=float)
        object.__setattr__(self, "sample_times", st)
        if not self.omega_target > 0:
            raise InvalidInputError("omega_target must be positive")
        if st.ndim != 1 or st.size < 2:
            raise InvalidInputError("need at least two sample times")


def _traces(freq_traces, spec):
    f = np.asarray(freq_traces, dtype=float)
    if f.ndim != 2 or f.shape[0] != 4:
        raise InvalidInputError(f"expected four frequency series, got shape {f.shape}")
    if f.shape[1] != spec.sample_times.size:
        raise InvalidInputError(
            f"trace length {f.shape[1]} does not match {spec.sample_times.size} sample times"
        )
    if not np.all(np.isfinite(f)):
        raise InvalidInputError("frequency traces must be finite")
    return f


def _residual(w, f, target):
    """``target - w @ f`` written as ``-(w @ (f - target)) + target * (1 - sum w)``.

    Both forms are equal; this one avoids cancelling two numbers near
    ``target`` and is exactly zero when every trace sits on the target.
    """
    w = np.asarray(w, dtype=float)
    return target * (1.0 - math.fsum(w)) - w @ (f - target)


def objective_mse(w, freq_traces, spec):
    """Mean over samples of ``(omega_target - sum_k w_k * f_k(t))**2``."""
    f = _traces(freq_traces, spec)
    resid = _residual(w.as_array(), f, spec.omega_target)
    return float(np.mean(resid**2))


@dataclass
class IterationLog:
    entries: list = field(default_factory=list)
    start_projected: bool = False

    def append(self, value):
        self.entries.append((len(self.entries) + 1, float(value)))

    @property
    def values(self):
        return [v for _, v in self.entries]

    @property
    def final(self):
        return self.entries[-1][1]

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True)
class OptimizeConfig:
    max_iter: int = 500
    tol: float = 1e-10
    step_size: float = None  # None: 1/L from the in-plane curvature

    def __post_init__(self):
        if self.max_iter < 1 or self.tol <= 0:
            raise InvalidInputError("max_iter must be >= 1 and tol > 0")
        if self.step_size is not None and not self.step_size > 0:
            raise InvalidInputError("step_size must be positive")


def _face_minimizer(f, target, z):
    """Exact minimiser on the face of ``z`` (bound coordinates held fixed).

    Returns None when the face is a single point or the minimiser leaves
    the polytope.
    """
    at_bound = np.isclose(z, _LO, atol=1e-14) | np.isclose(z, _HI, atol=1e-14)
    free = np.flatnonzero(~at_bound)
    if free.size < 2:
        return None
    fixed = np.flatnonzero(at_bound)
    # on the sum-to-one plane the residual is -(w @ err); eliminate the last
    # free weight so the remaining least-squares problem is unconstrained
    err = f - target
    last, rest = free[-1], free[:-1]
    c = 1.0 - z[fixed].sum()
    rhs = -(z[fixed] @ err[fixed] + c * err[last])
    y = np.linalg.lstsq((err[rest] - err[last]).T, rhs, rcond=None)[0]
    cand = z.copy()
    cand[rest] = y
    cand[last] = c - y.sum()
    if np.any(cand < _LO) or np.any(cand > _HI):
        return None
    return cand


def optimize_weights(freq_traces, spec, w0, config=OptimizeConfig()):
    """Projected gradient descent with exact line search on the segment.

    Each iteration projects a Barzilai-Borwein gradient step back onto the
    polytope and minimises the quadratic exactly along the segment to that
    point.  Once the step lands on a face, the exact minimiser of that face
    is tried as well and kept only if it is lower.  The objective never
    increases.  Stops when the improvement drops below ``config.tol`` or
    after ``config.max_iter`` iterations.
    """
    f = _traces(freq_traces, spec)
    n = f.shape[1]
    target = spec.omega_target
    log = IterationLog()
    ok, _ = check_feasible(w0)
    w = w0.as_array()
    if not ok:
        w = project_to_feasible(w).as_array()
        log.start_projected = True

    # curvature inside the sum-to-one plane, computed from trace differences
    fc = f - f.mean(axis=0)
    lip = 2.0 * float(np.linalg.eigvalsh(fc @ fc.T / n)[-1])
    if lip <= 0:
        log.append(np.mean(_residual(w, f, target) ** 2))
        return BlendWeights.from_array(w), log
    step = config.step_size if config.step_size is not None else 1.0 / lip

    resid = _residual(w, f, target)
    fval = float(np.mean(resid**2))
    log.append(fval)
    prev_w = prev_g = None
    for _ in range(config.max_iter - 1):
        grad = -2.0 * (f @ resid) / n
        if prev_g is not None and config.step_size is None:
            s, y = w - prev_w, grad - prev_g
            sy = float(s @ y)
            if sy > 0:
                step = float(s @ s) / sy
        z = project_to_feasible(w - step * grad).as_array()
        d = z - w
        u = d @ f
        uu = float(u @ u)
        if uu == 0.0:
            break
        t = min(1.0, max(0.0, float(resid @ u) / uu))
        w_new = w + t * d
        if t == 1.0:
            w_new = z
        resid_new = _residual(w_new, f, target)
        f_new = float(np.mean(resid_new**2))
        face = _face_minimizer(f, target, w_new)
        if face is not None:
            resid_face = _residual(face, f, target)
            f_face = float(np.mean(resid_face**2))
            if f_face < f_new:
                w_new, resid_new, f_new = face, resid_face, f_face
        if not f_new < fval:
            break
        prev_w, prev_g = w, grad
        improvement = fval - f_new
        w, resid, fval = w_new, resid_new, f_new
        log.append(fval)
        if improvement < config.tol:
            break
    return BlendWeights.from_array(w), log


def _grid(lo, hi, step):
    n = int(math.floor((hi - lo) / step + 1e-9))
    return lo + step * np.arange(n + 1)


def brute_force_weights(freq_traces, spec, grid_step=0.005):
    """Exhaustive scan of (alpha, beta, nu) with gamma = 1 - alpha - beta - nu.

    Enumeration order is alpha, then beta, then nu, all ascending; the first
    minimiser wins ties.
    """
    if not 0 < grid_step <= 0.05:
        raise InvalidInputError("grid_step must lie in (0, 0.05]")
    f = _traces(freq_traces, spec)
    a, b, c = np.meshgrid(
        _grid(ALPHA_MIN, 1.0, grid_step),
        _grid(0.0, BETA_MAX, grid_step),
        _grid(0.0, NU_MAX, grid_step),
        indexing="ij",
    )
    a, b, c = a.ravel(), b.ravel(), c.ravel()
    g = 1.0 - a - b - c
    keep = g >= -1e-12
    if not keep.any():
        raise InfeasibleError("no feasible grid point at this resolution")
    cand = np.column_stack([a, b, np.maximum(g, 0.0), c])[keep]
    # on the plane sum(w) = 1 the residual is minus the weighted error traces
    err = f - spec.omega_target
    gram = err @ err.T / err.shape[1]
    vals = np.einsum("ij,jk,ik->i", cand, gram, cand)
    return BlendWeights.from_array(cand[int(np.argmin(vals))])
