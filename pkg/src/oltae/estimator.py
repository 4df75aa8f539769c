"""Double-precision closed-form pose estimation from point correspondences.

The attitude is solved first from centroid-aligned differences through a 3x3
weighted normal system; the translation follows from the centroids.  A direct
6x6 joint least-squares solve is kept alongside as an independent check.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (DegenerateGeometry, SingularMatrix, TooFewCorrespondences,
                     ValidationError)
from .rotations import I3, cayley, cross, mat3_inverse, skew, vec3

MAX_CONDITION = 1e12

CLOSED_FORM = "closed_form_3x3"
JOINT = "joint_6x6"
FIXED_POINT = "fixed_point"
METHODS = (CLOSED_FORM, JOINT, FIXED_POINT)


@dataclass(frozen=True)
class Correspondence:
    a: np.ndarray
    b: np.ndarray
    sigma: float

    def __post_init__(self):
        try:
            a, b = vec3(self.a), vec3(self.b)
        except ValueError as exc:
            raise ValidationError(str(exc)) from None
        sigma = float(self.sigma)
        if not np.isfinite(sigma) or sigma <= 0.0:
            raise ValidationError(f"sigma must be finite and > 0, got {self.sigma!r}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "sigma", sigma)


@dataclass(frozen=True)
class Pose:
    q: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", vec3(self.q))
        object.__setattr__(self, "t", vec3(self.t))

    @property
    def R(self):
        return cayley(self.q)

    def apply(self, p):
        return self.R @ np.asarray(p, dtype=float) + self.t

    @classmethod
    def identity(cls):
        return cls(np.zeros(3), np.zeros(3))


@dataclass(frozen=True)
class DeltaSet:
    """Centroid-aligned sums ``s = db + da`` and differences ``y = db - da``."""

    s: np.ndarray
    y: np.ndarray
    weights: np.ndarray
    a_bar: np.ndarray
    b_bar: np.ndarray

    @property
    def n(self):
        return len(self.weights)

    @property
    def sigmas(self):
        return 1.0 / np.sqrt(self.weights)


@dataclass
class EstimateResult:
    q_hat: np.ndarray
    t_hat: np.ndarray
    R_hat: np.ndarray
    info_matrix: np.ndarray
    condition_number: float
    method_tag: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def state(self):
        """Six-state vector ``[q1, q2, q3, t1, t2, t3]``."""
        return np.concatenate([self.q_hat, self.t_hat])


def _ordered_sum(rows):
    total = np.zeros(3)
    for row in rows:
        total = total + row
    return total


def build_deltas(correspondences):
    n = len(correspondences)
    if n < 3:
        raise TooFewCorrespondences(n)
    a = np.array([c.a for c in correspondences])
    b = np.array([c.b for c in correspondences])
    a_bar = _ordered_sum(a) / n
    b_bar = _ordered_sum(b) / n
    da = a - a_bar
    db = b - b_bar
    weights = np.array([1.0 / (c.sigma * c.sigma) for c in correspondences])
    return DeltaSet(s=db + da, y=db - da, weights=weights, a_bar=a_bar, b_bar=b_bar)


def normal_equations(deltas):
    """Accumulate ``N = sum w (s.s I - s s^T)`` and ``r = sum w (s x y)``.

    Terms are added strictly in index order.
    """
    normal = np.zeros((3, 3))
    rhs = np.zeros(3)
    for s, y, w in zip(deltas.s, deltas.y, deltas.weights):
        normal = normal + w * ((s @ s) * I3 - np.outer(s, s))
        rhs = rhs + w * cross(s, y)
    return normal, rhs


def _condition(m):
    with np.errstate(all="ignore"):
        cond = float(np.linalg.cond(m))
    return cond if np.isfinite(cond) else np.inf


def solve_attitude(deltas):
    """Weighted least-squares Gibbs vector; returns ``(q_hat, info_matrix, cond)``."""
    if deltas.n < 3:
        raise TooFewCorrespondences(deltas.n)
    normal, rhs = normal_equations(deltas)
    cond = _condition(normal)
    if cond > MAX_CONDITION:
        raise DegenerateGeometry(
            f"normal matrix condition number {cond:.3g} exceeds {MAX_CONDITION:.0e} "
            "(collinear or coincident points?)", cond)
    try:
        inv = mat3_inverse(normal)
    except SingularMatrix:
        raise DegenerateGeometry("normal matrix is singular", cond) from None
    return -(inv @ rhs), normal, cond


def recover_translation(q_hat, deltas):
    return deltas.b_bar - cayley(q_hat) @ deltas.a_bar


def solve_joint_6x6(correspondences):
    """Joint least squares over ``[q; t*]`` from ``eps = [nu x] q + t*``.

    Returns ``(q_hat, t_hat)`` with ``t = (I + Q)^-1 t*``.
    """
    n = len(correspondences)
    if n < 3:
        raise TooFewCorrespondences(n)
    lhs = np.zeros((6, 6))
    rhs = np.zeros(6)
    h = np.zeros((3, 6))
    h[:, 3:] = I3
    for c in correspondences:
        nu = c.b + c.a
        eps = c.b - c.a
        w = 1.0 / (c.sigma * c.sigma)
        h[:, :3] = skew(nu)
        lhs += w * (h.T @ h)
        rhs += w * (h.T @ eps)
    cond = _condition(lhs)
    if cond > MAX_CONDITION:
        raise DegenerateGeometry(f"6x6 normal matrix condition number {cond:.3g}", cond)
    x = np.linalg.solve(lhs, rhs)
    q = x[:3]
    t = mat3_inverse(I3 + skew(q)) @ x[3:]
    return q, t


def estimate_pose(correspondences, method=CLOSED_FORM, scales=None):
    """Full 6-DOF estimate along the chosen solver path.

    ``scales`` (a :class:`oltae.fixedpoint.ScaleConfig`) only applies to the
    fixed-point path; ``None`` selects automatic power-of-two scaling.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    deltas = build_deltas(correspondences)
    q_hat, normal, cond = solve_attitude(deltas)
    diagnostics = {"n": deltas.n}
    if method == JOINT:
        q_hat, t_hat = solve_joint_6x6(correspondences)
    elif method == FIXED_POINT:
        from .fixedpoint import auto_scale, fx_estimate_attitude

        if scales is None:
            scales = auto_scale(deltas)
        q_hat, status = fx_estimate_attitude(deltas, scales)
        t_hat = recover_translation(q_hat, deltas)
        diagnostics.update(
            saturation_count=status.saturation_count,
            max_abs_intermediate=status.max_abs_intermediate,
            q_prime_raw=status.q_prime_raw,
            alpha=scales.alpha,
            beta=scales.beta,
        )
    else:
        t_hat = recover_translation(q_hat, deltas)
    return EstimateResult(
        q_hat=q_hat,
        t_hat=t_hat,
        R_hat=cayley(q_hat),
        info_matrix=normal,
        condition_number=cond,
        method_tag=method,
        diagnostics=diagnostics,
    )


def attitude_covariance(info_matrix):
    """Attitude covariance ``P_q = N^-1`` (raises SingularMatrix)."""
    return mat3_inverse(info_matrix)


def three_sigma(cov):
    return 3.0 * np.sqrt(np.clip(np.diag(cov), 0.0, None))


def translation_covariance(p_q, q_hat, a_bar, n, sigma_bar, step=1e-6):
    """First-order covariance of ``t = b_bar - R(q) a_bar``.

    The Jacobian with respect to ``q`` is taken by central differences; the
    centroid term counts noise on both point sets, ``(2 sigma^2 / n) I``.
    """
    if n < 3:
        raise TooFewCorrespondences(n)
    q_hat = vec3(q_hat)
    a_bar = vec3(a_bar)
    jac = np.empty((3, 3))
    for k in range(3):
        dq = np.zeros(3)
        dq[k] = step
        jac[:, k] = -(cayley(q_hat + dq) - cayley(q_hat - dq)) @ a_bar / (2.0 * step)
    return jac @ np.asarray(p_q) @ jac.T + (2.0 * sigma_bar ** 2 / n) * I3
