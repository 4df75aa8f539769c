"""Q15.16 fixed-point arithmetic and the fixed-point attitude solve.

Arithmetic contract (the hardware emulator in :mod:`oltae.hwsim` must match it
bit for bit):

* A ``Fixed32`` raw is a signed 32-bit integer, value ``raw / 2**16``.
* Products of two raws are exact.  A multiply-accumulate chain sums exact
  products in a signed 64-bit accumulator (clamped to the int64 range after
  every add) and rounds once at the chain output: shift right by 16 with
  round-to-nearest, ties away from zero, then saturate to 32 bits.
* Division is ``(num << 16) / den`` truncated toward zero, then saturated.
* Every saturation event is counted.

Solve sequence for ``q' = -N'^-1 r'`` on scaled inputs ``s' = alpha s``,
``y' = beta y`` and normalised weights ``w_j / sum(w)``:

1. per term ``m_j[i][k] = rnd(delta_ik * s'.s' - s'_i s'_k)``
2. ``N[i][k] = rnd(sum_j w_j * m_j[i][k])``
3. per term ``c_j = rnd(s' x y')`` component-wise
4. ``r[i] = rnd(-sum_j w_j * c_j[i])``
5. cofactors ``C[i][k] = rnd(2x2 minor with sign)``, ``det = rnd(sum_k N[0][k] C[0][k])``,
   ``inv[i][k] = div(C[k][i], det)``
6. ``q'[i] = rnd(sum_k inv[i][k] * r[k])``

The final rescale ``q = (alpha / beta) q'`` is done in double precision.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, DivideByZero, InvalidConfig

FRAC_BITS = 16
ONE = 1 << FRAC_BITS
RAW_MAX = (1 << 31) - 1
RAW_MIN = -(1 << 31)
ACC_MAX = (1 << 63) - 1
ACC_MIN = -(1 << 63)
LSB = 1.0 / ONE

# Largest scaled |component| admitted by auto_pow2 scaling.  With weights
# normalised to sum 1, normal-matrix entries stay <= 3 * 2**2 and its
# determinant well inside the 2**15 integer range.
S_LIMIT = 2.0
Y_LIMIT = 2.0


class IllConditionedWarning(RuntimeWarning):
    pass


@dataclass
class FxStatus:
    saturation_count: int = 0
    max_abs_intermediate: float = 0.0
    q_prime_raw: tuple = None

    @property
    def trusted(self):
        return self.saturation_count == 0

    def observe(self, raw):
        v = abs(raw) / ONE
        if v > self.max_abs_intermediate:
            self.max_abs_intermediate = v


@dataclass(frozen=True)
class Fixed32:
    raw: int
    saturated: bool = False

    @property
    def value(self):
        return self.raw / ONE

    def __float__(self):
        return self.value


@dataclass(frozen=True)
class ScaleConfig:
    alpha: float
    beta: float
    mode: str = "auto_pow2"

    def __post_init__(self):
        if self.mode not in ("manual", "auto_pow2"):
            raise InvalidConfig(f"scale mode must be 'manual' or 'auto_pow2', got {self.mode!r}")
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidConfig(f"{name} must be finite and > 0, got {v!r}")
            if self.mode == "auto_pow2" and math.frexp(v)[0] != 0.5:
                raise InvalidConfig(f"{name}={v!r} is not a power of two")

    def as_dict(self):
        return {"alpha": self.alpha, "beta": self.beta, "mode": self.mode}

    @classmethod
    def from_dict(cls, d):
        return cls(alpha=float(d["alpha"]), beta=float(d["beta"]), mode=str(d.get("mode", "manual")))


# -- raw primitives ----------------------------------------------------------

def saturate(x, status=None):
    if x > RAW_MAX:
        x = RAW_MAX
    elif x < RAW_MIN:
        x = RAW_MIN
    else:
        if status is not None:
            status.observe(x)
        return x
    if status is not None:
        status.saturation_count += 1
        status.observe(x)
    return x


def clamp_acc(x, status=None):
    if ACC_MIN <= x <= ACC_MAX:
        return x
    if status is not None:
        status.saturation_count += 1
    return ACC_MAX if x > 0 else ACC_MIN


def round_shift(x, shift=FRAC_BITS):
    """Shift right with round-to-nearest, ties away from zero."""
    half = 1 << (shift - 1)
    if x >= 0:
        return (x + half) >> shift
    return -((-x + half) >> shift)


def mac_chain(pairs, status=None):
    """Exact 64-bit sum of raw products, one rounding, then saturation."""
    acc = 0
    for a, b in pairs:
        acc = clamp_acc(acc + a * b, status)
    return saturate(round_shift(acc), status)


def raw_from_float(x, status=None):
    if not math.isfinite(x):
        raise ValueError(f"cannot quantise non-finite value {x!r}")
    v = x * ONE
    r = math.floor(abs(v) + 0.5)
    return saturate(r if v >= 0 else -r, status)


def raw_div(num, den, status=None):
    if den == 0:
        raise DivideByZero("fixed-point division by zero")
    q = abs(num << FRAC_BITS) // abs(den)
    if (num < 0) != (den < 0):
        q = -q
    return saturate(q, status)


# -- Fixed32 level API -------------------------------------------------------

def to_fixed(x, status=None):
    before = status.saturation_count if status is not None else 0
    local = FxStatus() if status is None else status
    raw = raw_from_float(float(x), local)
    return Fixed32(raw, saturated=local.saturation_count > before)


def from_fixed(f):
    return f.raw / ONE


def fx_mul(a, b, status=None):
    local = FxStatus() if status is None else status
    before = local.saturation_count
    raw = mac_chain([(a.raw, b.raw)], local)
    return Fixed32(raw, saturated=local.saturation_count > before)


def fx_div(num, den, status=None):
    local = FxStatus() if status is None else status
    before = local.saturation_count
    raw = raw_div(num.raw, den.raw, local)
    return Fixed32(raw, saturated=local.saturation_count > before)


def quantize(values, status=None):
    """Nested lists of raws from an array of floats."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        return raw_from_float(float(arr), status)
    return [quantize(v, status) for v in arr]


def dequantize(raws):
    return np.asarray(raws, dtype=float) / ONE


# -- reference 3x3 operations on raws ----------------------------------------

def fx_matmul3(a, b, status=None):
    return [[mac_chain([(a[i][k], b[k][j]) for k in range(3)], status) for j in range(3)]
            for i in range(3)]


def fx_matvec3(a, v, status=None):
    return [mac_chain([(a[i][k], v[k]) for k in range(3)], status) for i in range(3)]


def fx_cramer_inverse3(a, status=None):
    """Adjugate / determinant inverse of a raw 3x3 matrix (raws in, raws out)."""
    cof = [[0] * 3 for _ in range(3)]
    for i in range(3):
        i1, i2 = (i + 1) % 3, (i + 2) % 3
        for k in range(3):
            k1, k2 = (k + 1) % 3, (k + 2) % 3
            cof[i][k] = mac_chain([(a[i1][k1], a[i2][k2]), (-a[i1][k2], a[i2][k1])], status)
    det = mac_chain([(a[0][k], cof[0][k]) for k in range(3)], status)
    if det == 0:
        raise DivideByZero("fixed-point determinant is zero")
    scale = max(abs(x) for row in a for x in row) / ONE
    if abs(det) / ONE < 2.0 ** -8 * scale ** 3:
        warnings.warn(f"ill-conditioned fixed-point matrix (det={det / ONE:.3g})",
                      IllConditionedWarning, stacklevel=2)
    return [[raw_div(cof[k][i], det, status) for k in range(3)] for i in range(3)]


# -- scaling and the attitude solve ------------------------------------------

def _pow2_at_most(limit, m):
    e = math.floor(math.log2(limit / m))
    while 2.0 ** (e + 1) * m <= limit:
        e += 1
    while 2.0 ** e * m > limit:
        e -= 1
    return 2.0 ** e


def auto_scale(deltas, s_limit=S_LIMIT, y_limit=Y_LIMIT):
    """Power-of-two ``alpha``/``beta`` so that scaled components fit the limits.

    ``alpha`` is the largest power of two with ``alpha * max|s|_inf <= s_limit``
    and likewise ``beta`` for ``y``.  All-zero ``y`` (a perfect identity
    transform) gets ``beta = 1``.
    """
    if deltas.n == 0:
        raise DegenerateInput("no correspondences to scale")
    s_max = float(np.max(np.abs(deltas.s)))
    y_max = float(np.max(np.abs(deltas.y)))
    if s_max == 0.0:
        raise DegenerateInput("all centroid-aligned points coincide")
    alpha = _pow2_at_most(s_limit, s_max)
    beta = _pow2_at_most(y_limit, y_max) if y_max > 0.0 else 1.0
    return ScaleConfig(alpha=alpha, beta=beta, mode="auto_pow2")


def normalized_weights(weights):
    w = np.asarray(weights, dtype=float)
    return w / w.sum()


def prepare_inputs(deltas, scales, status=None):
    """Scale and quantise the per-correspondence stream ``(s', y', w)`` as raws."""
    s = quantize(scales.alpha * deltas.s, status)
    y = quantize(scales.beta * deltas.y, status)
    w = quantize(normalized_weights(deltas.weights), status)
    return s, y, w


def fx_normal_equations(s, y, w, status=None):
    """Raw ``N'`` and ``r'`` from raw scaled inputs (steps 1-4 of the contract)."""
    n_acc = [[0] * 3 for _ in range(3)]
    r_acc = [0, 0, 0]
    for sj, yj, wj in zip(s, y, w):
        for i in range(3):
            for k in range(3):
                pairs = [(-sj[i], sj[k])]
                if i == k:
                    pairs = [(sj[0], sj[0]), (sj[1], sj[1]), (sj[2], sj[2])] + pairs
                m = mac_chain(pairs, status)
                n_acc[i][k] = clamp_acc(n_acc[i][k] + wj * m, status)
        for i in range(3):
            a, b = (i + 1) % 3, (i + 2) % 3
            c = mac_chain([(sj[a], yj[b]), (-sj[b], yj[a])], status)
            r_acc[i] = clamp_acc(r_acc[i] + wj * c, status)
    normal = [[saturate(round_shift(n_acc[i][k]), status) for k in range(3)] for i in range(3)]
    rhs = [saturate(round_shift(-r_acc[i]), status) for i in range(3)]
    return normal, rhs


def fx_solve_raw(s, y, w, status=None):
    """Pre-rescale raw ``q'`` for raw inputs; raises DivideByZero on det = 0."""
    normal, rhs = fx_normal_equations(s, y, w, status)
    inv = fx_cramer_inverse3(normal, status)
    return tuple(fx_matvec3(inv, rhs, status))


def fx_estimate_attitude(deltas, scales):
    """Attitude estimate through the Q15.16 datapath.

    Returns ``(q_hat, status)``; ``status.q_prime_raw`` holds the raw
    pre-rescale result.
    """
    status = FxStatus()
    s, y, w = prepare_inputs(deltas, scales, status)
    q_raw = fx_solve_raw(s, y, w, status)
    status.q_prime_raw = q_raw
    q_hat = (scales.alpha / scales.beta) * dequantize(q_raw)
    return q_hat, status
