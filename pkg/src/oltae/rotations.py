"""3-vector / 3x3 matrix helpers and Gibbs-vector (CRP) attitude kinematics.

Vectors are float64 arrays of shape (3,), matrices float64 arrays of shape
(3, 3) in row-major order.  Rotations follow ``b = R @ a + t`` with
``R = cayley(q)``.
"""

import numpy as np

from .errors import NotARotation, SingularMatrix, SingularRotation

I3 = np.eye(3)


def vec3(v):
    out = np.asarray(v, dtype=float).reshape(3)
    if not np.all(np.isfinite(out)):
        raise ValueError(f"non-finite vector {out!r}")
    return out


def skew(v):
    """Cross-product matrix ``[v x]`` so that ``skew(v) @ w == cross(v, w)``."""
    x, y, z = vec3(v)
    return np.array([[0.0, -z, y],
                     [z, 0.0, -x],
                     [-y, x, 0.0]])


def vee(m):
    """Inverse of :func:`skew` on the antisymmetric part of ``m``."""
    return 0.5 * np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])


def cross(u, v):
    return np.array([u[1] * v[2] - u[2] * v[1],
                     u[2] * v[0] - u[0] * v[2],
                     u[0] * v[1] - u[1] * v[0]])


def cayley(q):
    """Rotation matrix ``(I + Q)^-1 (I - Q)`` for the Gibbs vector ``q``.

    Evaluated through the expanded form
    ``((1 - q.q) I + 2 q q^T - 2 [q x]) / (1 + q.q)``, which is algebraically
    identical and keeps orthogonality at machine precision for large ``|q|``.
    """
    q = vec3(q)
    qq = q @ q
    return ((1.0 - qq) * I3 + 2.0 * np.outer(q, q) - 2.0 * skew(q)) / (1.0 + qq)


def det3(a):
    return (a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
            - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
            + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]))


def cofactors3(a):
    c = np.empty((3, 3))
    for i in range(3):
        i1, i2 = (i + 1) % 3, (i + 2) % 3
        for k in range(3):
            k1, k2 = (k + 1) % 3, (k + 2) % 3
            c[i, k] = a[i1, k1] * a[i2, k2] - a[i1, k2] * a[i2, k1]
    return c


def mat3_inverse(a, rtol=1e-12):
    """Adjugate inverse of a 3x3 matrix.

    ``rtol`` is scale relative: the matrix is rejected as singular when
    ``|det| <= rtol * ||a||_F**3``.
    """
    a = np.asarray(a, dtype=float)
    c = cofactors3(a)
    det = a[0] @ c[0]
    scale = np.linalg.norm(a) ** 3
    if not np.isfinite(det) or abs(det) <= rtol * scale:
        raise SingularMatrix(det)
    return c.T / det


def inverse_cayley(r, tol=1e-9):
    """Gibbs vector of a proper rotation matrix, ``Q = (I - R)(I + R)^-1``."""
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        raise NotARotation("expected a finite 3x3 matrix")
    if np.max(np.abs(r.T @ r - I3)) > tol or abs(det3(r) - 1.0) > tol:
        raise NotARotation("matrix is not proper orthogonal")
    ipr = I3 + r
    d = det3(ipr)
    if d < 1e-9:
        raise SingularRotation(f"det(I + R) = {d:.3g}; rotation angle is 180 degrees")
    return vee((I3 - r) @ (cofactors3(ipr).T / d))


def rotation_angle(q):
    """Rotation angle in radians encoded by a Gibbs vector."""
    return 2.0 * np.arctan(np.linalg.norm(q))
