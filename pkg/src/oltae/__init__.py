"""Closed-form point-cloud registration with a Q15.16 fixed-point datapath model."""

from .errors import (DegenerateGeometry, DivideByZero, OltaeError, ProtocolViolation,
                     SingularMatrix, SingularRotation, TooFewCorrespondences)
from .estimator import (Correspondence, EstimateResult, Pose, build_deltas, estimate_pose,
                        recover_translation, solve_attitude, solve_joint_6x6)
from .fixedpoint import ScaleConfig, auto_scale, fx_estimate_attitude
from .rotations import cayley, inverse_cayley, mat3_inverse, skew

__version__ = "0.1.0"
