"""Synthetic terrain-relative-navigation scenarios and correspondence files.

A constant-velocity descent over a seeded crater heightfield stands in for
rendered imagery: 3D correspondences are sampled directly from the terrain,
kept only when visible from both frames, and perturbed with Gaussian noise
on the second frame's points.

Correspondence file format (``oltae-corr v1``)::

    oltae-corr v1
    # comment
    frame 0
    ax ay az bx by bz sigma
    ...

Truth file format (``oltae-truth v1``): one ``frame k q1 q2 q3 t1 t2 t3``
line per frame.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidConfig, IoError, ParseError, ValidationError
from .estimator import Correspondence, Pose
from .rotations import inverse_cayley

CORR_HEADER = "oltae-corr v1"
TRUTH_HEADER = "oltae-truth v1"


@dataclass(frozen=True)
class TrajectoryConfig:
    n_frames: int = 25
    linear_velocity: tuple = (1.5, 0.0, 2.0)
    angular_velocity_axis: tuple = (0.0, 0.0, 1.0)
    angular_rate: float = 0.02
    frame_dt: float = 1.0
    initial_pose: Pose = field(default_factory=Pose.identity)

    def validate(self):
        if int(self.n_frames) != self.n_frames or self.n_frames < 2:
            raise InvalidConfig(f"n_frames must be an integer >= 2, got {self.n_frames!r}")
        if not (self.frame_dt > 0 and math.isfinite(self.frame_dt)):
            raise InvalidConfig(f"frame_dt must be > 0, got {self.frame_dt!r}")
        axis = np.asarray(self.angular_velocity_axis, dtype=float)
        if axis.shape != (3,) or abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise InvalidConfig("angular_velocity_axis must be a unit 3-vector")
        if not math.isfinite(self.angular_rate):
            raise InvalidConfig("angular_rate must be finite")
        if abs(self.angular_rate * self.frame_dt) >= math.pi:
            raise InvalidConfig("per-frame rotation must stay below 180 degrees")
        if not np.all(np.isfinite(self.linear_velocity)) or len(self.linear_velocity) != 3:
            raise InvalidConfig("linear_velocity must be a finite 3-vector")


@dataclass(frozen=True)
class TerrainConfig:
    """Gaussian-crater heightfield seen from a downward-looking sensor.

    Frame 0 sits ``altitude`` metres above the datum and looks along -z.
    """

    extent: float = 600.0
    resolution: float = 0.5
    crater_center: tuple = (20.0, -10.0)
    crater_depth: float = 25.0
    crater_radius: float = 60.0
    n_bumps: int = 40
    bump_height: float = 4.0
    bump_radius: float = 15.0
    altitude: float = 200.0
    fov_deg: float = 60.0
    seed: int = 0

    def validate(self):
        if self.extent <= 0 or self.resolution <= 0 or self.crater_radius <= 0:
            raise InvalidConfig("terrain extent, resolution and crater radius must be > 0")
        if not 0 < self.fov_deg < 180:
            raise InvalidConfig("fov_deg must lie in (0, 180)")


@dataclass
class Trajectory:
    relative: list
    absolute: list


@dataclass
class ScenarioFrame:
    frame_index: int
    correspondences: list
    truth_pose: Pose = None


class Terrain:
    def __init__(self, config):
        config.validate()
        self.config = config
        rng = np.random.default_rng([config.seed, 0x7E44])
        half = config.extent / 2
        self.bump_xy = rng.uniform(-half, half, size=(config.n_bumps, 2))
        self.bump_h = rng.uniform(-config.bump_height, config.bump_height, size=config.n_bumps)

    def height(self, x, y):
        c = self.config
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        r2 = (x - c.crater_center[0]) ** 2 + (y - c.crater_center[1]) ** 2
        bowl = -c.crater_depth * np.exp(-r2 / (2 * c.crater_radius ** 2))
        rim = 0.3 * c.crater_depth * np.exp(-(np.sqrt(r2) - 1.4 * c.crater_radius) ** 2
                                            / (2 * (0.3 * c.crater_radius) ** 2))
        z = bowl + rim
        for (bx, by), bh in zip(self.bump_xy, self.bump_h):
            z = z + bh * np.exp(-((x - bx) ** 2 + (y - by) ** 2) / (2 * c.bump_radius ** 2))
        return z

    def points(self, xy):
        xy = np.asarray(xy, dtype=float)
        z = self.height(xy[:, 0], xy[:, 1]) - self.config.altitude
        return np.column_stack([xy, z])


def generate_trajectory(config):
    """Constant-rate relative poses plus the composed absolute poses.

    The relative pose maps frame-k coordinates to frame-(k+1) coordinates as
    ``b = R a + t``; absolute poses map frame-0 coordinates to frame k.
    """
    config.validate()
    axis = np.asarray(config.angular_velocity_axis, dtype=float)
    q_rel = math.tan(config.angular_rate * config.frame_dt / 2.0) * axis
    t_rel = np.asarray(config.linear_velocity, dtype=float) * config.frame_dt
    rel = Pose(q_rel, t_rel)
    r_rel = rel.R
    absolute = [config.initial_pose]
    r_abs = config.initial_pose.R
    t_abs = config.initial_pose.t
    for _ in range(config.n_frames - 1):
        r_abs = r_rel @ r_abs
        t_abs = r_rel @ t_abs + t_rel
        absolute.append(Pose(inverse_cayley(r_abs), t_abs))
    return Trajectory(relative=[rel] * (config.n_frames - 1), absolute=absolute)


def _visible(p, tan_half):
    depth = -p[:, 2]
    return (depth > 0) & (np.hypot(p[:, 0], p[:, 1]) <= tan_half * depth)


def sample_correspondences(truth, n_points, terrain, sigma, seed, frame_pose=None,
                           sigma_mode="constant", range_ref=100.0, max_batches=200):
    """Noisy correspondences for one frame pair.

    ``a_i`` are terrain points in frame-k coordinates (``frame_pose`` maps
    frame 0 to frame k), ``b_i = R a_i + t + noise``.  Points must be visible
    from both frames.  ``sigma_mode='range'`` scales each point's sigma by
    ``|a_i| / range_ref``.  With ``sigma == 0`` the data is noise free and
    every correspondence carries a nominal unit sigma.
    """
    if n_points < 3 or int(n_points) != n_points:
        raise InvalidConfig(f"n_points must be an integer >= 3, got {n_points!r}")
    if not (sigma >= 0 and math.isfinite(sigma)):
        raise InvalidConfig(f"sigma must be finite and >= 0, got {sigma!r}")
    if sigma_mode not in ("constant", "range"):
        raise InvalidConfig(f"unknown sigma_mode {sigma_mode!r}")
    if not isinstance(terrain, Terrain):
        terrain = Terrain(terrain)
    frame_pose = frame_pose or Pose.identity()
    rng = np.random.default_rng(seed)
    tan_half = math.tan(math.radians(terrain.config.fov_deg) / 2)
    r_k, t_k = frame_pose.R, frame_pose.t
    r_rel, t_rel = truth.R, truth.t

    # sample inside the footprint of frame k projected on the datum
    centre = -r_k.T @ t_k
    radius = tan_half * (terrain.config.altitude + abs(centre[2])) * 1.2
    res = terrain.config.resolution
    picked = []
    nodes = set()
    for _ in range(max_batches):
        # heightfield samples live on grid nodes; each node is used once
        ij = np.round((centre[:2] + rng.uniform(-radius, radius, size=(4 * n_points, 2))) / res)
        world = terrain.points(ij * res)
        a = world @ r_k.T + t_k
        b = a @ r_rel.T + t_rel
        keep = _visible(a, tan_half) & _visible(b, tan_half)
        for node, point in zip(map(tuple, ij[keep]), a[keep]):
            if node not in nodes:
                nodes.add(node)
                picked.append(point)
        if len(picked) >= n_points:
            break
    else:
        raise InvalidConfig("could not find enough points visible from both frames")
    a = np.array(picked[:n_points])
    b_true = a @ r_rel.T + t_rel
    if sigma_mode == "range":
        sig = sigma * np.linalg.norm(a, axis=1) / range_ref
    else:
        sig = np.full(n_points, float(sigma))
    noise = rng.standard_normal((n_points, 3)) * sig[:, None]
    b = b_true + noise
    carried = np.where(sig > 0, sig, 1.0)
    return [Correspondence(a[i], b[i], float(carried[i])) for i in range(n_points)]


def build_scenario(traj=None, terrain=None, n_points=40, sigma=0.02, seed=7,
                   sigma_mode="constant"):
    """Every frame-to-frame correspondence set of a trajectory."""
    traj = traj or TrajectoryConfig()
    terrain = Terrain(terrain or TerrainConfig())
    trajectory = generate_trajectory(traj)
    frames = []
    for k, rel in enumerate(trajectory.relative):
        corr = sample_correspondences(rel, n_points, terrain, sigma, seed=[seed, k],
                                      frame_pose=trajectory.absolute[k],
                                      sigma_mode=sigma_mode)
        frames.append(ScenarioFrame(frame_index=k, correspondences=corr, truth_pose=rel))
    return frames


# -- file formats ------------------------------------------------------------

def _fmt(x):
    return format(float(x), ".17g")


def write_correspondences(path, frames):
    lines = [CORR_HEADER]
    for fr in frames:
        lines.append(f"frame {fr.frame_index}")
        for c in fr.correspondences:
            lines.append(" ".join(_fmt(v) for v in (*c.a, *c.b, c.sigma)))
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(path, exc.strerror or str(exc)) from None


def write_truth(path, frames):
    lines = [TRUTH_HEADER]
    for fr in frames:
        if fr.truth_pose is None:
            continue
        vals = " ".join(_fmt(v) for v in (*fr.truth_pose.q, *fr.truth_pose.t))
        lines.append(f"frame {fr.frame_index} {vals}")
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(path, exc.strerror or str(exc)) from None


def _read_lines(path):
    try:
        return Path(path).read_text().splitlines()
    except FileNotFoundError:
        raise IoError(path, "no such file") from None
    except OSError as exc:
        raise IoError(path, exc.strerror or str(exc)) from None


def _content(lines):
    for lineno, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if text:
            yield lineno, raw, text


def _parse_floats(raw, text, lineno, count):
    fields = text.split()
    if len(fields) != count:
        raise ParseError(f"expected {count} fields, found {len(fields)}", lineno)
    out = []
    for tok in fields:
        try:
            out.append(float(tok))
        except ValueError:
            raise ParseError(f"not a number: {tok!r}", lineno, raw.find(tok) + 1) from None
    return out


def ingest_correspondences(path):
    """Parse and validate an ``oltae-corr v1`` file into frames."""
    body = list(_content(_read_lines(path)))
    if not body:
        raise ParseError("no frames")
    lineno, _, text = body[0]
    if text != CORR_HEADER:
        raise ParseError(f"expected header {CORR_HEADER!r}", lineno, 1)
    frames = []
    seen = set()
    for lineno, raw, text in body[1:]:
        if text.startswith("frame"):
            parts = text.split()
            if len(parts) != 2:
                raise ParseError("expected 'frame <k>'", lineno)
            try:
                k = int(parts[1])
            except ValueError:
                raise ParseError(f"bad frame index {parts[1]!r}", lineno, raw.find(parts[1]) + 1) from None
            if any(f.frame_index == k for f in frames):
                raise ValidationError(f"duplicate frame {k}", lineno)
            frames.append(ScenarioFrame(frame_index=k, correspondences=[]))
            seen = set()
            continue
        if not frames:
            raise ParseError("record before any 'frame' line", lineno, 1)
        vals = _parse_floats(raw, text, lineno, 7)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError("non-finite value", lineno)
        if vals[6] <= 0:
            raise ValidationError(f"sigma must be > 0, got {vals[6]!r}", lineno)
        key = tuple(vals[:6])
        if key in seen:
            raise ValidationError("duplicate correspondence within frame", lineno)
        seen.add(key)
        frames[-1].correspondences.append(Correspondence(vals[:3], vals[3:6], vals[6]))
    if not frames:
        raise ParseError("no frames")
    return frames


def read_truth(path):
    """Map frame index to truth :class:`Pose` from an ``oltae-truth v1`` file."""
    body = list(_content(_read_lines(path)))
    if not body or body[0][2] != TRUTH_HEADER:
        raise ParseError(f"expected header {TRUTH_HEADER!r}", body[0][0] if body else 1)
    truth = {}
    for lineno, raw, text in body[1:]:
        parts = text.split()
        if len(parts) != 8 or parts[0] != "frame":
            raise ParseError("expected 'frame k q1 q2 q3 t1 t2 t3'", lineno)
        try:
            k = int(parts[1])
        except ValueError:
            raise ParseError(f"bad frame index {parts[1]!r}", lineno) from None
        vals = _parse_floats(raw, " ".join(parts[2:]), lineno, 6)
        truth[k] = Pose(vals[:3], vals[3:])
    return truth


def attach_truth(frames, truth):
    for fr in frames:
        fr.truth_pose = truth.get(fr.frame_index)
    return frames
