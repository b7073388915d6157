"""Gauss-Markov and random-waypoint node mobility over a banded arena.

All step functions are vectorised: a :class:`NodeKinematics` may hold a single
node (``position`` of shape ``(2,)``) or a whole network (shape ``(n, 2)``).
Speeds are in meters per slot, headings in radians.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class Arena:
    width: float = 1000.0
    height: float = 500.0
    region_scale: float = 1.0
    radio_range: float = 250.0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0 or self.radio_range <= 0:
            raise ValueError("arena width, height and radio_range must be positive")
        if self.region_scale <= 0:
            raise ValueError("region_scale must be positive")

    @property
    def size(self) -> Tuple[float, float]:
        return self.width * self.region_scale, self.height * self.region_scale


@dataclass(frozen=True)
class RegionLayout:
    """Five vertical bands from the source side to the destination side."""

    multipliers: Tuple[float, float, float, float, float] = (0.5, 1.0, 2.0, 1.0, 0.5)


@dataclass
class NodeKinematics:
    position: np.ndarray
    speed: np.ndarray
    heading: np.ndarray
    mean_heading: Optional[np.ndarray] = None
    waypoint: Optional[np.ndarray] = None

    def copy(self) -> "NodeKinematics":
        return NodeKinematics(*(None if v is None else np.array(v, dtype=float, copy=True)
                                for v in (self.position, self.speed, self.heading,
                                          self.mean_heading, self.waypoint)))


def region_multiplier(layout: RegionLayout, position, arena: Arena):
    """Variance multiplier of the band containing ``position``.

    Bands are equal-width strips; membership is decided by distance from the
    vertical centerline so the layout is exactly mirror-symmetric.
    """
    width, _ = arena.size
    pos = np.asarray(position, dtype=float)
    off = np.abs(pos[..., 0] - 0.5 * width)
    m = layout.multipliers
    out = np.where(off <= 0.1 * width, m[2],
                   np.where(off <= 0.3 * width,
                            np.where(pos[..., 0] < 0.5 * width, m[1], m[3]),
                            np.where(pos[..., 0] < 0.5 * width, m[0], m[4])))
    return out if out.ndim else float(out)


def band_bounds(arena: Arena, band: int) -> Tuple[float, float]:
    width, _ = arena.size
    return band * width / 5.0, (band + 1) * width / 5.0


def _reflect(k: NodeKinematics, arena: Arena) -> None:
    width, height = arena.size
    pos = k.position
    for axis, limit in ((0, width), (1, height)):
        lo = pos[..., axis] < 0.0
        hi = pos[..., axis] > limit
        hit = lo | hi
        if not np.any(hit):
            continue
        coord = pos[..., axis]
        coord = np.where(lo, -coord, coord)
        coord = np.where(hi, 2.0 * limit - coord, coord)
        pos[..., axis] = np.clip(coord, 0.0, limit)
        if axis == 0:
            flip = lambda a: np.where(hit, np.pi - a, a)
        else:
            flip = lambda a: np.where(hit, -a, a)
        k.heading = flip(k.heading)
        if k.mean_heading is not None:
            k.mean_heading = flip(k.mean_heading)


def gauss_markov_step(k: NodeKinematics, alpha_gm: float, mean_speed: float,
                      base_variance: float, region, rng: np.random.Generator,
                      arena: Optional[Arena] = None,
                      heading_std: float = 0.3) -> NodeKinematics:
    """One Gauss-Markov update followed by the position advance.

    ``region`` multiplies ``base_variance`` for the speed innovation. Heading
    follows the same recurrence around the node's ``mean_heading`` with a fixed
    ``heading_std``. A negative speed moves the node backwards along its heading.
    """
    out = k.copy()
    if out.mean_heading is None:
        out.mean_heading = np.array(out.heading, dtype=float, copy=True)
    shape = np.shape(out.speed)
    noise = np.sqrt(max(0.0, 1.0 - alpha_gm * alpha_gm))
    sigma = np.sqrt(base_variance * np.asarray(region, dtype=float))
    w_speed = rng.standard_normal(shape)
    w_head = rng.standard_normal(shape)
    out.speed = alpha_gm * out.speed + (1.0 - alpha_gm) * mean_speed + noise * sigma * w_speed
    out.heading = (alpha_gm * out.heading + (1.0 - alpha_gm) * out.mean_heading
                   + noise * heading_std * w_head)
    step = np.stack([np.cos(out.heading), np.sin(out.heading)], axis=-1)
    out.position = out.position + np.asarray(out.speed)[..., None] * step
    if arena is not None:
        _reflect(out, arena)
    return out


def random_waypoint_step(k: NodeKinematics, arena: Arena, speed_range: Tuple[float, float],
                         rng: np.random.Generator) -> NodeKinematics:
    """Move toward the waypoint; on arrival draw a fresh waypoint and speed.

    Pause time is zero. Arrival snaps the node onto the waypoint and discards
    the remainder of that slot's travel.
    """
    lo, hi = speed_range
    if hi < lo or lo < 0:
        raise ValueError(f"invalid speed range {speed_range}")
    width, height = arena.size
    out = k.copy()
    if out.waypoint is None:
        out.waypoint = np.array(out.position, dtype=float, copy=True)
    delta = out.waypoint - out.position
    dist = np.hypot(delta[..., 0], delta[..., 1])
    arrive = dist <= out.speed
    safe = np.where(dist > 0, dist, 1.0)
    move = np.where(arrive, 0.0, out.speed / safe)[..., None] * delta
    out.position = np.where(arrive[..., None], out.waypoint, out.position + move)
    moving = dist > 0
    out.heading = np.where(moving, np.arctan2(delta[..., 1], delta[..., 0]), out.heading)

    n_new = int(np.count_nonzero(arrive))
    if n_new:
        new_wp = rng.uniform((0.0, 0.0), (width, height), size=(n_new, 2))
        new_speed = rng.uniform(lo, hi, size=n_new) if hi > lo else np.full(n_new, lo)
        if np.ndim(arrive) == 0:
            out.waypoint = new_wp[0]
            out.speed = np.asarray(new_speed[0], dtype=float)
        else:
            out.waypoint[arrive] = new_wp
            out.speed = np.array(out.speed, dtype=float)
            out.speed[arrive] = new_speed
    return out


def initial_kinematics(positions: np.ndarray, model: str, rng: np.random.Generator,
                       arena: Arena, mean_speed: float,
                       speed_range: Tuple[float, float]) -> NodeKinematics:
    n = len(positions)
    heading = rng.uniform(-np.pi, np.pi, size=n)
    if model == "gauss_markov":
        return NodeKinematics(np.array(positions, dtype=float), np.full(n, float(mean_speed)),
                              heading, mean_heading=heading.copy())
    if model == "random_waypoint":
        width, height = arena.size
        speed = rng.uniform(*speed_range, size=n) if speed_range[1] > speed_range[0] \
            else np.full(n, float(speed_range[0]))
        waypoint = rng.uniform((0.0, 0.0), (width, height), size=(n, 2))
        return NodeKinematics(np.array(positions, dtype=float), speed, heading,
                              waypoint=waypoint)
    if model == "static":
        return NodeKinematics(np.array(positions, dtype=float), np.zeros(n), heading)
    raise ValueError(f"unknown mobility model {model!r}")

