"""Fuse an observation with a subgoal into a fixed-size policy input.

Reduced inputs contain one reach channel and one avoid channel regardless
of how many propositions the environment has, so the policy surface does
not grow with the alphabet.  Grid observations map cells to {+1, -1, 0}
values; lidar observations fuse per-proposition closeness arrays (min
across the propositions of one assignment, max across the assignments of
the avoid set, so the fused beam tracks the nearest avoid region).  Raw
mode skips fusion and appends the subgoal bitvector instead.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .envs import EnvConfig, Observation
from .ltl import Alphabet
from .subgoals import Subgoal, encode_subgoal

__all__ = [
    "V_REACH", "V_AVOID", "V_NEUTRAL", "FusionMode",
    "reduce_grid", "reduce_lidar", "reduce", "default_mode", "reduced_dim",
]

V_REACH = 1.0
V_AVOID = -1.0
V_NEUTRAL = 0.0


class FusionMode(Enum):
    GridValues = "grid"
    LidarMin = "lidar"
    RawBitvector = "raw"


def default_mode(kind: str) -> FusionMode:
    return FusionMode.GridValues if kind == "grid" else FusionMode.LidarMin


def _check_masks(sub: Subgoal, n_props: int) -> None:
    limit = 1 << n_props
    if not 0 < sub.reach < limit:
        raise ValueError(f"reach assignment {sub.reach} out of range")
    for a in sub.avoid:
        if not 0 < a < limit:
            raise ValueError(f"avoid assignment {a} out of range")


def reduce_grid(obs: Observation, sub: Subgoal) -> np.ndarray:
    """Cell values: avoid assignments -> -1, reach letters -> +1, else 0.

    A cell's label is the singleton of its letter; it is an avoid cell when
    that singleton is in the avoid set (avoid wins on overlap with reach).
    """
    if obs.kind != "grid":
        raise ValueError("reduce_grid needs a grid observation")
    values = np.full(obs.ap.shape, V_NEUTRAL, dtype=np.float64)
    for p in np.unique(obs.ap):
        if p < 0:
            continue
        cell = 1 << int(p)
        if cell in sub.avoid:
            values[obs.ap == p] = V_AVOID
        elif cell & sub.reach:
            values[obs.ap == p] = V_REACH
    return values


def _min_fuse(ap: np.ndarray, assignment: int) -> np.ndarray:
    """Closeness of one assignment: min across its true propositions."""
    rows = [ap[i] for i in range(ap.shape[0]) if (assignment >> i) & 1]
    fused = rows[0].copy()
    for row in rows[1:]:
        np.minimum(fused, row, out=fused)
    return fused


def reduce_lidar(obs: Observation, sub: Subgoal) -> np.ndarray:
    if obs.kind != "lidar":
        raise ValueError("reduce_lidar needs a lidar observation")
    _check_masks(sub, obs.ap.shape[0])
    k = obs.ap.shape[1]
    reach = _min_fuse(obs.ap, sub.reach)
    avoid = np.zeros(k)
    for a in sorted(sub.avoid):
        np.maximum(avoid, _min_fuse(obs.ap, a), out=avoid)
    return np.concatenate([obs.not_ap, reach, avoid])


def reduce(obs: Observation, sub: Subgoal, mode: FusionMode | None = None,
           alphabet: Alphabet | None = None) -> np.ndarray:
    if mode is None:
        mode = default_mode(obs.kind)
    if mode is FusionMode.GridValues:
        return np.concatenate([obs.not_ap, reduce_grid(obs, sub).ravel()])
    if mode is FusionMode.LidarMin:
        return reduce_lidar(obs, sub)
    if alphabet is None:
        raise ValueError("raw mode needs the alphabet to encode the subgoal")
    flat = np.concatenate([obs.not_ap, obs.ap.ravel().astype(np.float64)])
    return np.concatenate([flat, encode_subgoal(sub, alphabet)])


def reduced_dim(config: EnvConfig, mode: FusionMode | None = None) -> int:
    """Input width of the policy for a given environment and fusion mode."""
    n = len(config.letters)
    if config.env == "letterworld":
        raw = config.grid_size * config.grid_size
    else:
        raw = 3 + n * config.lidar_beams
    if mode is None:
        mode = FusionMode.GridValues if config.env == "letterworld" \
            else FusionMode.LidarMin
    if mode is FusionMode.GridValues:
        return config.grid_size * config.grid_size
    if mode is FusionMode.LidarMin:
        return 3 + 2 * config.lidar_beams
    return raw + n + (1 << n)
