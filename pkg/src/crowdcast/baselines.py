"""Reference predictors: constant-velocity extrapolation and persistence."""

from __future__ import annotations

import numpy as np

from .density import (
    AnnotationRecord,
    AnnotationStream,
    DensitySequence,
    rasterize,
    smooth_spatiotemporal,
)
from .model import T_OUT
from .simulate import Trajectory


def constvel_forecast(
    trajectories: dict[int, Trajectory],
    t_out: int = T_OUT,
    width: int = 80,
    height: int = 80,
    sigma: float | None = 3.0,
    last_frame: int | None = None,
) -> DensitySequence:
    """Linearly extrapolate each tracked agent from its last two observed frames.

    Velocity is taken between the final two input frames (``last_frame`` and
    its predecessor; defaults to the latest frame present). Agents missing
    either of those frames are skipped; agents leaving the map stop
    contributing from the frame they exit. The rasterized frames are smoothed
    with the same spatiotemporal sigma pipeline used on ground truth, unless
    sigma is None.
    """
    if last_frame is None:
        last_frame = max((t.frames[-1] for t in trajectories.values()), default=0)
    records = []
    for traj in trajectories.values():
        lookup = dict(zip(traj.frames, traj.positions))
        if last_frame not in lookup or last_frame - 1 not in lookup:
            continue
        px, py = lookup[last_frame]
        qx, qy = lookup[last_frame - 1]
        vx, vy = px - qx, py - qy
        for tau in range(1, t_out + 1):
            x = px + tau * vx
            y = py + tau * vy
            if not (0 <= x < width and 0 <= y < height):
                break  # exited; contributes to no later frame
            records.append(AnnotationRecord(tau - 1, traj.person_id, x, y))
    seq = rasterize(AnnotationStream(records), width, height, t_out)
    if sigma is not None:
        seq = smooth_spatiotemporal(seq, sigma)
    return seq


def persistence_forecast(c_in: DensitySequence, t_out: int = T_OUT) -> DensitySequence:
    """Repeat the last input frame t_out times."""
    last = c_in.frames[-1]
    return DensitySequence(np.repeat(last[None], t_out, axis=0), c_in.frame_rate)
