"""Per-entity, per-window movement descriptors."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np

from .models import KinematicFeatures

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from .models import EntityTimeSeries, TrajectorySet, Window

# Relative slack when matching a time gap to the sample period.
_GAP_TOLERANCE = 1e-6


def _turn_angles(
    dx: NDArray[np.float64],
    dy: NDArray[np.float64],
    run: NDArray[np.int64],
) -> NDArray[np.float64]:
    """Absolute turning angle between consecutive nonzero steps of one run, in [0, pi].

    Steps with different ``run`` ids lie on either side of a gap and are never paired.
    """
    moving = np.hypot(dx, dy) > 0
    headings = np.arctan2(dy[moving], dx[moving])
    if headings.size < 2:  # noqa: PLR2004
        return np.zeros(0)
    runs = run[moving]
    turn = np.diff(headings)[runs[1:] == runs[:-1]]
    return np.abs(np.arctan2(np.sin(turn), np.cos(turn)))


def window_kinematics(
    series: EntityTimeSeries,
    window: Window,
    *,
    slot: int,
    sample_period: float,
) -> KinematicFeatures:
    """Movement descriptors of one entity inside one window.

    Speeds come only from consecutive fixes exactly one sample period apart;
    interpolated fixes count for motion but not for ``fix_fraction``. Fewer than
    two usable fixes give zero motion features.

    Args:
        series: The entity's time series.
        window: Window whose ``ranges[slot]`` indexes into ``series``.
        slot: Position of the entity in the trajectory set.
        sample_period: Grid spacing in seconds.

    """
    lo, hi = window.ranges[slot]
    expected = max(1, round(window.length / sample_period))
    fix_fraction = min(1.0, float(np.count_nonzero(series.valid[lo:hi])) / expected)

    t = series.timestamps[lo:hi]
    x = series.x[lo:hi]
    y = series.y[lo:hi]
    usable = np.isfinite(x) & np.isfinite(y)
    t, x, y = t[usable], x[usable], y[usable]
    if t.size < 2:  # noqa: PLR2004
        return KinematicFeatures(fix_fraction=fix_fraction)

    dx = np.diff(x)
    dy = np.diff(y)
    steps = np.hypot(dx, dy)
    contiguous = np.abs(np.diff(t) - sample_period) <= _GAP_TOLERANCE * sample_period

    path_length = float(steps.sum())
    net = float(np.hypot(x[-1] - x[0], y[-1] - y[0]))
    # rounding can push the chord a hair past the path
    net = min(net, path_length)
    straightness = min(1.0, net / path_length) if path_length > 0 else 0.0

    regular = steps[contiguous]
    if regular.size:
        speeds = regular / sample_period
        mean_speed = float(speeds.mean())
        std_speed = float(speeds.std())
        mean_step = float(regular.mean())
        run = np.cumsum(~contiguous)
        angles = _turn_angles(dx[contiguous], dy[contiguous], run[contiguous])
    else:
        mean_speed = std_speed = mean_step = 0.0
        angles = np.zeros(0)

    return KinematicFeatures(
        mean_speed=mean_speed,
        std_speed=std_speed,
        mean_step=mean_step,
        path_length=path_length,
        net_displacement=net,
        straightness=straightness,
        mean_turn_angle=float(angles.mean()) if angles.size else 0.0,
        fix_fraction=fix_fraction,
    )


def window_kinematics_all(trajectories: TrajectorySet, window: Window) -> list[KinematicFeatures]:
    """Kinematic features of every entity in one window, in set order."""
    return [
        window_kinematics(series, window, slot=i, sample_period=trajectories.sample_period)
        for i, series in enumerate(trajectories)
    ]
