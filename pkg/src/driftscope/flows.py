"""Analytic flows: closed-form velocity fields and flow maps, plus seeding and integration.

Velocity-field flows (``double-gyre``, ``abc``, ``four-centers``) are
integrated with classical fixed-step RK4. Flow-map flows (``sine-ridge``)
are evaluated directly at each saved time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ValidationError
from .trajectory import TrajectoryDataset

VELOCITY_FLOWS = ("double-gyre", "abc", "four-centers")
FLOW_MAP_FLOWS = ("sine-ridge",)

_DEFAULT_PARAMS = {
    "double-gyre": {"A": 0.1, "omega": np.pi / 5.0, "eps": 0.1},
    # The chaotic Arnold-Beltrami-Childress constants standard in the literature.
    "abc": {"A": np.sqrt(3.0), "B": np.sqrt(2.0), "C": 1.0},
    "four-centers": {},
    # Ridge strength interpolates linearly in y between the two anchors.
    "sine-ridge": {"p_lo": 0.05, "p_hi": 4.0, "y_lo": -4.0, "y_hi": 4.0},
}

_DEFAULT_DOMAINS = {
    "double-gyre": ((0.0, 2.0), (0.0, 1.0)),
    "abc": ((0.0, 2 * np.pi), (0.0, 2 * np.pi), (0.0, 2 * np.pi)),
    "four-centers": ((-2.0, 2.0), (-2.0, 2.0)),
    "sine-ridge": ((-2.0, 2.0), (-4.0, 4.0)),
}


@dataclass(frozen=True)
class FlowSpec:
    """Identifier and parameters of an analytic flow plus a seeding/time window.

    Attributes:
        flow_id: one of the velocity-field or flow-map flow names.
        grid: seeding resolution per spatial dimension.
        domain: ((lo, hi), ...) seeding box per dimension; None picks the
            flow's conventional domain.
        t1: start of the analysis window.
        tau: window duration (> 0).
        T: number of saved time steps (>= 2), uniformly spaced.
        params: flow constants; merged over per-flow defaults.
        seed_time: time at which seeds are placed; defaults to t1. Setting it
            earlier advects seeds into the window first, producing nonuniform
            sampling at t1.
        substeps: RK4 substeps per saved frame (>= 4).
        jitter: optional relative seed jitter (fraction of the grid spacing),
            applied with ``jitter_seed``; useful to break exact lattice ties.
    """

    flow_id: str
    grid: tuple[int, ...] = (64, 32)
    domain: tuple[tuple[float, float], ...] | None = None
    t1: float = 0.0
    tau: float = 1.0
    T: int = 2
    params: dict = field(default_factory=dict)
    seed_time: float | None = None
    substeps: int = 4
    jitter: float = 0.0
    jitter_seed: int = 0

    def __post_init__(self):
        if self.flow_id not in _DEFAULT_PARAMS:
            raise ConfigurationError(f"unknown flow id {self.flow_id!r}")
        if self.T < 2:
            raise ValidationError("T must be at least 2")
        if self.tau <= 0:
            raise ValidationError("tau must be positive")
        if self.substeps < 4:
            raise ValidationError("at least 4 RK4 substeps per frame are required")
        merged = dict(_DEFAULT_PARAMS[self.flow_id])
        merged.update(self.params)
        object.__setattr__(self, "params", merged)
        dom = self.domain if self.domain is not None else _DEFAULT_DOMAINS[self.flow_id]
        dom = tuple((float(lo), float(hi)) for lo, hi in dom)
        object.__setattr__(self, "domain", dom)
        if len(self.grid) != len(dom):
            raise ValidationError("grid resolution and domain dimensions differ")

    @property
    def d(self) -> int:
        return len(self.grid)

    @property
    def times(self) -> np.ndarray:
        return self.t1 + np.linspace(0.0, self.tau, self.T)

    @property
    def n(self) -> int:
        return int(np.prod(self.grid))


def seed_positions(flow: FlowSpec) -> np.ndarray:
    """Uniform seeding grid over the flow domain, endpoints included.

    Returns (n, d) positions in x-major order (last axis varies fastest).
    """
    axes = [np.linspace(lo, hi, r) for (lo, hi), r in zip(flow.domain, flow.grid)]
    mesh = np.meshgrid(*axes, indexing="ij")
    seeds = np.stack([m.ravel() for m in mesh], axis=1)
    if flow.jitter > 0:
        rng = np.random.default_rng(flow.jitter_seed)
        spacing = np.array(
            [(hi - lo) / max(r - 1, 1) for (lo, hi), r in zip(flow.domain, flow.grid)]
        )
        seeds = seeds + rng.uniform(-1.0, 1.0, seeds.shape) * (flow.jitter * spacing)
    return seeds


def evaluate_velocity(flow: FlowSpec, x, t: float) -> np.ndarray:
    """Closed-form velocity of a velocity-field flow at positions ``x`` and time ``t``.

    ``x`` may be a single point (d,) or a batch (..., d).
    """
    if flow.flow_id in FLOW_MAP_FLOWS:
        raise TypeError(f"{flow.flow_id!r} is a flow map, not a velocity field")
    if flow.flow_id not in VELOCITY_FLOWS:
        raise ConfigurationError(f"unknown flow id {flow.flow_id!r}")
    x = np.asarray(x, dtype=np.float64)
    if not np.isfinite(x).all():
        raise ValidationError("positions must be finite")
    p = flow.params
    out = np.empty_like(x)
    if flow.flow_id == "double-gyre":
        A, omega, eps = p["A"], p["omega"], p["eps"]
        xs, ys = x[..., 0], x[..., 1]
        st = eps * np.sin(omega * t)
        f = st * xs**2 + (1.0 - 2.0 * st) * xs
        dfdx = 2.0 * st * xs + (1.0 - 2.0 * st)
        out[..., 0] = -np.pi * A * np.sin(np.pi * f) * np.cos(np.pi * ys)
        out[..., 1] = np.pi * A * np.cos(np.pi * f) * np.sin(np.pi * ys) * dfdx
    elif flow.flow_id == "abc":
        A, B, C = p["A"], p["B"], p["C"]
        xs, ys, zs = x[..., 0], x[..., 1], x[..., 2]
        out[..., 0] = A * np.sin(zs) + C * np.cos(ys)
        out[..., 1] = B * np.sin(xs) + A * np.cos(zs)
        out[..., 2] = C * np.sin(ys) + B * np.cos(xs)
    else:  # four-centers: v = (d/dy, -d/dx) of the stream function x y exp(-x^2-y^2)
        xs, ys = x[..., 0], x[..., 1]
        g = np.exp(-(xs**2) - ys**2)
        out[..., 0] = -xs * g * (2.0 * ys**2 - 1.0)
        out[..., 1] = ys * g * (2.0 * xs**2 - 1.0)
    return out


def ridge_strength(flow: FlowSpec, y) -> np.ndarray:
    """Linear ridge-strength profile of the sine-ridge map as a function of y."""
    p = flow.params
    slope = (p["p_hi"] - p["p_lo"]) / (p["y_hi"] - p["y_lo"])
    return p["p_lo"] + (np.asarray(y, dtype=np.float64) - p["y_lo"]) * slope


def evaluate_flow_map(flow: FlowSpec, x, t: float) -> np.ndarray:
    """Closed-form flow map of a flow-map flow: seed positions ``x`` to elapsed time ``t``."""
    if flow.flow_id in VELOCITY_FLOWS:
        raise TypeError(f"{flow.flow_id!r} is a velocity field, not a flow map")
    if flow.flow_id not in FLOW_MAP_FLOWS:
        raise ConfigurationError(f"unknown flow id {flow.flow_id!r}")
    x = np.asarray(x, dtype=np.float64)
    xs, ys = x[..., 0], x[..., 1]
    p_of_y = ridge_strength(flow, ys)
    denom = np.sqrt(xs**2 + (1.0 - xs**2) * np.exp(-2.0 * t * p_of_y))
    out = np.empty_like(x)
    out[..., 0] = xs / denom
    out[..., 1] = ys + t
    return out


def rk4_advect(
    flow: FlowSpec, x0: np.ndarray, t_start: float, t_end: float, dt_max: float
) -> np.ndarray:
    """Advect positions from t_start to t_end with fixed-step classical RK4.

    The step count is chosen so the substep never exceeds dt_max.
    """
    span = t_end - t_start
    if span == 0:
        return x0.copy()
    steps = max(1, int(np.ceil(abs(span) / dt_max)))
    h = span / steps
    x = x0.copy()
    t = t_start
    for _ in range(steps):
        k1 = evaluate_velocity(flow, x, t)
        k2 = evaluate_velocity(flow, x + 0.5 * h * k1, t + 0.5 * h)
        k3 = evaluate_velocity(flow, x + 0.5 * h * k2, t + 0.5 * h)
        k4 = evaluate_velocity(flow, x + h * k3, t + h)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
    return x


def integrate_flow(flow: FlowSpec) -> TrajectoryDataset:
    """Generate trajectories for a flow spec.

    Velocity-field flows integrate the seeds with RK4 using at least
    ``substeps`` substeps per saved frame; flow-map flows evaluate the closed
    form at every saved time. Seeds placed at ``seed_time`` earlier than t1
    are first advected to t1 with the same substep density.
    """
    seeds = seed_positions(flow)
    times = flow.times
    n, T, d = seeds.shape[0], flow.T, flow.d
    positions = np.empty((n, T, d))
    if flow.flow_id in FLOW_MAP_FLOWS:
        for k, t in enumerate(times):
            positions[:, k, :] = evaluate_flow_map(flow, seeds, t - flow.t1)
    else:
        frame_dt = flow.tau / (T - 1)
        dt_max = frame_dt / flow.substeps
        x = seeds
        start = flow.t1 if flow.seed_time is None else flow.seed_time
        if start != flow.t1:
            x = rk4_advect(flow, x, start, flow.t1, dt_max)
        positions[:, 0, :] = x
        for k in range(1, T):
            x = rk4_advect(flow, x, times[k - 1], times[k], dt_max)
            positions[:, k, :] = x
    return TrajectoryDataset(times=times, positions=positions)
