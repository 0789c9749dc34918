"""Discrete-time control maps on a compact box.

Every system exposes ``step(x, u)`` taking one state and one control to the
next state. When clamping is enabled, an image that leaves the domain box is
replaced by the pre-image state, which makes the map total on the box.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DoubleGyreParams:
    """Parameters of the periodically forced double-gyre flow.

    amplitude : velocity scale of the stream function.
    beta : strength of the time-periodic forcing.
    omega : angular frequency of the forcing (rad per unit time).
    tau : flow time integrated per map application.
    rk4_steps : number of fixed RK4 substeps over [0, tau].
    """

    amplitude: float = 0.25
    beta: float = 0.25
    omega: float = 2.0 * math.pi
    tau: float = 1.0
    rk4_steps: int = 100

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.rk4_steps < 1:
            raise ValueError("rk4_steps must be >= 1")


def gyre_velocity(points, t: float, params: DoubleGyreParams) -> np.ndarray:
    """Velocity field of the forced double gyre.

    Accepts a single point of shape (2,) or a batch of shape (m, 2) and
    returns matching shape. The y-velocity vanishes on y = 0 and y = 1.
    """
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    x, y = pts[:, 0], pts[:, 1]
    a = params.amplitude
    s = params.beta * math.sin(params.omega * t)
    f = s * x * x + (1.0 - 2.0 * s) * x
    dfdx = 2.0 * s * x + (1.0 - 2.0 * s)
    vx = -math.pi * a * np.sin(math.pi * f) * np.cos(math.pi * y)
    vy = math.pi * a * np.cos(math.pi * f) * np.sin(math.pi * y) * dfdx
    out = np.stack([vx, vy], axis=1)
    return out[0] if single else out


class SystemMap(ABC):
    """Deterministic one-step map on states, parameterized by a control."""

    def __init__(self, lower, upper, clamp: bool = True):
        self.lower = np.asarray(lower, dtype=np.float64)
        self.upper = np.asarray(upper, dtype=np.float64)
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("domain bounds must be matching 1-D vectors")
        if not np.all(self.lower < self.upper):
            raise ValueError("domain bounds are inverted")
        self.clamp = bool(clamp)

    @property
    def state_dim(self) -> int:
        return self.lower.shape[0]

    @abstractmethod
    def _map_batch(self, states: np.ndarray, control: np.ndarray) -> np.ndarray:
        """Raw dynamics on a batch of states, no clamping."""

    def inside(self, points: np.ndarray) -> np.ndarray:
        return np.all((points >= self.lower) & (points <= self.upper), axis=1)

    def step_batch(self, states, control) -> np.ndarray:
        """Apply the map to (m, d) states under one control vector."""
        pts = np.asarray(states, dtype=np.float64)
        u = np.atleast_1d(np.asarray(control, dtype=np.float64))
        raw = self._map_batch(pts, u)
        if self.clamp:
            ok = self.inside(raw)
            if not ok.all():
                raw = np.where(ok[:, None], raw, pts)
        return raw

    def step(self, x, u) -> np.ndarray:
        """Single-state convenience wrapper around step_batch."""
        pt = np.atleast_1d(np.asarray(x, dtype=np.float64))
        return self.step_batch(pt[None, :], u)[0]

    def step_many(self, states: np.ndarray, controls: np.ndarray) -> np.ndarray:
        """Images of one batch of states under every control: (n_u, m, d).

        Subclasses override when the dynamics share work across controls.
        """
        return np.stack([self.step_batch(states, u) for u in controls], axis=0)


class TranslationSystem(SystemMap):
    """x' = x + u on a box, in any dimension."""

    def _map_batch(self, states, control):
        return states + control


class DoubleIntegratorSystem(SystemMap):
    """Position-velocity pair with drift: x' = x + 0.15 y, y' = y + u."""

    DRIFT = 0.15

    def __init__(self, lower=(0.0, 0.0), upper=(1.0, 1.0), clamp: bool = True):
        super().__init__(lower, upper, clamp)

    def _map_batch(self, states, control):
        out = np.empty_like(states)
        out[:, 0] = states[:, 0] + self.DRIFT * states[:, 1]
        out[:, 1] = states[:, 1] + control[0]
        return out


class GyreUnicycleSystem(SystemMap):
    """Double-gyre drift composed with a heading-magnitude actuator.

    One step integrates the gyre flow over [0, tau] with fixed-step RK4 and
    then adds the displacement (u1 cos u2, u1 sin u2).
    """

    def __init__(self, params: DoubleGyreParams | None = None,
                 lower=(0.0, 0.0), upper=(2.0, 1.0), clamp: bool = True):
        super().__init__(lower, upper, clamp)
        self.params = params if params is not None else DoubleGyreParams()

    def flow(self, points) -> np.ndarray:
        """Integrate the pure gyre flow from t=0 to t=tau for (m, 2) points."""
        p = np.array(points, dtype=np.float64, copy=True)
        n = self.params.rk4_steps
        h = self.params.tau / n
        t = 0.0
        for _ in range(n):
            k1 = gyre_velocity(p, t, self.params)
            k2 = gyre_velocity(p + 0.5 * h * k1, t + 0.5 * h, self.params)
            k3 = gyre_velocity(p + 0.5 * h * k2, t + 0.5 * h, self.params)
            k4 = gyre_velocity(p + h * k3, t + h, self.params)
            p += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t += h
        return p

    @staticmethod
    def actuation(control: np.ndarray) -> np.ndarray:
        u1, u2 = float(control[0]), float(control[1])
        return np.array([u1 * math.cos(u2), u1 * math.sin(u2)])

    def _map_batch(self, states, control):
        return self.flow(states) + self.actuation(control)

    def step_many(self, states, controls):
        # the flow does not depend on the control; integrate once
        base = self.flow(states)
        out = np.empty((len(controls), states.shape[0], 2))
        for k, u in enumerate(controls):
            raw = base + self.actuation(u)
            if self.clamp:
                ok = self.inside(raw)
                raw = np.where(ok[:, None], raw, states)
            out[k] = raw
        return out


_SYSTEM_NAMES = ("translation", "double_integrator", "gyre_unicycle")


def make_system(name: str, lower, upper, clamp: bool = True, params: dict | None = None) -> SystemMap:
    """Construct a built-in system by name with the given domain box."""
    params = dict(params or {})
    if name == "translation":
        cls = TranslationSystem
    elif name == "double_integrator":
        cls = DoubleIntegratorSystem
    elif name == "gyre_unicycle":
        try:
            gp = DoubleGyreParams(**params)
        except TypeError as exc:
            raise ValueError(f"bad gyre parameters: {exc}") from exc
        return GyreUnicycleSystem(gp, lower, upper, clamp)
    else:
        raise ValueError(f"unknown system {name!r}; expected one of {_SYSTEM_NAMES}")
    if params:
        raise ValueError(f"system {name!r} takes no parameters, got {sorted(params)}")
    return cls(lower, upper, clamp)
