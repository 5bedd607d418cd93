"""Planar odometry: a CTRV extended Kalman filter over CAN-style measurements.

State vector is [x, y, theta, v, omega]. Speed and heading arrive together
(typically at 10 Hz); yaw rate arrives on its own (typically at 100 Hz). The
filter predicts up to each measurement timestamp and then applies a linear
update on the observed components.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .geometry import Pose2D, RigidMotion2D, wrap_angle

SMALL_OMEGA = 1e-6
KINDS = ("speed_heading", "yaw_rate")


@dataclass(frozen=True)
class ProcessNoise:
    accel_std: float = 0.5       # m/s^2
    yaw_accel_std: float = 0.2   # rad/s^2


@dataclass(frozen=True)
class CtrvState:
    x: float
    y: float
    theta: float
    v: float
    omega: float
    cov: np.ndarray = field(default_factory=lambda: np.eye(5))
    t: float = 0.0

    def __post_init__(self):
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (5, 5):
            raise ValueError("covariance must be 5 x 5")
        object.__setattr__(self, "cov", cov)

    @property
    def mean(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta, self.v, self.omega])

    @property
    def pose(self) -> Pose2D:
        return Pose2D(self.x, self.y, self.theta)

    @classmethod
    def from_mean(cls, mean, cov, t: float) -> "CtrvState":
        m = np.asarray(mean, dtype=float)
        return cls(float(m[0]), float(m[1]), float(m[2]), float(m[3]), float(m[4]), cov, t)


@dataclass(frozen=True)
class OdoMeasurement:
    """speed_heading: values (v, theta); yaw_rate: values (omega,)."""

    kind: str
    values: tuple
    variances: tuple
    timestamp: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown measurement kind {self.kind!r}")
        n = 2 if self.kind == "speed_heading" else 1
        if len(self.values) != n or len(self.variances) != n:
            raise ValueError(f"{self.kind} needs {n} values and variances")
        if any(not (v >= 0 and math.isfinite(v)) for v in self.variances):
            raise ValueError("variances must be finite and non-negative")


def _turn_terms(theta: float, omega: float, dt: float):
    """S, C and their omega-derivatives for the CTRV position increment v*(S, C)."""
    if abs(omega) < SMALL_OMEGA:
        st, ct = math.sin(theta), math.cos(theta)
        w, t2, t3 = omega, dt * dt, dt ** 3
        s = dt * ct - w * t2 / 2 * st - w * w * t3 / 6 * ct
        c = dt * st + w * t2 / 2 * ct - w * w * t3 / 6 * st
        ds = -t2 / 2 * st - w * t3 / 3 * ct
        dc = t2 / 2 * ct - w * t3 / 3 * st
        return s, c, ds, dc
    th1 = theta + omega * dt
    s = (math.sin(th1) - math.sin(theta)) / omega
    c = (math.cos(theta) - math.cos(th1)) / omega
    ds = (dt * math.cos(th1) - s) / omega
    dc = (dt * math.sin(th1) - c) / omega
    return s, c, ds, dc


def ctrv_predict(s: CtrvState, dt: float, noise: ProcessNoise = ProcessNoise()) -> CtrvState:
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if dt == 0:
        return s
    th, v, w = s.theta, s.v, s.omega
    S, C, dS, dC = _turn_terms(th, w, dt)
    mean = np.array([s.x + v * S, s.y + v * C, th + w * dt, v, w])
    F = np.eye(5)
    F[0, 2], F[0, 3], F[0, 4] = -v * C, S, v * dS
    F[1, 2], F[1, 3], F[1, 4] = v * S, C, v * dC
    F[2, 4] = dt
    G = np.array([
        [0.5 * dt * dt * math.cos(th), 0.0],
        [0.5 * dt * dt * math.sin(th), 0.0],
        [0.0, 0.5 * dt * dt],
        [dt, 0.0],
        [0.0, dt],
    ])
    Q = G @ np.diag([noise.accel_std ** 2, noise.yaw_accel_std ** 2]) @ G.T
    P = F @ s.cov @ F.T + Q
    return CtrvState.from_mean(mean, 0.5 * (P + P.T), s.t + dt)


def ekf_update(s: CtrvState, z: OdoMeasurement, noise: ProcessNoise = ProcessNoise()) -> CtrvState:
    """Predict to the measurement time, then fuse it (Joseph-form covariance)."""
    if z.timestamp < s.t:
        raise ValueError(f"measurement at {z.timestamp} precedes filter time {s.t}")
    s = ctrv_predict(s, z.timestamp - s.t, noise)
    if z.kind == "speed_heading":
        H = np.zeros((2, 5))
        H[0, 3] = 1.0
        H[1, 2] = 1.0
        innov = np.array([z.values[0] - s.v, float(wrap_angle(z.values[1] - s.theta))])
    else:
        H = np.zeros((1, 5))
        H[0, 4] = 1.0
        innov = np.array([z.values[0] - s.omega])
    R = np.diag(z.variances)
    P = s.cov
    S = H @ P @ H.T + R
    K = np.linalg.solve(S, H @ P).T
    mean = s.mean + K @ innov
    mean[2] = float(wrap_angle(mean[2]))
    I_KH = np.eye(5) - K @ H
    P = I_KH @ P @ I_KH.T + K @ R @ K.T
    return CtrvState.from_mean(mean, 0.5 * (P + P.T), s.t)


def pose_delta(prev: CtrvState, cur: CtrvState) -> RigidMotion2D:
    """Rigid motion taking coordinates in the ``prev`` sensor frame to the ``cur`` one."""
    return RigidMotion2D.between(prev.pose, cur.pose)


class OdometryFilter:
    """Single-owner wrapper; ``state`` is an immutable snapshot."""

    def __init__(self, initial: CtrvState, noise: ProcessNoise = ProcessNoise()):
        self.state = initial
        self.noise = noise

    def update(self, z: OdoMeasurement) -> CtrvState:
        self.state = ekf_update(self.state, z, self.noise)
        return self.state

    def predict_to(self, t: float) -> CtrvState:
        """State extrapolated to ``t`` without committing it."""
        return ctrv_predict(self.state, t - self.state.t, self.noise)


def run_filter(initial: CtrvState, measurements: Iterable[OdoMeasurement], query_times,
               noise: ProcessNoise = ProcessNoise()) -> list[CtrvState]:
    """Filter a measurement log and return the state estimate at each query time.

    Measurements are consumed in timestamp order (stable for ties); a query
    at time t sees every measurement with timestamp <= t.
    """
    ms = sorted(measurements, key=lambda m: m.timestamp)
    filt = OdometryFilter(initial, noise)
    out, k = [], 0
    for t in query_times:
        while k < len(ms) and ms[k].timestamp <= t:
            filt.update(ms[k])
            k += 1
        out.append(filt.predict_to(t))
    return out


def write_measurements(path, ms: Iterable[OdoMeasurement]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "kind", "value0", "value1", "var0", "var1"])
        for m in ms:
            vals = list(m.values) + [""] * (2 - len(m.values))
            var = list(m.variances) + [""] * (2 - len(m.variances))
            w.writerow([repr(float(m.timestamp)), m.kind, *[repr(float(v)) if v != "" else "" for v in vals],
                        *[repr(float(v)) if v != "" else "" for v in var]])


def read_measurements(path) -> list[OdoMeasurement]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            n = 2 if row["kind"] == "speed_heading" else 1
            vals = tuple(float(row[f"value{i}"]) for i in range(n))
            var = tuple(float(row[f"var{i}"]) for i in range(n))
            out.append(OdoMeasurement(row["kind"], vals, var, float(row["timestamp"])))
    return out
