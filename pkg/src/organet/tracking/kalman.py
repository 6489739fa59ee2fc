from __future__ import annotations

import numpy as np

# state (cx, cy, vx, vy); one frame per step
MOTION = np.array(
    [
        [1.0, 0.0, 1.0, 0.0],
        [0.0, 1.0, 0.0, 1.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
)
OBSERVE = np.eye(2, 4)


class ConstantVelocityKalman:
    """Linear Kalman filter for a 2-D point moving at constant velocity."""

    def __init__(
        self,
        position,
        process_noise: float = 1e-2,
        measurement_noise: float = 1e-2,
        initial_velocity_var: float = 100.0,
    ):
        self.x = np.array([position[0], position[1], 0.0, 0.0], dtype=np.float64)
        self.P = np.diag([measurement_noise, measurement_noise, initial_velocity_var, initial_velocity_var])
        self.Q = process_noise * np.eye(4)
        self.R = measurement_noise * np.eye(2)

    @property
    def position(self) -> tuple[float, float]:
        return float(self.x[0]), float(self.x[1])

    @property
    def velocity(self) -> tuple[float, float]:
        return float(self.x[2]), float(self.x[3])

    def predict(self) -> tuple[float, float]:
        self.x = MOTION @ self.x
        self.P = MOTION @ self.P @ MOTION.T + self.Q
        return self.position

    def peek(self) -> tuple[float, float]:
        """Next predicted position without advancing the filter."""
        nxt = MOTION @ self.x
        return float(nxt[0]), float(nxt[1])

    def update(self, measurement) -> tuple[float, float]:
        z = np.asarray(measurement, dtype=np.float64)
        innovation = z - OBSERVE @ self.x
        s = OBSERVE @ self.P @ OBSERVE.T + self.R
        gain = np.linalg.solve(s, OBSERVE @ self.P).T
        self.x = self.x + gain @ innovation
        # Joseph form keeps P symmetric positive definite
        ikh = np.eye(4) - gain @ OBSERVE
        self.P = ikh @ self.P @ ikh.T + gain @ self.R @ gain.T
        return self.position
