"""Time-discrete closed-loop trajectories and the input signals that drive them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Trajectory",
    "InputSignal",
    "ZeroInput",
    "StepInput",
    "SineInput",
    "SampledInput",
]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Implicit-Euler closed-loop trajectory.

    ``states[k]`` is the state at ``times[k] = k h`` (``states[0]`` is the
    initial state).  Step ``k`` maps ``states[k]`` to ``states[k+1]`` and
    carries the input sample ``inputs[k]`` (taken at ``times[k]``), the
    output ``outputs[k]`` and the feedback value
    ``phis[k] = phi(inputs[k] - outputs[k])``, so that

        states[k+1] = states[k] + h (A states[k+1] + B phis[k])
        outputs[k]  = C states[k+1] + D phis[k]
    """

    h: float
    times: np.ndarray
    states: np.ndarray
    outputs: np.ndarray
    inputs: np.ndarray
    phis: np.ndarray
    residuals: np.ndarray
    node: object = field(default=None, repr=False)
    phi: object = field(default=None, repr=False)
    label: str = ""

    def __post_init__(self):
        for name in ("times", "states", "outputs", "inputs", "phis", "residuals"):
            arr = np.asarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_steps(self) -> int:
        return len(self.outputs)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def x0(self) -> np.ndarray:
        return self.states[0]

    def state_norms(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=1)

    def input_is_zero(self) -> bool:
        return not np.any(self.inputs)

    def output_energy(self) -> np.ndarray:
        """Cumulative ``sum_{j<k} h |y_j|^2`` for ``k = 0..N``."""
        inc = self.h * np.sum(np.abs(self.outputs) ** 2, axis=1)
        return np.concatenate([[0.0], np.cumsum(inc)])

    def replay_defect(self, node=None) -> np.ndarray:
        """Per-step defect of the implicit Euler relations (state plus output)."""
        node = node if node is not None else self.node
        if node is None:
            raise ValueError("trajectory carries no node to replay against")
        x_new = self.states[1:]
        dx = x_new - self.states[:-1] - self.h * (x_new @ node.A.T + self.phis @ node.B.T)
        dy = self.outputs - (x_new @ node.C.T + self.phis @ node.D.T)
        return np.linalg.norm(dx, axis=1) + np.linalg.norm(dy, axis=1)


class InputSignal:
    """External input ``u(t)``; subclasses return a length-``m`` vector."""

    is_zero = False

    def __call__(self, t: float, m: int) -> np.ndarray:
        raise NotImplementedError

    def sample(self, times, m: int) -> np.ndarray:
        return np.array([self(t, m) for t in times]).reshape(len(times), m)


class ZeroInput(InputSignal):
    is_zero = True

    def __call__(self, t, m):
        return np.zeros(m)

    def sample(self, times, m):
        return np.zeros((len(times), m))

    def __repr__(self):
        return "ZeroInput()"


class StepInput(InputSignal):
    """``u(t) = value`` for ``t >= t0`` and ``before`` earlier."""

    def __init__(self, t0: float, value, before=0.0):
        self.t0 = float(t0)
        self.value = np.asarray(value)
        self.before = np.asarray(before)

    def __call__(self, t, m):
        v = self.value if t >= self.t0 else self.before
        return np.broadcast_to(v, (m,)).copy()

    def __repr__(self):
        return f"StepInput(t0={self.t0}, value={self.value.tolist()})"


class SineInput(InputSignal):
    """``u(t) = amp sin(2 pi freq t + phase)``."""

    def __init__(self, freq: float, amp, phase: float = 0.0):
        self.freq = float(freq)
        self.amp = np.asarray(amp)
        self.phase = float(phase)

    def __call__(self, t, m):
        return np.broadcast_to(self.amp * np.sin(2 * np.pi * self.freq * t + self.phase), (m,)).copy()

    def __repr__(self):
        return f"SineInput(freq={self.freq}, amp={self.amp.tolist()})"


class SampledInput(InputSignal):
    """Zero-order hold through samples ``values[i]`` taken at ``times[i]``."""

    def __init__(self, times, values):
        self.times = np.asarray(times, dtype=float)
        values = np.asarray(values)
        self.values = values.reshape(len(self.times), -1)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("sample times must be increasing")

    def __call__(self, t, m):
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        if i < 0:
            return np.zeros(m, dtype=self.values.dtype)
        return np.broadcast_to(self.values[i], (m,)).copy()

    def __repr__(self):
        return f"SampledInput(n={len(self.times)})"
