"""Linearly polarized sine-squared laser pulses in the velocity gauge.

The vector potential along z is

    A(t) = (e0 / omega) * sin^2(pi t / duration) * cos(omega t),  0 <= t <= duration,

zero outside, with duration = 2 pi n_cycles / omega.  The electric field is
E = -dA/dt and the excursion alpha(t) = integral of A; both are evaluated in
closed form, including the n_cycles = 1 case where two spectral denominators
coalesce.  The classical quiver amplitude e0 / omega^2 is the stabilization
parameter used throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import pi

import numpy as np
from numpy.typing import NDArray


@dataclass(frozen=True)
class SineSquaredPulse:
    e0: float
    omega: float
    n_cycles: int

    def __post_init__(self):
        if self.e0 < 0:
            raise ValueError(f"peak field must be >= 0, got {self.e0}")
        if self.omega <= 0:
            raise ValueError(f"carrier frequency must be > 0, got {self.omega}")
        if not (isinstance(self.n_cycles, (int, np.integer)) and self.n_cycles >= 1):
            raise ValueError(f"n_cycles must be a positive integer, got {self.n_cycles}")

    @property
    def duration(self) -> float:
        return 2.0 * pi * self.n_cycles / self.omega

    @property
    def a0(self) -> float:
        """Peak vector potential."""
        return self.e0 / self.omega

    @property
    def alpha0(self) -> float:
        """Classical quiver amplitude e0 / omega^2."""
        return self.e0 / self.omega**2

    @property
    def ponderomotive_energy(self) -> float:
        return self.e0**2 / (4.0 * self.omega**2)

    def _envelope(self, t: NDArray) -> NDArray:
        return np.sin(pi * t / self.duration) ** 2

    def vector_potential(self, t):
        t_arr = np.asarray(t, dtype=float)
        inside = (t_arr >= 0.0) & (t_arr <= self.duration)
        a = np.where(inside, self.a0 * self._envelope(t_arr) * np.cos(self.omega * t_arr), 0.0)
        return a if a.ndim else float(a)

    def electric_field(self, t):
        t_arr = np.asarray(t, dtype=float)
        w, tt = self.omega, self.duration
        env = np.sin(pi * t_arr / tt) ** 2
        denv = (pi / tt) * np.sin(2.0 * pi * t_arr / tt)
        val = -self.a0 * (denv * np.cos(w * t_arr) - w * env * np.sin(w * t_arr))
        inside = (t_arr >= 0.0) & (t_arr <= self.duration)
        e = np.where(inside, val, 0.0)
        return e if e.ndim else float(e)

    def excursion(self, t):
        """alpha(t) = integral_0^t A, evaluated in closed form."""
        t_arr = np.asarray(t, dtype=float)
        tc = np.clip(t_arr, 0.0, self.duration)
        w = self.omega
        b = 2.0 * pi / self.duration  # envelope frequency; w = n_cycles * b
        plus = np.sin((w + b) * tc) / (4.0 * (w + b))
        if self.n_cycles == 1:
            degenerate = tc / 4.0
        else:
            degenerate = np.sin((w - b) * tc) / (4.0 * (w - b))
        val = self.a0 * (np.sin(w * tc) / (2.0 * w) - plus - degenerate)
        # past the end the excursion stays at its final value
        out = np.where(t_arr > self.duration, self.a0 * self._final_drift(), val)
        out = np.where(t_arr < 0.0, 0.0, out)
        return out if out.ndim else float(out)

    def _final_drift(self) -> float:
        if self.n_cycles == 1:
            return -self.duration / 4.0
        return 0.0

    def as_dict(self) -> dict:
        return {"e0": self.e0, "omega": self.omega, "n_cycles": self.n_cycles}


def pulse_from_quiver(alpha0: float, omega: float, n_cycles: int) -> SineSquaredPulse:
    """Construct a pulse by its quiver amplitude instead of the peak field."""
    if alpha0 < 0:
        raise ValueError(f"quiver amplitude must be >= 0, got {alpha0}")
    return SineSquaredPulse(e0=alpha0 * omega**2, omega=omega, n_cycles=n_cycles)
