"""Izhikevich point-neuron dynamics on the bounded voltage range [-65, 30] mV.

The model keeps two state variables per neuron: the membrane voltage ``v``
and a slow recovery variable ``u``. Integration is forward Euler with a
hard lower clamp at ``V_MIN_MV``; a spike is emitted whenever ``v`` reaches
``V_MAX_MV``, after which ``v`` resets to ``c`` and ``u`` jumps by ``d``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

V_MIN_MV = -65.0
V_MAX_MV = 30.0


@dataclass(frozen=True)
class IzhikevichParams:
    """Model constants. Defaults are the regular-spiking regime.

    a: recovery rate (1/ms), b: voltage coupling of the recovery variable,
    c: post-spike reset voltage (mV), d: post-spike recovery increment.
    """

    a: float = 0.02
    b: float = 0.2
    c: float = V_MIN_MV
    d: float = 8.0

    def __post_init__(self) -> None:
        for name in ("a", "b", "c", "d"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"parameter {name} must be finite")
        if self.a <= 0:
            raise ValueError("parameter a must be > 0")
        if self.d < 0:
            raise ValueError("parameter d must be >= 0")
        if self.c < V_MIN_MV:
            raise ValueError(f"reset voltage c must not undercut the {V_MIN_MV} mV floor")


@dataclass(frozen=True)
class NeuronState:
    """Instantaneous neuron state: voltage v (mV), recovery u, and parameters."""

    v: float
    u: float
    params: IzhikevichParams

    def is_finite(self) -> bool:
        return math.isfinite(self.v) and math.isfinite(self.u)


def rest_state(params: IzhikevichParams | None = None) -> NeuronState:
    """Neuron at the standard rest initialization: v = -65 mV, u = b * v."""
    p = params if params is not None else IzhikevichParams()
    return NeuronState(v=V_MIN_MV, u=p.b * V_MIN_MV, params=p)


def clamp_voltage(v_mv: float, floor_mv: float = V_MIN_MV) -> float:
    """Clamp a voltage to the lower bound of the natural range.

    Values already at or above the floor are returned unchanged.
    """
    if not math.isfinite(v_mv):
        raise ValueError("voltage must be finite")
    return v_mv if v_mv >= floor_mv else floor_mv


def izhikevich_step(
    state: NeuronState, input_current: float, dt_ms: float
) -> tuple[NeuronState, bool]:
    """Advance one neuron by a single step of size ``dt_ms``.

    If the voltage has reached the spike threshold (30 mV) the step performs
    the reset (v = c, u = u + d) and reports ``spiked=True``; otherwise both
    variables take one forward-Euler step and v is clamped to >= -65 mV.
    Pure function: identical inputs give bit-identical outputs.
    """
    if not math.isfinite(input_current):
        raise ValueError("input current must be finite")
    if not (math.isfinite(dt_ms) and dt_ms > 0):
        raise ValueError("dt must be a positive finite duration")
    if not state.is_finite():
        raise ValueError("neuron state must be finite")

    p = state.params
    if state.v >= V_MAX_MV:
        return NeuronState(v=p.c, u=state.u + p.d, params=p), True

    # Forward Euler on v' = 0.04 v^2 + 5 v + 140 - u + I and u' = a (b v - u),
    # both derivatives evaluated at the incoming state. The expression order
    # here is mirrored bit-for-bit by the vectorized engine kernel.
    dv = 0.04 * state.v * state.v + 5.0 * state.v + 140.0 - state.u + input_current
    du = p.a * (p.b * state.v - state.u)
    v_next = state.v + dt_ms * dv
    if v_next < V_MIN_MV:
        v_next = V_MIN_MV
    u_next = state.u + dt_ms * du
    return NeuronState(v=v_next, u=u_next, params=p), False
