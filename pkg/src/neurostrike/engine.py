"""Fixed-step scenario engine.

One run advances the whole network over the scenario duration at dt (default
0.1 ms), with synaptic increments delivered one step after each spike, the
per-position input drive applied to layer 1, and attack actions executed on
the 1 ms event grid. The inner loop is a compiled kernel advancing one
millisecond (all sub-steps) per call; attack actions happen between calls.

Per step, in order: deliver pending synaptic increments, apply attack
actions (1 ms instants only), sample voltages, detect/reset spikes and queue
their synaptic increments, then Euler-update the non-spiking neurons with the
-65 mV floor clamp. Spike times are the instants at which the threshold test
fires, so a voltage pushed over 30 mV by an attack spikes at that same grid
instant.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from numba import njit

from .attacks import (
    INHIBIT,
    STIMULATE,
    AttackProgram,
    AttackSpec,
    NormalizedAttack,
    ValidationError,
    validate,
)
from .neuron import V_MAX_MV, V_MIN_MV, IzhikevichParams
from .topology import SynapticTopology, serialize_topology

SPIKE_CLASSES = (
    "spontaneous",
    "attack-stimulated",
    "attack-inhibited-action",
    "consequence",
)
CLASS_SPONTANEOUS, CLASS_STIMULATED, CLASS_INHIBITED, CLASS_CONSEQUENCE = range(4)


@dataclass(frozen=True)
class ScenarioConfig:
    """Scenario-level parameters.

    ``drive`` is the constant input current applied to every layer-1 neuron,
    either one value for all maze positions or one value per position.
    ``seed`` feeds attack target selection (when the attack has no own seed)
    and the run fingerprint. Recording voltages stores one sample per neuron
    per step; use ``record_neurons`` to restrict the set on long runs.
    """

    duration_ms: int = 27_000
    dt_ms: float = 0.1
    position_duration_ms: int = 1_000
    n_positions: int = 27
    drive: float | tuple[float, ...] = 10.0
    seed: int = 0
    record_voltages: bool = False
    record_neurons: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.position_duration_ms < 1 or self.n_positions < 1:
            raise ValidationError("position duration and count must be >= 1")
        if self.duration_ms != self.position_duration_ms * self.n_positions:
            raise ValidationError(
                "duration_ms must equal position_duration_ms * n_positions"
            )
        m = round(1.0 / self.dt_ms) if self.dt_ms > 0 else 0
        if m < 1 or abs(m * self.dt_ms - 1.0) > 1e-9:
            raise ValidationError("dt_ms must divide 1 ms evenly")
        if isinstance(self.drive, tuple):
            if len(self.drive) != self.n_positions:
                raise ValidationError("per-position drive needs n_positions values")
            values = self.drive
        else:
            values = (self.drive,)
        if not all(math.isfinite(x) for x in values):
            raise ValidationError("drive values must be finite")

    @property
    def substeps_per_ms(self) -> int:
        return round(1.0 / self.dt_ms)

    def drive_for_position(self, position: int) -> float:
        if isinstance(self.drive, tuple):
            return float(self.drive[position])
        return float(self.drive)


def input_drive_at(config: ScenarioConfig, t_ms: float, n_layer1: int) -> np.ndarray:
    """Drive vector over layer-1 neurons at time ``t_ms``.

    Positions are half-open [k*position_duration, (k+1)*position_duration).
    """
    if not 0 <= t_ms < config.duration_ms:
        raise ValidationError(f"t={t_ms} ms outside [0, {config.duration_ms})")
    position = int(t_ms // config.position_duration_ms)
    return np.full(n_layer1, config.drive_for_position(position), dtype=np.float64)


def propagate_spikes(
    topology: SynapticTopology, spiking_ids, v_mv: np.ndarray
) -> np.ndarray:
    """Voltages after delivering one increment per synapse from spiking sources.

    This is the delivery the engine performs one step after the spikes were
    detected. Returns a new array; the input is untouched.
    """
    out = np.array(v_mv, dtype=np.float64, copy=True)
    indptr, post, weights = topology.csr_by_pre
    for pre in spiking_ids:
        lo, hi = indptr[pre], indptr[pre + 1]
        np.add.at(out, post[lo:hi], weights[lo:hi])
    return out


@dataclass
class SpikeTrain:
    """Classified spike events of one run, ordered by time then neuron id."""

    neuron_ids: np.ndarray  # int32
    times_ms: np.ndarray  # float64, multiples of dt
    classes: np.ndarray  # int8 index into SPIKE_CLASSES
    duration_ms: int
    dt_ms: float
    layer_sizes: tuple[int, ...]

    def __len__(self) -> int:
        return int(self.neuron_ids.size)

    def events(self) -> Iterator[tuple[int, float, str]]:
        for i in range(len(self)):
            yield (
                int(self.neuron_ids[i]),
                float(self.times_ms[i]),
                SPIKE_CLASSES[self.classes[i]],
            )


@dataclass
class ActionLog:
    """Attack actions (voltage interventions) of one run, on the 1 ms grid."""

    neuron_ids: np.ndarray  # int32
    times_ms: np.ndarray  # float64, integral
    kinds: np.ndarray  # int8, STIMULATE or INHIBIT

    def __len__(self) -> int:
        return int(self.neuron_ids.size)

    def events(self) -> Iterator[tuple[int, float, str]]:
        from .attacks import ACTION_NAMES

        for i in range(len(self)):
            yield (
                int(self.neuron_ids[i]),
                float(self.times_ms[i]),
                ACTION_NAMES[self.kinds[i]],
            )


@dataclass
class VoltageTraces:
    """Per-step voltage samples for the recorded neurons.

    ``values[k, j]`` is the voltage of ``neuron_ids[j]`` entering the spike
    test at step k (after synaptic delivery and any attack action), so spike
    peaks and forced assignments are visible at their exact instants.
    """

    neuron_ids: np.ndarray
    values: np.ndarray  # (n_steps, n_recorded) float64
    dt_ms: float

    def times_ms(self) -> np.ndarray:
        m = round(1.0 / self.dt_ms)
        return np.arange(self.values.shape[0], dtype=np.float64) / m

    def of(self, neuron_id: int) -> np.ndarray:
        idx = np.nonzero(self.neuron_ids == neuron_id)[0]
        if idx.size == 0:
            raise KeyError(f"neuron {neuron_id} was not recorded")
        return self.values[:, idx[0]]


@dataclass
class RunResult:
    """Everything one scenario run produced."""

    train: SpikeTrain
    actions: ActionLog
    min_voltage_mv: float
    fingerprint: str
    comparability: str
    topology_sha: str
    config: ScenarioConfig
    attack: NormalizedAttack | None
    traces: VoltageTraces | None = None
    program: AttackProgram | None = field(default=None, repr=False)


# -- fingerprints --------------------------------------------------------------


def config_canonical(config: ScenarioConfig) -> str:
    """Canonical dynamics-relevant form (recording flags excluded)."""
    drive = config.drive
    drive_txt = (
        ",".join(f"{x:g}" for x in drive) if isinstance(drive, tuple) else f"{drive:g}"
    )
    return (
        f"duration_ms={config.duration_ms};dt_ms={config.dt_ms:g};"
        f"position_duration_ms={config.position_duration_ms};"
        f"n_positions={config.n_positions};drive={drive_txt};seed={config.seed}"
    )


def attack_canonical(attack: NormalizedAttack | None) -> str:
    if attack is None:
        return "none"
    parts = [
        f"kind={attack.kind.value}",
        "targets=" + ",".join(str(t) for t in attack.targets),
        f"seed={attack.seed}",
        f"delta_v_mv={attack.delta_v_mv:g}",
        f"start_ms={attack.start_ms}",
        f"duration_ms={attack.duration_ms}",
    ]
    if attack.period_ms is not None:
        parts.append(f"period_ms={attack.period_ms}")
    if attack.probabilities is not None:
        parts.append("p=" + ",".join(f"{p:g}" for p in attack.probabilities))
    if attack.spo_source is not None:
        parts.append("spo_source=" + ",".join(str(t) for t in attack.spo_source))
        parts.append("spo_target=" + ",".join(str(t) for t in attack.spo_target))
    if attack.sin_target is not None:
        parts.append(f"sin_target={attack.sin_target}")
    return ";".join(parts)


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def run_fingerprints(
    topology: SynapticTopology, config: ScenarioConfig, attack: NormalizedAttack | None
) -> tuple[str, str, str]:
    """(topology_sha, comparability_key, run_fingerprint).

    Runs are comparable for impact metrics iff their comparability keys match
    (same topology, same dynamics-relevant config); the run fingerprint also
    folds in the attack.
    """
    topo_sha = _sha(serialize_topology(topology))
    comparability = _sha(topo_sha + "|" + config_canonical(config))
    fingerprint = _sha(comparability + "|" + attack_canonical(attack))
    return topo_sha, comparability, fingerprint


# -- compiled inner loop ---------------------------------------------------------


@njit(cache=True)
def _advance_block(
    v,
    u,
    pending,
    drive,
    dt,
    n_sub,
    a,
    b,
    c,
    d,
    indptr,
    post_idx,
    weights,
    held,
    step0,
    spike_steps,
    spike_ids,
    n_spikes,
    vmin_out,
    rec_ids,
    trace_out,
):
    """Advance all neurons by one millisecond (``n_sub`` sub-steps).

    The caller has already delivered pending increments and applied attack
    actions for sub-step 0; later sub-steps deliver their own pending here.
    Mirrors the scalar step in ``neuron.izhikevich_step`` bit-for-bit.
    """
    n = v.shape[0]
    n_rec = rec_ids.shape[0]
    for s in range(n_sub):
        if s > 0:
            for i in range(n):
                if pending[i] != 0.0:
                    v[i] += pending[i]
                    pending[i] = 0.0
        for h in range(held.shape[0]):
            v[held[h]] = V_MIN_MV
        for j in range(n_rec):
            trace_out[step0 + s, j] = v[rec_ids[j]]
        for i in range(n):
            if v[i] < vmin_out[0]:
                vmin_out[0] = v[i]
        for i in range(n):
            if v[i] >= V_MAX_MV:
                spike_steps[n_spikes] = step0 + s
                spike_ids[n_spikes] = i
                n_spikes += 1
                v[i] = c
                u[i] = u[i] + d
                for e in range(indptr[i], indptr[i + 1]):
                    pending[post_idx[e]] += weights[e]
            else:
                dv = 0.04 * v[i] * v[i] + 5.0 * v[i] + 140.0 - u[i] + drive[i]
                du = a * (b * v[i] - u[i])
                v[i] = v[i] + dt * dv
                if v[i] < V_MIN_MV:
                    v[i] = V_MIN_MV
                u[i] = u[i] + dt * du
    return n_spikes


_EMPTY_I64 = np.empty(0, dtype=np.int64)


# -- the run -------------------------------------------------------------------


def run_scenario(
    config: ScenarioConfig,
    topology: SynapticTopology,
    attack: AttackSpec | NormalizedAttack | None = None,
    params: IzhikevichParams | None = None,
    baseline: "RunResult | SpikeTrain | None" = None,
) -> RunResult:
    """Run one scenario and return its classified spike train.

    With an attack, spike classes are resolved against the spontaneous run of
    the same config/topology: pass ``baseline`` to reuse one already computed
    (it must be comparable), otherwise it is computed internally. Deterministic
    for fixed (config.seed, attack seed).
    """
    params = params if params is not None else IzhikevichParams()
    if params.c != V_MIN_MV:
        raise ValidationError("reset voltage c must equal the -65 mV floor")

    normalized: NormalizedAttack | None
    if attack is None:
        normalized = None
    elif isinstance(attack, NormalizedAttack):
        normalized = attack
    else:
        normalized = validate(attack, topology, config)

    if isinstance(baseline, RunResult):
        _, want_comp, _ = run_fingerprints(topology, config, None)
        if baseline.comparability != want_comp:
            raise ValidationError(
                "baseline run is not comparable (different topology/config/seed)"
            )

    n = topology.n_neurons
    m = config.substeps_per_ms
    if config.record_neurons is not None:
        rec_ids = np.asarray(sorted(set(config.record_neurons)), dtype=np.int64)
        if rec_ids.size and (rec_ids.min() < 0 or rec_ids.max() >= n):
            raise ValidationError("record_neurons ids out of range for this topology")
    else:
        rec_ids = np.arange(n, dtype=np.int64)
    if not config.record_voltages:
        rec_ids = _EMPTY_I64

    n_steps = config.duration_ms * m
    trace_out = np.empty((n_steps if rec_ids.size else 0, rec_ids.size))

    v = np.full(n, V_MIN_MV, dtype=np.float64)
    u = params.b * v
    pending = np.zeros(n, dtype=np.float64)
    drive = np.zeros(n, dtype=np.float64)
    n_layer1 = topology.layer_sizes[0]

    indptr, post_idx, weights = topology.csr_by_pre

    cap = 1 << 18
    spike_steps = np.empty(cap, dtype=np.int64)
    spike_ids = np.empty(cap, dtype=np.int64)
    n_spikes = 0
    vmin_out = np.array([np.inf])

    program = AttackProgram(normalized, topology) if normalized is not None else None
    act_ids: list[np.ndarray] = []
    act_ms: list[int] = []
    act_kinds: list[int] = []

    dt = config.dt_ms
    position = -1
    max_block_spikes = n * m + 16
    for ms in range(config.duration_ms):
        if ms // config.position_duration_ms != position:
            position = ms // config.position_duration_ms
            drive[:n_layer1] = config.drive_for_position(position)

        # step order at the grid instant: deliver, then attack, then the kernel
        np.add(v, pending, out=v)
        pending[:] = 0.0

        held = _EMPTY_I64
        if program is not None:
            stim, inhib = program.apply(ms, v)
            if stim.size:
                act_ids.append(stim)
                act_kinds.append(STIMULATE)
                act_ms.append(ms)
            if inhib.size:
                act_ids.append(inhib)
                act_kinds.append(INHIBIT)
                act_ms.append(ms)
            h = program.held_at(ms)
            if h is not None:
                held = h

        if n_spikes > cap - max_block_spikes:
            spike_steps = np.concatenate([spike_steps, np.empty(cap, dtype=np.int64)])
            spike_ids = np.concatenate([spike_ids, np.empty(cap, dtype=np.int64)])
            cap *= 2

        n_spikes = _advance_block(
            v, u, pending, drive, dt, m,
            params.a, params.b, params.c, params.d,
            indptr, post_idx, weights, held,
            ms * m, spike_steps, spike_ids, n_spikes, vmin_out,
            rec_ids, trace_out,
        )

    spike_steps = spike_steps[:n_spikes]
    spike_ids = spike_ids[:n_spikes]

    if act_ids:
        a_counts = [arr.size for arr in act_ids]
        actions = ActionLog(
            neuron_ids=np.concatenate(act_ids).astype(np.int32),
            times_ms=np.repeat(np.array(act_ms, dtype=np.float64), a_counts),
            kinds=np.repeat(np.array(act_kinds, dtype=np.int8), a_counts),
        )
    else:
        actions = ActionLog(
            neuron_ids=np.empty(0, dtype=np.int32),
            times_ms=np.empty(0, dtype=np.float64),
            kinds=np.empty(0, dtype=np.int8),
        )

    classes = _classify(
        spike_steps, spike_ids, m, n, normalized, actions, config, topology, baseline
    )

    train = SpikeTrain(
        neuron_ids=spike_ids.astype(np.int32),
        times_ms=spike_steps / m,
        classes=classes,
        duration_ms=config.duration_ms,
        dt_ms=config.dt_ms,
        layer_sizes=topology.layer_sizes,
    )
    topo_sha, comparability, fingerprint = run_fingerprints(topology, config, normalized)
    traces = (
        VoltageTraces(neuron_ids=rec_ids.astype(np.int32), values=trace_out, dt_ms=dt)
        if rec_ids.size
        else None
    )
    return RunResult(
        train=train,
        actions=actions,
        min_voltage_mv=float(vmin_out[0]),
        fingerprint=fingerprint,
        comparability=comparability,
        topology_sha=topo_sha,
        config=config,
        attack=normalized,
        traces=traces,
        program=program,
    )


def _classify(
    spike_steps: np.ndarray,
    spike_ids: np.ndarray,
    m: int,
    n_neurons: int,
    attack: NormalizedAttack | None,
    actions: ActionLog,
    config: ScenarioConfig,
    topology: SynapticTopology,
    baseline: "RunResult | SpikeTrain | None",
) -> np.ndarray:
    """Spike classes per the attack action log and the spontaneous baseline.

    A spike coinciding with a direct stimulation (inhibition) of that neuron
    at that grid instant is attack-stimulated (attack-inhibited-action); any
    other spike is a consequence when it lies more than 1 ms from every
    baseline spike of the same neuron, else spontaneous.
    """
    classes = np.zeros(spike_steps.size, dtype=np.int8)
    if attack is None or spike_steps.size == 0:
        return classes

    if baseline is None:
        base_cfg = ScenarioConfig(
            duration_ms=config.duration_ms,
            dt_ms=config.dt_ms,
            position_duration_ms=config.position_duration_ms,
            n_positions=config.n_positions,
            drive=config.drive,
            seed=config.seed,
        )
        base_train = run_scenario(base_cfg, topology, attack=None).train
    else:
        base_train = baseline.train if isinstance(baseline, RunResult) else baseline

    spike_keys = spike_steps * n_neurons + spike_ids
    act_steps = (actions.times_ms.astype(np.int64)) * m
    act_keys = act_steps * n_neurons + actions.neuron_ids.astype(np.int64)
    stim_hit = np.isin(spike_keys, act_keys[actions.kinds == STIMULATE])
    inhib_hit = np.isin(spike_keys, act_keys[actions.kinds == INHIBIT])
    classes[stim_hit] = CLASS_STIMULATED
    classes[inhib_hit & ~stim_hit] = CLASS_INHIBITED

    base_steps = np.round(base_train.times_ms * m).astype(np.int64)
    base_ids = base_train.neuron_ids.astype(np.int64)
    rest = np.nonzero(~(stim_hit | inhib_hit))[0]
    tol = m  # 1 ms in steps
    for nid in np.unique(spike_ids[rest]):
        b = np.sort(base_steps[base_ids == nid])
        sel = rest[spike_ids[rest] == nid]
        s = spike_steps[sel]
        if b.size == 0:
            classes[sel] = CLASS_CONSEQUENCE
            continue
        pos = np.searchsorted(b, s)
        left = np.abs(s - b[np.clip(pos - 1, 0, b.size - 1)])
        right = np.abs(s - b[np.clip(pos, 0, b.size - 1)])
        nearest = np.minimum(left, right)
        classes[sel[nearest > tol]] = CLASS_CONSEQUENCE
    return classes
