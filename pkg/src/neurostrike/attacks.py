"""The eight neural cyberattacks: voltage interventions scheduled on a 1 ms grid.

Every attack manipulates membrane voltages of targeted neurons, either as a
single-instant action (FLO, SYB, SIN), a repeating schedule (SCA, FOR, NON)
or a continuous window (JAM, SPO). Specs are validated and normalized against
a concrete topology and scenario before a run; the per-run mutable state
(remaining target lists, recorded traces, random streams) lives in small
program objects owned by a single simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .neuron import V_MAX_MV, V_MIN_MV
from .topology import SynapticTopology

WHOLE_SIMULATION = "whole"

STIMULATE = 0
INHIBIT = 1
ACTION_NAMES = ("stimulate", "inhibit")


class ValidationError(ValueError):
    """Configuration rejected while validating an attack or scenario."""


class AttackKind(str, Enum):
    """Attack identifiers used in specs, scenario files and the CLI."""

    FLO = "FLO"  # flooding: simultaneous stimulation of many neurons, one instant
    JAM = "JAM"  # jamming: hold targets at the voltage floor for a window
    SCA = "SCA"  # scanning: stimulate every target once, one per scheduled instant
    FOR = "FOR"  # selective forwarding: like SCA but inhibiting with a floor clamp
    SPO = "SPO"  # spoofing: record source voltages, replay them onto targets
    SYB = "SYB"  # sybil: reflect voltages to the opposite end of the range
    SIN = "SIN"  # sinkhole: flood the presynaptic sources of a deep target
    NON = "NON"  # nonce: per-instant random stimulate/inhibit/idle per neuron


@dataclass(frozen=True)
class AttackCatalogEntry:
    """Comparison-table row for one attack kind."""

    kind: AttackKind
    impact: tuple[str, ...]
    neurons_per_instant: str
    duration: str
    complexity: str
    note: str = ""


ATTACK_CATALOG: dict[AttackKind, AttackCatalogEntry] = {
    AttackKind.FLO: AttackCatalogEntry(
        AttackKind.FLO, ("Stimulation",), "1 - many", "One instant", "Low"
    ),
    AttackKind.JAM: AttackCatalogEntry(
        AttackKind.JAM, ("Inhibition",), "1 - many", "Time window", "Low"
    ),
    AttackKind.SCA: AttackCatalogEntry(
        AttackKind.SCA, ("Stimulation",), "1", "Time window", "Moderate"
    ),
    AttackKind.FOR: AttackCatalogEntry(
        AttackKind.FOR, ("Recording", "Inhibition"), "1 - many", "Time window", "Moderate"
    ),
    AttackKind.SPO: AttackCatalogEntry(
        AttackKind.SPO,
        ("Recording", "Stimulation", "Inhibition"),
        "1 - many",
        "Time window",
        "High",
    ),
    AttackKind.SYB: AttackCatalogEntry(
        AttackKind.SYB,
        ("Recording", "Stimulation", "Inhibition"),
        "1 - many",
        "One instant",
        "High",
    ),
    AttackKind.SIN: AttackCatalogEntry(
        AttackKind.SIN, ("Stimulation",), "1 - many", "One instant", "Low"
    ),
    AttackKind.NON: AttackCatalogEntry(
        AttackKind.NON,
        ("Recording", "Inhibition"),
        "1 - many",
        "One instant",
        "Low",
        note=(
            "catalog row kept verbatim; the implemented behavior also stimulates "
            "(per-instant stimulate/inhibit/idle) and runs on a repeating schedule"
        ),
    ),
}


@dataclass(frozen=True)
class AttackSpec:
    """User-facing attack description. ``None`` fields take per-kind defaults.

    delta_v_mv is signed: positive for stimulation, negative for inhibition.
    duration_ms accepts an integer millisecond count or ``"whole"`` for
    whole-simulation windows. seed drives random target selection and the
    NON action stream; when omitted the scenario seed is used.
    """

    kind: AttackKind
    targets: tuple[int, ...] | None = None
    count: int | None = None
    seed: int | None = None
    delta_v_mv: float | None = None
    start_ms: int | None = None
    duration_ms: int | str | None = None
    period_ms: int | None = None
    p_stim: float | None = None
    p_inhib: float | None = None
    p_idle: float | None = None
    spo_source: tuple[int, ...] | None = None
    spo_target: tuple[int, ...] | None = None
    sin_target: int | None = None


# Default parameters per attack kind: (count, delta_v_mv, start_ms, duration_ms,
# period_ms, probabilities). ``None`` count on SCA/FOR/NON means "all of layer 1".
_DEFAULTS: dict[AttackKind, tuple] = {
    AttackKind.FLO: (100, 40.0, 50, 1, None, None),
    AttackKind.JAM: (100, None, 10, 50, None, None),
    AttackKind.SCA: (None, 40.0, 10, WHOLE_SIMULATION, None, None),
    AttackKind.FOR: (None, -40.0, 10, WHOLE_SIMULATION, None, None),
    AttackKind.SPO: (100, None, 10, 50, None, None),
    AttackKind.SYB: (100, None, 10, 1, None, None),
    AttackKind.SIN: (None, 40.0, 10, 1, None, None),
    AttackKind.NON: (None, 40.0, 10, WHOLE_SIMULATION, 20, (0.2, 0.2, 0.6)),
}


def default_spec(kind: AttackKind | str, seed: int | None = None) -> AttackSpec:
    """The stock parameterization of one attack kind (targets still random)."""
    return AttackSpec(kind=AttackKind(kind), seed=seed)


@dataclass(frozen=True)
class NormalizedAttack:
    """A fully resolved attack: concrete targets, integral schedule, run seed."""

    kind: AttackKind
    targets: tuple[int, ...]
    seed: int
    delta_v_mv: float
    start_ms: int
    duration_ms: int
    period_ms: int | None
    probabilities: tuple[float, float, float] | None
    spo_source: tuple[int, ...] | None
    spo_target: tuple[int, ...] | None
    sin_target: int | None
    spec: AttackSpec

    @property
    def end_ms(self) -> int:
        return self.start_ms + self.duration_ms

    @property
    def window_ms(self) -> tuple[int, int]:
        """Grey-band window for rasters: [start, end) in ms."""
        return self.start_ms, self.end_ms


def _require_grid_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        else:
            raise ValidationError(f"{name} must be an integer millisecond value")
    return int(value)


def _resolve_targets(
    spec: AttackSpec, topology: SynapticTopology, count_default, rng: np.random.Generator
) -> tuple[int, ...]:
    layer1 = topology.layer_ids(0)
    if spec.targets is not None:
        targets = tuple(sorted(int(t) for t in spec.targets))
        if not targets:
            raise ValidationError("targets must be nonempty")
        if len(set(targets)) != len(targets):
            raise ValidationError("targets must not repeat")
        for t in targets:
            if not 0 <= t < topology.n_neurons:
                raise ValidationError(f"target id {t} out of range")
        return targets
    count = spec.count if spec.count is not None else count_default
    if count is None:  # "all of layer 1"
        return tuple(int(i) for i in layer1)
    if not 1 <= count <= layer1.size:
        raise ValidationError(
            f"count must be in [1, {layer1.size}] for random layer-1 selection"
        )
    chosen = rng.choice(layer1, size=count, replace=False)
    return tuple(int(i) for i in np.sort(chosen))


def validate(spec: AttackSpec, topology: SynapticTopology, config) -> NormalizedAttack:
    """Check an AttackSpec against a topology and scenario, filling defaults.

    Returns the normalized attack with concrete sorted targets and an integral
    millisecond schedule. Raises ValidationError on any invariant violation.
    """
    kind = AttackKind(spec.kind)
    count_default, delta_default, start_default, duration_default, period_default, probs_default = _DEFAULTS[kind]

    seed = spec.seed if spec.seed is not None else config.seed
    selection_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))

    start_ms = _require_grid_int(
        spec.start_ms if spec.start_ms is not None else start_default, "start_ms"
    )
    if start_ms < 0:
        raise ValidationError("start_ms must be >= 0")

    duration = spec.duration_ms if spec.duration_ms is not None else duration_default
    if isinstance(duration, str):
        if duration != WHOLE_SIMULATION:
            raise ValidationError(f"duration_ms must be a number or '{WHOLE_SIMULATION}'")
        duration_ms = config.duration_ms - start_ms
    else:
        duration_ms = _require_grid_int(duration, "duration_ms")
    if duration_ms < 1:
        raise ValidationError("duration_ms must be >= 1 ms")
    if start_ms + duration_ms > config.duration_ms:
        raise ValidationError("window exceeds simulation")

    delta = spec.delta_v_mv if spec.delta_v_mv is not None else delta_default
    if delta is None:
        delta = 0.0
    if not math.isfinite(delta):
        raise ValidationError("delta_v_mv must be finite")

    probabilities = None
    spo_source = spo_target = None
    sin_target = None
    period_ms = None

    if kind in (AttackKind.SCA, AttackKind.FOR):
        targets = _resolve_targets(spec, topology, count_default, selection_rng)
        if spec.period_ms is not None:
            period_ms = _require_grid_int(spec.period_ms, "period_ms")
        else:
            # default spacing spreads the sweep over the simulation length
            period_ms = max(1, config.duration_ms // len(targets))
        if period_ms < 1:
            raise ValidationError("period_ms must be >= 1 ms")
        last = start_ms + (len(targets) - 1) * period_ms
        if last >= start_ms + duration_ms:
            raise ValidationError(
                "schedule exceeds the attack window: "
                f"last instant {last} ms >= window end {start_ms + duration_ms} ms"
            )
    elif kind is AttackKind.NON:
        targets = _resolve_targets(spec, topology, count_default, selection_rng)
        period_ms = _require_grid_int(
            spec.period_ms if spec.period_ms is not None else period_default, "period_ms"
        )
        if period_ms < 1:
            raise ValidationError("period_ms must be >= 1 ms")
        probs = (
            spec.p_stim if spec.p_stim is not None else probs_default[0],
            spec.p_inhib if spec.p_inhib is not None else probs_default[1],
            spec.p_idle if spec.p_idle is not None else probs_default[2],
        )
        if any(p < 0 for p in probs):
            raise ValidationError("probabilities must be >= 0")
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ValidationError("probabilities must sum to 1")
        probabilities = probs
    elif kind is AttackKind.SPO:
        if (spec.spo_source is None) != (spec.spo_target is None):
            raise ValidationError("spo_source and spo_target must be given together")
        if spec.spo_source is not None:
            spo_source = tuple(int(i) for i in spec.spo_source)
            spo_target = tuple(int(i) for i in spec.spo_target)
        else:
            count = spec.count if spec.count is not None else count_default
            layer1 = topology.layer_ids(0)
            if not 1 <= 2 * count <= layer1.size:
                raise ValidationError(
                    f"need 2*count distinct layer-1 neurons; count {count} too large"
                )
            drawn = selection_rng.choice(layer1, size=2 * count, replace=False)
            spo_source = tuple(int(i) for i in np.sort(drawn[:count]))
            spo_target = tuple(int(i) for i in np.sort(drawn[count:]))
        if len(spo_source) != len(spo_target):
            raise ValidationError("spo_source and spo_target must have equal length")
        if not spo_source:
            raise ValidationError("spoofing needs at least one source/target pair")
        both = set(spo_source) & set(spo_target)
        if both:
            raise ValidationError(f"spo_source and spo_target must be disjoint, share {sorted(both)}")
        for t in (*spo_source, *spo_target):
            if not 0 <= t < topology.n_neurons:
                raise ValidationError(f"target id {t} out of range")
        # replay occupies the window right after the recording window
        if start_ms + 2 * duration_ms > config.duration_ms:
            raise ValidationError("window exceeds simulation (recording plus replay)")
        targets = spo_target
    elif kind is AttackKind.SIN:
        sin_target = spec.sin_target
        if sin_target is None:
            if len(topology.layer_sizes) < 2:
                raise ValidationError("sinkhole needs a topology with >= 2 layers")
            sin_target = int(topology.layer_offsets[1])  # first neuron of layer 2
        if not 0 <= sin_target < topology.n_neurons:
            raise ValidationError(f"sin_target {sin_target} out of range")
        if topology.layer_of(sin_target) == 0:
            raise ValidationError("sin_target is in layer 1: no presynaptic layer")
        pres = topology.presynaptic_of(sin_target)
        if pres.size == 0:
            raise ValidationError(f"sin_target {sin_target} has no presynaptic neurons")
        targets = tuple(int(i) for i in pres)
    else:  # FLO, JAM, SYB
        targets = _resolve_targets(spec, topology, count_default, selection_rng)

    if spec.period_ms is not None and kind not in (AttackKind.SCA, AttackKind.FOR, AttackKind.NON):
        raise ValidationError(f"{kind.value} does not take a period_ms")

    return NormalizedAttack(
        kind=kind,
        targets=targets,
        seed=int(seed),
        delta_v_mv=float(delta),
        start_ms=start_ms,
        duration_ms=duration_ms,
        period_ms=period_ms,
        probabilities=probabilities,
        spo_source=spo_source,
        spo_target=spo_target,
        sin_target=sin_target,
        spec=spec,
    )


# -- voltage primitives -------------------------------------------------------
#
# These act in place on the engine's voltage array at a single grid instant
# and return nothing; callers know which ids were touched. All of them keep
# every voltage >= V_MIN_MV.


def apply_flooding(v_mv: np.ndarray, targets: np.ndarray, delta_v_mv: float) -> None:
    """Add ``delta_v_mv`` to every target simultaneously."""
    v_mv[targets] += delta_v_mv


def apply_jamming_instant(v_mv: np.ndarray, targets: np.ndarray) -> None:
    """Pin every target to the lowest voltage of the natural range."""
    v_mv[targets] = V_MIN_MV


def apply_scanning_step(
    v_mv: np.ndarray, remaining: list[int], delta_v_mv: float
) -> int:
    """Stimulate the head of the remaining-target list and drop it from the list."""
    target = remaining.pop(0)
    v_mv[target] += delta_v_mv
    return target


def apply_forwarding_step(
    v_mv: np.ndarray, remaining: list[int], delta_v_mv: float
) -> int:
    """Inhibit the head of the remaining-target list, clamped at the floor."""
    target = remaining.pop(0)
    lowered = v_mv[target] - abs(delta_v_mv)
    v_mv[target] = lowered if lowered >= V_MIN_MV else V_MIN_MV
    return target


def apply_sybil(v_mv: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Reflect each target to the opposite voltage within the natural range.

    v := (v_max + v_min) - v, an involution on [-65, 30] mV. Inputs above the
    spike threshold (possible transiently) clamp to the floor. Returns the
    per-target sign of the change (> 0 raised, < 0 lowered, 0 unchanged).
    """
    old = v_mv[targets].copy()
    flipped = (V_MAX_MV + V_MIN_MV) - old
    np.maximum(flipped, V_MIN_MV, out=flipped)
    v_mv[targets] = flipped
    return np.sign(flipped - old)


def apply_sinkhole(
    v_mv: np.ndarray, topology: SynapticTopology, sin_target: int, delta_v_mv: float
) -> np.ndarray:
    """Flood the presynaptic sources of a deep-layer target; returns the set."""
    sources = topology.presynaptic_of(sin_target)
    apply_flooding(v_mv, sources, delta_v_mv)
    return sources


def apply_nonce_step(
    v_mv: np.ndarray,
    ids: np.ndarray,
    delta_v_mv: float,
    probabilities: tuple[float, float, float],
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """One nonce evaluation: per neuron stimulate, inhibit or leave alone.

    One uniform draw per neuron, consumed in ascending id order from ``rng``:
    u < p_stim stimulates (v += |delta|), p_stim <= u < p_stim + p_inhib
    inhibits (v = clamp(v - |delta|)), the rest stay untouched. Returns the
    (stimulated, inhibited) id arrays.
    """
    p_stim, p_inhib, _ = probabilities
    draws = rng.random(ids.size)
    stim = ids[draws < p_stim]
    inhib = ids[(draws >= p_stim) & (draws < p_stim + p_inhib)]
    magnitude = abs(delta_v_mv)
    v_mv[stim] += magnitude
    lowered = v_mv[inhib] - magnitude
    np.maximum(lowered, V_MIN_MV, out=lowered)
    v_mv[inhib] = lowered
    return stim, inhib


# -- per-run attack programs ---------------------------------------------------


class AttackProgram:
    """Per-run scheduler/state for one normalized attack.

    ``held_at(ms)`` names neurons pinned to the floor for the whole
    millisecond (jamming); ``apply(ms, v)`` performs the grid-instant actions
    and returns (stimulated_ids, inhibited_ids) arrays for the action log.
    """

    def __init__(self, attack: NormalizedAttack, topology: SynapticTopology):
        self.attack = attack
        self.topology = topology
        kind = attack.kind
        self._targets = np.asarray(attack.targets, dtype=np.int64)
        self._remaining = list(attack.targets)
        self._instants: set[int] = set()
        self._nonce_rng = None
        self._recorded: dict[int, np.ndarray] = {}
        a = attack
        if kind in (AttackKind.FLO, AttackKind.SYB, AttackKind.SIN):
            self._instants = {a.start_ms}
        elif kind is AttackKind.JAM:
            self._instants = set(range(a.start_ms, a.end_ms))
        elif kind in (AttackKind.SCA, AttackKind.FOR):
            self._instants = {
                a.start_ms + k * a.period_ms for k in range(len(a.targets))
            }
        elif kind is AttackKind.NON:
            self._instants = set(range(a.start_ms, a.end_ms, a.period_ms))
            self._nonce_rng = np.random.default_rng(
                np.random.SeedSequence([a.seed, 1])
            )
        elif kind is AttackKind.SPO:
            # recording plus replay instants
            self._instants = set(range(a.start_ms, a.end_ms + a.duration_ms))
            self._spo_source = np.asarray(a.spo_source, dtype=np.int64)
            self._spo_target = np.asarray(a.spo_target, dtype=np.int64)

    _EMPTY = np.empty(0, dtype=np.int64)

    @property
    def instants(self) -> list[int]:
        return sorted(self._instants)

    def held_at(self, ms: int) -> np.ndarray | None:
        """Targets pinned to the floor throughout this millisecond, if any."""
        a = self.attack
        if a.kind is AttackKind.JAM and a.start_ms <= ms < a.end_ms:
            return self._targets
        return None

    def recorded_trace(self, source: int) -> np.ndarray:
        """Recorded voltage samples of one spoofing source (one per ms instant)."""
        return np.asarray(self._recorded[source])

    def apply(self, ms: int, v_mv: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Run this attack's actions for grid instant ``ms`` (may be a no-op)."""
        if ms not in self._instants:
            return self._EMPTY, self._EMPTY
        a = self.attack
        kind = a.kind
        if kind in (AttackKind.FLO, AttackKind.SIN):
            apply_flooding(v_mv, self._targets, a.delta_v_mv)
            return self._targets, self._EMPTY
        if kind is AttackKind.JAM:
            apply_jamming_instant(v_mv, self._targets)
            return self._EMPTY, self._targets
        if kind is AttackKind.SCA:
            if not self._remaining:
                return self._EMPTY, self._EMPTY
            t = apply_scanning_step(v_mv, self._remaining, a.delta_v_mv)
            return np.array([t], dtype=np.int64), self._EMPTY
        if kind is AttackKind.FOR:
            if not self._remaining:
                return self._EMPTY, self._EMPTY
            t = apply_forwarding_step(v_mv, self._remaining, a.delta_v_mv)
            return self._EMPTY, np.array([t], dtype=np.int64)
        if kind is AttackKind.SYB:
            signs = apply_sybil(v_mv, self._targets)
            return self._targets[signs >= 0], self._targets[signs < 0]
        if kind is AttackKind.NON:
            return apply_nonce_step(
                v_mv, self._targets, a.delta_v_mv, a.probabilities, self._nonce_rng
            )
        if kind is AttackKind.SPO:
            if ms < a.end_ms:  # recording phase
                for src in self._spo_source:
                    self._recorded.setdefault(int(src), []).append(float(v_mv[src]))
                return self._EMPTY, self._EMPTY
            k = ms - a.end_ms  # replay phase
            replay = np.array(
                [self._recorded[int(src)][k] for src in self._spo_source],
                dtype=np.float64,
            )
            old = v_mv[self._spo_target].copy()
            v_mv[self._spo_target] = replay
            raised = replay >= old
            return self._spo_target[raised], self._spo_target[~raised]
        raise AssertionError(f"unhandled attack kind {kind}")
