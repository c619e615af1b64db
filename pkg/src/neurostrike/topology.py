"""Layered feedforward synaptic topology: construction, file I/O, adjacency queries.

Neuron ids are global and 0-based, assigned layer by layer: with layer sizes
(200, 72, 4), layer 1 holds ids 0..199, layer 2 ids 200..271, layer 3 ids
272..275. Synapses connect consecutive layers only and carry a weight in mV,
the instantaneous voltage increment delivered to the postsynaptic neuron one
integration step after a presynaptic spike.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

FILE_HEADER = "pre,post,weight_mv"


class TopologyError(ValueError):
    """Raised for malformed topology files or invariant violations."""


@dataclass(frozen=True)
class SynapticTopology:
    """Immutable layered topology. Synapses are normalized to (pre, post) order."""

    layer_sizes: tuple[int, ...]
    pre: np.ndarray = field(repr=False)
    post: np.ndarray = field(repr=False)
    weight_mv: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        sizes = tuple(int(s) for s in self.layer_sizes)
        if not sizes:
            raise TopologyError("layer_sizes must be non-empty")
        if any(s <= 0 for s in sizes):
            raise TopologyError("layer sizes must all be > 0")
        pre = np.asarray(self.pre, dtype=np.int64)
        post = np.asarray(self.post, dtype=np.int64)
        w = np.asarray(self.weight_mv, dtype=np.float64)
        if not (pre.shape == post.shape == w.shape) or pre.ndim != 1:
            raise TopologyError("pre, post and weight_mv must be 1-d arrays of equal length")

        n = sum(sizes)
        if pre.size:
            if pre.min() < 0 or pre.max() >= n:
                raise TopologyError("pre id out of range")
            if post.min() < 0 or post.max() >= n:
                raise TopologyError("post id out of range")
            starts = np.cumsum((0,) + sizes)
            pre_layer = np.searchsorted(starts, pre, side="right") - 1
            post_layer = np.searchsorted(starts, post, side="right") - 1
            if np.any(post_layer != pre_layer + 1):
                raise TopologyError("synapse must go from layer k to k+1")
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise TopologyError("weights must be finite and >= 0")
            order = np.lexsort((post, pre))
            pre, post, w = pre[order], post[order], w[order]
            keys = pre * n + post
            if np.any(np.diff(keys) == 0):
                raise TopologyError("duplicate synapse (pre, post) pair")

        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "pre", pre)
        object.__setattr__(self, "post", post)
        object.__setattr__(self, "weight_mv", w)
        self.pre.setflags(write=False)
        self.post.setflags(write=False)
        self.weight_mv.setflags(write=False)

    # -- structure queries ---------------------------------------------------

    @property
    def n_neurons(self) -> int:
        return sum(self.layer_sizes)

    @property
    def n_synapses(self) -> int:
        return int(self.pre.size)

    @cached_property
    def layer_offsets(self) -> tuple[int, ...]:
        out, acc = [0], 0
        for s in self.layer_sizes:
            acc += s
            out.append(acc)
        return tuple(out)

    def layer_of(self, neuron_id: int) -> int:
        """0-based layer index of a neuron id."""
        if not 0 <= neuron_id < self.n_neurons:
            raise ValueError(f"neuron id {neuron_id} out of range")
        offs = self.layer_offsets
        for k in range(len(self.layer_sizes)):
            if neuron_id < offs[k + 1]:
                return k
        raise AssertionError("unreachable")

    def layer_ids(self, layer: int) -> np.ndarray:
        """All neuron ids in a 0-based layer."""
        if not 0 <= layer < len(self.layer_sizes):
            raise ValueError(f"layer {layer} out of range")
        offs = self.layer_offsets
        return np.arange(offs[layer], offs[layer + 1], dtype=np.int64)

    @property
    def synapses(self) -> list[tuple[int, int, float]]:
        """Synapses as (pre, post, weight_mv) tuples in normalized order."""
        return [
            (int(p), int(q), float(w))
            for p, q, w in zip(self.pre, self.post, self.weight_mv)
        ]

    @cached_property
    def csr_by_pre(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(indptr, post, weight) adjacency grouped by presynaptic id."""
        indptr = np.zeros(self.n_neurons + 1, dtype=np.int64)
        np.add.at(indptr, self.pre + 1, 1)
        return np.cumsum(indptr), self.post.copy(), self.weight_mv.copy()

    def presynaptic_of(self, target: int) -> np.ndarray:
        """Sorted ids of neurons with a synapse onto ``target``.

        The target must live in layer 2 or deeper; layer-1 neurons have no
        presynaptic layer.
        """
        if not 0 <= target < self.n_neurons:
            raise ValueError(f"neuron id {target} out of range")
        if self.layer_of(target) == 0:
            raise ValueError(f"neuron {target} is in layer 1: no presynaptic layer")
        return np.sort(self.pre[self.post == target])


# -- serialization -----------------------------------------------------------


def serialize_topology(topology: SynapticTopology) -> str:
    """Canonical text form: layer header comment, column header, sorted rows.

    Weights are written with 6 decimals; generated topologies quantize their
    weights at generation time so serialize/load round-trips are exact.
    """
    lines = ["# layers: " + ",".join(str(s) for s in topology.layer_sizes), FILE_HEADER]
    for p, q, w in zip(topology.pre, topology.post, topology.weight_mv):
        lines.append(f"{p},{q},{w:.6f}")
    return "\n".join(lines) + "\n"


def save_topology(topology: SynapticTopology, path: str | Path) -> None:
    Path(path).write_text(serialize_topology(topology), encoding="utf-8")


def parse_topology(text: str) -> SynapticTopology:
    """Parse the CSV text form, reporting the offending line on failure."""
    layer_sizes: tuple[int, ...] | None = None
    offsets: list[int] = []
    rows: list[tuple[int, int, float]] = []
    seen: set[tuple[int, int]] = set()
    saw_header = False

    def layer_of(nid: int) -> int:
        for k in range(len(offsets) - 1):
            if nid < offsets[k + 1]:
                return k
        raise AssertionError("unreachable")

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if saw_header:
                raise TopologyError(f"line {lineno}: comment after column header")
            body = line[1:].strip()
            if body.startswith("layers:"):
                try:
                    layer_sizes = tuple(
                        int(tok) for tok in body[len("layers:"):].split(",") if tok.strip()
                    )
                except ValueError:
                    raise TopologyError(f"line {lineno}: malformed layers header") from None
                if not layer_sizes or any(s <= 0 for s in layer_sizes):
                    raise TopologyError(f"line {lineno}: layer sizes must all be > 0")
                offsets = [0]
                for s in layer_sizes:
                    offsets.append(offsets[-1] + s)
            continue
        if not saw_header:
            if line != FILE_HEADER:
                raise TopologyError(
                    f"line {lineno}: expected column header '{FILE_HEADER}', got '{line}'"
                )
            if layer_sizes is None:
                raise TopologyError(f"line {lineno}: missing '# layers:' header")
            saw_header = True
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise TopologyError(f"line {lineno}: expected 3 comma-separated fields")
        try:
            pre, post, w = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise TopologyError(f"line {lineno}: malformed synapse row") from None
        n = offsets[-1]
        if not 0 <= pre < n:
            raise TopologyError(f"line {lineno}: pre id out of range")
        if not 0 <= post < n:
            raise TopologyError(f"line {lineno}: post id out of range")
        if layer_of(post) != layer_of(pre) + 1:
            raise TopologyError(f"line {lineno}: synapse must go from layer k to k+1")
        if (pre, post) in seen:
            raise TopologyError(f"line {lineno}: duplicate synapse (pre, post) pair")
        seen.add((pre, post))
        if not math.isfinite(w) or w < 0:
            raise TopologyError(f"line {lineno}: weight must be finite and >= 0")
        rows.append((pre, post, w))

    if layer_sizes is None:
        raise TopologyError("missing '# layers:' header")
    if not saw_header:
        raise TopologyError(f"missing column header '{FILE_HEADER}'")
    return SynapticTopology(
        layer_sizes=layer_sizes,
        pre=np.array([r[0] for r in rows], dtype=np.int64),
        post=np.array([r[1] for r in rows], dtype=np.int64),
        weight_mv=np.array([r[2] for r in rows], dtype=np.float64),
    )


def load_topology(source: str | Path) -> SynapticTopology:
    """Load a topology file. Raises TopologyError naming the bad line."""
    return parse_topology(Path(source).read_text(encoding="utf-8"))


# -- generation --------------------------------------------------------------


def generate_topology(
    layer_sizes: tuple[int, ...] | list[int],
    density: float = 0.3,
    weight_max_mv: float = 4.0,
    seed: int = 0,
) -> SynapticTopology:
    """Seeded surrogate topology between consecutive layers.

    Each candidate edge between layers k and k+1 is kept with probability
    ``density``; every post-neuron is then guaranteed at least one incoming
    synapse. Weights are uniform in (0, weight_max_mv], quantized to 6
    decimals so the file round-trip is exact. Deterministic for a fixed seed.
    """
    sizes = tuple(int(s) for s in layer_sizes)
    if not sizes:
        raise ValueError("layer_sizes must be non-empty")
    if not 0 < density <= 1:
        raise ValueError("density must be in (0, 1]")
    if not weight_max_mv > 0:
        raise ValueError("weight_max_mv must be > 0")

    rng = np.random.default_rng(seed)
    offs = [0]
    for s in sizes:
        offs.append(offs[-1] + s)

    pres: list[int] = []
    posts: list[int] = []
    for k in range(len(sizes) - 1):
        a, b = sizes[k], sizes[k + 1]
        keep = rng.random((a, b)) < density
        # every post-neuron needs >= 1 incoming synapse
        for j in range(b):
            if not keep[:, j].any():
                keep[int(rng.integers(a)), j] = True
        src, dst = np.nonzero(keep)
        pres.extend((src + offs[k]).tolist())
        posts.extend((dst + offs[k + 1]).tolist())

    pre = np.array(pres, dtype=np.int64)
    post = np.array(posts, dtype=np.int64)
    order = np.lexsort((post, pre))
    pre, post = pre[order], post[order]
    raw = weight_max_mv * (1.0 - rng.random(pre.size))
    # quantize through the text form so serialize -> load is an exact identity;
    # keep the (0, weight_max] contract when a draw rounds down to 0
    weights = np.array(
        [float(f"{w:.6f}") or 1e-6 for w in raw], dtype=np.float64
    )
    return SynapticTopology(layer_sizes=sizes, pre=pre, post=post, weight_mv=weights)
