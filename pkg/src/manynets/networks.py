"""Small undirected networks with node- and network-level attributes.

A :class:`Network` is an undirected simple labeled graph on at most
:data:`MAX_NODES` nodes.  Adjacency is bit-packed: dyad ``(i, j)`` with
``i < j`` occupies bit :func:`dyad_index` of an integer mask, so a whole
household fits in one machine word of dyads and copies are cheap.  All types
here are immutable values; "mutation" means building a modified copy
(:func:`toggle_edge`), which makes everything safe to share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Mapping, Sequence

from .errors import DataError

MAX_NODES = 16

#: The seven age-gender groups used for household contact diaries, shipped as
#: a convenience preset; any taxonomy can be declared in the data instead.
HOUSEHOLD_GROUPS = (
    "Young Child",
    "Preadolescent",
    "Adolescent",
    "Young Adult",
    "Older Female Adult",
    "Older Male Adult",
    "Senior",
)


def dyad_count(n: int) -> int:
    return n * (n - 1) // 2


def dyad_index(n: int, i: int, j: int) -> int:
    """Bit position of the unordered dyad ``{i, j}`` in lexicographic order."""
    if i == j:
        raise DataError(f"self-loop dyad ({i}, {i}) is not allowed")
    if i > j:
        i, j = j, i
    if i < 0 or j >= n:
        raise DataError(f"dyad ({i}, {j}) out of range for {n} nodes")
    return i * (2 * n - i - 1) // 2 + (j - i - 1)


@lru_cache(maxsize=None)
def dyad_pairs(n: int) -> tuple[tuple[int, int], ...]:
    """All unordered node pairs of an ``n``-node graph, in bit order."""
    return tuple((i, j) for i in range(n) for j in range(i + 1, n))


@dataclass(frozen=True)
class NodeAttributes:
    """Attributes of one person: group label, gender, free-form extras."""

    group: str
    gender: str = ""
    extra: Mapping[str, object] = field(default_factory=dict)

    def value(self, name: str):
        """Look up an attribute by name; raises ``KeyError`` when absent."""
        if name == "group":
            return self.group
        if name == "gender":
            if self.gender == "":
                raise KeyError("gender")
            return self.gender
        return self.extra[name]


@dataclass(frozen=True)
class NetworkAttributes:
    """Network-level covariates of one household/diary day."""

    id: str
    n_s: int
    weekend: bool | None = None
    brussels: bool | None = None
    log_pop_density: float | None = None
    child_absent: bool | None = None
    extra: Mapping[str, object] = field(default_factory=dict)

    _KNOWN = ("weekend", "brussels", "log_pop_density", "child_absent")

    def value(self, name: str):
        """Look up a covariate by name; raises ``KeyError`` when absent/unset."""
        if name in self._KNOWN:
            v = getattr(self, name)
            if v is None:
                raise KeyError(name)
            return v
        return self.extra[name]


@dataclass(frozen=True)
class Network:
    """An undirected simple graph plus its node and network attributes."""

    n: int
    dyads: int  # bitmask over dyad_index positions
    nodes: tuple[NodeAttributes, ...]
    attrs: NetworkAttributes

    def __post_init__(self):
        if not (2 <= self.n <= MAX_NODES):
            raise DataError(f"network size must be in [2, {MAX_NODES}], got {self.n}")
        if len(self.nodes) != self.n:
            raise DataError(f"expected {self.n} node records, got {len(self.nodes)}")
        if self.attrs.n_s != self.n:
            raise DataError(
                f"attrs.n_s = {self.attrs.n_s} does not match node count {self.n}"
            )
        if self.dyads < 0 or self.dyads >> dyad_count(self.n):
            raise DataError("adjacency mask has bits outside the dyad range")

    @property
    def edge_count(self) -> int:
        return self.dyads.bit_count()

    def has_edge(self, i: int, j: int) -> bool:
        return bool(self.dyads >> dyad_index(self.n, i, j) & 1)

    def edges(self) -> list[tuple[int, int]]:
        pairs = dyad_pairs(self.n)
        mask = self.dyads
        return [pairs[b] for b in range(dyad_count(self.n)) if mask >> b & 1]

    def neighbor_masks(self) -> list[int]:
        """Per-node bitmask of adjacent node indices."""
        masks = [0] * self.n
        for i, j in self.edges():
            masks[i] |= 1 << j
            masks[j] |= 1 << i
        return masks

    def degrees(self) -> list[int]:
        return [m.bit_count() for m in self.neighbor_masks()]

    def with_dyads(self, dyads: int) -> "Network":
        """Copy of this network with a different adjacency mask."""
        return Network(self.n, dyads, self.nodes, self.attrs)


def build_network(
    nodes: Sequence[NodeAttributes],
    edges: Sequence[tuple[int, int]],
    attrs: NetworkAttributes,
) -> Network:
    """Assemble a network, validating edges against the node list."""
    n = len(nodes)
    if not (2 <= n <= MAX_NODES):
        raise DataError(f"network size must be in [2, {MAX_NODES}], got {n}")
    mask = 0
    for i, j in edges:
        if i == j:
            raise DataError(f"self-loop edge ({i}, {j})")
        if not (0 <= i < n and 0 <= j < n):
            raise DataError(f"edge ({i}, {j}) out of range for {n} nodes")
        bit = 1 << dyad_index(n, i, j)
        if mask & bit:
            raise DataError(f"duplicate edge ({i}, {j})")
        mask |= bit
    return Network(n, mask, tuple(nodes), attrs)


def toggle_edge(net: Network, i: int, j: int) -> Network:
    """Return a copy of ``net`` with the state of dyad ``{i, j}`` flipped."""
    return net.with_dyads(net.dyads ^ (1 << dyad_index(net.n, i, j)))


@dataclass(frozen=True)
class NetworkSample:
    """An ordered sample of networks sharing one group taxonomy."""

    networks: tuple[Network, ...]
    taxonomy: tuple[str, ...]

    def __post_init__(self):
        if len(self.networks) < 1:
            raise DataError("a sample must contain at least one network")
        if len(set(self.taxonomy)) != len(self.taxonomy):
            raise DataError("taxonomy contains duplicate labels")
        seen = set()
        allowed = set(self.taxonomy)
        for net in self.networks:
            if net.attrs.id in seen:
                raise DataError(f"duplicate network id {net.attrs.id!r}")
            seen.add(net.attrs.id)
            for k, node in enumerate(net.nodes):
                if node.group not in allowed:
                    raise DataError(
                        f"network {net.attrs.id!r} node {k}: group {node.group!r} "
                        f"is not in the declared taxonomy"
                    )

    @property
    def size(self) -> int:
        return len(self.networks)

    def __iter__(self) -> Iterator[Network]:
        return iter(self.networks)
