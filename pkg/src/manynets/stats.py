"""Evaluation of model statistics, change statistics, and design vectors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ModelValidationError
from .model import Modifier, ModelSpec, StatTerm
from .networks import Network, NetworkSample, dyad_pairs

__all__ = [
    "eval_stat",
    "change_stat",
    "modifier_value",
    "design_vector",
    "change_vector",
    "offset_change",
    "offset_value",
    "sample_statistic",
    "validate_model",
]


def _node_value(net: Network, idx: int, attr: str):
    try:
        return net.nodes[idx].value(attr)
    except KeyError:
        raise ModelValidationError(
            f"network {net.attrs.id!r} node {idx} has no attribute {attr!r}"
        ) from None


def _mix_indicator(stat: StatTerm, a, b) -> bool:
    # unordered: (a in A and b in B) or (a in B and b in A)
    return (a in stat.cell_a and b in stat.cell_b) or (a in stat.cell_b and b in stat.cell_a)


def eval_stat(stat: StatTerm, net: Network) -> float:
    """Value of a within-network statistic on a network."""
    if stat.kind == "edges":
        return float(net.edge_count)
    if stat.kind == "twostar":
        return float(sum(d * (d - 1) // 2 for d in net.degrees()))
    if stat.kind == "triangle":
        masks = net.neighbor_masks()
        closed = sum((masks[i] & masks[j]).bit_count() for i, j in net.edges())
        return float(closed // 3)
    if stat.kind == "match":
        return float(
            sum(1 for i, j in net.edges() if _node_value(net, i, stat.attr) == _node_value(net, j, stat.attr))
        )
    # mix
    return float(
        sum(
            1
            for i, j in net.edges()
            if _mix_indicator(stat, _node_value(net, i, stat.attr), _node_value(net, j, stat.attr))
        )
    )


def change_stat(stat: StatTerm, net: Network, i: int, j: int) -> float:
    """Change in ``stat`` from toggling dyad ``{i, j}`` on.

    Equal to the statistic with the dyad present minus with it absent,
    regardless of the dyad's current state in ``net``.
    """
    if i == j:
        raise ModelValidationError(f"change statistic undefined for self-loop ({i}, {i})")
    if stat.kind == "edges":
        return 1.0
    if stat.kind == "match":
        return float(_node_value(net, i, stat.attr) == _node_value(net, j, stat.attr))
    if stat.kind == "mix":
        return float(
            _mix_indicator(stat, _node_value(net, i, stat.attr), _node_value(net, j, stat.attr))
        )
    masks = net.neighbor_masks()
    if stat.kind == "twostar":
        # degrees of the endpoints, not counting the toggled dyad itself
        di = (masks[i] & ~(1 << j)).bit_count()
        dj = (masks[j] & ~(1 << i)).bit_count()
        return float(di + dj)
    # triangle: one new closed triple per common neighbor
    return float((masks[i] & masks[j]).bit_count())


def modifier_value(mod: Modifier, attrs) -> float:
    """Scalar value of a network-level modifier."""
    if mod.kind == "one":
        return 1.0
    if mod.kind == "logn":
        return math.log(attrs.n_s)
    if mod.kind == "logn2":
        return math.log(attrs.n_s) ** 2
    try:
        v = attrs.value(mod.name)
    except KeyError:
        raise ModelValidationError(
            f"network {attrs.id!r} has no attribute {mod.name!r} required by a modifier"
        ) from None
    if mod.kind == "flag":
        return 1.0 if v else 0.0
    return float(v)


def design_vector(model: ModelSpec, net: Network) -> np.ndarray:
    """Per-network sufficient statistic: stat values times modifier values."""
    return np.array(
        [eval_stat(t.stat, net) * modifier_value(t.mod, net.attrs) for t in model.terms]
    )


def change_vector(model: ModelSpec, net: Network, i: int, j: int) -> np.ndarray:
    return np.array(
        [change_stat(t.stat, net, i, j) * modifier_value(t.mod, net.attrs) for t in model.terms]
    )


def offset_change(model: ModelSpec, net: Network, i: int, j: int) -> float:
    return float(
        sum(
            o.coef * change_stat(o.term.stat, net, i, j) * modifier_value(o.term.mod, net.attrs)
            for o in model.offsets
        )
    )


def offset_value(model: ModelSpec, net: Network) -> float:
    """Fixed-coefficient offset contribution of a whole network."""
    return float(
        sum(
            o.coef * eval_stat(o.term.stat, net) * modifier_value(o.term.mod, net.attrs)
            for o in model.offsets
        )
    )


def sample_statistic(model: ModelSpec, sample: NetworkSample) -> np.ndarray:
    """Joint sufficient statistic: sum of design vectors over the sample."""
    validate_model(model, sample)
    total = np.zeros(model.p)
    for net in sample.networks:
        total += design_vector(model, net)
    return total


def validate_model(model: ModelSpec, data: NetworkSample | Network) -> None:
    """Check that every attribute the model references exists in the data."""
    nets = data.networks if isinstance(data, NetworkSample) else (data,)
    taxonomy = set(data.taxonomy) if isinstance(data, NetworkSample) else None
    parts = [(t.stat, t.mod) for t in model.terms] + [(o.term.stat, o.term.mod) for o in model.offsets]
    for stat, mod in parts:
        if stat.kind == "mix" and taxonomy is not None and stat.attr == "group":
            stray = (stat.cell_a | stat.cell_b) - taxonomy
            if stray:
                raise ModelValidationError(
                    f"mix cells reference labels outside the taxonomy: {sorted(stray)}"
                )
        for net in nets:
            if stat.kind in ("mix", "match"):
                for idx in range(net.n):
                    _node_value(net, idx, stat.attr)
            modifier_value(mod, net.attrs)


# ---------------------------------------------------------------------------
# Compiled per-network designs (internal)
#
# Samplers and estimators need change statistics for every dyad many times
# over.  For dyad-independent statistics the change is a per-dyad constant;
# only 2-stars and triangles depend on the rest of the graph.  Compiling a
# network once into constant blocks plus a list of dynamic columns keeps the
# hot loops cheap.


@dataclass
class DyadDesign:
    net: Network
    pairs: tuple[tuple[int, int], ...]
    const: np.ndarray  # (n_dyads, p) change contributions of dyad-independent terms
    offset_const: np.ndarray  # (n_dyads,) dyad-independent offset change
    dyn_cols: list[tuple[int, StatTerm, float]]  # (column, stat, modifier value)
    dyn_offsets: list[tuple[float, StatTerm]]  # (coef * modifier value, stat)

    @property
    def has_dynamic(self) -> bool:
        return bool(self.dyn_cols or self.dyn_offsets)

    def eta_const(self, theta: np.ndarray) -> np.ndarray:
        """Per-dyad log-odds from the dyad-independent part."""
        return self.const @ theta + self.offset_const


def compile_design(model: ModelSpec, net: Network) -> DyadDesign:
    pairs = dyad_pairs(net.n)
    d = len(pairs)
    const = np.zeros((d, model.p))
    offset_const = np.zeros(d)
    dyn_cols = []
    dyn_offsets = []
    for k, t in enumerate(model.terms):
        mv = modifier_value(t.mod, net.attrs)
        if t.stat.dyad_independent:
            if mv != 0.0:
                const[:, k] = [change_stat(t.stat, net, i, j) * mv for i, j in pairs]
        else:
            dyn_cols.append((k, t.stat, mv))
    for o in model.offsets:
        mv = modifier_value(o.term.mod, net.attrs)
        if o.term.stat.dyad_independent:
            if mv != 0.0:
                offset_const += np.array(
                    [o.coef * change_stat(o.term.stat, net, i, j) * mv for i, j in pairs]
                )
        else:
            dyn_offsets.append((o.coef * mv, o.term.stat))
    return DyadDesign(net, pairs, const, offset_const, dyn_cols, dyn_offsets)
