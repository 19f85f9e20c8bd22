"""Model vocabulary: within-network statistics crossed with network-level modifiers.

A model term is the product of a within-network statistic (edge count,
2-stars, triangles, mixing-cell counts, attribute matches) and a scalar
modifier computed from network-level attributes (1, log n, log^2 n, a 0/1
flag, or a stored real).  A :class:`ModelSpec` is an ordered list of such
terms plus optional offsets with fixed coefficients.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataError, ModelValidationError

STAT_KINDS = ("edges", "twostar", "triangle", "mix", "match")
MOD_KINDS = ("one", "logn", "logn2", "flag", "real")


@dataclass(frozen=True)
class StatTerm:
    """A within-network statistic."""

    kind: str
    attr: str | None = None
    cell_a: frozenset[str] | None = None
    cell_b: frozenset[str] | None = None

    def __post_init__(self):
        if self.kind not in STAT_KINDS:
            raise ModelValidationError(f"unknown statistic kind {self.kind!r}")
        if self.kind == "mix":
            if not self.attr:
                raise ModelValidationError("mix statistic needs an attribute name")
            if not self.cell_a or not self.cell_b:
                raise ModelValidationError("mix cells must be nonempty label sets")
        elif self.kind == "match":
            if not self.attr:
                raise ModelValidationError("match statistic needs an attribute name")
        elif self.attr is not None or self.cell_a is not None or self.cell_b is not None:
            raise ModelValidationError(f"{self.kind} statistic takes no attribute arguments")

    @staticmethod
    def edges() -> "StatTerm":
        return StatTerm("edges")

    @staticmethod
    def twostar() -> "StatTerm":
        return StatTerm("twostar")

    @staticmethod
    def triangle() -> "StatTerm":
        return StatTerm("triangle")

    @staticmethod
    def mix(attr: str, cell_a: Iterable[str], cell_b: Iterable[str]) -> "StatTerm":
        return StatTerm("mix", attr=attr, cell_a=frozenset(cell_a), cell_b=frozenset(cell_b))

    @staticmethod
    def match(attr: str) -> "StatTerm":
        return StatTerm("match", attr=attr)

    @property
    def dyad_independent(self) -> bool:
        """True when the change statistic never depends on other dyads."""
        return self.kind not in ("twostar", "triangle")

    def default_label(self) -> str:
        if self.kind == "mix":
            a = "|".join(sorted(self.cell_a))
            b = "|".join(sorted(self.cell_b))
            a, b = sorted((a, b))
            return f"mix.{self.attr}.{a}~{b}"
        if self.kind == "match":
            return f"match.{self.attr}"
        return self.kind


@dataclass(frozen=True)
class Modifier:
    """A per-network scalar multiplying a statistic."""

    kind: str
    name: str | None = None

    def __post_init__(self):
        if self.kind not in MOD_KINDS:
            raise ModelValidationError(f"unknown modifier kind {self.kind!r}")
        if self.kind in ("flag", "real") and not self.name:
            raise ModelValidationError(f"{self.kind} modifier needs an attribute name")
        if self.kind in ("one", "logn", "logn2") and self.name is not None:
            raise ModelValidationError(f"{self.kind} modifier takes no attribute name")

    @staticmethod
    def one() -> "Modifier":
        return Modifier("one")

    @staticmethod
    def logn() -> "Modifier":
        return Modifier("logn")

    @staticmethod
    def logn2() -> "Modifier":
        return Modifier("logn2")

    @staticmethod
    def flag(name: str) -> "Modifier":
        return Modifier("flag", name=name)

    @staticmethod
    def real(name: str) -> "Modifier":
        return Modifier("real", name=name)

    def default_label(self) -> str:
        if self.kind == "one":
            return ""
        if self.kind in ("flag", "real"):
            return self.name
        return self.kind


@dataclass(frozen=True)
class ModelTerm:
    stat: StatTerm
    mod: Modifier
    label: str

    def signature(self) -> tuple:
        return (self.stat, self.mod)


@dataclass(frozen=True)
class Offset:
    """A model term with a fixed, user-supplied coefficient."""

    term: ModelTerm
    coef: float


def term(stat: StatTerm, mod: Modifier | None = None, label: str | None = None) -> ModelTerm:
    """Build a term, deriving a label from its parts when none is given."""
    mod = mod or Modifier.one()
    if label is None:
        parts = [stat.default_label()]
        m = mod.default_label()
        if m:
            parts.append(m)
        label = ".".join(parts)
    return ModelTerm(stat, mod, label)


@dataclass(frozen=True)
class ModelSpec:
    """Ordered free terms plus fixed-coefficient offsets."""

    terms: tuple[ModelTerm, ...]
    offsets: tuple[Offset, ...] = ()

    def __post_init__(self):
        if len(self.terms) < 1:
            raise ModelValidationError("a model needs at least one free term")
        labels = [t.label for t in self.terms]
        if len(set(labels)) != len(labels):
            dupes = sorted({l for l in labels if labels.count(l) > 1})
            raise ModelValidationError(f"duplicate term labels: {dupes}")
        sigs = [t.signature() for t in self.terms] + [o.term.signature() for o in self.offsets]
        if len(set(sigs)) != len(sigs):
            raise ModelValidationError(
                "the same (statistic, modifier) pair appears more than once "
                "across terms and offsets"
            )

    @property
    def p(self) -> int:
        return len(self.terms)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(t.label for t in self.terms)

    def index(self, label: str) -> int:
        for k, t in enumerate(self.terms):
            if t.label == label:
                return k
        raise KeyError(f"no term labeled {label!r}; have {list(self.labels)}")

    @property
    def dyad_independent(self) -> bool:
        parts = [t.stat for t in self.terms] + [o.term.stat for o in self.offsets]
        return all(s.dyad_independent for s in parts)


def model_spec(terms: Sequence[ModelTerm], offsets: Sequence[Offset] = ()) -> ModelSpec:
    return ModelSpec(tuple(terms), tuple(offsets))


# ---------------------------------------------------------------------------
# JSON representation

def _stat_to_obj(stat: StatTerm) -> dict:
    obj = {"kind": stat.kind}
    if stat.attr is not None:
        obj["attr"] = stat.attr
    if stat.kind == "mix":
        obj["cellA"] = sorted(stat.cell_a)
        obj["cellB"] = sorted(stat.cell_b)
    return obj


def _stat_from_obj(obj: dict) -> StatTerm:
    kind = obj.get("kind")
    if kind == "mix":
        return StatTerm.mix(obj.get("attr"), obj.get("cellA", ()), obj.get("cellB", ()))
    if kind == "match":
        return StatTerm.match(obj.get("attr"))
    if kind in ("edges", "twostar", "triangle"):
        return StatTerm(kind)
    raise DataError(f"unknown statistic kind {kind!r}")


def _mod_to_obj(mod: Modifier) -> dict:
    obj = {"kind": mod.kind}
    if mod.name is not None:
        obj["name"] = mod.name
    return obj


def _mod_from_obj(obj: dict) -> Modifier:
    kind = obj.get("kind")
    if kind in ("flag", "real"):
        return Modifier(kind, name=obj.get("name"))
    if kind in ("one", "logn", "logn2"):
        return Modifier(kind)
    raise DataError(f"unknown modifier kind {kind!r}")


def model_to_obj(model: ModelSpec) -> dict:
    return {
        "terms": [
            {"stat": _stat_to_obj(t.stat), "mod": _mod_to_obj(t.mod), "label": t.label}
            for t in model.terms
        ],
        "offsets": [
            {"stat": _stat_to_obj(o.term.stat), "mod": _mod_to_obj(o.term.mod), "coef": o.coef}
            for o in model.offsets
        ],
    }


def model_from_obj(obj: dict) -> ModelSpec:
    try:
        terms = []
        for t in obj["terms"]:
            stat = _stat_from_obj(t["stat"])
            mod = _mod_from_obj(t.get("mod", {"kind": "one"}))
            terms.append(term(stat, mod, t.get("label")))
        offsets = []
        for o in obj.get("offsets", ()):
            stat = _stat_from_obj(o["stat"])
            mod = _mod_from_obj(o.get("mod", {"kind": "one"}))
            offsets.append(Offset(term(stat, mod), float(o["coef"])))
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed model spec: {exc}") from exc
    try:
        return ModelSpec(tuple(terms), tuple(offsets))
    except ModelValidationError as exc:
        raise DataError(str(exc)) from exc


def save_model(model: ModelSpec, path) -> None:
    Path(path).write_text(json.dumps(model_to_obj(model), indent=2) + "\n")


def load_model(path) -> ModelSpec:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed JSON ({exc.msg})") from exc
    return model_from_obj(obj)
