"""File formats: JSONL network samples and JSON fit results.

Sample files are JSON Lines: a header object ``{"taxonomy": [...]}`` followed
by one object per network::

    {"id": "h001",
     "nodes": [{"group": "Young Child", "gender": "F"}, ...],
     "edges": [[0, 1], ...],
     "attrs": {"weekend": true, "brussels": false, "log_pop_density": 6.2}}

Node order defines the indices used in ``edges``.  Network size is the length
of ``nodes``; optional attributes may simply be omitted.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataError
from .networks import Network, NetworkAttributes, NetworkSample, NodeAttributes, build_network

_NODE_FIELDS = ("group", "gender")
_ATTR_FIELDS = ("weekend", "brussels", "log_pop_density", "child_absent")


def _node_from_obj(obj: dict, where: str) -> NodeAttributes:
    if "group" not in obj:
        raise DataError(f"{where}: node record is missing 'group'")
    extra = {k: v for k, v in obj.items() if k not in _NODE_FIELDS}
    return NodeAttributes(group=obj["group"], gender=obj.get("gender", ""), extra=extra)


def _node_to_obj(node: NodeAttributes) -> dict:
    obj = {"group": node.group}
    if node.gender:
        obj["gender"] = node.gender
    obj.update(node.extra)
    return obj


def _network_from_obj(obj: dict, where: str) -> Network:
    for key in ("id", "nodes", "edges"):
        if key not in obj:
            raise DataError(f"{where}: network record is missing {key!r}")
    nodes = [_node_from_obj(o, where) for o in obj["nodes"]]
    raw = obj.get("attrs", {})
    extra = {k: v for k, v in raw.items() if k not in _ATTR_FIELDS}
    attrs = NetworkAttributes(
        id=str(obj["id"]),
        n_s=len(nodes),
        weekend=raw.get("weekend"),
        brussels=raw.get("brussels"),
        log_pop_density=raw.get("log_pop_density"),
        child_absent=raw.get("child_absent"),
        extra=extra,
    )
    try:
        edges = [(int(i), int(j)) for i, j in obj["edges"]]
    except (TypeError, ValueError) as exc:
        raise DataError(f"{where}: malformed edge list ({exc})") from exc
    try:
        return build_network(nodes, edges, attrs)
    except DataError as exc:
        raise DataError(f"{where}: {exc}") from exc


def _network_to_obj(net: Network) -> dict:
    attrs = {}
    for key in _ATTR_FIELDS:
        v = getattr(net.attrs, key)
        if v is not None:
            attrs[key] = v
    attrs.update(net.attrs.extra)
    return {
        "id": net.attrs.id,
        "nodes": [_node_to_obj(nd) for nd in net.nodes],
        "edges": [[i, j] for i, j in net.edges()],
        "attrs": attrs,
    }


def load_sample(path) -> NetworkSample:
    """Read a JSONL sample file; errors name the offending line."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty sample file")

    def parse(line_no: int, text: str) -> dict:
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: line {line_no}: malformed JSON ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise DataError(f"{path}: line {line_no}: expected a JSON object")
        return obj

    header = parse(1, lines[0])
    if "taxonomy" not in header:
        raise DataError(f"{path}: line 1: header must declare 'taxonomy'")
    taxonomy = tuple(header["taxonomy"])

    networks = []
    for line_no, text in enumerate(lines[1:], start=2):
        obj = parse(line_no, text)
        networks.append(_network_from_obj(obj, f"{path}: line {line_no}"))
    try:
        return NetworkSample(tuple(networks), taxonomy)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from exc


def save_sample(sample: NetworkSample, path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        fh.write(json.dumps({"taxonomy": list(sample.taxonomy)}) + "\n")
        for net in sample.networks:
            fh.write(json.dumps(_network_to_obj(net)) + "\n")


def fit_to_obj(fit) -> dict:
    obj = {
        "labels": list(fit.labels),
        "theta": [float(x) for x in fit.theta_hat],
        "sigma": [[float(x) for x in row] for row in np.atleast_2d(fit.sigma_hat)],
        "loglik_kind": fit.loglik_kind,
        "loglik": float(fit.loglik),
        "aic": float(fit.aic),
        "converged": bool(fit.converged),
        "iterations": int(fit.iterations),
        "sigma_kind": fit.sigma_kind,
    }
    if fit.dropped:
        obj["dropped"] = list(fit.dropped)
    if fit.mcse is not None:
        obj["mcse"] = [float(x) for x in fit.mcse]
    return obj


def fit_from_obj(obj: dict):
    from .estimation import FitResult

    try:
        return FitResult(
            labels=tuple(obj["labels"]),
            theta_hat=np.asarray(obj["theta"], dtype=float),
            sigma_hat=np.asarray(obj["sigma"], dtype=float),
            loglik_kind=obj["loglik_kind"],
            loglik=float(obj["loglik"]),
            aic=float(obj["aic"]),
            converged=bool(obj["converged"]),
            iterations=int(obj.get("iterations", 0)),
            sigma_kind=obj.get("sigma_kind", "fisher"),
            mcse=None if obj.get("mcse") is None else np.asarray(obj["mcse"], dtype=float),
            dropped=tuple(obj.get("dropped", ())),
        )
    except KeyError as exc:
        raise DataError(f"fit record is missing {exc}") from exc


def save_fit(fit, path) -> None:
    Path(path).write_text(json.dumps(fit_to_obj(fit), indent=2) + "\n")


def load_fit(path):
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed JSON ({exc.msg})") from exc
    return fit_from_obj(obj)
