"""Simulation-based residuals and goodness-of-fit summaries.

For each network the fitted model is simulated at the estimated coefficients
under that network's constraint; the residual of a raw statistic is
``(observed - simulated mean) / simulated sd``.  Regressing these residuals
on a network-level covariate flags between-network lack of fit and suggests
predictors worth adding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError
from .estimation import FitResult
from .inference import TestResult, ols_slope_test
from .model import ModelSpec, StatTerm
from .networks import NetworkSample, dyad_count
from .rng import substream
from .sampling import Constraint, auto_draws
from .estimation import normalize_constraints
from .stats import eval_stat, validate_model


@dataclass(frozen=True)
class ResidualRow:
    network_id: str
    stat_label: str
    observed: float
    sim_mean: float
    sim_sd: float
    residual: float


@dataclass(frozen=True)
class ResidualTable:
    rows: tuple[ResidualRow, ...]
    excluded: tuple[tuple[str, str], ...]  # (network id, statistic) with zero sim sd
    M: int
    seed: int


def _stat_labels(statistics: Sequence[StatTerm]) -> list[str]:
    labels = [s.default_label() for s in statistics]
    if len(set(labels)) != len(labels):
        raise DataError("duplicate statistics requested")
    if not labels:
        raise DataError("no statistics requested")
    return labels


def _simulate_stat_draws(fit, model, sample, statistics, M, seed, cons, what):
    """Per-network (M x k) matrices of raw statistic values at theta-hat."""
    if tuple(fit.labels) != model.labels:
        raise DataError("fit labels do not match the model")
    validate_model(model, sample)
    per_net = []
    for s, (net, constraint) in enumerate(zip(sample.networks, cons)):
        rng = substream(seed, what, s)
        draws = auto_draws(model, net, fit.theta_hat, constraint, M, rng)
        vals = np.empty((M, len(statistics)))
        for r, drawn in enumerate(draws):
            for c, stat in enumerate(statistics):
                vals[r, c] = eval_stat(stat, drawn)
        per_net.append(vals)
    return per_net


def simulated_residuals(
    fit: FitResult,
    model: ModelSpec,
    sample: NetworkSample,
    statistics: Sequence[StatTerm],
    M: int,
    seed: int,
    constraints: Constraint | Sequence[Constraint] | None = None,
) -> ResidualTable:
    """Standardized per-network residuals of raw statistics at theta-hat."""
    if M < 2:
        raise DataError("need at least 2 simulation draws per network")
    labels = _stat_labels(statistics)
    cons = normalize_constraints(sample, constraints)
    per_net = _simulate_stat_draws(fit, model, sample, statistics, M, seed, cons, "residuals")
    rows, excluded = [], []
    for net, vals in zip(sample.networks, per_net):
        for c, (stat, label) in enumerate(zip(statistics, labels)):
            obs = eval_stat(stat, net)
            mean = float(vals[:, c].mean())
            sd = float(vals[:, c].std(ddof=1))
            if sd <= 0.0:
                excluded.append((net.attrs.id, label))
                continue
            rows.append(
                ResidualRow(net.attrs.id, label, obs, mean, sd, (obs - mean) / sd)
            )
    return ResidualTable(tuple(rows), tuple(excluded), M, seed)


def residual_regression(
    table: ResidualTable,
    stat_label: str,
    covariate: Mapping[str, float],
    label: str = "",
) -> TestResult:
    """OLS of one statistic's residuals on a per-network covariate.

    Two-sided t test on the slope with S' - 2 degrees of freedom, where S' is
    the number of networks with finite residuals and a covariate value.
    """
    rows = [r for r in table.rows if r.stat_label == stat_label and np.isfinite(r.residual)]
    if not rows:
        raise DataError(f"no residual rows for statistic {stat_label!r}")
    missing = [r.network_id for r in rows if r.network_id not in covariate]
    if missing:
        raise DataError(f"covariate has no value for networks {missing[:5]}")
    x = np.array([float(covariate[r.network_id]) for r in rows])
    y = np.array([r.residual for r in rows])
    return ols_slope_test(x, y, label=label or f"{stat_label} ~ covariate")


@dataclass(frozen=True)
class GofRow:
    scope: str  # network id or "(pooled)"
    stat_label: str
    observed: float
    q025: float
    q500: float
    q975: float
    tail_prop: float  # fraction of draws >= observed


def gof_summary(
    fit: FitResult,
    model: ModelSpec,
    sample: NetworkSample,
    statistics: Sequence[StatTerm],
    M: int,
    seed: int,
    constraints: Constraint | Sequence[Constraint] | None = None,
) -> list[GofRow]:
    """Observed values against simulated percentile envelopes, per network
    and pooled across the sample."""
    if M < 2:
        raise DataError("need at least 2 simulation draws per network")
    labels = _stat_labels(statistics)
    cons = normalize_constraints(sample, constraints)
    per_net = _simulate_stat_draws(fit, model, sample, statistics, M, seed, cons, "gof")
    rows = []
    pooled = np.zeros_like(per_net[0])
    pooled_obs = np.zeros(len(statistics))
    for net, vals in zip(sample.networks, per_net):
        pooled += vals
        for c, (stat, label) in enumerate(zip(statistics, labels)):
            obs = eval_stat(stat, net)
            pooled_obs[c] += obs
            q = np.percentile(vals[:, c], [2.5, 50.0, 97.5])
            rows.append(
                GofRow(
                    net.attrs.id, label, obs, float(q[0]), float(q[1]), float(q[2]),
                    float(np.mean(vals[:, c] >= obs - 1e-12)),
                )
            )
    for c, label in enumerate(labels):
        q = np.percentile(pooled[:, c], [2.5, 50.0, 97.5])
        rows.append(
            GofRow(
                "(pooled)", label, float(pooled_obs[c]), float(q[0]), float(q[1]),
                float(q[2]), float(np.mean(pooled[:, c] >= pooled_obs[c] - 1e-12)),
            )
        )
    return rows
