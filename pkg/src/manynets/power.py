"""Monte-Carlo power analysis and per-network Fisher information.

A :class:`PowerScenario` describes a study design: how many networks to
sample (a grid of S values), the size and edge count of each network, how
node attributes are assigned, the generating coefficients, and how each
replicate is fitted and tested.  :func:`empirical_power` estimates the
rejection rate of the Wald test of one coefficient for every S on the grid,
with binomial MC error, excluding (and counting) replicates whose fit fails.

Simulation can either condition on the edge count ``m`` (the default) or run
free with the edge-count coefficient calibrated so the expected edge count
equals ``m``.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import norm

from .errors import (
    CollinearityError,
    DataError,
    DegeneracyError,
    EnumerationBoundError,
    NonconvergenceError,
)
from .estimation import FitResult, exact_mle, mcmc_mle, mple
from .model import Modifier, ModelSpec, Offset, StatTerm, term
from .networks import Network, NetworkAttributes, NetworkSample, NodeAttributes, dyad_count
from .rng import substream
from .sampling import Constraint, FREE, SimConfig, exact_sample, moment_engine
from .stats import design_vector

FIT_METHODS = ("exact", "mple", "mcmc")


@dataclass(frozen=True)
class AttributeRule:
    """How node attributes are assigned to the nodes of each network."""

    kind: str = "balanced-gender"
    nodes: tuple = ()

    def __post_init__(self):
        if self.kind not in ("balanced-gender", "explicit"):
            raise DataError(f"unknown attribute rule {self.kind!r}")
        if self.kind == "explicit" and not self.nodes:
            raise DataError("explicit attribute rule needs node records")

    def build(self, n: int) -> tuple[NodeAttributes, ...]:
        if self.kind == "balanced-gender":
            # split as evenly as possible: n - n//2 female, n//2 male
            genders = ["F"] * (n - n // 2) + ["M"] * (n // 2)
            return tuple(NodeAttributes(group="P", gender=g) for g in genders)
        if len(self.nodes) != n:
            raise DataError(f"explicit rule has {len(self.nodes)} nodes, scenario has n={n}")
        return tuple(
            NodeAttributes(group=o.get("group", "P"), gender=o.get("gender", ""))
            for o in self.nodes
        )


@dataclass(frozen=True)
class PowerScenario:
    """Design description for an empirical power study."""

    S_grid: tuple[int, ...]
    n: int
    replicates: int
    seed: int
    theta_h1: tuple[tuple[str, float], ...]
    m: int | None = None
    conditional: bool = True
    attribute_gen: AttributeRule = AttributeRule()
    test_term: str = "match.gender"
    alpha: float = 0.05
    fit_method: str = "exact"

    def __post_init__(self):
        if not self.S_grid or list(self.S_grid) != sorted(set(self.S_grid)):
            raise DataError("S_grid must be nonempty and strictly increasing")
        if any(s < 1 for s in self.S_grid):
            raise DataError("S values must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise DataError("alpha must be in (0, 1)")
        if self.replicates < 1:
            raise DataError("replicates must be >= 1")
        if self.fit_method not in FIT_METHODS:
            raise DataError(f"fit_method must be one of {FIT_METHODS}")
        if self.conditional and self.m is None:
            raise DataError("conditional simulation needs an edge count m")
        if self.m is not None and not 0 <= self.m <= dyad_count(self.n):
            raise DataError(f"m={self.m} outside [0, {dyad_count(self.n)}] for n={self.n}")

    @property
    def theta_map(self) -> dict[str, float]:
        return dict(self.theta_h1)


def power_scenario(
    S_grid: Sequence[int],
    n: int,
    replicates: int,
    seed: int,
    theta_h1: Mapping[str, float],
    **kwargs,
) -> PowerScenario:
    """Scenario factory accepting a plain mapping for the coefficients."""
    attribute_gen = kwargs.pop("attribute_gen", AttributeRule())
    if isinstance(attribute_gen, dict):
        attribute_gen = AttributeRule(
            kind=attribute_gen.get("kind", "balanced-gender"),
            nodes=tuple(attribute_gen.get("nodes", ())),
        )
    return PowerScenario(
        S_grid=tuple(int(s) for s in S_grid),
        n=int(n),
        replicates=int(replicates),
        seed=int(seed),
        theta_h1=tuple(sorted((str(k), float(v)) for k, v in theta_h1.items())),
        attribute_gen=attribute_gen,
        **kwargs,
    )


@dataclass(frozen=True)
class PowerPoint:
    S: int
    p_hat: float
    mcse: float
    rejects: int
    failures: int
    used: int


@dataclass(frozen=True)
class PowerCurve:
    points: tuple[PowerPoint, ...]
    scenario: PowerScenario


def fit_model_for(scenario: PowerScenario) -> ModelSpec:
    """The model fitted in each replicate: gender homophily, plus an
    edge-count term when simulation is unconstrained."""
    terms = []
    if not scenario.conditional:
        terms.append(term(StatTerm.edges(), Modifier.one()))
    terms.append(term(StatTerm.match("gender"), Modifier.one()))
    return ModelSpec(tuple(terms))


def _template(scenario: PowerScenario) -> Network:
    nodes = scenario.attribute_gen.build(scenario.n)
    mask = (1 << scenario.m) - 1 if scenario.conditional else 0
    attrs = NetworkAttributes(id="template", n_s=scenario.n)
    return Network(scenario.n, mask, nodes, attrs)


def calibrate_edges_coef(
    model: ModelSpec, template: Network, target: float, theta_base: np.ndarray, edges_idx: int
) -> float:
    """Edge-count coefficient making the expected edge count hit ``target``."""
    engine = moment_engine(model, template, FREE)
    theta = theta_base.copy()

    def mean_edges(v: float) -> float:
        theta[edges_idx] = v
        mom = engine.moments(theta)
        # the edges term has modifier one, so its mean is the expected count
        return float(mom.mean[edges_idx])

    lo, hi = -30.0, 30.0
    if not mean_edges(lo) <= target <= mean_edges(hi):
        raise DataError(f"target edge count {target} unreachable for this design")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mean_edges(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    return 0.5 * (lo + hi)


def _generating_setup(scenario: PowerScenario):
    """(model, generating theta, constraint, template) for one scenario."""
    model = fit_model_for(scenario)
    if scenario.test_term not in model.labels:
        raise DataError(
            f"test term {scenario.test_term!r} is not in the fitted model "
            f"{list(model.labels)}"
        )
    template = _template(scenario)
    theta_map = scenario.theta_map
    theta = np.zeros(model.p)
    for k, label in enumerate(model.labels):
        if label in theta_map:
            theta[k] = theta_map[label]
        elif label != "edges":
            raise DataError(f"theta_h1 is missing a value for {label!r}")
    if scenario.conditional:
        constraint = Constraint.fixed_edges(scenario.m)
    else:
        constraint = FREE
        if scenario.m is not None:
            idx = model.index("edges")
            theta[idx] = calibrate_edges_coef(model, template, float(scenario.m), theta, idx)
        elif "edges" not in theta_map:
            raise DataError(
                "free simulation needs either m (to calibrate the edge-count "
                "coefficient) or an explicit 'edges' entry in theta_h1"
            )
    return model, theta, constraint, template


def _wald_reject(fit: FitResult, test_term: str, alpha: float) -> bool:
    k = fit.index(test_term)
    se = fit.se()[k]
    if se <= 0.0:
        raise DegeneracyError(f"zero standard error for {test_term!r}")
    z = fit.theta_hat[k] / se
    return float(2.0 * norm.sf(abs(z))) <= alpha


def _replicate(scenario: PowerScenario, S: int, rep: int) -> bool | None:
    """One replicate; True/False = test decision, None = fit failure."""
    model, theta, constraint, template = _generating_setup(scenario)
    rng = substream(scenario.seed, "power", S, rep)
    nets = []
    for s in range(S):
        draw = exact_sample(model, template, theta, constraint, 1, rng=rng)[0]
        attrs = NetworkAttributes(id=f"net{s:04d}", n_s=scenario.n)
        nets.append(Network(draw.n, draw.dyads, draw.nodes, attrs))
    sample = NetworkSample(tuple(nets), ("P",))
    try:
        if scenario.fit_method == "mple":
            fit = mple(model, sample, constraint)
        elif scenario.fit_method == "exact":
            fit = exact_mle(model, sample, constraint)
        else:
            sim = SimConfig(draws=400, seed=int(substream(scenario.seed, "mcmc-seed", S, rep).integers(2**63)))
            fit = mcmc_mle(model, sample, constraint, sim=sim)
        if not fit.converged:
            return None
        if scenario.fit_method == "mple" and scenario.test_term in fit.dropped:
            raise DataError(f"test term {scenario.test_term!r} was dropped from the fit")
        return _wald_reject(fit, scenario.test_term, scenario.alpha)
    except (NonconvergenceError, CollinearityError, DegeneracyError):
        return None


def _replicate_star(args) -> tuple[int, int, bool | None]:
    scenario, S, rep = args
    return S, rep, _replicate(scenario, S, rep)


def empirical_power(scenario: PowerScenario, workers: int = 1) -> PowerCurve:
    """Estimated rejection rate of the homophily test for each S in the grid."""
    _generating_setup(scenario)  # validate before spawning any work
    jobs = [(scenario, S, rep) for S in scenario.S_grid for rep in range(scenario.replicates)]
    results: dict[tuple[int, int], bool | None] = {}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for S, rep, res in pool.map(_replicate_star, jobs, chunksize=16):
                results[(S, rep)] = res
    else:
        for args in jobs:
            S, rep, res = _replicate_star(args)
            results[(S, rep)] = res

    points = []
    for S in scenario.S_grid:
        outcomes = [results[(S, rep)] for rep in range(scenario.replicates)]
        failures = sum(1 for o in outcomes if o is None)
        used = scenario.replicates - failures
        rejects = sum(1 for o in outcomes if o is True)
        if used == 0:
            raise NonconvergenceError(f"all {scenario.replicates} replicates failed at S={S}")
        p_hat = rejects / used
        mcse = float(np.sqrt(p_hat * (1.0 - p_hat) / used))
        points.append(PowerPoint(S, p_hat, mcse, rejects, failures, used))
    return PowerCurve(tuple(points), scenario)


# ---------------------------------------------------------------------------
# Fisher information


@dataclass(frozen=True)
class FisherInfo:
    matrix: np.ndarray
    mcse: np.ndarray | None
    method: str  # "exact" | "mc"


def fisher_info(
    model: ModelSpec,
    template: Network,
    theta,
    constraint: Constraint = FREE,
    sim: SimConfig | None = None,
    max_states: int | None = None,
) -> FisherInfo:
    """Per-network Fisher information Var(g); exact when the space is
    enumerable, otherwise Monte-Carlo with a reported MC standard error."""
    theta = np.asarray(theta, dtype=float)
    try:
        engine = moment_engine(model, template, constraint, max_states=max_states)
        return FisherInfo(engine.moments(theta).cov, None, "exact")
    except EnumerationBoundError:
        if sim is None:
            raise
    from .sampling import _mh_chain, _start_mask
    from .stats import compile_design

    design = compile_design(model, template)
    burnin, interval = sim.resolved(template.n)
    rng = substream(sim.seed, "fisher")
    masks, _ = _mh_chain(
        design, theta, constraint, burnin, interval, sim.draws, rng, _start_mask(template, constraint)
    )
    stats = np.array([design_vector(model, template.with_dyads(mk)) for mk in masks])
    nb = min(10, len(stats))
    size = len(stats) // nb
    batches = np.array(
        [np.atleast_2d(np.cov(stats[i * size : (i + 1) * size].T, ddof=1)) for i in range(nb)]
    )
    return FisherInfo(
        np.atleast_2d(np.cov(stats.T, ddof=1)),
        batches.std(axis=0, ddof=1) / np.sqrt(nb),
        "mc",
    )


def scaling_regime_offsets(regime: str) -> tuple[Offset, ...]:
    """Offsets pinning the named feature as size-invariant.

    ``density`` needs no offset; ``mean-degree`` adds an edges x log(n)
    offset at -1; ``edge-count`` uses the -2 convention so the expected edge
    count stays O(1) as networks grow.
    """
    if regime == "density":
        return ()
    if regime == "mean-degree":
        return (Offset(term(StatTerm.edges(), Modifier.logn()), -1.0),)
    if regime == "edge-count":
        return (Offset(term(StatTerm.edges(), Modifier.logn()), -2.0),)
    raise DataError(
        f"unknown scaling regime {regime!r}; expected density, mean-degree, or edge-count"
    )
