"""Parameter estimation: pseudolikelihood, exact likelihood, and MC likelihood.

The pseudolikelihood treats every dyad of every network as a Bernoulli
observation with log-odds ``theta . change_vector + offset_change`` and is
maximized by iteratively reweighted least squares.  The exact likelihood sums
``theta . g_s + offset_s - log kappa_s(theta)`` over networks, with the
normalizing constants and moments supplied by the sampling backends; Newton
steps are damped by step halving.  The MC variant replaces exact moments with
simulated ones and stops when the observed statistic is matched to within a
tolerance measured in MC standard errors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh
from scipy.special import expit

from .errors import (
    CollinearityError,
    DataError,
    DegeneracyError,
    NonconvergenceError,
    SeparationError,
)
from .model import ModelSpec
from .networks import Network, NetworkSample
from .rng import substream
from .sampling import (
    Constraint,
    FREE,
    SimConfig,
    _mh_chain,
    _start_mask,
    batch_means_se,
    moment_engine,
)
from ._condbern import CondBernoulliSampler
from .stats import (
    compile_design,
    design_vector,
    offset_value,
    sample_statistic,
    validate_model,
)

SCORE_TOL = 1e-8
SEPARATION_BOUND = 20.0
DIVERGENCE_BOUND = 40.0
MAX_HALVINGS = 30


@dataclass(frozen=True)
class FitResult:
    """Estimates, covariance, and fit metadata for one model on one sample."""

    labels: tuple[str, ...]
    theta_hat: np.ndarray
    sigma_hat: np.ndarray
    loglik_kind: str  # "exact" | "pseudo" | "mc-approx"
    loglik: float
    aic: float
    converged: bool
    iterations: int
    sigma_kind: str = "fisher"  # "fisher" | "naive-pseudo" | "mc-fisher"
    mcse: np.ndarray | None = None
    dropped: tuple[str, ...] = ()

    def __post_init__(self):
        p = len(self.labels)
        if self.theta_hat.shape != (p,):
            raise DataError("theta_hat length does not match labels")
        if self.sigma_hat.shape != (p, p):
            raise DataError("sigma_hat must be p x p")

    @property
    def p(self) -> int:
        return len(self.labels)

    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.sigma_hat), 0.0, None))

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"no parameter labeled {label!r}; have {list(self.labels)}") from None


def normalize_constraints(
    sample: NetworkSample, constraints: Constraint | Sequence[Constraint] | None
) -> tuple[Constraint, ...]:
    if constraints is None:
        return tuple(FREE for _ in sample.networks)
    if isinstance(constraints, Constraint):
        return tuple(constraints for _ in sample.networks)
    constraints = tuple(constraints)
    if len(constraints) != sample.size:
        raise DataError(
            f"got {len(constraints)} constraints for {sample.size} networks"
        )
    return constraints


def _collinear_pair(matrix: np.ndarray, labels: Sequence[str]) -> tuple[str, str]:
    """Name the two columns most implicated in a singular information matrix."""
    vals, vecs = eigh(matrix)
    null = np.abs(vecs[:, int(np.argmin(vals))])
    order = np.lexsort((np.arange(len(null)), -null))
    a, b = sorted(order[:2])
    return labels[a], labels[b]


def _invert_info(info: np.ndarray, labels: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """(solve, inverse) for an SPD information matrix, or a named failure."""
    try:
        factor = cho_factor(info)
    except LinAlgError:
        a, b = _collinear_pair(info, labels)
        raise CollinearityError(
            f"singular information matrix; columns {a!r} and {b!r} are collinear",
            terms=(a, b),
        ) from None
    return factor, cho_solve(factor, np.eye(info.shape[0]))


# ---------------------------------------------------------------------------
# Pseudolikelihood


def pseudo_data(
    model: ModelSpec,
    sample: NetworkSample,
    constraints: Constraint | Sequence[Constraint] | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stacked (X, y, offset) over every dyad of every network."""
    validate_model(model, sample)
    from .sampling import _dynamic_delta, _dynamic_offset_delta

    rows, ys, offs = [], [], []
    for net in sample.networks:
        design = compile_design(model, net)
        d = len(design.pairs)
        X = design.const.copy()
        off = design.offset_const.copy()
        if design.has_dynamic:
            nbr = net.neighbor_masks()
            for b, (i, j) in enumerate(design.pairs):
                delta = _dynamic_delta(design, nbr, i, j)
                for c, (col, _, _) in enumerate(design.dyn_cols):
                    X[b, col] = delta[c]
                off[b] += _dynamic_offset_delta(design, nbr, i, j)
        rows.append(X)
        offs.append(off)
        ys.append(np.array([float(net.dyads >> b & 1) for b in range(d)]))
    return np.vstack(rows), np.concatenate(ys), np.concatenate(offs)


def _logistic_loglik(eta: np.ndarray, y: np.ndarray) -> float:
    return float(y @ eta - np.logaddexp(0.0, eta).sum())


def mple(
    model: ModelSpec,
    sample: NetworkSample,
    constraints: Constraint | Sequence[Constraint] | None = None,
) -> FitResult:
    """Maximum pseudolikelihood fit by iteratively reweighted least squares.

    Under an all-networks fixed-edge-count constraint the plain edge-count
    term carries no information; its column is dropped from the pseudo-design
    and reported in ``dropped``.
    """
    cons = normalize_constraints(sample, constraints)
    X, y, off = pseudo_data(model, sample, constraints)
    labels = list(model.labels)
    dropped: tuple[str, ...] = ()
    if cons and all(c.kind == "fixed-edges" for c in cons):
        for k, t in enumerate(model.terms):
            if t.stat.kind == "edges" and t.mod.kind == "one":
                X = np.delete(X, k, axis=1)
                dropped = (labels.pop(k),)
                break
    if X.shape[1] == 0:
        raise DataError("no free columns remain in the pseudo-design")
    if y.size == 0 or y.sum() == 0 or y.sum() == y.size:
        raise SeparationError(
            "pseudolikelihood is degenerate: every dyad present or every dyad absent",
            terms=tuple(labels),
        )

    q = X.shape[1]
    theta = np.zeros(q)
    ll = _logistic_loglik(X @ theta + off, y)
    monotone = True
    info = None
    for it in range(1, 61):
        eta = X @ theta + off
        mu = expit(eta)
        score = X.T @ (y - mu)
        w = mu * (1.0 - mu)
        info = (X * w[:, None]).T @ X
        if np.max(np.abs(score)) < SCORE_TOL:
            _, sigma = _invert_info(info, labels)
            return FitResult(
                labels=tuple(labels),
                theta_hat=theta,
                sigma_hat=sigma,
                loglik_kind="pseudo",
                loglik=ll,
                aic=-2.0 * ll + 2.0 * q,
                converged=True,
                iterations=it - 1,
                sigma_kind="naive-pseudo",
                dropped=dropped,
            )
        factor, _ = _invert_info(info, labels)
        step = cho_solve(factor, score)
        t = 1.0
        for _ in range(MAX_HALVINGS):
            cand = theta + t * step
            cand_ll = _logistic_loglik(X @ cand + off, y)
            if cand_ll >= ll - 1e-12:
                break
            t *= 0.5
        else:
            cand = theta + t * step
            cand_ll = _logistic_loglik(X @ cand + off, y)
        if cand_ll < ll - 1e-9:
            monotone = False
        theta, ll = cand, cand_ll
        if np.max(np.abs(theta)) > SEPARATION_BOUND and monotone:
            bad = [labels[k] for k in np.flatnonzero(np.abs(theta) > SEPARATION_BOUND)]
            raise SeparationError(
                f"separation detected: coefficients {bad} diverge with a "
                f"monotone pseudo-deviance decrease",
                terms=bad,
            )
    raise NonconvergenceError("pseudolikelihood IRLS did not converge in 60 iterations")


# ---------------------------------------------------------------------------
# Exact likelihood


def _observed_parts(model, sample):
    g_obs = sample_statistic(model, sample)
    off_obs = float(sum(offset_value(model, net) for net in sample.networks))
    return g_obs, off_obs


def _engines(model, sample, cons, method, max_states):
    return [
        moment_engine(model, net, c, method=method, max_states=max_states)
        for net, c in zip(sample.networks, cons)
    ]


def _check_support(model, engines, g_obs) -> None:
    lo = np.zeros(model.p)
    hi = np.zeros(model.p)
    for eng in engines:
        l, h = eng.support()
        lo += l
        hi += h
    flat = np.flatnonzero(hi - lo < 1e-12)
    if flat.size:
        names = [model.labels[k] for k in flat]
        raise CollinearityError(
            f"statistics {names} are constant over the constrained space and "
            f"cannot be estimated",
            terms=names,
        )
    at_edge = np.flatnonzero((g_obs <= lo + 1e-9) | (g_obs >= hi - 1e-9))
    if at_edge.size:
        names = [model.labels[k] for k in at_edge]
        raise NonconvergenceError(
            f"observed statistics {names} lie on the boundary of their support; "
            f"the maximum likelihood estimate does not exist"
        )


def _init_theta(model, sample, constraints) -> np.ndarray:
    try:
        fit = mple(model, sample, constraints)
        if fit.converged and not fit.dropped:
            return fit.theta_hat.copy()
    except (NonconvergenceError, CollinearityError, DataError):
        pass
    theta = np.zeros(model.p)
    ndyads = sum(len(compile_design(model, net).pairs) for net in sample.networks)
    nedges = sum(net.edge_count for net in sample.networks)
    if 0 < nedges < ndyads:
        for k, t in enumerate(model.terms):
            if t.stat.kind == "edges" and t.mod.kind == "one":
                theta[k] = float(np.log(nedges / (ndyads - nedges)))
                break
    return theta


def exact_mle(
    model: ModelSpec,
    sample: NetworkSample,
    constraints: Constraint | Sequence[Constraint] | None = None,
    method: str = "auto",
    max_states: int | None = None,
) -> FitResult:
    """Newton-Raphson on the exact log-likelihood by per-network moments."""
    validate_model(model, sample)
    cons = normalize_constraints(sample, constraints)
    for net, c in zip(sample.networks, cons):
        if c.kind == "fixed-edges" and net.edge_count != c.m:
            raise DataError(
                f"network {net.attrs.id!r} has {net.edge_count} edges but its "
                f"constraint fixes {c.m}"
            )
    engines = _engines(model, sample, cons, method, max_states)
    g_obs, off_obs = _observed_parts(model, sample)
    _check_support(model, engines, g_obs)

    labels = list(model.labels)
    theta = _init_theta(model, sample, constraints)

    def loglik_at(th):
        return float(th @ g_obs + off_obs - sum(eng.log_kappa(th) for eng in engines))

    ll = loglik_at(theta)
    info = None
    for it in range(1, 101):
        moms = [eng.moments(theta) for eng in engines]
        mean = np.sum([m.mean for m in moms], axis=0)
        info = np.sum([m.cov for m in moms], axis=0)
        score = g_obs - mean
        ll = float(theta @ g_obs + off_obs - sum(m.log_kappa for m in moms))
        if np.max(np.abs(score)) < SCORE_TOL:
            _, sigma = _invert_info(info, labels)
            return FitResult(
                labels=tuple(labels),
                theta_hat=theta,
                sigma_hat=sigma,
                loglik_kind="exact",
                loglik=ll,
                aic=-2.0 * ll + 2.0 * model.p,
                converged=True,
                iterations=it - 1,
            )
        factor, _ = _invert_info(info, labels)
        step = cho_solve(factor, score)
        t = 1.0
        for _ in range(MAX_HALVINGS):
            if loglik_at(theta + t * step) >= ll - 1e-12:
                break
            t *= 0.5
        theta = theta + t * step
        if np.max(np.abs(theta)) > DIVERGENCE_BOUND:
            raise NonconvergenceError(
                "exact MLE diverged; the observed statistic may lie too close "
                "to the boundary of its support"
            )
    _, sigma = _invert_info(info, labels)
    return FitResult(
        labels=tuple(labels),
        theta_hat=theta,
        sigma_hat=sigma,
        loglik_kind="exact",
        loglik=ll,
        aic=-2.0 * ll + 2.0 * model.p,
        converged=False,
        iterations=100,
    )


def loglik(
    model: ModelSpec,
    sample: NetworkSample,
    constraints: Constraint | Sequence[Constraint] | None,
    theta,
    method: str = "auto",
    max_states: int | None = None,
) -> float:
    """Exact log-likelihood at ``theta`` (enumerable models only)."""
    validate_model(model, sample)
    theta = np.asarray(theta, dtype=float)
    cons = normalize_constraints(sample, constraints)
    engines = _engines(model, sample, cons, method, max_states)
    g_obs, off_obs = _observed_parts(model, sample)
    return float(theta @ g_obs + off_obs - sum(eng.log_kappa(theta) for eng in engines))


# ---------------------------------------------------------------------------
# Monte-Carlo likelihood


def _chain_stats(model, net, constraint, theta, sim: SimConfig, stream_key) -> np.ndarray:
    design = compile_design(model, net)
    burnin, interval = sim.resolved(net.n)
    rng = substream(sim.seed, *stream_key)
    masks, _ = _mh_chain(
        design, theta, constraint, burnin, interval, sim.draws, rng, _start_mask(net, constraint)
    )
    return np.array([design_vector(model, net.with_dyads(mk)) for mk in masks])


def _bridge_log_kappa(model, net, constraint, theta, sim: SimConfig, stream_key) -> float:
    """Importance estimate of log kappa from a dyad-independent reference."""
    design = compile_design(model, net)
    eta_ref = design.eta_const(theta)
    rng = substream(sim.seed, *stream_key)
    ndraws = sim.draws
    if constraint.kind == "free":
        log_kappa_ref = float(np.logaddexp(0.0, eta_ref).sum())
        draws = rng.random((ndraws, eta_ref.size)) < expit(eta_ref)[None, :]
    else:
        sampler = CondBernoulliSampler(eta_ref, constraint.m)
        from ._condbern import CondBernoulli

        log_kappa_ref = float(CondBernoulli(eta_ref, constraint.m).log_kappa)
        masks = [sampler.draw_mask(rng) for _ in range(ndraws)]
        d = len(design.pairs)
        draws = np.array([[bool(mk >> b & 1) for b in range(d)] for mk in masks])
    if not design.has_dynamic:
        return log_kappa_ref
    from .sampling import _eval_stats_on_chunk, _stat_signature

    logw = np.zeros(ndraws)
    sigs, weights = [], []
    for col, stat, mv in design.dyn_cols:
        sigs.append(_stat_signature(stat, net))
        weights.append(theta[col] * mv)
    for coef_mv, stat in design.dyn_offsets:
        sigs.append(_stat_signature(stat, net))
        weights.append(coef_mv)
    vals = _eval_stats_on_chunk(draws, net.n, tuple(sigs))
    logw = vals @ np.asarray(weights)
    from scipy.special import logsumexp

    return log_kappa_ref + float(logsumexp(logw) - np.log(ndraws))


def mcmc_mle(
    model: ModelSpec,
    sample: NetworkSample,
    constraints: Constraint | Sequence[Constraint] | None = None,
    sim: SimConfig | None = None,
    max_iter: int = 40,
    step_halvings: int = MAX_HALVINGS,
    tol_in_mcse: float = 1.0,
) -> FitResult:
    """MC maximum likelihood: simulate at the current iterate, damped Newton.

    Stops when every component of the observed statistic lies within
    ``tol_in_mcse`` MC standard errors of the simulated mean.  The reported
    ``mcse`` is the MC noise of the final estimate; the log-likelihood is an
    importance estimate anchored at a dyad-independent reference.
    """
    if sim is None:
        raise DataError("mcmc_mle requires a SimConfig")
    validate_model(model, sample)
    cons = normalize_constraints(sample, constraints)
    g_obs, off_obs = _observed_parts(model, sample)
    labels = list(model.labels)
    theta = _init_theta(model, sample, constraints)

    info = None
    mcse_joint = None
    converged = False
    iterations = 0
    for it in range(1, max_iter + 1):
        iterations = it
        stats = [
            _chain_stats(model, net, c, theta, sim, ("mcmc", it, s))
            for s, (net, c) in enumerate(zip(sample.networks, cons))
        ]
        mean = np.sum([st.mean(axis=0) for st in stats], axis=0)
        info = np.sum([np.atleast_2d(np.cov(st.T, ddof=1)) for st in stats], axis=0)
        mcse_joint = np.sqrt(np.sum([batch_means_se(st) ** 2 for st in stats], axis=0))
        if np.any(np.diag(info) <= 0.0):
            flat = [labels[k] for k in np.flatnonzero(np.diag(info) <= 0.0)]
            raise DegeneracyError(
                f"simulated statistics {flat} are degenerate (zero variance)"
            )
        score = g_obs - mean
        if it >= 2 and np.all(np.abs(score) <= tol_in_mcse * np.maximum(mcse_joint, 1e-12)):
            converged = True
            break
        factor, _ = _invert_info(info, labels)
        step = cho_solve(factor, score)
        t = 1.0
        for _ in range(step_halvings):
            gain = t * step @ score - 0.5 * t * t * step @ info @ step
            if gain > 0.0:
                break
            t *= 0.5
        theta = theta + t * step
        if np.max(np.abs(theta)) > DIVERGENCE_BOUND:
            raise NonconvergenceError("MC MLE diverged")

    _, sigma = _invert_info(info, labels)
    mcse_theta = np.sqrt(np.clip(np.diag(sigma @ np.diag(mcse_joint**2) @ sigma), 0.0, None))
    log_kappas = [
        _bridge_log_kappa(model, net, c, theta, sim, ("bridge", s))
        for s, (net, c) in enumerate(zip(sample.networks, cons))
    ]
    ll = float(theta @ g_obs + off_obs - sum(log_kappas))
    fit = FitResult(
        labels=tuple(labels),
        theta_hat=theta,
        sigma_hat=sigma,
        loglik_kind="mc-approx",
        loglik=ll,
        aic=-2.0 * ll + 2.0 * model.p,
        converged=converged,
        iterations=iterations,
        sigma_kind="mc-fisher",
        mcse=mcse_theta,
    )
    if not converged:
        raise NonconvergenceError(
            f"MC MLE did not match the observed statistic within "
            f"{tol_in_mcse} MC standard errors in {max_iter} iterations",
            fit=fit,
        )
    return fit
