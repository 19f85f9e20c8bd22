"""Exact enumeration of small graph spaces and Metropolis-Hastings simulation.

Three exact backends compute the same moments (normalizing constant, mean,
covariance of the sufficient statistic), chosen automatically:

* dyad-independent model, free space: closed-form Bernoulli dyads;
* dyad-independent model, fixed edge count: conditional Bernoulli moments;
* anything else: vectorized enumeration of the state space, guarded by
  size bounds.

The MH sampler proposes uniform dyad toggles (free) or uniform present/absent
swaps (fixed edge count); both proposals are symmetric, so the acceptance
probability is ``min(1, exp(theta . dg + d_offset))``.  All randomness comes
from explicit seeds via :mod:`manynets.rng`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.special import expit, logsumexp

from ._condbern import CondBernoulli, CondBernoulliSampler
from .errors import DataError, EnumerationBoundError
from .model import ModelSpec, StatTerm
from .networks import Network, NetworkSample, dyad_count, dyad_pairs
from .rng import substream
from .stats import DyadDesign, compile_design, modifier_value

MAX_FREE_STATES = 1 << 21
MAX_FIXED_STATES = 100_000_000
_CHUNK = 1 << 17


@dataclass(frozen=True)
class Constraint:
    """Sampling constraint: free space or a fixed total edge count."""

    kind: str  # "free" | "fixed-edges"
    m: int | None = None

    def __post_init__(self):
        if self.kind not in ("free", "fixed-edges"):
            raise DataError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "fixed-edges":
            if self.m is None or self.m < 0:
                raise DataError("fixed-edges constraint needs an edge count m >= 0")
        elif self.m is not None:
            raise DataError("free constraint takes no edge count")

    @staticmethod
    def free() -> "Constraint":
        return FREE

    @staticmethod
    def fixed_edges(m: int) -> "Constraint":
        return Constraint("fixed-edges", m)

    def check_template(self, net: Network) -> None:
        if self.kind == "fixed-edges":
            if self.m > dyad_count(net.n):
                raise DataError(
                    f"constraint m={self.m} exceeds {dyad_count(net.n)} dyads of network "
                    f"{net.attrs.id!r}"
                )

    def satisfied_by(self, net: Network) -> bool:
        return self.kind == "free" or net.edge_count == self.m


FREE = Constraint("free")


@dataclass(frozen=True)
class SimConfig:
    """Chain settings; burn-in and interval default to 20*n^2 and n^2 steps."""

    draws: int
    seed: int
    burnin: int | None = None
    interval: int | None = None

    def __post_init__(self):
        if self.draws < 1:
            raise DataError("draws must be positive")
        for name in ("burnin", "interval"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise DataError(f"{name} must be positive when given")
        if self.seed is None:
            raise DataError("a seed is required; there is no ambient randomness")

    def resolved(self, n: int) -> tuple[int, int]:
        burnin = self.burnin if self.burnin is not None else 20 * n * n
        interval = self.interval if self.interval is not None else n * n
        return burnin, interval


@dataclass
class ExactMoments:
    """Normalizing constant and exact exponential-family moments."""

    log_kappa: float
    mean: np.ndarray
    cov: np.ndarray


# ---------------------------------------------------------------------------
# Enumeration


def _space_size(d: int, constraint: Constraint) -> int:
    if constraint.kind == "free":
        return 1 << d
    return math.comb(d, constraint.m)


def _check_bound(d: int, constraint: Constraint, max_states: int | None) -> int:
    size = _space_size(d, constraint)
    if constraint.kind == "free":
        bound = max_states if max_states is not None else MAX_FREE_STATES
    else:
        bound = max_states if max_states is not None else MAX_FIXED_STATES
    if size > bound:
        raise EnumerationBoundError(
            f"{size} states exceed the enumeration bound {bound}; "
            f"raise max_states explicitly to override"
        )
    return size


def enumerate_graphs(
    template: Network, constraint: Constraint = FREE, max_states: int | None = None
) -> Iterator[int]:
    """Yield every admissible adjacency mask exactly once."""
    d = dyad_count(template.n)
    constraint.check_template(template)
    _check_bound(d, constraint, max_states)
    if constraint.kind == "free":
        return iter(range(1 << d))
    return (
        sum(1 << b for b in combo) for combo in itertools.combinations(range(d), constraint.m)
    )


def _iter_state_chunks(d: int, constraint: Constraint):
    """Yield boolean state matrices (chunk, d) covering the space."""
    if constraint.kind == "free":
        total = 1 << d
        bits = np.arange(d, dtype=np.uint64)
        for start in range(0, total, _CHUNK):
            states = np.arange(start, min(start + _CHUNK, total), dtype=np.uint64)
            yield (states[:, None] >> bits[None, :]) & np.uint64(1) != 0
    else:
        m = constraint.m
        combos = itertools.combinations(range(d), m)
        while True:
            block = list(itertools.islice(combos, _CHUNK))
            if not block:
                return
            idx = np.array(block, dtype=np.int16).reshape(len(block), m)
            out = np.zeros((len(block), d), dtype=bool)
            out[np.arange(len(block))[:, None], idx] = True
            yield out


def _stat_signature(stat: StatTerm, net: Network) -> tuple:
    """Hashable identity of a statistic's action on a template's dyads."""
    from .stats import change_stat

    if stat.dyad_independent:
        vals = tuple(change_stat(stat, net, i, j) for i, j in dyad_pairs(net.n))
        return ("const", vals)
    return (stat.kind, net.n)


def _eval_stats_on_chunk(Y: np.ndarray, n: int, stats_sig: tuple) -> np.ndarray:
    """Raw statistic values for each state row of Y, one column per stat."""
    M, d = Y.shape
    pairs = dyad_pairs(n)
    out = np.empty((M, len(stats_sig)), dtype=np.float64)
    Yf = None
    for c, sig in enumerate(stats_sig):
        if sig[0] == "const":
            out[:, c] = Y @ np.asarray(sig[1], dtype=np.float64)
            continue
        if Yf is None:
            Yf = Y.astype(np.float64)
        if sig[0] == "twostar":
            inc = np.zeros((d, n))
            for b, (i, j) in enumerate(pairs):
                inc[b, i] = inc[b, j] = 1.0
            deg = Yf @ inc
            out[:, c] = (deg * (deg - 1.0) / 2.0).sum(axis=1)
        elif sig[0] == "triangle":
            bit = {pair: b for b, pair in enumerate(pairs)}
            acc = np.zeros(M)
            for i, j, k in itertools.combinations(range(n), 3):
                acc += Yf[:, bit[(i, j)]] * Yf[:, bit[(i, k)]] * Yf[:, bit[(j, k)]]
            out[:, c] = acc
        else:
            raise DataError(f"unknown statistic signature {sig[0]!r}")
    return out


_raw_cache: dict[tuple, np.ndarray] = {}
_RAW_CACHE_MAX = 6
_RAW_CACHE_MAX_BYTES = 128 << 20


def _raw_stat_matrix(net: Network, constraint: Constraint, stats_sig: tuple) -> np.ndarray:
    """Full (states x stats) matrix of raw statistic values, cached."""
    d = dyad_count(net.n)
    key = (net.n, constraint, stats_sig)
    hit = _raw_cache.get(key)
    if hit is not None:
        return hit
    chunks = [
        _eval_stats_on_chunk(Y, net.n, stats_sig) for Y in _iter_state_chunks(d, constraint)
    ]
    raw = np.concatenate(chunks, axis=0) if len(chunks) > 1 else chunks[0]
    if raw.nbytes <= _RAW_CACHE_MAX_BYTES:
        if len(_raw_cache) >= _RAW_CACHE_MAX:
            _raw_cache.pop(next(iter(_raw_cache)))
        _raw_cache[key] = raw
    return raw


# ---------------------------------------------------------------------------
# Moment engines


class _FreeDyadIndEngine:
    """Closed-form moments: independent Bernoulli dyads."""

    def __init__(self, design: DyadDesign):
        self.X = design.const
        self.off = design.offset_const

    def eta(self, theta: np.ndarray) -> np.ndarray:
        return self.X @ theta + self.off

    def log_kappa(self, theta: np.ndarray) -> float:
        return float(np.logaddexp(0.0, self.eta(theta)).sum())

    def moments(self, theta: np.ndarray) -> ExactMoments:
        eta = self.eta(theta)
        p = expit(eta)
        mean = self.X.T @ p
        w = p * (1.0 - p)
        cov = (self.X * w[:, None]).T @ self.X
        return ExactMoments(self.log_kappa(theta), mean, 0.5 * (cov + cov.T))

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.minimum(self.X, 0.0).sum(axis=0)
        hi = np.maximum(self.X, 0.0).sum(axis=0)
        return lo, hi


class _CondBernEngine:
    """Conditional Bernoulli moments under a fixed edge count."""

    def __init__(self, design: DyadDesign, m: int):
        self.X = design.const
        self.off = design.offset_const
        self.m = m

    def _dist(self, theta: np.ndarray) -> CondBernoulli:
        return CondBernoulli(self.X @ theta + self.off, self.m)

    def log_kappa(self, theta: np.ndarray) -> float:
        return float(self._dist(theta).log_kappa)

    def moments(self, theta: np.ndarray) -> ExactMoments:
        dist = self._dist(theta)
        mean, cov = dist.moments(self.X)
        return ExactMoments(float(dist.log_kappa), mean, cov)

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        Xs = np.sort(self.X, axis=0)
        lo = Xs[: self.m].sum(axis=0)
        hi = Xs[len(Xs) - self.m :].sum(axis=0) if self.m else np.zeros(self.X.shape[1])
        return lo, hi


class _EnumEngine:
    """Brute-force moments over the enumerated state space."""

    def __init__(self, model: ModelSpec, net: Network, constraint: Constraint, max_states):
        d = dyad_count(net.n)
        constraint.check_template(net)
        _check_bound(d, constraint, max_states)
        stats = []
        for t in model.terms:
            s = _stat_signature(t.stat, net)
            if s not in stats:
                stats.append(s)
        for o in model.offsets:
            s = _stat_signature(o.term.stat, net)
            if s not in stats:
                stats.append(s)
        raw = _raw_stat_matrix(net, constraint, tuple(stats))
        cols = {s: c for c, s in enumerate(stats)}
        G = np.empty((raw.shape[0], model.p))
        for k, t in enumerate(model.terms):
            mv = modifier_value(t.mod, net.attrs)
            G[:, k] = raw[:, cols[_stat_signature(t.stat, net)]] * mv
        off = np.zeros(raw.shape[0])
        for o in model.offsets:
            mv = modifier_value(o.term.mod, net.attrs)
            off += o.coef * mv * raw[:, cols[_stat_signature(o.term.stat, net)]]
        self.G = G
        self.offvec = off

    def _logw(self, theta: np.ndarray) -> np.ndarray:
        return self.G @ theta + self.offvec

    def log_kappa(self, theta: np.ndarray) -> float:
        return float(logsumexp(self._logw(theta)))

    def moments(self, theta: np.ndarray) -> ExactMoments:
        logw = self._logw(theta)
        lk = float(logsumexp(logw))
        if not np.isfinite(lk):
            raise DataError("non-finite weights in exact moments")
        p = np.exp(logw - lk)
        mean = p @ self.G
        Gc = self.G - mean
        cov = (Gc * p[:, None]).T @ Gc
        return ExactMoments(lk, mean, 0.5 * (cov + cov.T))

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        return self.G.min(axis=0), self.G.max(axis=0)


def moment_engine(
    model: ModelSpec,
    template: Network,
    constraint: Constraint = FREE,
    method: str = "auto",
    max_states: int | None = None,
):
    """Pick the cheapest exact backend able to serve this model and space."""
    constraint.check_template(template)
    if method not in ("auto", "enumeration"):
        raise DataError(f"unknown moments method {method!r}")
    if method == "auto" and model.dyad_independent:
        design = compile_design(model, template)
        if constraint.kind == "free":
            return _FreeDyadIndEngine(design)
        return _CondBernEngine(design, constraint.m)
    return _EnumEngine(model, template, constraint, max_states)


def exact_moments(
    model: ModelSpec,
    template: Network,
    theta,
    constraint: Constraint = FREE,
    method: str = "auto",
    max_states: int | None = None,
) -> ExactMoments:
    """Exact normalizing constant, mean, and covariance of the statistic."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.p,):
        raise DataError(f"theta must have length {model.p}, got shape {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise DataError("theta must be finite")
    return moment_engine(model, template, constraint, method, max_states).moments(theta)


# ---------------------------------------------------------------------------
# Exact (iid) sampling


def exact_sample(
    model: ModelSpec,
    template: Network,
    theta,
    constraint: Constraint = FREE,
    ndraws: int = 1,
    rng: np.random.Generator | None = None,
    seed: int | None = None,
    max_states: int | None = None,
) -> list[Network]:
    """Independent draws from the model, exact (no chain, no burn-in)."""
    if rng is None:
        if seed is None:
            raise DataError("exact_sample needs an rng or a seed")
        rng = substream(seed, "exact-sample")
    theta = np.asarray(theta, dtype=float)
    constraint.check_template(template)
    if model.dyad_independent:
        design = compile_design(model, template)
        eta = design.eta_const(theta)
        if constraint.kind == "free":
            draws = rng.random((ndraws, eta.size)) < expit(eta)[None, :]
            masks = [int(sum(1 << b for b in np.flatnonzero(row))) for row in draws]
        else:
            sampler = CondBernoulliSampler(eta, constraint.m)
            masks = [sampler.draw_mask(rng) for _ in range(ndraws)]
        return [template.with_dyads(mask) for mask in masks]
    engine = _EnumEngine(model, template, constraint, max_states)
    logw = engine._logw(theta)
    p = np.exp(logw - logsumexp(logw))
    idx = rng.choice(p.size, size=ndraws, p=p)
    if constraint.kind == "free":
        return [template.with_dyads(int(i)) for i in idx]
    d = dyad_count(template.n)
    combos = list(itertools.combinations(range(d), constraint.m))
    return [template.with_dyads(sum(1 << b for b in combos[i])) for i in idx]


# ---------------------------------------------------------------------------
# Metropolis-Hastings


def _dynamic_delta(design: DyadDesign, nbr: list[int], i: int, j: int) -> np.ndarray:
    """Change vector of the dynamic columns for dyad {i, j} in its off state."""
    delta = np.zeros(len(design.dyn_cols))
    common = nbr[i] & nbr[j]
    for c, (col, stat, mv) in enumerate(design.dyn_cols):
        if stat.kind == "twostar":
            di = (nbr[i] & ~(1 << j)).bit_count()
            dj = (nbr[j] & ~(1 << i)).bit_count()
            delta[c] = (di + dj) * mv
        else:  # triangle
            delta[c] = common.bit_count() * mv
    return delta


def _dynamic_offset_delta(design: DyadDesign, nbr: list[int], i: int, j: int) -> float:
    total = 0.0
    for coef_mv, stat in design.dyn_offsets:
        if stat.kind == "twostar":
            di = (nbr[i] & ~(1 << j)).bit_count()
            dj = (nbr[j] & ~(1 << i)).bit_count()
            total += coef_mv * (di + dj)
        else:
            total += coef_mv * (nbr[i] & nbr[j]).bit_count()
    return total


def _mh_chain(
    design: DyadDesign,
    theta: np.ndarray,
    constraint: Constraint,
    burnin: int,
    interval: int,
    draws: int,
    rng: np.random.Generator,
    start_mask: int,
) -> tuple[list[int], float]:
    """Run one chain; returns retained adjacency masks and the acceptance rate."""
    net = design.net
    pairs = design.pairs
    d = len(pairs)
    eta = design.eta_const(theta)
    dyn = design.has_dynamic
    theta_dyn = np.array([theta[col] for col, _, _ in design.dyn_cols])

    mask = start_mask
    nbr = [0] * net.n
    if dyn:
        for b in range(d):
            if mask >> b & 1:
                i, j = pairs[b]
                nbr[i] |= 1 << j
                nbr[j] |= 1 << i

    fixed = constraint.kind == "fixed-edges"
    if fixed:
        present = [b for b in range(d) if mask >> b & 1]
        absent = [b for b in range(d) if not mask >> b & 1]
        if len(present) != constraint.m:
            raise DataError(
                f"template {net.attrs.id!r} has {len(present)} edges, "
                f"constraint requires {constraint.m}"
            )
        if not present or not absent:
            raise DataError("no admissible swap proposals: graph is empty or complete")
        pos = [0] * d
        for w, b in enumerate(present):
            pos[b] = w
        for w, b in enumerate(absent):
            pos[b] = w

    total = burnin + interval * draws
    retained: list[int] = []
    accepted = 0
    BLOCK = 4096
    step = 0
    next_keep = burnin + interval
    while step < total:
        nsteps = min(BLOCK, total - step)
        logu = np.log(rng.random(nsteps))
        if fixed:
            pick_p = rng.integers(0, len(present), nsteps)
            pick_a = rng.integers(0, len(absent), nsteps)
        else:
            pick = rng.integers(0, d, nsteps)
        for s in range(nsteps):
            if fixed:
                bp = present[pick_p[s]]
                ba = absent[pick_a[s]]
                logr = eta[ba] - eta[bp]
                if dyn:
                    i1, j1 = pairs[bp]
                    i2, j2 = pairs[ba]
                    drop = _dynamic_delta(design, nbr, i1, j1)
                    doff = -_dynamic_offset_delta(design, nbr, i1, j1)
                    nbr[i1] &= ~(1 << j1)
                    nbr[j1] &= ~(1 << i1)
                    add = _dynamic_delta(design, nbr, i2, j2)
                    doff += _dynamic_offset_delta(design, nbr, i2, j2)
                    logr += float(theta_dyn @ (add - drop)) + doff
                    if logu[s] < logr:
                        accepted += 1
                        mask ^= (1 << bp) | (1 << ba)
                        nbr[i2] |= 1 << j2
                        nbr[j2] |= 1 << i2
                        wp, wa = pos[bp], pos[ba]
                        present[wp] = ba
                        pos[ba] = wp
                        absent[wa] = bp
                        pos[bp] = wa
                    else:
                        nbr[i1] |= 1 << j1
                        nbr[j1] |= 1 << i1
                else:
                    if logu[s] < logr:
                        accepted += 1
                        mask ^= (1 << bp) | (1 << ba)
                        wp, wa = pos[bp], pos[ba]
                        present[wp] = ba
                        pos[ba] = wp
                        absent[wa] = bp
                        pos[bp] = wa
            else:
                b = pick[s]
                on = mask >> b & 1
                if dyn:
                    i, j = pairs[b]
                    if on:
                        nbr[i] &= ~(1 << j)
                        nbr[j] &= ~(1 << i)
                    delta = float(theta_dyn @ _dynamic_delta(design, nbr, i, j))
                    delta += _dynamic_offset_delta(design, nbr, i, j)
                    logr = -(eta[b] + delta) if on else (eta[b] + delta)
                    if logu[s] < logr:
                        accepted += 1
                        mask ^= 1 << b
                        if not on:
                            nbr[i] |= 1 << j
                            nbr[j] |= 1 << i
                    elif on:
                        nbr[i] |= 1 << j
                        nbr[j] |= 1 << i
                else:
                    logr = -eta[b] if on else eta[b]
                    if logu[s] < logr:
                        accepted += 1
                        mask ^= 1 << b
            step += 1
            if step == next_keep:
                retained.append(mask)
                next_keep += interval
                if len(retained) == draws:
                    break
    return retained, accepted / max(total, 1)


def _start_mask(template: Network, constraint: Constraint) -> int:
    if constraint.kind == "fixed-edges":
        if template.edge_count != constraint.m:
            raise DataError(
                f"template {template.attrs.id!r} has {template.edge_count} edges "
                f"but the constraint fixes {constraint.m}"
            )
    return template.dyads


def mh_sample(
    model: ModelSpec,
    template: Network,
    theta,
    constraint: Constraint = FREE,
    config: SimConfig | None = None,
) -> list[Network]:
    """Metropolis-Hastings draws from the model on one template network."""
    if config is None:
        raise DataError("mh_sample requires a SimConfig")
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise DataError("theta must be finite")
    constraint.check_template(template)
    design = compile_design(model, template)
    burnin, interval = config.resolved(template.n)
    rng = substream(config.seed, "mh")
    masks, _ = _mh_chain(
        design, theta, constraint, burnin, interval, config.draws, rng, _start_mask(template, constraint)
    )
    return [template.with_dyads(m) for m in masks]


def simulate_sample(
    model: ModelSpec,
    templates: Sequence[tuple[Network, Constraint]],
    theta,
    config: SimConfig,
    taxonomy: Sequence[str] | None = None,
) -> NetworkSample:
    """One independent chain per template, deterministic per-template substreams."""
    theta = np.asarray(theta, dtype=float)
    nets: list[Network] = []
    for idx, (template, constraint) in enumerate(templates):
        design = compile_design(model, template)
        burnin, interval = config.resolved(template.n)
        rng = substream(config.seed, "simulate", idx)
        masks, _ = _mh_chain(
            design, theta, constraint, burnin, interval, config.draws, rng,
            _start_mask(template, constraint),
        )
        for k, mask in enumerate(masks):
            attrs = template.attrs
            if config.draws > 1:
                attrs = type(attrs)(
                    id=f"{attrs.id}#{k:04d}",
                    n_s=attrs.n_s,
                    weekend=attrs.weekend,
                    brussels=attrs.brussels,
                    log_pop_density=attrs.log_pop_density,
                    child_absent=attrs.child_absent,
                    extra=attrs.extra,
                )
            nets.append(Network(template.n, mask, template.nodes, attrs))
    if taxonomy is None:
        taxonomy = sorted({nd.group for net in nets for nd in net.nodes})
    return NetworkSample(tuple(nets), tuple(taxonomy))


def auto_draws(
    model: ModelSpec,
    template: Network,
    theta,
    constraint: Constraint,
    ndraws: int,
    rng: np.random.Generator,
) -> list[Network]:
    """Draws by the cheapest correct route: exact when available, else MH."""
    theta = np.asarray(theta, dtype=float)
    if model.dyad_independent:
        return exact_sample(model, template, theta, constraint, ndraws, rng=rng)
    d = dyad_count(template.n)
    if _space_size(d, constraint) <= MAX_FREE_STATES:
        return exact_sample(model, template, theta, constraint, ndraws, rng=rng)
    design = compile_design(model, template)
    burnin, interval = 20 * template.n**2, template.n**2
    masks, _ = _mh_chain(
        design, theta, constraint, burnin, interval, ndraws, rng, _start_mask(template, constraint)
    )
    return [template.with_dyads(m) for m in masks]


def batch_means_se(x: np.ndarray, nbatches: int = 20) -> np.ndarray:
    """MC standard error of the mean of a (possibly autocorrelated) chain."""
    x = np.atleast_2d(np.asarray(x, dtype=float).T).T  # (M, k)
    M = x.shape[0]
    nb = min(nbatches, M)
    size = M // nb
    if size < 1:
        raise DataError("too few draws for batch means")
    trimmed = x[: nb * size]
    means = trimmed.reshape(nb, size, -1).mean(axis=1)
    return means.std(axis=0, ddof=1) / math.sqrt(nb)
