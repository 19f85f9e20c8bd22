"""Wald inference on fitted models: coefficient tables, omnibus tests,
contrasts, estimate correlations, the means/effects reparametrization,
variance inflation factors, and network-size effect curves."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh
from scipy.stats import chi2, norm
from scipy.stats import t as student_t

from .errors import CollinearityError, DataError, ModelValidationError
from .estimation import FitResult, _collinear_pair
from .model import Modifier, ModelSpec, ModelTerm, StatTerm, term
from .networks import NetworkSample

TAILS = ("two-sided", "upper", "lower")

#: significance stars: *** at 0.001, ** at 0.01, * at 0.05
STAR_THRESHOLDS = ((0.001, "***"), (0.01, "**"), (0.05, "*"))


def stars(pvalue: float) -> str:
    for threshold, mark in STAR_THRESHOLDS:
        if pvalue <= threshold:
            return mark
    return ""


def format_pvalue(pvalue: float) -> str:
    """Three decimals; values that would print as 0.000 become ``<0.001``."""
    if not 0.0 <= pvalue <= 1.0:
        raise DataError(f"p-value {pvalue} outside [0, 1]")
    text = f"{pvalue:.3f}"
    return "<0.001" if text == "0.000" else text


def _tail_pvalue(z: float, tail: str) -> float:
    if tail == "two-sided":
        return float(2.0 * norm.sf(abs(z)))
    if tail == "upper":
        return float(norm.sf(z))
    if tail == "lower":
        return float(norm.cdf(z))
    raise DataError(f"unknown tail {tail!r}; expected one of {TAILS}")


@dataclass(frozen=True)
class TestResult:
    """One hypothesis test: statistic, reference distribution, p-value."""

    statistic: float
    pvalue: float
    kind: str  # "wald-chi2" | "wald-z" | "ols-t"
    label: str = ""
    df: int | None = None
    tail: str | None = None
    estimate: float | None = None
    se: float | None = None


@dataclass(frozen=True)
class Contrast:
    """A linear combination of coefficients with a z test."""

    coeffs: tuple[float, ...]
    tail: str = "two-sided"
    label: str = ""

    def __post_init__(self):
        if not any(c != 0.0 for c in self.coeffs):
            raise DataError("contrast coefficients are all zero")
        if self.tail not in TAILS:
            raise DataError(f"unknown tail {self.tail!r}; expected one of {TAILS}")

    @staticmethod
    def from_labels(
        fit_labels: Sequence[str],
        weights: Mapping[str, float],
        tail: str = "two-sided",
        label: str = "",
    ) -> "Contrast":
        coeffs = [0.0] * len(fit_labels)
        for name, w in weights.items():
            if name not in fit_labels:
                raise DataError(f"unknown term label {name!r}; have {list(fit_labels)}")
            coeffs[list(fit_labels).index(name)] = float(w)
        return Contrast(tuple(coeffs), tail=tail, label=label)


@dataclass(frozen=True)
class CoefRow:
    label: str
    estimate: float
    se: float
    z: float
    pvalue: float
    stars: str


def coef_table(fit: FitResult) -> list[CoefRow]:
    """Coefficients with normal two-sided p-values and significance stars."""
    ses = fit.se()
    if np.any(~np.isfinite(fit.theta_hat)) or np.any(~np.isfinite(ses)):
        raise DataError("non-finite estimates or standard errors")
    rows = []
    for label, est, se in zip(fit.labels, fit.theta_hat, ses):
        z = est / se if se > 0 else (0.0 if est == 0 else math.inf * np.sign(est))
        p = _tail_pvalue(z, "two-sided") if np.isfinite(z) else 0.0
        rows.append(CoefRow(label, float(est), float(se), float(z), p, stars(p)))
    return rows


def _resolve_subset(fit: FitResult, subset) -> list[int]:
    idx = []
    for item in subset:
        idx.append(fit.index(item) if isinstance(item, str) else int(item))
    if not idx:
        raise DataError("empty parameter subset")
    if len(set(idx)) != len(idx):
        raise DataError("duplicate entries in parameter subset")
    for k in idx:
        if not 0 <= k < fit.p:
            raise DataError(f"parameter index {k} out of range")
    return idx


def omnibus_wald(fit: FitResult, subset, label: str = "") -> TestResult:
    """Wald chi-square test that all coefficients in ``subset`` are zero."""
    idx = _resolve_subset(fit, subset)
    theta = fit.theta_hat[idx]
    sub = fit.sigma_hat[np.ix_(idx, idx)]
    try:
        factor = cho_factor(sub)
    except LinAlgError:
        names = [fit.labels[k] for k in idx]
        raise CollinearityError(
            f"estimate covariance is singular on subset {names}", terms=names
        ) from None
    w = float(theta @ cho_solve(factor, theta))
    df = len(idx)
    return TestResult(
        statistic=w, pvalue=float(chi2.sf(w, df)), kind="wald-chi2", label=label, df=df
    )


def contrast_test(fit: FitResult, contrast: Contrast) -> TestResult:
    """z test of a linear combination of coefficients."""
    c = np.asarray(contrast.coeffs, dtype=float)
    if c.shape != (fit.p,):
        raise DataError(f"contrast length {c.size} does not match p = {fit.p}")
    est = float(c @ fit.theta_hat)
    var = float(c @ fit.sigma_hat @ c)
    if var <= 0.0:
        raise DataError("contrast has zero standard error")
    se = math.sqrt(var)
    z = est / se
    return TestResult(
        statistic=z,
        pvalue=_tail_pvalue(z, contrast.tail),
        kind="wald-z",
        label=contrast.label,
        tail=contrast.tail,
        estimate=est,
        se=se,
    )


def cor_matrix(fit: FitResult) -> np.ndarray:
    """Correlation matrix of the parameter estimates."""
    sd = np.sqrt(np.diag(fit.sigma_hat))
    zero = np.flatnonzero(sd <= 0.0)
    if zero.size:
        names = [fit.labels[k] for k in zero]
        raise DataError(f"parameters {names} have zero estimated variance")
    corr = fit.sigma_hat / np.outer(sd, sd)
    np.fill_diagonal(corr, 1.0)
    return corr


# ---------------------------------------------------------------------------
# Means <-> effects reparametrization


def _is_cell(t: ModelTerm) -> bool:
    return t.stat.kind == "mix" and t.mod.kind == "one"


def _cell_pairs(stat: StatTerm) -> set[frozenset[str]]:
    return {frozenset((a, b)) for a in stat.cell_a for b in stat.cell_b}


def _check_partition(cells: Sequence[ModelTerm], taxonomy: Sequence[str]) -> None:
    """Mixing cells must cover every unordered group pair exactly once."""
    want = {
        frozenset((a, b))
        for i, a in enumerate(taxonomy)
        for b in list(taxonomy)[i:]
    }
    seen: dict[frozenset, str] = {}
    for cell in cells:
        for pair in _cell_pairs(cell.stat):
            if pair in seen:
                raise ModelValidationError(
                    f"mixing cells {seen[pair]!r} and {cell.label!r} overlap on "
                    f"group pair {sorted(pair)}"
                )
            seen[pair] = cell.label
    missing = want - set(seen)
    if missing:
        raise ModelValidationError(
            f"mixing cells do not cover group pairs {[sorted(p) for p in missing]}"
        )
    stray = set(seen) - want
    if stray:
        raise ModelValidationError(
            f"mixing cells reference group pairs outside the taxonomy: "
            f"{[sorted(p) for p in stray]}"
        )


def _cell_dyad_counts(cells: Sequence[ModelTerm], sample: NetworkSample) -> dict[str, int]:
    counts = {cell.label: 0 for cell in cells}
    lookup = {}
    for cell in cells:
        for pair in _cell_pairs(cell.stat):
            lookup[pair] = cell.label
    for net in sample.networks:
        groups = [nd.group for nd in net.nodes]
        for i in range(net.n):
            for j in range(i + 1, net.n):
                label = lookup.get(frozenset((groups[i], groups[j])))
                if label is not None:
                    counts[label] += 1
    return counts


def to_effects_parametrization(
    model: ModelSpec,
    fit: FitResult,
    baseline_cell: str | None = None,
    sample: NetworkSample | None = None,
) -> tuple[ModelSpec, FitResult, np.ndarray]:
    """Rewrite a full-mixing-cell model as intercept plus cell deviations.

    Returns the effects model, the transformed fit, and the matrix ``T``
    mapping effects coefficients to means coefficients.  When no baseline is
    named, the cell covering the most dyads in ``sample`` is used (ties break
    on label order).
    """
    if tuple(fit.labels) != model.labels:
        raise DataError("fit labels do not match the model")
    for t in model.terms:
        if t.stat.kind == "edges" and t.mod.kind == "one":
            raise ModelValidationError(
                f"model already has an edge-count intercept ({t.label!r})"
            )
    cells = [t for t in model.terms if _is_cell(t)]
    if not cells:
        raise ModelValidationError("model has no mixing cells to reparametrize")
    if sample is not None:
        taxonomy = sample.taxonomy
    else:
        taxonomy = tuple(sorted(set().union(*(c.stat.cell_a | c.stat.cell_b for c in cells))))
    _check_partition(cells, taxonomy)

    if baseline_cell is None:
        if sample is None:
            raise DataError("auto-choosing a baseline cell requires the sample")
        counts = _cell_dyad_counts(cells, sample)
        top = max(counts.values())
        baseline_cell = min(lbl for lbl, c in counts.items() if c == top)
    if baseline_cell not in (c.label for c in cells):
        raise DataError(
            f"unknown baseline cell {baseline_cell!r}; have {[c.label for c in cells]}"
        )

    intercept = term(StatTerm.edges(), Modifier.one(), "edges")
    new_terms = [intercept] + [t for t in model.terms if t.label != baseline_cell]
    effects_model = ModelSpec(tuple(new_terms), model.offsets)

    p = model.p
    pos_new = {t.label: k for k, t in enumerate(effects_model.terms)}
    T = np.zeros((p, p))
    for k, t in enumerate(model.terms):
        if _is_cell(t):
            T[k, 0] = 1.0  # every cell absorbs the intercept
            if t.label != baseline_cell:
                T[k, pos_new[t.label]] = 1.0
        else:
            T[k, pos_new[t.label]] = 1.0

    T_inv = np.linalg.inv(T)
    theta_eff = T_inv @ fit.theta_hat
    sigma_eff = T_inv @ fit.sigma_hat @ T_inv.T
    fit_eff = replace(
        fit,
        labels=effects_model.labels,
        theta_hat=theta_eff,
        sigma_hat=0.5 * (sigma_eff + sigma_eff.T),
    )
    return effects_model, fit_eff, T


# ---------------------------------------------------------------------------
# Variance inflation


@dataclass(frozen=True)
class VifRow:
    label: str
    vif: float
    root_vif: float


@dataclass(frozen=True)
class VifResult:
    rows: tuple[VifRow, ...]
    singular_pair: tuple[str, str] | None = None


def vif(fit: FitResult, model: ModelSpec) -> VifResult:
    """Variance inflation factors of the non-intercept estimates.

    Only defined for models with an edge-count intercept; for full-mixing-cell
    models, reparametrize with :func:`to_effects_parametrization` first.
    """
    if tuple(fit.labels) != model.labels:
        raise DataError("fit labels do not match the model")
    intercept = None
    for k, t in enumerate(model.terms):
        if t.stat.kind == "edges" and t.mod.kind == "one":
            intercept = k
            break
    if intercept is None:
        raise ModelValidationError(
            "variance inflation factors are only well-defined in models with an "
            "edge-count (intercept) term; use to_effects_parametrization first"
        )
    keep = [k for k in range(fit.p) if k != intercept]
    if not keep:
        raise DataError("no non-intercept parameters")
    labels = [fit.labels[k] for k in keep]
    corr = cor_matrix(fit)[np.ix_(keep, keep)]
    vals, _ = eigh(corr)
    if vals[0] < 1e-12:
        a, b = _collinear_pair(corr, labels)
        rows = tuple(VifRow(lbl, math.inf, math.inf) for lbl in labels)
        return VifResult(rows, singular_pair=(a, b))
    inv = np.linalg.inv(corr)
    diag = np.clip(np.diag(inv), 1.0, None)  # >= 1 up to rounding
    rows = tuple(
        VifRow(lbl, float(v), float(math.sqrt(v))) for lbl, v in zip(labels, diag)
    )
    return VifResult(rows)


# ---------------------------------------------------------------------------
# Network-size effect curves


_SIZE_MODS = {"one": lambda n: 1.0, "logn": lambda n: math.log(n), "logn2": lambda n: math.log(n) ** 2}


@dataclass(frozen=True)
class EffectCurve:
    feature: str
    grid: tuple[int, ...]
    values: tuple[float, ...]
    ses: tuple[float, ...]
    reference_n: int | None = None


def size_effect_curve(
    fit: FitResult,
    model: ModelSpec,
    feature: str,
    grid: Sequence[int],
    reference_n: int | None = None,
) -> EffectCurve:
    """Fitted conditional log-odds contribution of one graph feature by size.

    Combines the feature's plain, log-n, and squared-log-n terms into
    ``c(n) . theta`` with a delta-method standard error; with ``reference_n``
    the curve is shifted to zero there.
    """
    if feature not in ("edges", "twostar", "triangle"):
        raise DataError(f"feature must be edges, twostar, or triangle, got {feature!r}")
    if tuple(fit.labels) != model.labels:
        raise DataError("fit labels do not match the model")
    cols = [
        (k, _SIZE_MODS[t.mod.kind])
        for k, t in enumerate(model.terms)
        if t.stat.kind == feature and t.mod.kind in _SIZE_MODS
    ]
    if not cols:
        raise ModelValidationError(
            f"model has no {feature} terms with size modifiers (1, log n, log^2 n)"
        )

    def cvec(n: int) -> np.ndarray:
        c = np.zeros(fit.p)
        for k, phi in cols:
            c[k] = phi(n)
        return c

    ref = cvec(reference_n) if reference_n is not None else np.zeros(fit.p)
    values, ses = [], []
    for n in grid:
        if n < 2:
            raise DataError(f"network size {n} out of range")
        c = cvec(n) - ref
        values.append(float(c @ fit.theta_hat))
        ses.append(float(math.sqrt(max(c @ fit.sigma_hat @ c, 0.0))))
    return EffectCurve(feature, tuple(int(n) for n in grid), tuple(values), tuple(ses), reference_n)


# ---------------------------------------------------------------------------
# Residual-regression t test (used by diagnostics)


def ols_slope_test(
    x: np.ndarray, y: np.ndarray, label: str = ""
) -> TestResult:
    """Two-sided t test for the slope of y on x with an intercept."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < 3:
        raise DataError(f"need at least 3 observations for the slope test, got {n}")
    sxx = float(np.sum((x - x.mean()) ** 2))
    if sxx <= 0.0:
        raise DataError("covariate is constant; the slope is not identified")
    slope = float(np.sum((x - x.mean()) * (y - y.mean())) / sxx)
    intercept = y.mean() - slope * x.mean()
    resid = y - intercept - slope * x
    df = n - 2
    s2 = float(resid @ resid) / df
    se = math.sqrt(s2 / sxx)
    if se == 0.0:
        raise DataError("zero residual variance; the slope test is degenerate")
    tstat = slope / se
    p = float(2.0 * student_t.sf(abs(tstat), df))
    return TestResult(
        statistic=tstat,
        pvalue=p,
        kind="ols-t",
        label=label,
        df=df,
        tail="two-sided",
        estimate=slope,
        se=se,
    )
