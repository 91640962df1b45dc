"""Per-class loss normalization, two-component mixture fits, and the
certain / uncertain / hard sample split.

Losses are z-scored within each observed-label class and then min-max
rescaled to [RESCALE_EPS, 1 - RESCALE_EPS] so a Beta likelihood is
well-defined. The Beta mixture is fitted on the rescaled values; the
Gaussian variant is fitted on the raw z-scores. In both cases the component
with the smaller mean is the clean one, and a sample is *certain* when its
value is at or below the clean mean, *hard* at or above the noisy mean, and
*uncertain* strictly in between.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import backends

RESCALE_EPS = 1e-4
EM_MAX_ITER = 50
EM_TOL = 1e-4
LOGLIK_SLACK = 1e-8
MIN_CLASS_MEMBERS = 4
GAUSS_VAR_FLOOR = 1e-6

# Bounds on the Beta total concentration (alpha + beta). Moment matching
# preserves the component mean exactly as long as both shapes are scaled by
# the same clipped factor.
_BETA_CONC_MIN = 1e-2
_BETA_CONC_MAX = 1e7

SELECTORS = ("bmm", "gmm", "sloss")


def per_sample_ce(logits, labels) -> np.ndarray:
    """Unreduced cross-entropy -log softmax(logits)[label], log-sum-exp stabilized."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, n_classes = logits.shape
    if labels.shape != (n,):
        raise ValueError("labels must align with logits rows")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError("label outside [0, C)")
    m = logits.max(axis=1)
    lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
    return lse - logits[np.arange(n), labels]


@dataclass
class ClassLossStats:
    """Loss statistics for one observed-label class."""

    label: int
    mu: float
    sigma: float
    member_ids: np.ndarray  # positions into the training arrays
    raw_losses: np.ndarray
    zscores: np.ndarray
    normalized: np.ndarray  # rescaled to [eps, 1 - eps]
    degenerate: bool  # no loss spread, or too few members to fit


@dataclass
class MixtureFit:
    """Two-component mixture; component 0 is clean (smaller mean)."""

    family: str  # "beta" | "gaussian"
    weights: tuple  # mixing proportions (clean, noisy), sum to 1
    component_means: tuple  # clean <= noisy
    alpha: tuple | None = None  # Beta shapes
    beta: tuple | None = None
    means: tuple | None = None  # Gaussian locations
    variances: tuple | None = None
    n_iterations: int = 0
    converged: bool = False
    loglik_trace: list = field(default_factory=list)


@dataclass
class SamplePartition:
    """Disjoint certain/uncertain/hard index sets covering [0, n)."""

    certain_ids: np.ndarray
    uncertain_ids: np.ndarray
    hard_ids: np.ndarray
    p_clean: np.ndarray  # per-position clean posterior in [0, 1]


def normalize_losses_per_class(losses, noisy_labels, n_classes, eps=RESCALE_EPS):
    """Group losses by observed label, z-score per class (population sigma),
    then min-max rescale each class to [eps, 1 - eps].

    Classes with zero loss spread or fewer than MIN_CLASS_MEMBERS members are
    flagged degenerate (the partition sends them wholly to the certain set).
    """
    losses = np.asarray(losses, dtype=np.float64)
    noisy_labels = np.asarray(noisy_labels, dtype=np.int64)
    stats = []
    for c in range(n_classes):
        member_ids = np.flatnonzero(noisy_labels == c)
        raw = losses[member_ids]
        if member_ids.size == 0:
            stats.append(
                ClassLossStats(c, float("nan"), 0.0, member_ids, raw, raw.copy(), raw.copy(), True)
            )
            continue
        mu = float(raw.mean())
        sigma = float(raw.std())
        degenerate = sigma == 0.0 or member_ids.size < MIN_CLASS_MEMBERS
        if sigma > 0.0:
            z = (raw - mu) / sigma
            lo, hi = z.min(), z.max()
            normalized = eps + (1.0 - 2.0 * eps) * (z - lo) / (hi - lo)
        else:
            z = np.zeros_like(raw)
            normalized = np.full_like(raw, 0.5)
        stats.append(ClassLossStats(c, mu, sigma, member_ids, raw, z, normalized, degenerate))
    return stats


def _median_split_resp(values: np.ndarray) -> np.ndarray:
    # Lower half (ties included, stable order) seeds the clean component.
    order = np.argsort(values, kind="stable")
    r0 = np.zeros(values.size)
    r0[order[: (values.size + 1) // 2]] = 1.0
    return r0


def _beta_component(values, weights):
    mean, var = backends.backend.weighted_mean_var(values, weights)
    if not np.isfinite(mean):
        mean, var = 0.5, 1.0 / 12.0
    var = max(var, 1e-12)
    concentration = mean * (1.0 - mean) / var - 1.0
    concentration = min(max(concentration, _BETA_CONC_MIN), _BETA_CONC_MAX)
    return mean * concentration, (1.0 - mean) * concentration


def _gauss_component(values, weights):
    mean, var = backends.backend.weighted_mean_var(values, weights)
    if not np.isfinite(mean):
        mean, var = float(values.mean()), float(values.var())
    return mean, max(var, GAUSS_VAR_FLOOR)


def _mstep(values, r0, family):
    w0 = float(r0.mean())
    component = _beta_component if family == "beta" else _gauss_component
    p0 = component(values, r0)
    p1 = component(values, 1.0 - r0)
    return (w0, *p0, 1.0 - w0, *p1)


def _estep(values, params, family):
    fn = backends.backend.beta_estep if family == "beta" else backends.backend.gauss_estep
    return fn(values, *params)


def _fit_mixture(values, family, max_iter, tol):
    values = np.ascontiguousarray(values, dtype=np.float64)
    if values.size < MIN_CLASS_MEMBERS:
        raise ValueError(f"mixture fit needs >= {MIN_CLASS_MEMBERS} samples, got {values.size}")
    if family == "beta" and not ((values > 0.0) & (values < 1.0)).all():
        raise ValueError("beta mixture fit requires values strictly inside (0, 1)")

    params = _mstep(values, _median_split_resp(values), family)
    resp, loglik = _estep(values, params, family)
    trace = [loglik]
    converged = False
    n_iterations = 0
    for _ in range(max_iter):
        candidate = _mstep(values, resp, family)
        cand_resp, cand_loglik = _estep(values, candidate, family)
        if cand_loglik < loglik - LOGLIK_SLACK:
            # A moment-matched step is not guaranteed to improve the observed
            # likelihood; reject it and keep the last good parameters.
            break
        delta = float(np.abs(cand_resp - resp).mean())
        params, resp, loglik = candidate, cand_resp, cand_loglik
        trace.append(loglik)
        n_iterations += 1
        if delta < tol:
            converged = True
            break

    w0, a0, b0, w1, a1, b1 = params
    if family == "beta":
        means = (a0 / (a0 + b0), a1 / (a1 + b1))
        comps = [(w0, a0, b0, means[0]), (w1, a1, b1, means[1])]
        comps.sort(key=lambda c: c[3])
        return MixtureFit(
            family="beta",
            weights=(comps[0][0], comps[1][0]),
            component_means=(comps[0][3], comps[1][3]),
            alpha=(comps[0][1], comps[1][1]),
            beta=(comps[0][2], comps[1][2]),
            n_iterations=n_iterations,
            converged=converged,
            loglik_trace=trace,
        )
    comps = [(w0, a0, b0), (w1, a1, b1)]  # (weight, mean, var)
    comps.sort(key=lambda c: c[1])
    return MixtureFit(
        family="gaussian",
        weights=(comps[0][0], comps[1][0]),
        component_means=(comps[0][1], comps[1][1]),
        means=(comps[0][1], comps[1][1]),
        variances=(comps[0][2], comps[1][2]),
        n_iterations=n_iterations,
        converged=converged,
        loglik_trace=trace,
    )


def fit_bmm(normalized_losses, max_iter=EM_MAX_ITER, tol=EM_TOL) -> MixtureFit:
    """EM fit of a two-component Beta mixture on values in (0, 1).

    Initialized by a median split (lower half seeds the clean component);
    the M step is responsibility-weighted moment matching, guarded so the
    observed log-likelihood never decreases by more than LOGLIK_SLACK.
    Non-convergence within ``max_iter`` is not an error.
    """
    return _fit_mixture(normalized_losses, "beta", max_iter, tol)


def fit_gmm(zscores, max_iter=EM_MAX_ITER, tol=EM_TOL) -> MixtureFit:
    """Same EM scheme with Gaussian components on raw z-scores."""
    return _fit_mixture(zscores, "gaussian", max_iter, tol)


def _component_logpdfs(values, fit: MixtureFit):
    values = np.ascontiguousarray(values, dtype=np.float64)
    if fit.family == "beta":
        l0 = backends.backend.beta_logpdf(values, *_comp_params(fit, 0))
        l1 = backends.backend.beta_logpdf(values, *_comp_params(fit, 1))
    else:
        l0 = backends.backend.gauss_logpdf(values, *_comp_params(fit, 0))
        l1 = backends.backend.gauss_logpdf(values, *_comp_params(fit, 1))
    return np.asarray(l0), np.asarray(l1)


def _comp_params(fit: MixtureFit, j: int):
    if fit.family == "beta":
        return fit.alpha[j], fit.beta[j]
    return fit.means[j], fit.variances[j]


def clean_posteriors(values, fit: MixtureFit) -> np.ndarray:
    """Responsibility of the clean component at each value; 0.5 where both
    densities vanish numerically."""
    l0, l1 = _component_logpdfs(values, fit)
    with np.errstate(divide="ignore"):
        l0 = l0 + (np.log(fit.weights[0]) if fit.weights[0] > 0 else -np.inf)
        l1 = l1 + (np.log(fit.weights[1]) if fit.weights[1] > 0 else -np.inf)
    out = np.empty(l0.shape)
    both_dead = ~np.isfinite(np.maximum(l0, l1))
    out[both_dead] = 0.5
    live = ~both_dead
    # expit of the log-density gap is exact and overflow-safe
    out[live] = expit((l0 - l1)[live])
    return out


def posterior_clean(value: float, fit: MixtureFit) -> float:
    return float(clean_posteriors(np.asarray([value], dtype=np.float64), fit)[0])


def fit_class_mixtures(stats, selector: str):
    """Fit the configured mixture per non-degenerate class; {} for sloss."""
    if selector not in SELECTORS:
        raise ValueError(f"selector must be one of {SELECTORS}, got {selector!r}")
    fits = {}
    if selector == "sloss":
        return fits
    for st in stats:
        if st.degenerate:
            continue
        if selector == "bmm":
            fits[st.label] = fit_bmm(st.normalized)
        else:
            fits[st.label] = fit_gmm(st.zscores)
    return fits


def _coverage(stats) -> int:
    ids = np.concatenate([st.member_ids for st in stats]) if stats else np.empty(0, np.int64)
    n = ids.size
    if n == 0 or not np.array_equal(np.sort(ids), np.arange(n)):
        raise ValueError("class stats must cover sample positions 0..n-1 exactly once")
    return n


def partition(stats, fits) -> SamplePartition:
    """Threshold every sample against its class fit's component means.

    certain: value <= clean mean; hard: value >= noisy mean; uncertain in
    between. Degenerate classes (and classes without a fit) contribute all
    members to the certain set with p_clean = 1.
    """
    n = _coverage(stats)
    certain, uncertain, hard = [], [], []
    p_clean = np.zeros(n)
    for st in stats:
        if st.member_ids.size == 0:
            continue
        fit = fits.get(st.label)
        if st.degenerate or fit is None:
            certain.append(st.member_ids)
            p_clean[st.member_ids] = 1.0
            continue
        values = st.normalized if fit.family == "beta" else st.zscores
        mu_clean, mu_noisy = fit.component_means
        p_clean[st.member_ids] = clean_posteriors(values, fit)
        is_certain = values <= mu_clean
        is_hard = (values >= mu_noisy) & ~is_certain
        certain.append(st.member_ids[is_certain])
        hard.append(st.member_ids[is_hard])
        uncertain.append(st.member_ids[~is_certain & ~is_hard])
    return SamplePartition(
        certain_ids=_gather(certain),
        uncertain_ids=_gather(uncertain),
        hard_ids=_gather(hard),
        p_clean=p_clean,
    )


def sloss_partition(stats) -> SamplePartition:
    """Small-loss baseline: one global threshold at the mean raw loss.

    Samples at or below the mean are certain (p_clean 1), the rest are hard
    (p_clean 0); the uncertain set is always empty.
    """
    n = _coverage(stats)
    ids = np.concatenate([st.member_ids for st in stats])
    raw = np.concatenate([st.raw_losses for st in stats])
    threshold = raw.mean()
    keep = raw <= threshold
    p_clean = np.zeros(n)
    p_clean[ids[keep]] = 1.0
    return SamplePartition(
        certain_ids=np.sort(ids[keep]),
        uncertain_ids=np.empty(0, dtype=np.int64),
        hard_ids=np.sort(ids[~keep]),
        p_clean=p_clean,
    )


def _gather(chunks):
    if not chunks:
        return np.empty(0, dtype=np.int64)
    return np.sort(np.concatenate(chunks).astype(np.int64))


def selection_dump(epoch, stats, fits, part: SamplePartition) -> dict:
    """JSON-ready snapshot of one epoch's selection state."""
    classes = {}
    for st in stats:
        entry = {
            "n_members": int(st.member_ids.size),
            "degenerate": bool(st.degenerate),
        }
        fit = fits.get(st.label)
        if fit is not None:
            entry.update(
                {
                    "family": fit.family,
                    "weights": list(fit.weights),
                    "component_means": list(fit.component_means),
                    "converged": fit.converged,
                    "n_iterations": fit.n_iterations,
                }
            )
            if fit.family == "beta":
                entry["alpha"] = list(fit.alpha)
                entry["beta"] = list(fit.beta)
            else:
                entry["variances"] = list(fit.variances)
        classes[str(st.label)] = entry
    return {
        "epoch": int(epoch),
        "classes": classes,
        "set_sizes": {
            "certain": int(part.certain_ids.size),
            "uncertain": int(part.uncertain_ids.size),
            "hard": int(part.hard_ids.size),
        },
        "certain_ids": part.certain_ids.tolist(),
        "uncertain_ids": part.uncertain_ids.tolist(),
        "hard_ids": part.hard_ids.tolist(),
        "p_clean": [float(v) for v in part.p_clean],
    }
