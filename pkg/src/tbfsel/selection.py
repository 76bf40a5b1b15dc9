"""Model-space priors, enumeration, stochastic search and selection.

Variable selection places a beta-binomial (multiplicity-corrected) prior
on models: inclusion indicators are exchangeable Bernoulli(pi) with a
uniform prior on pi, so a model with k of p covariates has prior
k! (p-k)! / (p+1)!.  Function selection assigns each eligible covariate
1/2 to exclusion, 1/4 to a linear effect and 1/4 spread uniformly over
the non-linear power transforms.

Posterior model probabilities normalise exp(log BF + log prior) over the
evaluated set -- the full space for exhaustive enumeration, or the stored
top-k set for the Metropolis-Hastings search.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from .bayes_factors import GPriorSpec, score_models
from .data import Dataset
from .errors import ConfigError, DataError, NumericError
from .fitting import fit_model
from .modelspec import FP_POWERS, ModelSpec

ENUMERATION_BUDGET = 2**20
BMA_DEFAULT_MODELS = 8000


@dataclass(frozen=True)
class ModelPrior:
    """Prior over the model space.

    ``mode`` is ``"variable"`` (inclusion/exclusion only) or ``"fp"``
    (inclusion, linear, or fractional-polynomial transform).  In fp mode
    ``fp_allowed`` marks which covariates may be transformed; the rest
    split their mass 1/2 exclude, 1/2 linear.
    """

    mode: str
    p: int
    power_set: tuple = FP_POWERS
    max_degree: int = 2
    fp_allowed: tuple | None = None

    def __post_init__(self):
        if self.mode not in ("variable", "fp"):
            raise ConfigError(f"unknown model prior mode {self.mode!r}")
        if self.p < 0:
            raise ConfigError("p must be nonnegative")
        if self.max_degree not in (1, 2):
            raise ConfigError("max_degree must be 1 or 2")
        if self.fp_allowed is not None and len(self.fp_allowed) != self.p:
            raise ConfigError("fp_allowed must have one flag per covariate")

    @classmethod
    def for_dataset(cls, ds: Dataset, mode: str = "variable", **kw) -> "ModelPrior":
        fp_allowed = None
        if mode == "fp":
            fp_allowed = tuple(
                cov.fp_eligible and len(cov.columns) == 1 for cov in ds.covariates
            )
        return cls(mode=mode, p=ds.p, fp_allowed=fp_allowed, **kw)

    def allows_fp(self, k: int) -> bool:
        if self.mode != "fp":
            return False
        return True if self.fp_allowed is None else bool(self.fp_allowed[k])

    def nonlinear_assignments(self) -> tuple:
        """All power assignments other than the plain linear term."""
        ps = self.power_set
        opts = [(p,) for p in ps if float(p) != 1.0]
        if self.max_degree >= 2:
            opts += [
                tuple(sorted((float(ps[i]), float(ps[j]))))
                for i in range(len(ps))
                for j in range(i, len(ps))
            ]
        return tuple(opts)

    def inclusion_choices(self, k: int) -> tuple:
        """Ways covariate k can enter a model."""
        if self.allows_fp(k):
            return ("lin",) + self.nonlinear_assignments()
        return ("lin",)

    def choices(self, k: int) -> tuple:
        return (None,) + self.inclusion_choices(k)


def log_model_prior(spec: ModelSpec, prior: ModelPrior) -> float:
    """Log prior probability of a model specification."""
    if spec.p != prior.p:
        raise DataError(f"spec covers {spec.p} covariates, prior expects {prior.p}")
    if prior.mode == "variable":
        if any(a not in (None, "lin") for a in spec.assignments):
            raise DataError("variable-selection prior cannot score fp assignments")
        p, k = prior.p, len(spec.included)
        log_choose = gammaln(p + 1.0) - gammaln(k + 1.0) - gammaln(p - k + 1.0)
        return float(-np.log(p + 1.0) - log_choose)

    total = 0.0
    n_nonlin = len(prior.nonlinear_assignments())
    for k, a in enumerate(spec.assignments):
        if a is None:
            total += np.log(0.5)
        elif a == "lin":
            total += np.log(0.25) if prior.allows_fp(k) else np.log(0.5)
        else:
            if not prior.allows_fp(k):
                raise DataError(f"covariate {k} is not eligible for fp transforms")
            if tuple(a) not in prior.nonlinear_assignments():
                raise DataError(f"powers {a} outside the configured power set")
            total += np.log(0.25) - np.log(n_nonlin)
    return float(total)


@dataclass(frozen=True)
class ModelEntry:
    spec: ModelSpec
    z: float
    d: int
    log_tbf: float
    log_prior: float
    post_prob: float
    g_point: float | None = None
    error: str | None = None


@dataclass(frozen=True)
class ModelPosterior:
    """Evaluated models with normalised posterior probabilities.

    ``inclusion[k]`` is the summed posterior probability of models
    containing covariate k.  ``log_normalizer`` is log sum exp(log BF +
    log prior) over the evaluated set.
    """

    entries: tuple
    inclusion: np.ndarray
    log_normalizer: float
    prior: ModelPrior
    gspec: GPriorSpec
    dataset: Dataset = field(repr=False)
    g_global: float | None = None
    diagnostics: tuple = ()

    @property
    def n_models(self) -> int:
        return len(self.entries)

    def entry_for(self, spec: ModelSpec) -> ModelEntry | None:
        for e in self.entries:
            if e.spec == spec:
                return e
        return None


class _Evaluator:
    """Fits models on demand, caching (z, d) by specification."""

    def __init__(self, ds: Dataset, prior: ModelPrior):
        self.ds = ds
        self.prior = prior
        self._stats: dict[ModelSpec, tuple] = {}

    def stats(self, spec: ModelSpec) -> tuple:
        """(z, d, error-or-None) for one model."""
        hit = self._stats.get(spec)
        if hit is None:
            hit = _fit_stats(self.ds, spec)
            self._stats[spec] = hit
        return hit


def _fit_stats(ds: Dataset, spec: ModelSpec) -> tuple:
    try:
        fit = fit_model(ds, spec)
        return fit.z, fit.d, None
    except (NumericError, DataError) as exc:
        return 0.0, spec.dimension(ds), f"{type(exc).__name__}: {exc}"


def _enumerate_chunk(args):
    ds, masks = args
    out = []
    for mask in masks:
        out.append(_fit_stats(ds, ModelSpec.from_mask(mask)))
    return out


def _finalize(ds, prior, gspec, rows, diagnostics=()):
    """Normalise scored models into a ModelPosterior.

    ``rows`` is a list of (spec, z, d, error).  Failed fits keep their
    slot with log BF = -inf and a diagnostic.
    """
    specs = [r[0] for r in rows]
    log_priors = np.array([log_model_prior(s, prior) for s in specs])
    ok = [i for i, r in enumerate(rows) if r[3] is None]
    stats = [(rows[i][1], rows[i][2]) for i in ok]
    scored = score_models(stats, gspec, ds.n_eff, log_priors=log_priors[ok])

    log_tbf = np.full(len(rows), -np.inf)
    g_points: list = [None] * len(rows)
    for pos, i in enumerate(ok):
        log_tbf[i] = scored[pos].log_tbf
        g_points[i] = scored[pos].g_point
    g_global = None
    if gspec.kind == "global_eb" and ok:
        g_global = scored[0].g_point

    log_unnorm = log_tbf + log_priors
    log_z = float(logsumexp(log_unnorm)) if np.any(np.isfinite(log_unnorm)) else -np.inf
    with np.errstate(invalid="ignore"):
        post = np.exp(log_unnorm - log_z)
    post[~np.isfinite(log_unnorm)] = 0.0

    diag = list(diagnostics)
    for i, r in enumerate(rows):
        if r[3] is not None:
            diag.append(f"{r[0].label(ds)}: {r[3]}")

    entries = [
        ModelEntry(
            spec=specs[i],
            z=rows[i][1],
            d=rows[i][2],
            log_tbf=float(log_tbf[i]),
            log_prior=float(log_priors[i]),
            post_prob=float(post[i]),
            g_point=g_points[i],
            error=rows[i][3],
        )
        for i in range(len(rows))
    ]
    entries.sort(key=lambda e: (-e.post_prob, e.d, e.spec.label(ds)))

    inclusion = np.zeros(prior.p)
    for e in entries:
        for k in e.spec.included:
            inclusion[k] += e.post_prob

    return ModelPosterior(
        entries=tuple(entries),
        inclusion=inclusion,
        log_normalizer=log_z,
        prior=prior,
        gspec=gspec,
        dataset=ds,
        g_global=g_global,
        diagnostics=tuple(diag),
    )


def enumerate_models(
    ds: Dataset,
    prior: ModelPrior,
    gspec: GPriorSpec,
    budget: int = ENUMERATION_BUDGET,
    workers: int = 1,
) -> ModelPosterior:
    """Score every model of a variable-selection space exhaustively.

    Refuses spaces larger than ``budget`` (default 2**20) -- use
    :func:`stochastic_search` there.  With ``workers > 1`` the space is
    partitioned across processes and merged in a fixed order, so results
    are identical to a serial run.
    """
    if prior.mode != "variable":
        raise ConfigError(
            "exhaustive enumeration is limited to variable selection; "
            "use stochastic_search for function selection"
        )
    if prior.p != ds.p:
        raise ConfigError(f"prior expects {prior.p} covariates, dataset has {ds.p}")
    n_models = 2**prior.p
    if n_models > budget:
        raise ConfigError(
            f"model space has {n_models} > budget {budget} models; "
            "use stochastic_search instead"
        )
    masks = [
        tuple((m >> k) & 1 for k in range(prior.p)) for m in range(n_models)
    ]
    if workers > 1 and n_models > 64:
        chunks = np.array_split(np.arange(n_models), workers * 4)
        jobs = [(ds, [masks[i] for i in chunk]) for chunk in chunks if len(chunk)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_enumerate_chunk, jobs))
        flat = [st for chunk in results for st in chunk]
    else:
        flat = [_fit_stats(ds, ModelSpec.from_mask(mask)) for mask in masks]
    rows = [
        (ModelSpec.from_mask(mask), z, d, err)
        for mask, (z, d, err) in zip(masks, flat)
    ]
    return _finalize(ds, prior, gspec, rows)


def _propose(spec: ModelSpec, prior: ModelPrior, rng) -> ModelSpec | None:
    inc = spec.included
    exc = spec.excluded
    moves = []
    if exc:
        moves.append("add")
    if inc:
        moves.append("delete")
    if inc and exc:
        moves.append("swap")
    if prior.mode == "fp":
        changeable = [k for k in inc if len(prior.inclusion_choices(k)) > 1]
        if changeable:
            moves.append("change")
    if not moves:
        return None
    move = moves[rng.integers(len(moves))]
    if move == "add":
        k = exc[rng.integers(len(exc))]
        opts = prior.inclusion_choices(k)
        return spec.with_assignment(k, opts[rng.integers(len(opts))])
    if move == "delete":
        k = inc[rng.integers(len(inc))]
        return spec.with_assignment(k, None)
    if move == "swap":
        k_out = inc[rng.integers(len(inc))]
        k_in = exc[rng.integers(len(exc))]
        opts = prior.inclusion_choices(k_in)
        return spec.with_assignment(k_out, None).with_assignment(
            k_in, opts[rng.integers(len(opts))]
        )
    k = changeable[rng.integers(len(changeable))]
    opts = [a for a in prior.inclusion_choices(k) if a != spec.assignments[k]]
    return spec.with_assignment(k, opts[rng.integers(len(opts))])


def stochastic_search(
    ds: Dataset,
    prior: ModelPrior,
    gspec: GPriorSpec,
    iterations: int,
    top_k: int,
    seed,
    chains: int = 1,
    start: ModelSpec | None = None,
) -> ModelPosterior:
    """Metropolis-Hastings search over the model space.

    The chain length counts states including the start, so
    ``iterations = 1`` evaluates the initial model only.  All distinct
    models visited are scored; the best ``top_k`` by unnormalised
    posterior form the reported set, over which probabilities are
    normalised.  Under the global EB scheme the chain explores with local
    EB scores and the stored set is re-scored at the global estimate.

    Runs are deterministic given the seed; multiple chains use seeds
    spawned from it and merge their stored sets with deduplication.
    """
    if iterations < 1 or top_k < 1:
        raise ConfigError("iterations and top_k must be >= 1")
    if prior.p != ds.p:
        raise ConfigError(f"prior expects {prior.p} covariates, dataset has {ds.p}")
    evaluator = _Evaluator(ds, prior)
    explore = GPriorSpec.local_eb() if gspec.kind == "global_eb" else gspec
    scores: dict[ModelSpec, float] = {}

    def log_unnorm(spec: ModelSpec) -> float:
        hit = scores.get(spec)
        if hit is None:
            z, d, err = evaluator.stats(spec)
            if err is not None:
                hit = -np.inf
            else:
                bf = score_models([(z, d)], explore, ds.n_eff)[0].log_tbf
                hit = bf + log_model_prior(spec, prior)
            scores[spec] = hit
        return hit

    seeds = np.random.SeedSequence(seed).spawn(chains)
    for chain_seed in seeds:
        rng = np.random.default_rng(chain_seed)
        current = start if start is not None else ModelSpec.null(prior.p)
        lp_cur = log_unnorm(current)
        for _ in range(iterations - 1):
            proposal = _propose(current, prior, rng)
            if proposal is None:
                continue
            lp_prop = log_unnorm(proposal)
            if np.log(rng.random()) < lp_prop - lp_cur:
                current, lp_cur = proposal, lp_prop
    ranked = sorted(
        scores.keys(), key=lambda s: (-scores[s], s.dimension(ds), s.label(ds))
    )[:top_k]
    rows = [(s, *evaluator.stats(s)) for s in ranked]
    note = f"stochastic search stored {len(rows)} of {len(scores)} visited models"
    return _finalize(ds, prior, gspec, rows, diagnostics=(note,))


@dataclass(frozen=True)
class Selection:
    """A selected model (or weighted set of models) for prediction."""

    kind: str
    entries: tuple  # of (ModelSpec, weight)
    passing: tuple | None = None  # covariates with inclusion >= 1/2 (mpm)

    @property
    def specs(self):
        return tuple(s for s, _ in self.entries)


def select_map(post: ModelPosterior) -> Selection:
    """Highest posterior probability model; ties favour smaller dimension."""
    if not post.entries:
        raise DataError("empty model posterior")
    return Selection(kind="map", entries=((post.entries[0].spec, 1.0),))


def select_mpm(post: ModelPosterior) -> Selection:
    """Median probability model: covariates with inclusion >= 1/2.

    Variable mode returns that single model (fit on demand downstream if
    it was never visited).  Function-selection mode returns the average
    over stored models whose covariate set matches exactly, since a
    single transformation cannot be singled out.
    """
    if not post.entries:
        raise DataError("empty model posterior")
    passing = tuple(int(k) for k in np.where(post.inclusion >= 0.5)[0])
    if post.prior.mode == "variable":
        spec = ModelSpec.from_mask([k in passing for k in range(post.prior.p)])
        return Selection(kind="mpm", entries=((spec, 1.0),), passing=passing)
    matching = [
        e for e in post.entries if e.post_prob > 0 and set(e.spec.included) == set(passing)
    ]
    if not matching:
        raise DataError(
            "no stored model contains exactly the median-probability covariates"
        )
    total = sum(e.post_prob for e in matching)
    return Selection(
        kind="mpm",
        entries=tuple((e.spec, e.post_prob / total) for e in matching),
        passing=passing,
    )


def select_bma(post: ModelPosterior, models: int = BMA_DEFAULT_MODELS) -> Selection:
    """Best ``models`` entries with renormalised weights."""
    if not post.entries:
        raise DataError("empty model posterior")
    top = [e for e in post.entries[:models] if e.post_prob > 0]
    if not top:
        top = [post.entries[0]]
        return Selection(kind="bma", entries=((top[0].spec, 1.0),))
    total = sum(e.post_prob for e in top)
    return Selection(
        kind="bma", entries=tuple((e.spec, e.post_prob / total) for e in top)
    )
