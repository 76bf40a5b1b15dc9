"""Command line interface.

Subcommands: ``select`` (model search and selection), ``sample``
(posterior draws for the selected model), ``validate`` (bootstrap
cross-validation) and ``scores`` (score a predictions file).  A single
JSON configuration file drives each run; every report embeds the
resolved configuration and the master seed, and reruns with the same
seed produce byte-identical output.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .bayes_factors import GPriorSpec, max_dbf_linear, max_tbf, tbf_bias_correction
from .data import Dataset
from .errors import ConfigError, TbfselError
from .io import ColumnSpec, ingest_csv
from .modelspec import FP_POWERS
from .posterior import (
    GPosterior,
    incig_quantile,
    sample_coefficients,
    sample_g,
    survival_curves,
)
from .selection import (
    ModelPosterior,
    ModelPrior,
    enumerate_models,
    select_bma,
    select_map,
    select_mpm,
    stochastic_search,
)
from .validation import bootstrap_cv, score_predictions, tbf_strategy

_TOP_KEYS = {
    "data",
    "g_prior",
    "model_prior",
    "search",
    "selection",
    "sampling",
    "bootstrap",
    "seed",
    "threads",
    "output",
}
_SECTION_KEYS = {
    "data": {"path", "family", "response", "status", "weight", "covariates"},
    "g_prior": {"kind", "g", "a", "b", "bias_correct"},
    "model_prior": {"mode", "power_set", "max_degree"},
    "search": {"method", "iterations", "top_k", "chains", "budget"},
    "selection": {"kind", "models"},
    "sampling": {"draws"},
    "bootstrap": {"replicates"},
}
_COVARIATE_KEYS = {"name", "kind", "fp"}


@dataclass
class RunConfig:
    """Validated run configuration with defaults resolved."""

    data: dict
    g_prior: dict = field(default_factory=lambda: {"kind": "local_eb"})
    model_prior: dict = field(default_factory=lambda: {"mode": "variable"})
    search: dict = field(default_factory=lambda: {"method": "exhaustive"})
    selection: dict = field(default_factory=lambda: {"kind": "bma", "models": 8000})
    sampling: dict = field(default_factory=lambda: {"draws": 1000})
    bootstrap: dict = field(default_factory=lambda: {"replicates": 1000})
    seed: int = 0
    threads: int = 1
    output: str = "."

    def resolved(self) -> dict:
        return {
            "data": self.data,
            "g_prior": self.g_prior,
            "model_prior": self.model_prior,
            "search": self.search,
            "selection": self.selection,
            "sampling": self.sampling,
            "bootstrap": self.bootstrap,
            "seed": self.seed,
            "threads": self.threads,
            "output": self.output,
        }


def _reject_unknown(mapping: dict, allowed: set, where: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def load_config(path, seed=None, threads=None, output=None) -> RunConfig:
    """Parse and validate a JSON configuration file, applying overrides."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    _reject_unknown(raw, _TOP_KEYS, "config")
    for section, keys in _SECTION_KEYS.items():
        if section in raw:
            if not isinstance(raw[section], dict):
                raise ConfigError(f"config section {section!r} must be an object")
            _reject_unknown(raw[section], keys, section)
    if "data" not in raw:
        raise ConfigError("config requires a data section")
    for cov in raw["data"].get("covariates", []):
        _reject_unknown(cov, _COVARIATE_KEYS, "covariate entry")
    cfg = RunConfig(**raw)
    if seed is not None:
        cfg.seed = seed
    if threads is not None:
        cfg.threads = threads
    if output is not None:
        cfg.output = output
    return cfg


def _ingest(cfg: RunConfig):
    data = cfg.data
    for key in ("path", "family", "response", "covariates"):
        if key not in data:
            raise ConfigError(f"data section requires {key!r}")
    covs = [ColumnSpec(**c) for c in data["covariates"]]
    return ingest_csv(
        data["path"],
        family=data["family"],
        response=data["response"],
        covariates=covs,
        status=data.get("status"),
        weight=data.get("weight"),
    )


def _gspec(cfg: RunConfig) -> GPriorSpec:
    g = dict(cfg.g_prior)
    kind = g.pop("kind", "local_eb")
    return GPriorSpec(kind=kind, **g)


def _model_prior(cfg: RunConfig, ds: Dataset) -> ModelPrior:
    mp = cfg.model_prior
    return ModelPrior.for_dataset(
        ds,
        mode=mp.get("mode", "variable"),
        power_set=tuple(mp.get("power_set", FP_POWERS)),
        max_degree=mp.get("max_degree", 2),
    )


def _run_search(cfg: RunConfig, ds: Dataset, prior: ModelPrior) -> ModelPosterior:
    gspec = _gspec(cfg)
    method = cfg.search.get("method", "exhaustive")
    if method == "exhaustive":
        return enumerate_models(
            ds,
            prior,
            gspec,
            budget=cfg.search.get("budget", 2**20),
            workers=cfg.threads,
        )
    if method == "mcmc":
        return stochastic_search(
            ds,
            prior,
            gspec,
            iterations=cfg.search.get("iterations", 100_000),
            top_k=cfg.search.get("top_k", 10_000),
            seed=cfg.seed,
            chains=cfg.search.get("chains", 1),
        )
    raise ConfigError(f"unknown search method {method!r}")


def _select(cfg: RunConfig, post: ModelPosterior):
    kind = cfg.selection.get("kind", "bma")
    if kind == "map":
        return select_map(post)
    if kind == "mpm":
        return select_mpm(post)
    if kind == "bma":
        return select_bma(post, models=cfg.selection.get("models", 8000))
    raise ConfigError(f"unknown selection kind {kind!r}")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_json(path: Path, obj) -> None:
    path.write_text(
        json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n",
        encoding="utf-8",
    )


def _entries_table(post: ModelPosterior, ds: Dataset):
    """Per-model rows; Gaussian local-EB runs also export the exact
    linear-model comparison (maximised factor, error, approximate error)."""
    gaussian_eb = ds.family == "gaussian" and post.gspec.kind == "local_eb"
    sw = float(ds.w.sum())
    header = ["model", "z", "d", "log_tbf", "log_prior", "post_prob"]
    if gaussian_eb:
        header += ["log_mdbf", "delta", "delta_approx"]
    rows = []
    for e in post.entries:
        row = [
            e.spec.label(ds),
            e.z,
            e.d,
            e.log_tbf,
            e.log_prior,
            e.post_prob,
        ]
        if gaussian_eb:
            if e.d > 0 and e.error is None and sw > e.d + 1:
                r2 = float(-np.expm1(-e.z / sw))
                log_mdbf = max_dbf_linear(r2, sw, e.d)
                row += [
                    log_mdbf,
                    max_tbf(e.z, e.d) - log_mdbf,
                    tbf_bias_correction(e.z, e.d, sw),
                ]
            else:
                row += [0.0, 0.0, 0.0]
        rows.append(row)
    return header, rows


def run_select(cfg: RunConfig) -> dict:
    """Search the model space and report selections; returns the report."""
    ds, ingest = _ingest(cfg)
    prior = _model_prior(cfg, ds)
    post = _run_search(cfg, ds, prior)
    sel = _select(cfg, post)

    outdir = Path(cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    header, rows = _entries_table(post, ds)
    _write_csv(outdir / "models.csv", header, rows)
    _write_csv(
        outdir / "inclusion.csv",
        ["covariate", "inclusion_prob"],
        [
            (ds.covariates[k].name, float(post.inclusion[k]))
            for k in range(ds.p)
        ],
    )

    report = {
        "config": cfg.resolved(),
        "ingest": {
            "rows_read": ingest.rows_read,
            "rows_dropped": ingest.rows_dropped,
            "n": ingest.n,
            "n_obs": ingest.n_obs,
        },
        "models": [
            {
                "model": e.spec.label(ds),
                "z": e.z,
                "d": e.d,
                "log_tbf": e.log_tbf,
                "log_prior": e.log_prior,
                "post_prob": e.post_prob,
                "error": e.error,
            }
            for e in post.entries
        ],
        "inclusion": {
            ds.covariates[k].name: float(post.inclusion[k]) for k in range(ds.p)
        },
        "log_normalizer": post.log_normalizer,
        "n_models": post.n_models,
        "g_global": post.g_global,
        "selection": {
            "kind": sel.kind,
            "models": [[spec.label(ds), w] for spec, w in sel.entries],
            "passing": list(sel.passing) if sel.passing is not None else None,
        },
        "diagnostics": list(post.diagnostics),
    }
    _write_json(outdir / "report_select.json", report)
    return report


def _g_summary(post: GPosterior, draws: np.ndarray) -> dict:
    qs = [0.025, 0.25, 0.5, 0.75, 0.975]
    if post.kind == "incig":
        quants = {str(q): float(incig_quantile(q, post.a, post.b)) for q in qs}
    else:
        quants = {str(q): float(np.quantile(draws, q)) for q in qs}
    return {
        "kind": post.kind,
        "mean": float(draws.mean()),
        "quantiles": quants,
        "shrinkage_mean": float(np.mean(draws / (draws + 1.0))),
    }


def run_sample(cfg: RunConfig) -> dict:
    """Posterior draws of g and coefficients for the selected model."""
    from .fitting import fit_model

    ds, ingest = _ingest(cfg)
    prior = _model_prior(cfg, ds)
    post = _run_search(cfg, ds, prior)
    sel = _select(cfg, post)
    if len(sel.entries) != 1:
        raise ConfigError(
            "sampling report requires a single-model selection (map, or mpm "
            "under variable selection)"
        )
    spec = sel.entries[0][0]
    fit = fit_model(ds, spec)
    size = cfg.sampling.get("draws", 1000)
    gspec = _gspec(cfg)
    if fit.d == 0:
        raise ConfigError("selected model is the null model; nothing to sample")
    if gspec.kind == "global_eb":
        gpost = GPosterior(kind="point", g=post.g_global or 0.0)
    else:
        gpost = GPosterior.from_model(gspec, fit.z, fit.d, ds.n_eff)
    seq = np.random.SeedSequence(cfg.seed).spawn(2)
    g_draws = sample_g(gpost, size, seq[0])
    coef = sample_coefficients(fit, g_draws, seq[1])

    names = (["(intercept)"] if fit.has_intercept else []) + list(fit.design.names)
    coef_summary = {
        name: {
            "mean": float(coef.draws[:, j].mean()),
            "sd": float(coef.draws[:, j].std(ddof=1)),
            "q025": float(np.quantile(coef.draws[:, j], 0.025)),
            "q975": float(np.quantile(coef.draws[:, j], 0.975)),
            "mle": float(
                fit.alpha_hat if (fit.has_intercept and j == 0) else
                fit.beta_hat[j - 1 if fit.has_intercept else j]
            ),
        }
        for j, name in enumerate(names)
    }

    outdir = Path(cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    report = {
        "config": cfg.resolved(),
        "model": spec.label(ds),
        "z": fit.z,
        "d": fit.d,
        "g_posterior": _g_summary(gpost, g_draws),
        "coefficients": coef_summary,
    }
    if ds.family == "cox":
        profile = ds.X.mean(axis=0)
        curve = survival_curves(ds, coef, profile)
        _write_csv(
            outdir / "survival.csv",
            ["time", "cum_hazard", "surv_mean", "surv_median", "surv_lower", "surv_upper"],
            [
                (
                    float(curve.times[i]),
                    float(curve.baseline.at(curve.times[i])[0]),
                    float(curve.mean[i]),
                    float(curve.median[i]),
                    float(curve.lower[i]),
                    float(curve.upper[i]),
                )
                for i in range(curve.times.size)
            ],
        )
        report["survival_profile"] = [float(v) for v in profile]
    _write_json(outdir / "report_sample.json", report)
    return report


def run_validate(cfg: RunConfig) -> dict:
    """Bootstrap cross-validation of the configured strategy."""
    ds, ingest = _ingest(cfg)
    gspec = _gspec(cfg)
    mp = cfg.model_prior
    method = cfg.search.get("method", "exhaustive")
    search = None
    if method == "mcmc":
        search = (
            cfg.search.get("iterations", 10_000),
            cfg.search.get("top_k", 1_000),
        )
    strategy = tbf_strategy(
        gspec,
        mode=mp.get("mode", "variable"),
        selection=cfg.selection.get("kind", "bma"),
        bma_models=cfg.selection.get("models", 8000),
        search=search,
        power_set=tuple(mp.get("power_set", FP_POWERS)),
        max_degree=mp.get("max_degree", 2),
    )
    report_bs = bootstrap_cv(
        ds, strategy, B=cfg.bootstrap.get("replicates", 1000), seed=cfg.seed
    )
    outdir = Path(cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_csv(
        outdir / "replicates.csv",
        ["replicate", "status", "m", "auc", "cs", "ls"],
        [(r.index, r.status, r.m, r.auc, r.cs, r.ls) for r in report_bs.replicates],
    )
    report = {
        "config": cfg.resolved(),
        "scores": {
            "auc": {"mean": report_bs.auc_mean, "se": report_bs.auc_se},
            "cs": {"mean": report_bs.cs_mean, "se": report_bs.cs_se},
            "ls": {"mean": report_bs.ls_mean, "se": report_bs.ls_se},
        },
        "n_ok": report_bs.n_ok,
        "n_failed": report_bs.n_failed,
        "n_single_class": report_bs.n_single_class,
        "n_cs_undefined": report_bs.n_cs_undefined,
    }
    _write_json(outdir / "report_validate.json", report)
    return report


def _cmd_scores(args) -> int:
    frame = pd.read_csv(args.predictions)
    for col in (args.pi_column, args.y_column):
        if col not in frame.columns:
            raise ConfigError(f"predictions file lacks column {col!r}")
    rep = score_predictions(frame[args.pi_column].to_numpy(), frame[args.y_column].to_numpy())
    payload = {"auc": rep.auc, "cs": rep.cs, "ls": rep.ls, "m": rep.m}
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tbfsel",
        description="Objective Bayesian variable and function selection "
        "with deviance-based Bayes factors",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("select", "search the model space and report selections"),
        ("sample", "draw from the posterior of the selected model"),
        ("validate", "bootstrap cross-validation of the configured strategy"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--threads", type=int, default=None, help="worker count")
        p.add_argument("--out", default=None, help="output directory override")
    p = sub.add_parser("scores", help="score a predictions csv (pi, y columns)")
    p.add_argument("--predictions", required=True)
    p.add_argument("--pi-column", default="pi")
    p.add_argument("--y-column", default="y")

    args = parser.parse_args(argv)
    try:
        if args.command == "scores":
            return _cmd_scores(args)
        cfg = load_config(
            args.config, seed=args.seed, threads=args.threads, output=args.out
        )
        runner = {"select": run_select, "sample": run_sample, "validate": run_validate}
        runner[args.command](cfg)
        return 0
    except TbfselError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
