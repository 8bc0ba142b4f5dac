"""Run configured scenarios and persist their records."""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .buc_agent import write_episode_csv
from .config import ExperimentConfig
from .errors import IncompatibleRuns, ScenarioFailed
from .evaluation import check_all_lemmas, paired_difference, biased_regret_bound, transfer_regret
from .linear_mdp import compute_regularity_constants
from .meta_learner import meta_train

CSV_SCHEMA = 1
BOUND_COLUMNS = (
    "estimator", "seed", "role", "task", "lambda", "empirical_regret", "regret_bound",
    "beta_N", "D", "C_phi_lambda", "log_det", "slack_ratio", "holds", "ellipsoid_always",
)
LEMMA_COLUMNS = ("estimator", "seed", "role", "task", "lemma", "lhs", "rhs", "holds")


def seed_sequence(master_seed: int, seed: int) -> np.random.SeedSequence:
    """Per-seed root; task streams are spawned below it by role and index."""
    return np.random.SeedSequence(master_seed, spawn_key=(seed,))


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def _job(args):
    cfg_text, seed, estimator = args
    cfg = ExperimentConfig.from_text(cfg_text)
    family = cfg.build_family()
    train_cores, test_cores = cfg.explicit_cores(family)
    a, r = cfg.algorithm, cfg.run
    try:
        rec = meta_train(
            family, estimator, r.g_train, r.g_test, r.episodes, cfg.delta_value,
            seed_sequence(r.master_seed, seed),
            lam_mode=a.lambda_mode, lam_fixed=a.lam, lam_train=a.lambda_train,
            radius_mode=a.radius, continual=a.continual,
            train_cores=train_cores, test_cores=test_cores,
        )
    except Exception as exc:
        rec = getattr(exc, "partial_record", None)
        if rec is None:
            raise
    f = family.features
    bounds, lemmas, episodes = [], [], []
    for t in rec.tasks:
        run = t.record
        consts = compute_regularity_constants(f, t.core)
        w_dist = float(np.linalg.norm(t.bias_start - t.core))
        rep = biased_regret_bound(
            consts, t.lam, run.episodes * run.horizon, run.horizon, f.d, f.d_prime, w_dist, run.cum_regret
        )
        c = rep.components
        bounds.append((estimator, seed, t.role, t.index, t.lam, run.cum_regret, rep.bound, c["beta_N"],
                       c["D"], c["C_phi_lambda"], c["log_det"], rep.slack_ratio, rep.holds,
                       bool(run.in_ellipsoid.all())))
        if r.lemma_checks:
            for chk in check_all_lemmas(run.phis, t.lam):
                lemmas.append((estimator, seed, t.role, t.index, chk.lemma, chk.lhs, chk.rhs, chk.holds))
        episodes.append((t.role, t.index, run))
    summary = {
        "test_regrets": [t.record.cum_regret for t in rec.test],
        "lambdas": rec.lambdas,
        "eps": rec.eps,
        "h_m": rec.h_m,
        "var_estimate": rec.var_estimate,
    }
    if rec.error is not None:
        summary["error"] = rec.error
    return seed, estimator, summary, bounds, lemmas, episodes


def run_scenario(cfg: ExperimentConfig, out_dir=None, workers: int = 1) -> Path:
    """Execute every (seed, estimator) pair and write the run directory."""
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = cfg.to_text()
    jobs = [(text, s, e) for s in cfg.run.seeds for e in cfg.algorithm.estimators]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    results.sort(key=lambda x: (x[0], x[1]))

    (out / "config.ini").write_text(text)
    ep_root = out / "episodes"
    for seed, est, _, _, _, episodes in results:
        d = ep_root / est / f"seed_{seed}"
        d.mkdir(parents=True, exist_ok=True)
        for role, idx, run in episodes:
            with open(d / f"{role}_{idx:03d}.csv", "w", newline="") as fh:
                write_episode_csv(fh, run)
    _write_rows(out / "bounds.csv", BOUND_COLUMNS, [row for res in results for row in res[3]])
    _write_rows(out / "lemmas.csv", LEMMA_COLUMNS, [row for res in results for row in res[4]])

    estimators = {}
    for est in cfg.algorithm.estimators:
        per_seed = {str(seed): s for seed, e, s, *_ in results if e == est}
        pooled = [x for s in per_seed.values() for x in s["test_regrets"]]
        mean, se = transfer_regret(pooled) if pooled else (math.nan, math.nan)
        estimators[est] = {
            "transfer_regret": mean,
            "stderr": se,
            "per_seed": {
                k: float(np.mean(v["test_regrets"])) if v["test_regrets"] else math.nan
                for k, v in per_seed.items()
            },
            "runs": per_seed,
        }
    summary = {
        "artifact_version": __version__,
        "csv_schema": CSV_SCHEMA,
        "config_sha256": cfg.digest(),
        "seeds": cfg.run.seeds,
        "master_seed": cfg.run.master_seed,
        "estimators": estimators,
    }
    failures = [(seed, est, s["error"]) for seed, est, s, *_ in results if "error" in s]
    if failures:
        summary["failures"] = [list(f) for f in failures]
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    if failures:
        raise ScenarioFailed(out, failures)
    return out


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _load_run(path):
    path = Path(path)
    try:
        summary = json.loads((path / "summary.json").read_text())
        cfg = ExperimentConfig.from_file(path / "config.ini")
    except (OSError, ValueError) as exc:
        raise IncompatibleRuns(f"{path} is not a run directory: {exc}") from exc
    return summary, cfg


def compare(run_dirs, out_csv=None) -> dict:
    """Paired-by-seed transfer regret of every (run, estimator) arm against the first."""
    if len(run_dirs) < 2:
        raise IncompatibleRuns("need at least two run directories")
    loaded = [_load_run(p) for p in run_dirs]
    ref_summary, ref_cfg = loaded[0]
    for (summary, cfg), path in zip(loaded[1:], run_dirs[1:]):
        if summary["seeds"] != ref_summary["seeds"] or summary["master_seed"] != ref_summary["master_seed"]:
            raise IncompatibleRuns(f"{path}: seeds differ from {run_dirs[0]}")
        if cfg.family != ref_cfg.family:
            raise IncompatibleRuns(f"{path}: task family differs from {run_dirs[0]}")
        if (cfg.run.g_test, cfg.run.episodes) != (ref_cfg.run.g_test, ref_cfg.run.episodes):
            raise IncompatibleRuns(f"{path}: test protocol differs from {run_dirs[0]}")
    seeds = [str(s) for s in ref_summary["seeds"]]
    arms = []
    for path, (summary, cfg) in zip(run_dirs, loaded):
        for est in cfg.algorithm.estimators:
            info = summary["estimators"][est]
            arms.append((str(path), est, [info["per_seed"][s] for s in seeds]))
    base = arms[0][2]
    rows, table = [], []
    for path, est, vals in arms:
        diff, se = paired_difference(vals, base)
        mean, mse = transfer_regret(vals)
        table.append({"run": path, "estimator": est, "transfer_regret": mean, "stderr": mse,
                      "difference": diff, "difference_stderr": se})
        for s, v, b in zip(seeds, vals, base):
            rows.append((path, est, int(s), v, b, v - b))
    if out_csv is not None:
        _write_rows(out_csv, ("run", "estimator", "seed", "transfer_regret", "baseline", "difference"), rows)
    return {"baseline": {"run": arms[0][0], "estimator": arms[0][1]}, "arms": table, "per_seed": rows}


def render_comparison(result) -> str:
    head = ("run", "estimator", "mtr", "se", "diff", "diff_se")
    body = [
        (a["run"], a["estimator"], f"{a['transfer_regret']:.4f}", f"{a['stderr']:.4f}",
         f"{a['difference']:+.4f}", f"{a['difference_stderr']:.4f}")
        for a in result["arms"]
    ]
    widths = [max(len(str(r[i])) for r in [head, *body]) for i in range(len(head))]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip() for r in [head, *body]]
    return "\n".join(lines)


def separation(mean_diff, se) -> float:
    return math.inf if se == 0 and mean_diff != 0 else (0.0 if se == 0 else mean_diff / se)
