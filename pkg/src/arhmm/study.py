"""Replicate runner for the two-state simulation study.

Each replicate's data are keyed by ``(seed, simulated degree, T, replicate)``
and each fit's random starts by the same key plus the fitted degree, so
results do not depend on execution order or the number of worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .decode import decoding_accuracy, viterbi
from .errors import ArhmmError
from .fit import AGREEMENT_TOL, FitOptions, fit
from .likelihood import PenaltyConfig
from .model import ModelSpec
from .simulate import paper_scenario, simulate

__all__ = [
    "DEGREES",
    "StudyConfig",
    "replicate_data",
    "project_truth",
    "accuracy_run",
    "stability_run",
    "run_tasks",
    "accuracy_table",
    "stability_table",
    "consistency_summary",
]

DEGREES = (0, 1, 2, 3)


@dataclass(frozen=True)
class StudyConfig:
    replicates: int = 25
    seed: int = 0
    T: int = 2000
    stability_T: tuple = (100, 500)
    consistency_T: tuple = (100, 500, 2000)
    n_starts: int = 5
    stability_starts: int = 10
    jobs: int = 1


def _fit_seed(seed, sim_degree, T, rep, fit_degree):
    return int(np.random.SeedSequence([seed, sim_degree, T, rep, fit_degree]).generate_state(1)[0])


def replicate_data(sim_degree, T, seed, rep):
    """Series and true states of one replicate of the degree-``sim_degree`` scenario."""
    sc = paper_scenario(sim_degree, T=T, seed=[seed, sim_degree, T, rep])
    return simulate(sc, track_id=f"d{sim_degree}-T{T}-r{rep}")


def project_truth(params, fit_degree):
    """True parameters mapped onto a fitted degree: AR rows truncated or zero-padded."""

    def resize(row):
        out = np.zeros(fit_degree)
        k = min(fit_degree, len(row))
        out[:k] = row[:k]
        return out

    return params.replace(
        phi_step=tuple(resize(r) for r in params.phi_step),
        phi_turn=tuple(resize(r) for r in params.phi_turn),
    )


def _estimates(params):
    row = {}
    for j in range(params.n_states):
        s = j + 1
        row[f"mu_step_{s}"] = params.mu_step[j]
        row[f"sigma_step_{s}"] = params.sigma_step[j]
        row[f"cv_step_{s}"] = params.cv_step[j]
        row[f"mu_turn_{s}"] = params.mu_turn[j]
        row[f"kappa_turn_{s}"] = params.kappa_turn[j]
        row[f"gamma_{s}{s}"] = params.tpm[j, j]
        for k, v in enumerate(params.phi_step[j]):
            row[f"phi_step_{s}_{k + 1}"] = v
        for k, v in enumerate(params.phi_turn[j]):
            row[f"phi_turn_{s}_{k + 1}"] = v
    return {k: float(v) for k, v in row.items()}


def accuracy_run(task):
    """Fit one replicate and score its Viterbi path against the truth.

    ``task`` is ``(sim_degree, fit_degree, T, rep, seed, n_starts)``.
    """
    sim_degree, fit_degree, T, rep, seed, n_starts = task
    series, truth = replicate_data(sim_degree, T, seed, rep)
    row = {"sim_degree": sim_degree, "fit_degree": fit_degree, "T": T, "replicate": rep}
    opts = FitOptions(n_starts=n_starts, seed=_fit_seed(seed, sim_degree, T, rep, fit_degree))
    try:
        res = fit([series], ModelSpec.uniform(2, fit_degree), PenaltyConfig(), opts)
    except ArhmmError as e:
        row.update(ok=False, accuracy=math.nan, loglik=math.nan, error=str(e).splitlines()[0])
        return row
    row.update(
        ok=True,
        accuracy=decoding_accuracy(viterbi(series, res.params), truth),
        loglik=res.loglik,
        n_starts_agreeing=res.n_starts_agreeing,
        **_estimates(res.params),
    )
    return row


def stability_run(task):
    """Truth-anchored optimum versus independent single random starts.

    A run counts as reaching the optimum when its objective is within the
    agreement tolerance of (or better than) the fit started at the truth.
    ``task`` is ``(sim_degree, fit_degree, T, rep, seed, n_starts)``.
    """
    sim_degree, fit_degree, T, rep, seed, n_starts = task
    series, _ = replicate_data(sim_degree, T, seed, rep)
    spec = ModelSpec.uniform(2, fit_degree)
    base = {"sim_degree": sim_degree, "fit_degree": fit_degree, "T": T, "replicate": rep}
    opts = FitOptions(n_starts=n_starts, seed=_fit_seed(seed, sim_degree, T, rep, fit_degree))
    anchor = project_truth(paper_scenario(sim_degree).params, fit_degree)
    try:
        res = fit([series], spec, PenaltyConfig(), opts, init=anchor)
    except ArhmmError as e:
        return [dict(base, start=k, anchor=math.nan, objective=math.nan, reached=False, error=str(e).splitlines()[0])
                for k in range(n_starts)]
    anchor_obj = res.start_objectives[0]
    rows = []
    for k, obj in enumerate(res.start_objectives[1:]):
        reached = bool(math.isfinite(obj) and math.isfinite(anchor_obj) and obj >= anchor_obj - AGREEMENT_TOL)
        rows.append(dict(base, start=k, anchor=anchor_obj, objective=obj, reached=reached))
    return rows


def run_tasks(fn, tasks, jobs=1):
    """Map ``fn`` over ``tasks`` in order, optionally across processes."""
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, tasks, chunksize=1))


def accuracy_table(rows, T=None):
    """Mean accuracy per (simulated, fitted) degree as a dict of dicts."""
    table = {}
    for r in rows:
        if T is not None and r["T"] != T:
            continue
        table.setdefault(r["sim_degree"], {}).setdefault(r["fit_degree"], []).append(r["accuracy"])
    return {s: {f: float(np.nanmean(v)) for f, v in d.items()} for s, d in table.items()}


def stability_table(rows):
    """Proportion of runs reaching the anchored optimum per (T, sim, fit)."""
    cells = {}
    for r in rows:
        cells.setdefault((r["T"], r["sim_degree"], r["fit_degree"]), []).append(r["reached"])
    return {k: float(np.mean(v)) for k, v in sorted(cells.items())}


def consistency_summary(rows, params=("mu_step_1", "mu_step_2", "kappa_turn_1", "kappa_turn_2")):
    """Median and interquartile range of estimates per (degree, T, parameter)."""
    groups = {}
    for r in rows:
        if not r.get("ok") or r["sim_degree"] != r["fit_degree"]:
            continue
        for p in params:
            groups.setdefault((r["sim_degree"], r["T"], p), []).append(r[p])
    out = []
    for (d, T, p), v in sorted(groups.items()):
        q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75])
        out.append({"degree": d, "T": T, "parameter": p, "n": len(v), "median": float(med),
                    "q1": float(q1), "q3": float(q3), "iqr": float(q3 - q1)})
    return out

