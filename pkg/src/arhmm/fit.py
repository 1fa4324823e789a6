"""Penalised maximum likelihood: multi-start fitting, lambda paths, degree selection."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .decode import decoding_accuracy, viterbi
from .errors import EstimationError, NumericError
from .likelihood import Objective, PenaltyConfig, PooledData, cond_loglik, effective_sample_size, penalty
from .model import ModelSpec, Parameters, from_working, sort_states, to_working

__all__ = [
    "FitOptions",
    "FitResult",
    "LambdaPath",
    "DEFAULT_START_RANGES",
    "default_lambda_grid",
    "random_start",
    "fit",
    "lambda_path",
    "selected_degrees",
    "effective_df",
    "information_criteria",
    "select_lambda",
    "AGREEMENT_TOL",
    "ROUND_DECIMALS",
]

AGREEMENT_TOL = 1e-3
RETRIES = 2
RETRY_JITTER = 1e-2
RETRY_STREAM = 104729
ROUND_DECIMALS = 3

DEFAULT_START_RANGES = {
    "mu_quantiles": (0.2, 0.8),
    "mu_jitter": (0.8, 1.2),
    "cv": (0.1, 0.8),
    "kappa": (0.5, 15.0),
    "mu_turn_sd": 0.1,
    "tpm_diag": (0.7, 0.95),
    "phi_mass": (0.0, 0.7),
}


@dataclass
class FitOptions:
    n_starts: int = 10
    max_iters: int = 2000
    tol: float = 1e-8
    seed: int = 0
    start_ranges: dict = field(default_factory=lambda: dict(DEFAULT_START_RANGES))

    def __post_init__(self):
        if self.n_starts < 0:
            raise ValueError("n_starts must be >= 0")
        if self.max_iters < 1 or not self.tol > 0:
            raise ValueError("max_iters and tol must be positive")
        ranges = dict(DEFAULT_START_RANGES)
        ranges.update(self.start_ranges or {})
        self.start_ranges = ranges


@dataclass
class FitResult:
    params: Parameters
    loglik: float
    penalized_objective: float
    lam: float
    converged: bool
    n_starts_agreeing: int
    aic: float
    bic: float
    edf: int
    n_obs: float
    epsilon: float = 1e-6
    start_objectives: list = field(default_factory=list)
    n_iter: int = 0

    @property
    def spec(self):
        return self.params.spec

    def to_dict(self):
        return {
            "params": self.params.to_dict(),
            "spec": self.spec.to_dict(),
            "sigma_step": self.params.sigma_step.tolist(),
            "loglik": self.loglik,
            "penalized_objective": self.penalized_objective,
            "lambda": self.lam,
            "epsilon": self.epsilon,
            "converged": self.converged,
            "n_starts_agreeing": self.n_starts_agreeing,
            "aic": self.aic,
            "bic": self.bic,
            "edf": self.edf,
            "n_obs": self.n_obs,
            "start_objectives": [None if not math.isfinite(v) else v for v in self.start_objectives],
            "n_iter": self.n_iter,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            params=Parameters.from_dict(d["params"]),
            loglik=d["loglik"],
            penalized_objective=d["penalized_objective"],
            lam=d["lambda"],
            converged=d["converged"],
            n_starts_agreeing=d["n_starts_agreeing"],
            aic=d["aic"],
            bic=d["bic"],
            edf=d["edf"],
            n_obs=d["n_obs"],
            epsilon=d.get("epsilon", 1e-6),
            start_objectives=[-math.inf if v is None else v for v in d.get("start_objectives", [])],
            n_iter=d.get("n_iter", 0),
        )


@dataclass
class LambdaPath:
    grid: list
    fits: list
    warm_started: bool = True
    errors: dict = field(default_factory=dict)

    def __post_init__(self):
        g = list(self.grid)
        if not g or g[0] != 0 or any(b <= a for a, b in zip(g, g[1:])):
            raise ValueError("lambda grid must start at 0 and be strictly increasing")

    def to_dict(self):
        return {
            "grid": list(self.grid),
            "fits": [None if f is None else f.to_dict() for f in self.fits],
            "warm_started": self.warm_started,
            "errors": {str(k): v for k, v in self.errors.items()},
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            grid=d["grid"],
            fits=[None if f is None else FitResult.from_dict(f) for f in d["fits"]],
            warm_started=d.get("warm_started", True),
            errors=d.get("errors", {}),
        )


def default_lambda_grid():
    """Zero followed by 23 log-spaced values on [0.1, 100]."""
    return [0.0] + list(np.logspace(-1, 2, 23))


def selected_degrees(params, decimals=ROUND_DECIMALS):
    """AR degrees after rounding coefficients: the largest lag with a non-zero rounded value."""

    def degree(row):
        nz = np.flatnonzero(np.round(np.asarray(row), decimals) != 0)
        return int(nz[-1]) + 1 if nz.size else 0

    return ModelSpec(params.n_states, [degree(r) for r in params.phi_step], [degree(r) for r in params.phi_turn])


def _nonzero_ar(params, decimals=ROUND_DECIMALS):
    rows = [r for r in params.phi_step + params.phi_turn if r.size]
    return int(np.count_nonzero(np.round(np.concatenate(rows), decimals))) if rows else 0


def effective_df(fit_or_params, spec=None):
    """Unpenalised parameter count plus AR coefficients non-zero after rounding."""
    params = getattr(fit_or_params, "params", fit_or_params)
    n = params.n_states
    return n * (n - 1) + 4 * n + _nonzero_ar(params)


def information_criteria(loglik, k, n_obs):
    return -2.0 * loglik + 2.0 * k, -2.0 * loglik + k * math.log(n_obs)


def random_start(data, spec, rng, ranges=None):
    """Random initial parameters, with step means taken from data quantiles."""
    r = dict(DEFAULT_START_RANGES)
    r.update(ranges or {})
    n = spec.n_states
    steps = np.concatenate([s.steps for s in data])
    lo, hi = r["mu_quantiles"]
    levels = np.linspace(lo, hi, n) if n > 1 else np.array([0.5])
    mu = np.quantile(steps, levels) * rng.uniform(*r["mu_jitter"], size=n)
    tpm = np.empty((n, n))
    for i in range(n):
        d = rng.uniform(*r["tpm_diag"]) if n > 1 else 1.0
        off = rng.dirichlet(np.ones(n - 1)) * (1.0 - d) if n > 1 else np.zeros(0)
        tpm[i] = np.insert(off, i, d)
    phis = []
    for degrees in (spec.p_step, spec.p_turn):
        rows = []
        for p in degrees:
            rows.append(rng.dirichlet(np.ones(p)) * rng.uniform(*r["phi_mass"]) if p else np.zeros(0))
        phis.append(rows)
    return Parameters(
        tpm=tpm,
        mu_step=np.sort(mu),
        cv_step=rng.uniform(*r["cv"], size=n),
        mu_turn=rng.normal(0.0, r["mu_turn_sd"], size=n),
        kappa_turn=rng.uniform(*r["kappa"], size=n),
        phi_step=phis[0],
        phi_turn=phis[1],
    )


def _run_optimizer(obj, w0, opts):
    f0 = obj.value(w0)
    if not np.isfinite(f0):
        return None
    # absolute change tol on the objective, expressed in L-BFGS-B's relative form
    ftol = opts.tol / max(1.0, abs(f0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = optimize.minimize(
            obj.value_and_grad, w0, jac=True, method="L-BFGS-B",
            options={"maxiter": opts.max_iters, "ftol": ftol, "gtol": 1e-6, "maxcor": 20},
        )
    if not np.isfinite(res.fun):
        return None
    gnorm = float(np.max(np.abs(res.jac))) if res.jac is not None else math.inf
    # line-search stalls at a flat optimum count as converged
    converged = bool(res.success) or gnorm < 1e-3 * max(1.0, abs(res.fun)) ** 0.5
    return res.x, float(res.fun), converged, int(res.nit), res.message


def _retry_jittered(obj, out, opts, rng):
    """Restart a stalled run from small perturbations of where it stopped.

    The turning-angle mean is the argument of a sum of unit vectors, so the
    objective has ridges where that sum passes through zero; the line search
    can stall on them. The best converged retry replaces the stalled run.
    """
    best = out
    for _ in range(RETRIES):
        w = out[0] + rng.normal(0.0, RETRY_JITTER, out[0].shape)
        new = _run_optimizer(obj, w, opts)
        if new is not None and new[2] and (not best[2] or new[1] < best[1]):
            best = new
    return best


def fit(data, spec, pen=None, opts=None, init=None):
    """Maximise the penalised conditional likelihood from several starts.

    Parameters
    ----------
    data : PooledData or list of StepTurnSeries
    spec : ModelSpec
    pen : PenaltyConfig, optional
    opts : FitOptions, optional
    init : Parameters or list of Parameters, optional
        Extra user-supplied starting values, tried before the random starts.

    Returns
    -------
    FitResult
        Best start, with states ordered by ascending step mean.
    """
    data = data if isinstance(data, PooledData) else PooledData(data)
    pen = pen or PenaltyConfig()
    opts = opts or FitOptions()
    if data.min_length <= spec.max_degree:
        raise ValueError(
            f"every track must be longer than the largest AR degree ({spec.max_degree}); "
            f"shortest track has {data.min_length}"
        )
    obj = Objective(data, spec, pen)
    inits = [] if init is None else (list(init) if isinstance(init, (list, tuple)) else [init])
    starts = []
    for p in inits:
        if p.spec != spec:
            raise ValueError("initial parameters do not match the model spec")
        starts.append(("init", lambda p=p: to_working(p, spec)))
    for k in range(opts.n_starts):
        rng = np.random.default_rng([opts.seed, k])
        starts.append((f"random-{k}", lambda rng=rng: to_working(random_start(data, spec, rng, opts.start_ranges), spec)))
    if not starts:
        raise ValueError("no starting values: set n_starts >= 1 or pass init")

    results, diagnostics = [], []
    for i, (name, make) in enumerate(starts):
        try:
            out = _run_optimizer(obj, make(), opts)
            if out is not None and not out[2]:
                out = _retry_jittered(obj, out, opts, np.random.default_rng([opts.seed, RETRY_STREAM, i]))
        except (NumericError, ValueError, FloatingPointError) as e:
            out = None
            diagnostics.append(f"{name}: {e}")
        if out is None:
            diagnostics.append(f"{name}: non-finite objective")
            results.append(None)
            continue
        results.append(out)
        if not out[2]:
            diagnostics.append(f"{name}: not converged ({out[4]})")
    usable = [r for r in results if r is not None]
    if not usable or not any(r[2] for r in usable):
        raise EstimationError("all starts failed to converge:\n  " + "\n  ".join(diagnostics), diagnostics)

    # ties go to the earliest start
    best_i = min(range(len(results)), key=lambda i: (math.inf if results[i] is None else results[i][1], i))
    w, fbest, converged, nit, _ = results[best_i]
    objectives = [-math.inf if r is None else -r[1] for r in results]
    agreeing = sum(1 for v in objectives if v >= -fbest - AGREEMENT_TOL)
    return _make_result(data, from_working(w, spec), pen, converged, agreeing, objectives, nit)


def _make_result(data, params, pen, converged, agreeing, objectives, nit):
    params, _ = sort_states(params)
    ll = cond_loglik(data, params)
    pobj = ll - pen.lam * penalty(params, pen.epsilon) if pen.lam else ll
    edf = effective_df(params)
    n_obs = effective_sample_size(data, params.spec)
    aic, bic = information_criteria(ll, edf, n_obs)
    return FitResult(
        params=params, loglik=ll, penalized_objective=pobj, lam=pen.lam, converged=converged,
        n_starts_agreeing=agreeing, aic=aic, bic=bic, edf=edf, n_obs=n_obs, epsilon=pen.epsilon,
        start_objectives=objectives, n_iter=nit,
    )


def lambda_path(data, spec, grid=None, opts=None, epsilon=1e-6, init=None):
    """Fit along a lambda grid, warm-starting each point from the previous optimum.

    Each grid point also runs ``opts.n_starts`` fresh random starts. A failed
    grid point is recorded in ``errors`` and leaves ``None`` in ``fits``.
    """
    data = data if isinstance(data, PooledData) else PooledData(data)
    grid = default_lambda_grid() if grid is None else [float(g) for g in grid]
    opts = opts or FitOptions()
    path = LambdaPath(grid=grid, fits=[], warm_started=True)
    warm = init
    for i, lam in enumerate(grid):
        point_opts = FitOptions(opts.n_starts, opts.max_iters, opts.tol, opts.seed + 7919 * i, opts.start_ranges)
        if warm is None and point_opts.n_starts == 0:
            point_opts.n_starts = 1
        try:
            res = fit(data, spec, PenaltyConfig(lam, epsilon), point_opts, init=warm)
        except (EstimationError, NumericError) as e:
            path.fits.append(None)
            path.errors[i] = str(e)
            continue
        path.fits.append(res)
        warm = res.params if res.params.spec == spec else _unsort(res.params, spec)
    return path


def _unsort(params, spec):
    """Find the relabelling of ``params`` whose degrees match ``spec``."""
    from itertools import permutations

    from .model import permute_states

    for order in permutations(range(params.n_states)):
        cand = permute_states(params, order)
        if cand.spec == spec:
            return cand
    raise ValueError("fitted parameters cannot be matched to the model spec")


def select_lambda(path, criterion="bic", truth=None, data=None):
    """Pick the grid fit with minimal AIC/BIC or maximal decoding accuracy.

    Ties go to the larger lambda. ``criterion="accuracy"`` needs the true
    state sequence(s) and the data they belong to.
    """
    cands = [(lam, f) for lam, f in zip(path.grid, path.fits) if f is not None]
    if not cands:
        raise ValueError("lambda path has no successful fits")
    if criterion in ("aic", "bic"):
        scores = [getattr(f, criterion) for _, f in cands]
        key = lambda i: (scores[i], -cands[i][0])  # noqa: E731
    elif criterion == "accuracy":
        if truth is None or data is None:
            raise ValueError("accuracy criterion needs truth and data")
        data = data if isinstance(data, PooledData) else PooledData(data)
        truths = truth if isinstance(truth, (list, tuple)) else [truth]
        scores = []
        for _, f in cands:
            decoded = np.concatenate([viterbi(s, f.params).states for s in data])
            scores.append(decoding_accuracy(decoded, np.concatenate([np.asarray(t.states) for t in truths])))
        key = lambda i: (-scores[i], -cands[i][0])  # noqa: E731
    else:
        raise ValueError(f"unknown criterion {criterion!r}")
    return cands[min(range(len(cands)), key=key)][1]

