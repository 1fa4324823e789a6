"""Model structure, parameter container and working-space transforms.

Working vector layout (all blocks flattened, in this order):

1. transition matrix: for each row ``i`` the ``N - 1`` off-diagonal logits,
   with the diagonal as reference category;
2. ``log mu_step`` (N);
3. ``log cv_step`` (N);
4. ``mu_turn`` raw (N), wrapped on the natural side;
5. ``log kappa_turn`` (N);
6. for each state, ``p_step[j]`` logits of the step AR coefficients, whose
   softmax has an implicit remainder category ``1 - sum(phi)``;
7. likewise for the turn AR coefficients.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericError
from .geometry import wrap_angle

__all__ = [
    "ModelSpec",
    "Parameters",
    "param_count",
    "stationary_dist",
    "stationary_dist_jacobian",
    "to_working",
    "from_working",
    "working_jacobian_transpose",
    "sort_states",
    "permute_states",
    "BOUNDARY_NUDGE",
]

BOUNDARY_NUDGE = 1e-8


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ModelSpec:
    """Number of states and per-state AR degrees for each variable."""

    n_states: int
    p_step: tuple
    p_turn: tuple

    def __post_init__(self):
        object.__setattr__(self, "p_step", tuple(int(p) for p in self.p_step))
        object.__setattr__(self, "p_turn", tuple(int(p) for p in self.p_turn))
        if self.n_states < 1:
            raise DomainError("n_states must be >= 1")
        if len(self.p_step) != self.n_states or len(self.p_turn) != self.n_states:
            raise DomainError("p_step and p_turn need one degree per state")
        if min(self.p_step + self.p_turn) < 0:
            raise DomainError("AR degrees must be non-negative")

    @classmethod
    def uniform(cls, n_states, degree):
        return cls(n_states, (degree,) * n_states, (degree,) * n_states)

    @property
    def max_degree(self):
        return max(self.p_step + self.p_turn)

    @property
    def degrees(self):
        """Degrees as ``(p_step..., p_turn...)``."""
        return self.p_step + self.p_turn

    def to_dict(self):
        return {"n_states": self.n_states, "p_step": list(self.p_step), "p_turn": list(self.p_turn)}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["n_states"]), d["p_step"], d["p_turn"])


def param_count(spec):
    """N(N-1) transition + 4N state-dependent + sum of AR degrees."""
    n = spec.n_states
    return n * (n - 1) + 4 * n + sum(spec.p_step) + sum(spec.p_turn)


@dataclass(frozen=True, eq=False)
class Parameters:
    """All model parameters on the natural scale.

    ``phi_step`` and ``phi_turn`` are ragged: one 1-d array per state.
    """

    tpm: np.ndarray
    mu_step: np.ndarray
    cv_step: np.ndarray
    mu_turn: np.ndarray
    kappa_turn: np.ndarray
    phi_step: tuple
    phi_turn: tuple

    def __post_init__(self, check=True):
        set_ = object.__setattr__
        set_(self, "tpm", _frozen(self.tpm))
        n = self.tpm.shape[0]
        for name in ("mu_step", "cv_step", "mu_turn", "kappa_turn"):
            v = _frozen(self.__dict__[name])
            if v.shape != (n,):
                raise DomainError(f"{name} must have length {n}")
            set_(self, name, v)
        set_(self, "mu_turn", _frozen(wrap_angle(self.mu_turn) if n else self.mu_turn))
        for name in ("phi_step", "phi_turn"):
            rows = tuple(_frozen(np.atleast_1d(np.asarray(r, dtype=float)).ravel()) for r in self.__dict__[name])
            if len(rows) != n:
                raise DomainError(f"{name} needs one row per state")
            set_(self, name, rows)
        if check:
            self.validate()

    @classmethod
    def _trusted(cls, **fields):
        # values valid by construction (inverse transforms): skip validation
        obj = object.__new__(cls)
        obj.__dict__.update(fields)
        obj.__post_init__(check=False)
        return obj

    @property
    def n_states(self):
        return self.tpm.shape[0]

    @property
    def spec(self):
        return ModelSpec(self.n_states, [len(r) for r in self.phi_step], [len(r) for r in self.phi_turn])

    @property
    def sigma_step(self):
        """Steady-state step SD, ``cv * mu``."""
        return self.cv_step * self.mu_step

    def validate(self, tol=1e-12):
        g = self.tpm
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise DomainError("tpm must be square")
        if np.any(~np.isfinite(g)) or np.any(g < 0) or np.any(g > 1):
            raise DomainError("tpm entries must lie in [0, 1]")
        if np.any(np.abs(g.sum(axis=1) - 1.0) > tol):
            raise DomainError("tpm rows must sum to 1")
        if np.any(~(self.mu_step > 0)) or np.any(~np.isfinite(self.mu_step)):
            raise DomainError("mu_step must be positive")
        if np.any(~(self.cv_step > 0)) or np.any(~np.isfinite(self.cv_step)):
            raise DomainError("cv_step must be positive")
        if np.any(~(self.kappa_turn >= 0)) or np.any(~np.isfinite(self.kappa_turn)):
            raise DomainError("kappa_turn must be non-negative")
        for name in ("phi_step", "phi_turn"):
            for j, r in enumerate(self.__dict__[name]):
                if np.any(r < 0) or np.any(r > 1) or r.sum() > 1 + tol:
                    raise DomainError(f"{name}[{j}] must lie in [0, 1] with sum <= 1")

    def padded_phi(self, which):
        """Ragged AR rows as a zero-padded (N, max(p, 1)) array plus degrees."""
        rows = self.phi_step if which == "step" else self.phi_turn
        width = max([len(r) for r in rows] + [1])
        out = np.zeros((self.n_states, width))
        for j, r in enumerate(rows):
            out[j, : len(r)] = r
        return out, np.array([len(r) for r in rows], dtype=np.int64)

    def replace(self, **changes):
        d = {k: self.__dict__[k] for k in ("tpm", "mu_step", "cv_step", "mu_turn", "kappa_turn", "phi_step", "phi_turn")}
        d.update(changes)
        return Parameters(**d)

    def allclose(self, other, atol=1e-10):
        if self.spec != other.spec:
            return False
        pairs = [(self.tpm, other.tpm), (self.mu_step, other.mu_step), (self.cv_step, other.cv_step),
                 (self.kappa_turn, other.kappa_turn)]
        pairs += list(zip(self.phi_step, other.phi_step)) + list(zip(self.phi_turn, other.phi_turn))
        if not all(np.allclose(a, b, rtol=0, atol=atol) for a, b in pairs):
            return False
        dmu = wrap_angle(np.asarray(self.mu_turn) - np.asarray(other.mu_turn))
        return bool(np.all(np.abs(dmu) <= atol))

    def to_dict(self):
        return {
            "tpm": self.tpm.tolist(),
            "mu_step": self.mu_step.tolist(),
            "cv_step": self.cv_step.tolist(),
            "mu_turn": self.mu_turn.tolist(),
            "kappa_turn": self.kappa_turn.tolist(),
            "phi_step": [r.tolist() for r in self.phi_step],
            "phi_turn": [r.tolist() for r in self.phi_turn],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            tpm=d["tpm"], mu_step=d["mu_step"], cv_step=d["cv_step"], mu_turn=d["mu_turn"],
            kappa_turn=d["kappa_turn"], phi_step=d["phi_step"], phi_turn=d["phi_turn"],
        )

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))


def stationary_dist(tpm):
    """Solve ``delta (I - Gamma + U) = 1`` for the stationary distribution."""
    g = np.asarray(tpm, dtype=float)
    n = g.shape[0]
    a = np.eye(n) - g + np.ones((n, n))
    try:
        delta = np.linalg.solve(a.T, np.ones(n))
    except np.linalg.LinAlgError as e:
        raise NumericError("transition matrix has no unique stationary distribution") from e
    if not np.all(np.isfinite(delta)) or np.max(np.abs(delta @ g - delta)) > 1e-9 or np.any(delta < -1e-12):
        raise NumericError("transition matrix has no unique stationary distribution")
    return np.clip(delta, 0.0, None) / np.clip(delta, 0.0, None).sum()


def stationary_dist_jacobian(tpm, delta, g_delta):
    """Pull a gradient w.r.t. delta back onto the entries of the tpm.

    From ``d delta = delta dGamma A^{-1}`` with ``A = I - Gamma + U``.
    """
    g = np.asarray(tpm, dtype=float)
    n = g.shape[0]
    a = np.eye(n) - g + np.ones((n, n))
    v = np.linalg.solve(a, g_delta)
    return np.outer(delta, v)


def _logits_with_reference(p, reference):
    """Logits log(p_k / reference) with zero entries nudged into the interior."""
    p = np.asarray(p, dtype=float)
    p = np.where(p <= 0, BOUNDARY_NUDGE, p)
    return np.log(p) - np.log(reference)


def _softmax_with_reference(u):
    """Probabilities of the ``len(u)`` categories and of the zero-logit reference."""
    u = np.asarray(u, dtype=float)
    m = max(0.0, float(u.max())) if u.size else 0.0
    e = np.exp(u - m)
    ref = np.exp(-m)
    s = e.sum() + ref
    return e / s, ref / s


def to_working(params, spec=None):
    """Map interior natural parameters to an unconstrained vector."""
    spec = spec or params.spec
    if params.spec != spec:
        raise DomainError("parameters do not match the model spec")
    n = spec.n_states
    out = []
    for i in range(n):
        row = params.tpm[i]
        diag = row[i]
        if diag <= 0:
            raise DomainError(f"tpm[{i},{i}] is on the boundary (0); nudge it into the interior")
        out.extend(_logits_with_reference(np.delete(row, i), diag))
    out.extend(np.log(params.mu_step))
    out.extend(np.log(params.cv_step))
    out.extend(params.mu_turn)
    out.extend(np.log(np.where(params.kappa_turn <= 0, BOUNDARY_NUDGE, params.kappa_turn)))
    for name, rows in (("phi_step", params.phi_step), ("phi_turn", params.phi_turn)):
        for j, r in enumerate(rows):
            if r.size == 0:
                continue
            rem = 1.0 - r.sum()
            if rem <= 0:
                raise DomainError(
                    f"{name}[{j}] sums to 1 (boundary); nudge the coefficients into the interior"
                )
            out.extend(_logits_with_reference(r, rem))
    return np.array(out, dtype=float)


def from_working(w, spec):
    """Inverse of :func:`to_working`; total on finite inputs."""
    w = np.asarray(w, dtype=float)
    k = param_count(spec)
    if w.shape != (k,):
        raise ValueError(f"working vector has length {w.size}, spec needs {k}")
    n = spec.n_states
    pos = 0
    tpm = np.empty((n, n))
    for i in range(n):
        off, diag = _softmax_with_reference(w[pos : pos + n - 1])
        tpm[i] = np.insert(off, i, diag)
        tpm[i] /= tpm[i].sum()
        pos += n - 1
    blocks = []
    for _ in range(4):
        blocks.append(w[pos : pos + n])
        pos += n
    log_mu, log_cv, mu_turn, log_kappa = blocks
    phis = []
    for degrees in (spec.p_step, spec.p_turn):
        rows = []
        for p in degrees:
            rows.append(_softmax_with_reference(w[pos : pos + p])[0] if p else np.zeros(0))
            pos += p
        phis.append(tuple(rows))
    with np.errstate(over="ignore"):
        mu, cv, kappa = np.exp(log_mu), np.exp(log_cv), np.exp(log_kappa)
    return Parameters._trusted(
        tpm=tpm,
        mu_step=mu,
        cv_step=cv,
        mu_turn=mu_turn,
        kappa_turn=kappa,
        phi_step=phis[0],
        phi_turn=phis[1],
    )


def _softmax_pullback(probs, grad):
    # d/du_l of sum_k g_k p_k  with p = softmax including a fixed reference
    return probs * (grad - np.dot(grad, probs))


def working_jacobian_transpose(params, spec, g_tpm, g_mu_step, g_cv_step, g_mu_turn, g_kappa, g_phi_step, g_phi_turn):
    """Chain natural-scale gradients back to the working vector.

    ``g_phi_*`` are ragged like the parameters; ``g_tpm`` is a full N x N
    gradient w.r.t. the matrix entries.
    """
    n = spec.n_states
    out = []
    for i in range(n):
        full = params.tpm[i]
        gi = g_tpm[i]
        # softmax over the full row; the diagonal is the reference category
        pulled = full * (gi - np.dot(gi, full))
        out.extend(np.delete(pulled, i))
    out.extend(np.asarray(g_mu_step) * params.mu_step)
    out.extend(np.asarray(g_cv_step) * params.cv_step)
    out.extend(g_mu_turn)
    out.extend(np.asarray(g_kappa) * params.kappa_turn)
    for rows, grads in ((params.phi_step, g_phi_step), (params.phi_turn, g_phi_turn)):
        for r, g in zip(rows, grads):
            if r.size:
                out.extend(_softmax_pullback(r, np.asarray(g)))
    return np.array(out, dtype=float)


def permute_states(params, order):
    """Relabel states so that new state ``i`` is old state ``order[i]``."""
    order = list(order)
    return Parameters(
        tpm=params.tpm[np.ix_(order, order)],
        mu_step=params.mu_step[order],
        cv_step=params.cv_step[order],
        mu_turn=params.mu_turn[order],
        kappa_turn=params.kappa_turn[order],
        phi_step=tuple(params.phi_step[i] for i in order),
        phi_turn=tuple(params.phi_turn[i] for i in order),
    )


def sort_states(params):
    """Order states by ascending steady-state step mean; returns (params, order)."""
    order = [int(i) for i in np.argsort(params.mu_step, kind="stable")]
    return permute_states(params, order), order
