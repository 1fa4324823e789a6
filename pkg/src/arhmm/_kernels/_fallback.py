"""Pure numpy versions of the compiled kernels (same signatures and conventions)."""

import numpy as np

RESULTANT_FLOOR = 1e-12


def _wrap(x):
    w = np.mod(x + np.pi, 2.0 * np.pi) - np.pi
    return np.where(w <= -np.pi, w + 2.0 * np.pi, w)


def _means_full(step, turn, mu_step, mu_turn, phi_step, p_step, phi_turn, p_turn):
    step = np.asarray(step, dtype=float)
    turn = np.asarray(turn, dtype=float)
    T, N = len(step), len(mu_step)
    ct, st = np.cos(turn), np.sin(turn)
    m = np.empty((T, N))
    zr = np.empty((T, N))
    zi = np.empty((T, N))
    for j in range(N):
        p = int(p_step[j])
        phi = np.asarray(phi_step[j][:p], dtype=float)
        m[:, j] = (1.0 - phi.sum()) * mu_step[j]
        for k in range(1, p + 1):
            m[p:, j] += phi[k - 1] * step[p - k : T - k]
        m[:p, j] = mu_step[j]

        p = int(p_turn[j])
        phi = np.asarray(phi_turn[j][:p], dtype=float)
        rest = 1.0 - phi.sum()
        zr[:, j] = rest * np.cos(mu_turn[j])
        zi[:, j] = rest * np.sin(mu_turn[j])
        for k in range(1, p + 1):
            zr[p:, j] += phi[k - 1] * ct[p - k : T - k]
            zi[p:, j] += phi[k - 1] * st[p - k : T - k]
        zr[:p, j] = np.cos(mu_turn[j])
        zi[:p, j] = np.sin(mu_turn[j])
    fallback = np.hypot(zr, zi) < RESULTANT_FLOOR
    nu = np.where(fallback, _wrap(np.asarray(mu_turn, dtype=float))[None, :], _wrap(np.arctan2(zi, zr)))
    return m, nu, zr, zi


def ar_means(step, turn, mu_step, mu_turn, phi_step, p_step, phi_turn, p_turn):
    m, nu, _, _ = _means_full(step, turn, mu_step, mu_turn, phi_step, p_step, phi_turn, p_turn)
    return m, nu


def _active(T, p):
    return np.arange(T)[:, None] >= np.asarray(p)[None, :]


def _logdens(step, turn, shape, lgamma_shape, kappa, log_norm, p_step, p_turn, m, nu):
    step = np.asarray(step, dtype=float)
    a = np.asarray(shape, dtype=float)[None, :]
    T = len(step)
    with np.errstate(divide="ignore", invalid="ignore"):
        ls = (a * np.log(a) - np.asarray(lgamma_shape)[None, :] - a * np.log(m)
              + (a - 1.0) * np.log(step)[:, None] - a * step[:, None] / m)
    lt = np.asarray(kappa)[None, :] * np.cos(np.asarray(turn)[:, None] - nu) - np.asarray(log_norm)[None, :]
    return np.where(_active(T, p_step), ls, 0.0) + np.where(_active(T, p_turn), lt, 0.0)


def log_densities(step, turn, mu_step, shape, lgamma_shape, mu_turn, kappa, log_norm,
                  phi_step, p_step, phi_turn, p_turn):
    m, nu = ar_means(step, turn, mu_step, mu_turn, phi_step, p_step, phi_turn, p_turn)
    return _logdens(step, turn, shape, lgamma_shape, kappa, log_norm, p_step, p_turn, m, nu)


def _forward(logp, tpm, delta):
    T, N = logp.shape
    if not np.all(np.isfinite(logp)):
        return np.nan, None, None, None
    mx = logp.max(axis=1)
    pmat = np.exp(logp - mx[:, None])
    alpha = np.empty((T, N))
    c = np.empty(T)
    a = np.asarray(delta, dtype=float) * pmat[0]
    for t in range(T):
        if t:
            a = (alpha[t - 1] @ tpm) * pmat[t]
        s = a.sum()
        if not s > 0:
            return np.nan, None, None, None
        c[t] = s
        alpha[t] = a / s
    return float(np.sum(np.log(c)) + mx.sum()), alpha, pmat, c


def forward(logp, tpm, delta):
    ll, alpha, _, _ = _forward(np.asarray(logp, dtype=float), np.asarray(tpm, dtype=float), delta)
    return ll, alpha


def loglik_grad(step, turn, tpm, delta, mu_step, shape, lgamma_shape, digamma_shape,
                mu_turn, kappa, log_norm, bessel_ratio, phi_step, p_step, phi_turn, p_turn):
    step = np.asarray(step, dtype=float)
    turn = np.asarray(turn, dtype=float)
    tpm = np.asarray(tpm, dtype=float)
    T, N = len(step), len(mu_step)
    phi_step = np.asarray(phi_step, dtype=float)
    phi_turn = np.asarray(phi_turn, dtype=float)
    zeros = (np.zeros((N, N)), np.zeros(N), np.zeros(N), np.zeros(N), np.zeros(N), np.zeros(N),
             np.zeros_like(phi_step), np.zeros_like(phi_turn))

    m, nu, zr, zi = _means_full(step, turn, mu_step, mu_turn, phi_step, p_step, phi_turn, p_turn)
    logp = _logdens(step, turn, shape, lgamma_shape, kappa, log_norm, p_step, p_turn, m, nu)
    ll, alpha, pmat, c = _forward(logp, tpm, delta)
    if not np.isfinite(ll):
        return (np.nan,) + zeros

    # scaled backward pass
    beta = np.empty((T, N))
    beta[-1] = 1.0
    for t in range(T - 1, 0, -1):
        beta[t - 1] = tpm @ (pmat[t] * beta[t]) / c[t]
    post = alpha * beta

    w = pmat[1:] * beta[1:] / c[1:, None]
    g_tpm = alpha[:-1].T @ w
    g_delta = pmat[0] * beta[0] / c[0]

    a = np.asarray(shape, dtype=float)
    mus = np.asarray(mu_step, dtype=float)
    act_s = _active(T, p_step)
    act_t = _active(T, p_turn)
    ws = np.where(act_s, post, 0.0)
    wt = np.where(act_t, post, 0.0)

    dm = a[None, :] * (step[:, None] - m) / m**2
    sum_s = np.array([phi_step[j, : p_step[j]].sum() for j in range(N)])
    g_mu = np.sum(ws * dm, axis=0) * (1.0 - sum_s)
    g_shape = np.sum(
        ws * (np.log(a[None, :] / m) + 1.0 - np.asarray(digamma_shape)[None, :] + np.log(step)[:, None] - step[:, None] / m),
        axis=0,
    )
    g_phs = np.zeros_like(phi_step)
    for j in range(N):
        for k in range(int(p_step[j])):
            g_phs[j, k] = np.sum(ws[k + 1 :, j] * dm[k + 1 :, j] * (step[: T - k - 1] - mus[j]))

    kap = np.asarray(kappa, dtype=float)
    d = turn[:, None] - nu
    g_kap = np.sum(wt * (np.cos(d) - np.asarray(bessel_ratio)[None, :]), axis=0)

    r2 = zr**2 + zi**2
    ok = np.sqrt(r2) >= RESULTANT_FLOOR
    dnu = np.where(ok, wt * kap[None, :] * np.sin(d) / np.where(ok, r2, 1.0), 0.0)
    sum_t = np.array([phi_turn[j, : p_turn[j]].sum() for j in range(N)])
    mut = np.asarray(mu_turn, dtype=float)
    cmu, smu = np.cos(mut), np.sin(mut)
    ct, st = np.cos(turn), np.sin(turn)
    g_mut = np.empty(N)
    g_pht = np.zeros_like(phi_turn)
    for j in range(N):
        p = int(p_turn[j])
        if p == 0:
            g_mut[j] = np.sum(np.where(ok[:, j], wt[:, j] * kap[j] * np.sin(d[:, j]), 0.0))
            continue
        dre = -(1.0 - sum_t[j]) * smu[j]
        dim = (1.0 - sum_t[j]) * cmu[j]
        g_mut[j] = np.sum(dnu[:, j] * (zr[:, j] * dim - zi[:, j] * dre))
        for k in range(p):
            dre = ct[: T - k - 1] - cmu[j]
            dim = st[: T - k - 1] - smu[j]
            g_pht[j, k] = np.sum(dnu[k + 1 :, j] * (zr[k + 1 :, j] * dim - zi[k + 1 :, j] * dre))

    return ll, g_tpm, g_delta, g_mu, g_shape, g_mut, g_kap, g_phs, g_pht


def viterbi(logp, log_tpm, log_delta):
    logp = np.asarray(logp, dtype=float)
    log_tpm = np.asarray(log_tpm, dtype=float)
    T, N = logp.shape
    back = np.zeros((T, N), dtype=np.int64)
    score = np.asarray(log_delta, dtype=float) + logp[0]
    for t in range(1, T):
        cand = score[:, None] + log_tpm
        back[t] = np.argmax(cand, axis=0)
        score = cand[back[t], np.arange(N)] + logp[t]
    path = np.empty(T, dtype=np.int64)
    path[-1] = int(np.argmax(score))
    best = float(score[path[-1]])
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, best
