# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: AR means, state densities, forward recursion, gradient, Viterbi.

Array conventions shared with ``_fallback``: time runs along axis 0, states
along axis 1; AR rows are zero-padded to a common width with the true
degree in ``p_step`` / ``p_turn``. A density factor for state ``j`` at time
``t`` (0-based) is active only when ``t >= p[j]``; inactive factors are 1.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, exp, cos, sin, atan2, sqrt, fmod, isfinite, INFINITY, NAN

cnp.import_array()

cdef double PI = 3.141592653589793
cdef double TWO_PI = 6.283185307179586
cdef double RESULTANT_FLOOR = 1e-12


cdef inline double _wrap(double x) noexcept nogil:
    cdef double w = fmod(x + PI, TWO_PI)
    if w < 0:
        w += TWO_PI
    w -= PI
    if w <= -PI:
        w += TWO_PI
    return w


cdef void _means(
    const double[::1] step, const double[::1] ct, const double[::1] st,
    const double[::1] mu_step, const double[::1] mu_turn,
    const double[:, ::1] phi_step, const cnp.int64_t[::1] p_step,
    const double[:, ::1] phi_turn, const cnp.int64_t[::1] p_turn,
    double[:, ::1] m, double[:, ::1] nu, double[:, ::1] zr, double[:, ::1] zi,
) noexcept nogil:
    cdef Py_ssize_t T = step.shape[0], N = mu_step.shape[0]
    cdef Py_ssize_t t, j, k, p
    cdef double s, acc, re, im, cm, sm
    for j in range(N):
        p = p_step[j]
        s = 0.0
        for k in range(p):
            s += phi_step[j, k]
        for t in range(T):
            if t < p:
                m[t, j] = mu_step[j]
                continue
            acc = (1.0 - s) * mu_step[j]
            for k in range(p):
                acc += phi_step[j, k] * step[t - 1 - k]
            m[t, j] = acc
        p = p_turn[j]
        s = 0.0
        for k in range(p):
            s += phi_turn[j, k]
        cm = cos(mu_turn[j])
        sm = sin(mu_turn[j])
        for t in range(T):
            if t < p:
                nu[t, j] = _wrap(mu_turn[j])
                zr[t, j] = cm
                zi[t, j] = sm
                continue
            re = (1.0 - s) * cm
            im = (1.0 - s) * sm
            for k in range(p):
                re += phi_turn[j, k] * ct[t - 1 - k]
                im += phi_turn[j, k] * st[t - 1 - k]
            zr[t, j] = re
            zi[t, j] = im
            if sqrt(re * re + im * im) < RESULTANT_FLOOR:
                nu[t, j] = _wrap(mu_turn[j])
            else:
                nu[t, j] = _wrap(atan2(im, re))


def ar_means(step, turn, mu_step, mu_turn, phi_step, p_step, phi_turn, p_turn):
    step = np.ascontiguousarray(step, dtype=np.float64)
    turn = np.ascontiguousarray(turn, dtype=np.float64)
    cdef Py_ssize_t T = step.shape[0], N = len(mu_step)
    m = np.empty((T, N))
    nu = np.empty((T, N))
    zr = np.empty((T, N))
    zi = np.empty((T, N))
    _means(step, np.cos(turn), np.sin(turn),
           np.ascontiguousarray(mu_step, dtype=np.float64), np.ascontiguousarray(mu_turn, dtype=np.float64),
           np.ascontiguousarray(phi_step, dtype=np.float64), np.ascontiguousarray(p_step, dtype=np.int64),
           np.ascontiguousarray(phi_turn, dtype=np.float64), np.ascontiguousarray(p_turn, dtype=np.int64),
           m, nu, zr, zi)
    return m, nu


cdef void _logdens(
    const double[::1] step, const double[::1] logx, const double[::1] turn,
    const double[::1] shape, const double[::1] lgamma_shape,
    const double[::1] kappa, const double[::1] log_norm,
    const cnp.int64_t[::1] p_step, const cnp.int64_t[::1] p_turn,
    const double[:, ::1] m, const double[:, ::1] nu, double[:, ::1] out,
) noexcept nogil:
    cdef Py_ssize_t T = step.shape[0], N = shape.shape[0]
    cdef Py_ssize_t t, j
    cdef double a, v, c0
    for j in range(N):
        a = shape[j]
        c0 = a * log(a) - lgamma_shape[j]
        for t in range(T):
            v = 0.0
            if t >= p_step[j]:
                v += c0 - a * log(m[t, j]) + (a - 1.0) * logx[t] - a * step[t] / m[t, j]
            if t >= p_turn[j]:
                v += kappa[j] * cos(turn[t] - nu[t, j]) - log_norm[j]
            out[t, j] = v


def log_densities(step, turn, mu_step, shape, lgamma_shape, mu_turn, kappa, log_norm,
                  phi_step, p_step, phi_turn, p_turn):
    step = np.ascontiguousarray(step, dtype=np.float64)
    turn = np.ascontiguousarray(turn, dtype=np.float64)
    cdef Py_ssize_t T = step.shape[0], N = len(mu_step)
    m = np.empty((T, N))
    nu = np.empty((T, N))
    zr = np.empty((T, N))
    zi = np.empty((T, N))
    p_step = np.ascontiguousarray(p_step, dtype=np.int64)
    p_turn = np.ascontiguousarray(p_turn, dtype=np.int64)
    _means(step, np.cos(turn), np.sin(turn),
           np.ascontiguousarray(mu_step, dtype=np.float64), np.ascontiguousarray(mu_turn, dtype=np.float64),
           np.ascontiguousarray(phi_step, dtype=np.float64), p_step,
           np.ascontiguousarray(phi_turn, dtype=np.float64), p_turn,
           m, nu, zr, zi)
    out = np.empty((T, N))
    with np.errstate(divide="ignore", invalid="ignore"):
        logx = np.log(step)
    _logdens(step, logx, turn,
             np.ascontiguousarray(shape, dtype=np.float64), np.ascontiguousarray(lgamma_shape, dtype=np.float64),
             np.ascontiguousarray(kappa, dtype=np.float64), np.ascontiguousarray(log_norm, dtype=np.float64),
             p_step, p_turn, m, nu, out)
    return out


cdef double _forward(const double[:, ::1] logp, const double[:, ::1] tpm, const double[::1] delta,
                     double[:, ::1] alpha, double[:, ::1] pmat, double[::1] c) noexcept nogil:
    """Scaled forward pass; returns the log-likelihood (nan on non-finite input)."""
    cdef Py_ssize_t T = logp.shape[0], N = logp.shape[1]
    cdef Py_ssize_t t, i, j
    cdef double mx, s, acc, ll = 0.0
    for t in range(T):
        mx = -INFINITY
        for j in range(N):
            if not isfinite(logp[t, j]):
                return NAN
            if logp[t, j] > mx:
                mx = logp[t, j]
        for j in range(N):
            pmat[t, j] = exp(logp[t, j] - mx)
        s = 0.0
        for j in range(N):
            if t == 0:
                acc = delta[j]
            else:
                acc = 0.0
                for i in range(N):
                    acc += alpha[t - 1, i] * tpm[i, j]
            acc *= pmat[t, j]
            alpha[t, j] = acc
            s += acc
        if not s > 0:
            return NAN
        c[t] = s
        for j in range(N):
            alpha[t, j] /= s
        ll += log(s) + mx
    return ll


def forward(logp, tpm, delta):
    """Scaled forward recursion.

    Returns the log-likelihood and the filtered state probabilities
    ``P(S_t = j | x_1..x_t)``.
    """
    logp = np.ascontiguousarray(logp, dtype=np.float64)
    cdef Py_ssize_t T = logp.shape[0], N = logp.shape[1]
    alpha = np.empty((T, N))
    pmat = np.empty((T, N))
    c = np.empty(T)
    ll = _forward(logp, np.ascontiguousarray(tpm, dtype=np.float64),
                  np.ascontiguousarray(delta, dtype=np.float64), alpha, pmat, c)
    return ll, alpha


def loglik_grad(step, turn, tpm, delta, mu_step, shape, lgamma_shape, digamma_shape,
                mu_turn, kappa, log_norm, bessel_ratio, phi_step, p_step, phi_turn, p_turn):
    """Log-likelihood of one track and its gradient w.r.t. natural parameters.

    Returns ``(ll, g_tpm, g_delta, g_mu_step, g_shape, g_mu_turn, g_kappa,
    g_phi_step, g_phi_turn)``; ``g_shape`` is w.r.t. the gamma shape
    ``1 / cv**2``. ``ll`` is nan if any density is non-finite.
    """
    cdef const double[::1] x = np.ascontiguousarray(step, dtype=np.float64)
    cdef const double[::1] y = np.ascontiguousarray(turn, dtype=np.float64)
    cdef Py_ssize_t T = x.shape[0], N = len(mu_step)
    cdef const double[::1] ct = np.cos(turn)
    cdef const double[::1] st = np.sin(turn)
    cdef const double[::1] logx = np.log(step)
    cdef const double[:, ::1] G = np.ascontiguousarray(tpm, dtype=np.float64)
    cdef const double[::1] d0 = np.ascontiguousarray(delta, dtype=np.float64)
    cdef const double[::1] mus = np.ascontiguousarray(mu_step, dtype=np.float64)
    cdef const double[::1] a = np.ascontiguousarray(shape, dtype=np.float64)
    cdef const double[::1] lga = np.ascontiguousarray(lgamma_shape, dtype=np.float64)
    cdef const double[::1] dga = np.ascontiguousarray(digamma_shape, dtype=np.float64)
    cdef const double[::1] mut = np.ascontiguousarray(mu_turn, dtype=np.float64)
    cdef const double[::1] kap = np.ascontiguousarray(kappa, dtype=np.float64)
    cdef const double[::1] lnorm = np.ascontiguousarray(log_norm, dtype=np.float64)
    cdef const double[::1] aratio = np.ascontiguousarray(bessel_ratio, dtype=np.float64)
    cdef const double[:, ::1] phs = np.ascontiguousarray(phi_step, dtype=np.float64)
    cdef const double[:, ::1] pht = np.ascontiguousarray(phi_turn, dtype=np.float64)
    cdef const cnp.int64_t[::1] ps = np.ascontiguousarray(p_step, dtype=np.int64)
    cdef const cnp.int64_t[::1] pt = np.ascontiguousarray(p_turn, dtype=np.int64)

    cdef double[:, ::1] m = np.empty((T, N))
    cdef double[:, ::1] nu = np.empty((T, N))
    cdef double[:, ::1] zr = np.empty((T, N))
    cdef double[:, ::1] zi = np.empty((T, N))
    cdef double[:, ::1] logp = np.empty((T, N))
    cdef double[:, ::1] alpha = np.empty((T, N))
    cdef double[:, ::1] pmat = np.empty((T, N))
    cdef double[::1] c = np.empty(T)

    g_tpm_a = np.zeros((N, N))
    g_delta_a = np.zeros(N)
    g_mu_a = np.zeros(N)
    g_shape_a = np.zeros(N)
    g_mut_a = np.zeros(N)
    g_kap_a = np.zeros(N)
    g_phs_a = np.zeros((N, phs.shape[1]))
    g_pht_a = np.zeros((N, pht.shape[1]))
    cdef double[:, ::1] g_tpm = g_tpm_a
    cdef double[::1] g_delta = g_delta_a
    cdef double[::1] g_mu = g_mu_a
    cdef double[::1] g_shape = g_shape_a
    cdef double[::1] g_mut = g_mut_a
    cdef double[::1] g_kap = g_kap_a
    cdef double[:, ::1] g_phs = g_phs_a
    cdef double[:, ::1] g_pht = g_pht_a

    cdef double[::1] beta = np.empty(N)
    cdef double[::1] beta_prev = np.empty(N)
    cdef double[::1] sum_phs = np.empty(N)
    cdef double[::1] sum_pht = np.empty(N)
    cdef double[::1] cmu = np.empty(N)
    cdef double[::1] smu = np.empty(N)

    cdef Py_ssize_t t, i, j, k
    cdef double ll, w, dm, r2, d, dre, dim, dnu, acc

    with nogil:
        _means(x, ct, st, mus, mut, phs, ps, pht, pt, m, nu, zr, zi)
        _logdens(x, logx, y, a, lga, kap, lnorm, ps, pt, m, nu, logp)
        ll = _forward(logp, G, d0, alpha, pmat, c)
    if not isfinite(ll):
        return (float("nan"), g_tpm_a, g_delta_a, g_mu_a, g_shape_a, g_mut_a, g_kap_a, g_phs_a, g_pht_a)

    with nogil:
        for j in range(N):
            sum_phs[j] = 0.0
            for k in range(ps[j]):
                sum_phs[j] += phs[j, k]
            sum_pht[j] = 0.0
            for k in range(pt[j]):
                sum_pht[j] += pht[j, k]
            cmu[j] = cos(mut[j])
            smu[j] = sin(mut[j])
            beta[j] = 1.0
        t = T - 1
        while t >= 0:
            for j in range(N):
                w = alpha[t, j] * beta[j]
                if t >= ps[j]:
                    dm = a[j] * (x[t] - m[t, j]) / (m[t, j] * m[t, j])
                    g_mu[j] += w * dm * (1.0 - sum_phs[j])
                    for k in range(ps[j]):
                        g_phs[j, k] += w * dm * (x[t - 1 - k] - mus[j])
                    g_shape[j] += w * (log(a[j] / m[t, j]) + 1.0 - dga[j] + logx[t] - x[t] / m[t, j])
                if t >= pt[j]:
                    d = y[t] - nu[t, j]
                    g_kap[j] += w * (cos(d) - aratio[j])
                    r2 = zr[t, j] * zr[t, j] + zi[t, j] * zi[t, j]
                    if sqrt(r2) >= RESULTANT_FLOOR:
                        dnu = w * kap[j] * sin(d) / r2
                        # dArg(z) = (Re z dIm z - Im z dRe z) / |z|^2
                        if pt[j] == 0:
                            g_mut[j] += w * kap[j] * sin(d)
                        else:
                            dre = -(1.0 - sum_pht[j]) * smu[j]
                            dim = (1.0 - sum_pht[j]) * cmu[j]
                            g_mut[j] += dnu * (zr[t, j] * dim - zi[t, j] * dre)
                            for k in range(pt[j]):
                                dre = ct[t - 1 - k] - cmu[j]
                                dim = st[t - 1 - k] - smu[j]
                                g_pht[j, k] += dnu * (zr[t, j] * dim - zi[t, j] * dre)
            if t == 0:
                for j in range(N):
                    g_delta[j] = pmat[0, j] * beta[j] / c[0]
            else:
                for i in range(N):
                    acc = 0.0
                    for j in range(N):
                        w = pmat[t, j] * beta[j] / c[t]
                        g_tpm[i, j] += alpha[t - 1, i] * w
                        acc += G[i, j] * w
                    beta_prev[i] = acc
                for i in range(N):
                    beta[i] = beta_prev[i]
            t -= 1

    return (ll, g_tpm_a, g_delta_a, g_mu_a, g_shape_a, g_mut_a, g_kap_a, g_phs_a, g_pht_a)


def viterbi(logp, log_tpm, log_delta):
    """Most probable state path (0-based) and its log score.

    Ties go to the lower state index.
    """
    cdef const double[:, ::1] lp = np.ascontiguousarray(logp, dtype=np.float64)
    cdef const double[:, ::1] lg = np.ascontiguousarray(log_tpm, dtype=np.float64)
    cdef const double[::1] ld = np.ascontiguousarray(log_delta, dtype=np.float64)
    cdef Py_ssize_t T = lp.shape[0], N = lp.shape[1]
    cdef Py_ssize_t t, i, j, best_i
    cdef double best, v
    path_a = np.empty(T, dtype=np.int64)
    cdef cnp.int64_t[::1] path = path_a
    cdef cnp.int64_t[:, ::1] back = np.zeros((T, N), dtype=np.int64)
    cdef double[::1] score = np.empty(N)
    cdef double[::1] nxt = np.empty(N)
    with nogil:
        for j in range(N):
            score[j] = ld[j] + lp[0, j]
        for t in range(1, T):
            for j in range(N):
                best = -INFINITY
                best_i = 0
                for i in range(N):
                    v = score[i] + lg[i, j]
                    if v > best:
                        best = v
                        best_i = i
                nxt[j] = best + lp[t, j]
                back[t, j] = best_i
            for j in range(N):
                score[j] = nxt[j]
        best = -INFINITY
        best_i = 0
        for j in range(N):
            if score[j] > best:
                best = score[j]
                best_i = j
        path[T - 1] = best_i
        t = T - 1
        while t > 0:
            path[t - 1] = back[t, path[t]]
            t -= 1
    return path_a, best
