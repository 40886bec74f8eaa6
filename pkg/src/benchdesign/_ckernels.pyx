# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the routines in ``_pykernels``.

Same algorithms, same constants, same argument conventions.
"""
from libc.math cimport sqrt, log, log1p, exp, floor, lgamma

from scipy.special.cython_special cimport betainc, ndtr

cdef double SERIES_ERRMAX = 1e-13
cdef long SERIES_MAXITER = 100000

SIMPLE = 0
PERCENT_ONE = 1
PERCENT_ALL = 2


cdef inline double _betainc(double a, double b, double x) noexcept nogil:
    return betainc(a, b, x)


cdef inline double _ndtr(double x) noexcept nogil:
    return ndtr(x)


cpdef double t_cdf(double x, double df):
    cdef double x2 = x * x
    cdef double half, tail
    if x2 < df:
        half = 0.5 * _betainc(0.5, 0.5 * df, x2 / (x2 + df))
        return 0.5 + half if x >= 0.0 else 0.5 - half
    tail = 0.5 * _betainc(0.5 * df, 0.5, df / (df + x2))
    return 1.0 - tail if x > 0.0 else tail


cdef double _nct_cdf_nonneg(double t, double df, double ncp) noexcept nogil:
    cdef double base = _ndtr(-ncp)
    cdef double x, b, lam, sgn, logx, log1mx, lgb, loglam
    cdef double p_k, q_k, ap, aq, ip_k, iq_k, lgp_k, lgq_k, total
    cdef double p, q, ip, iq, lgp, lgq, a_p, a_q, rp, rq, bound, val
    cdef long k, j, it
    if t == 0.0:
        return base
    x = t * t / (t * t + df)
    if x == 0.0:  # t*t underflowed
        return base
    b = 0.5 * df
    lam = 0.5 * ncp * ncp
    if lam == 0.0:
        return base + 0.5 * _betainc(0.5, b, x)
    sgn = 1.0 if ncp > 0.0 else -1.0
    logx = log(x)
    log1mx = log1p(-x)
    lgb = lgamma(b)
    loglam = log(lam)

    k = <long>floor(lam)
    p_k = exp(-lam + k * loglam - lgamma(k + 1.0))
    q_k = exp(-lam + (k + 0.5) * loglam - lgamma(k + 1.5))
    ap = k + 0.5
    aq = k + 1.0
    ip_k = _betainc(ap, b, x)
    iq_k = _betainc(aq, b, x)
    lgp_k = lgamma(ap + b) - lgamma(ap + 1.0) - lgb + ap * logx + b * log1mx
    lgq_k = lgamma(aq + b) - lgamma(aq + 1.0) - lgb + aq * logx + b * log1mx

    total = p_k * ip_k + sgn * q_k * iq_k

    p = p_k; q = q_k; ip = ip_k; iq = iq_k; lgp = lgp_k; lgq = lgq_k
    a_p = ap; a_q = aq
    j = k
    for it in range(SERIES_MAXITER):
        ip -= exp(lgp)
        iq -= exp(lgq)
        if ip < 0.0:
            ip = 0.0
        if iq < 0.0:
            iq = 0.0
        lgp += logx + log(a_p + b) - log(a_p + 1.0)
        lgq += logx + log(a_q + b) - log(a_q + 1.0)
        a_p += 1.0
        a_q += 1.0
        j += 1
        p *= lam / j
        q *= lam / (j + 0.5)
        total += p * ip + sgn * q * iq
        rp = lam / (j + 1.0)
        rq = lam / (j + 1.5)
        bound = ip * p * rp / (1.0 - rp) + iq * q * rq / (1.0 - rq)
        if bound < SERIES_ERRMAX:
            break

    p = p_k; q = q_k; ip = ip_k; iq = iq_k; lgp = lgp_k; lgq = lgq_k
    a_p = ap; a_q = aq
    j = k
    while j > 0:
        lgp += log(a_p) - logx - log(a_p - 1.0 + b)
        lgq += log(a_q) - logx - log(a_q - 1.0 + b)
        a_p -= 1.0
        a_q -= 1.0
        ip += exp(lgp)
        iq += exp(lgq)
        if ip > 1.0:
            ip = 1.0
        if iq > 1.0:
            iq = 1.0
        p *= j / lam
        q *= (j + 0.5) / lam
        j -= 1
        total += p * ip + sgn * q * iq
        if j == 0:
            break
        rp = j / lam
        rq = (j + 0.5) / lam
        if rq < 1.0:
            bound = p * rp / (1.0 - rp) + q * rq / (1.0 - rq)
            if bound < SERIES_ERRMAX:
                break

    val = base + 0.5 * total
    if val < 0.0:
        return 0.0
    if val > 1.0:
        return 1.0
    return val


cpdef double nct_cdf(double t, double df, double ncp):
    cdef double val
    if t >= 0.0:
        return _nct_cdf_nonneg(t, df, ncp)
    val = 1.0 - _nct_cdf_nonneg(-t, df, -ncp)
    if val < 0.0:
        return 0.0
    if val > 1.0:
        return 1.0
    return val


def pair_se(int mode, double[::1] n, double[::1] mean, double[::1] var,
            Py_ssize_t[::1] pi, Py_ssize_t[::1] pj, double[::1] out):
    cdef Py_ssize_t npairs = pi.shape[0]
    cdef Py_ssize_t a = mean.shape[0]
    cdef Py_ssize_t p, i, j, kk
    cdef double m1, c1, c2, gm, gm2, total_v, phi, phi2a, others, ci, cj
    if mode == 0:
        for p in range(npairs):
            i = pi[p]
            j = pj[p]
            out[p] = sqrt(var[i] / n[i] + var[j] / n[j])
    elif mode == 1:
        for p in range(npairs):
            i = pi[p]
            j = pj[p]
            m1 = mean[i]
            c1 = var[i] * mean[j] * mean[j] / (m1 * m1 * m1 * m1)
            c2 = var[j] / (m1 * m1)
            out[p] = sqrt(c1 / n[i] + c2 / n[j])
    elif mode == 2:
        gm = 0.0
        total_v = 0.0
        for kk in range(a):
            gm += mean[kk]
            total_v += var[kk] / n[kk]
        gm /= a
        gm2 = gm * gm
        for p in range(npairs):
            i = pi[p]
            j = pj[p]
            ci = var[i] / n[i]
            cj = var[j] / n[j]
            phi = (mean[i] - mean[j]) / gm
            phi2a = phi * phi / (a * a)
            c1 = (1.0 + phi2a) / gm2
            others = total_v - ci - cj
            if others < 0.0:
                others = 0.0
            c2 = phi2a / gm2 * others
            out[p] = sqrt(c1 * (ci + cj) + c2)
    else:
        raise ValueError(f"unknown pair_se mode {mode}")
    return out
