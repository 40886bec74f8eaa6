"""Pure-Python implementations of the numerical hot spots.

This module mirrors ``_ckernels.pyx`` function for function; it is used
when the compiled extension is unavailable or when
``BENCHDESIGN_PURE_PYTHON=1`` is set.
"""
import math

from scipy.special import betainc, ndtr

# Absolute truncation bound on the Poisson-mixture sum (before the 1/2 factor).
SERIES_ERRMAX = 1e-13
SERIES_MAXITER = 100_000

SIMPLE = 0
PERCENT_ONE = 1
PERCENT_ALL = 2


def t_cdf(x, df):
    x = float(x)
    df = float(df)
    x2 = x * x
    if x2 < df:
        half = 0.5 * float(betainc(0.5, 0.5 * df, x2 / (x2 + df)))
        return 0.5 + half if x >= 0.0 else 0.5 - half
    tail = 0.5 * float(betainc(0.5 * df, 0.5, df / (df + x2)))
    return 1.0 - tail if x > 0.0 else tail


def _nct_cdf_nonneg(t, df, ncp):
    # P(T <= t) for t >= 0 as a Poisson mixture of incomplete beta functions,
    # summed outward from the Poisson mode in both directions.
    base = float(ndtr(-ncp))
    if t == 0.0:
        return base
    x = t * t / (t * t + df)
    if x == 0.0:  # t*t underflowed
        return base
    b = 0.5 * df
    lam = 0.5 * ncp * ncp
    if lam == 0.0:
        return base + 0.5 * float(betainc(0.5, b, x))
    sgn = 1.0 if ncp > 0.0 else -1.0
    logx = math.log(x)
    log1mx = math.log1p(-x)
    lgb = math.lgamma(b)
    loglam = math.log(lam)

    k = int(math.floor(lam))
    p_k = math.exp(-lam + k * loglam - math.lgamma(k + 1.0))
    q_k = math.exp(-lam + (k + 0.5) * loglam - math.lgamma(k + 1.5))
    ap = k + 0.5
    aq = k + 1.0
    ip_k = float(betainc(ap, b, x))
    iq_k = float(betainc(aq, b, x))
    # log of the gradient term g(a) with I(a+1) = I(a) - g(a)
    lgp_k = math.lgamma(ap + b) - math.lgamma(ap + 1.0) - lgb + ap * logx + b * log1mx
    lgq_k = math.lgamma(aq + b) - math.lgamma(aq + 1.0) - lgb + aq * logx + b * log1mx

    total = p_k * ip_k + sgn * q_k * iq_k

    # forward: j = k+1, k+2, ...
    p, q, ip, iq, lgp, lgq = p_k, q_k, ip_k, iq_k, lgp_k, lgq_k
    a_p, a_q = ap, aq
    j = k
    for _ in range(SERIES_MAXITER):
        ip -= math.exp(lgp)
        iq -= math.exp(lgq)
        if ip < 0.0:
            ip = 0.0
        if iq < 0.0:
            iq = 0.0
        lgp += logx + math.log(a_p + b) - math.log(a_p + 1.0)
        lgq += logx + math.log(a_q + b) - math.log(a_q + 1.0)
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

    # backward: j = k-1, ..., 0
    p, q, ip, iq, lgp, lgq = p_k, q_k, ip_k, iq_k, lgp_k, lgq_k
    a_p, a_q = ap, aq
    j = k
    while j > 0:
        # g(a-1) = g(a) * a / (x * (a - 1 + b))
        lgp += math.log(a_p) - logx - math.log(a_p - 1.0 + b)
        lgq += math.log(a_q) - logx - math.log(a_q - 1.0 + b)
        a_p -= 1.0
        a_q -= 1.0
        ip += math.exp(lgp)
        iq += math.exp(lgq)
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
    return min(1.0, max(0.0, val))


def nct_cdf(t, df, ncp):
    t = float(t)
    df = float(df)
    ncp = float(ncp)
    if t >= 0.0:
        return _nct_cdf_nonneg(t, df, ncp)
    return min(1.0, max(0.0, 1.0 - _nct_cdf_nonneg(-t, df, -ncp)))


def pair_se(mode, n, mean, var, pi, pj, out):
    """Fill ``out[p]`` with the standard error of pair ``(pi[p], pj[p])``.

    ``mode`` selects the estimator: 0 simple difference, 1 percent
    difference against the reference ``pi[p]``, 2 percent difference over
    the grand mean of all algorithms.
    """
    n = [float(v) for v in n]
    mean = [float(v) for v in mean]
    var = [float(v) for v in var]
    npairs = len(pi)
    if mode == SIMPLE:
        for p in range(npairs):
            i = pi[p]
            j = pj[p]
            out[p] = math.sqrt(var[i] / n[i] + var[j] / n[j])
    elif mode == PERCENT_ONE:
        for p in range(npairs):
            i = pi[p]
            j = pj[p]
            m1 = mean[i]
            c1 = var[i] * mean[j] * mean[j] / (m1 * m1 * m1 * m1)
            c2 = var[j] / (m1 * m1)
            out[p] = math.sqrt(c1 / n[i] + c2 / n[j])
    elif mode == PERCENT_ALL:
        # plain left-to-right sums, matching the compiled loop bit for bit
        a = len(mean)
        gm = 0.0
        total_v = 0.0
        for k in range(a):
            gm += mean[k]
            total_v += var[k] / n[k]
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
            out[p] = math.sqrt(c1 * (ci + cj) + c2)
    else:
        raise ValueError(f"unknown pair_se mode {mode}")
    return out
