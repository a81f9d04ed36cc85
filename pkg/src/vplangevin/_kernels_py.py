"""Pure-Python Euler-Maruyama kernels.

Fallback used when the compiled extension is unavailable (see ``_backend``).
The arithmetic mirrors ``_kernels.pyx`` expression by expression so that both
backends produce bit-identical paths from the same noise stream.

Status codes returned by the chunk drivers:
    0  chunk completed
    1  state left the divergence bound at the reported substep
    2  moment overflow at the reported substep
"""

from math import exp, sqrt

OK = 0
DIVERGED = 1
OVERFLOW = 2


def sim_chunk(coeffs, state, z, dt, subsample, out, out_offset, bound, dlo, dhi):
    """Advance the coupled 2-D state through ``len(z)`` substeps.

    coeffs : float64[24] -- drift rows (a,b,c) for phi and theta, then the
        three quadratic noise rows (a,b,c,d,e,f) for g_pp, g_tt, g_pt, with
        any convention scaling already applied.
    state : float64[2], updated in place.
    z : float64[nsub, 2] standard-normal draws, consumed row by row.
    out : float64[:, 2]; row ``out_offset + k`` is written after substep
        ``(k+1)*subsample`` of this chunk. ``len(z)`` must be a multiple of
        ``subsample``.
    dlo, dhi : float64[2] corners of the noise-surface evaluation domain
        (+-inf to disable). Drift is evaluated on the raw state.

    Returns ``(status, substep_index)``.
    """
    c = coeffs.tolist()
    zl = z.tolist()
    p = float(state[0])
    t = float(state[1])
    sqdt = sqrt(dt)
    plo = float(dlo[0]); tlo = float(dlo[1])
    phi_ = float(dhi[0]); thi = float(dhi[1])
    k = out_offset
    i = 0
    for z1, z2 in zl:
        hp = c[0] + c[1] * p + c[2] * t
        ht = c[3] + c[4] * p + c[5] * t
        pc = plo if p < plo else (phi_ if p > phi_ else p)
        tc = tlo if t < tlo else (thi if t > thi else t)
        g11 = c[6] + c[7] * pc + c[8] * tc + c[9] * (pc * pc) + c[10] * (pc * tc) + c[11] * (tc * tc)
        g22 = c[12] + c[13] * pc + c[14] * tc + c[15] * (pc * pc) + c[16] * (pc * tc) + c[17] * (tc * tc)
        g12 = c[18] + c[19] * pc + c[20] * tc + c[21] * (pc * pc) + c[22] * (pc * tc) + c[23] * (tc * tc)
        p = p + hp * dt + (g11 * z1 + g12 * z2) * sqdt
        t = t + ht * dt + (g12 * z1 + g22 * z2) * sqdt
        if not (-bound <= p <= bound and -bound <= t <= bound):
            state[0] = p; state[1] = t
            return DIVERGED, i
        i += 1
        if i % subsample == 0:
            out[k, 0] = p
            out[k, 1] = t
            k += 1
    state[0] = p; state[1] = t
    return OK, i


def sim_chunk_moment(coeffs, order, state, z, dt, subsample, out, mout, out_offset,
                     bound, dlo, dhi):
    """Co-integrate the state chunk with the order-``order`` moment SDE.

    ``state`` is float64[3]: (phi, theta, m) where m tracks the moment value.
    The moment drift/noise coefficients are evaluated from the instantaneous
    (phi, theta) through the closed-form moment function and its partial
    derivatives, sharing the same Wiener increments as the state update.
    """
    c = coeffs.tolist()
    zl = z.tolist()
    nf = float(order)
    p = float(state[0])
    t = float(state[1])
    m = float(state[2])
    sqdt = sqrt(dt)
    plo = float(dlo[0]); tlo = float(dlo[1])
    phi_ = float(dhi[0]); thi = float(dhi[1])
    k = out_offset
    i = 0
    for z1, z2 in zl:
        hp = c[0] + c[1] * p + c[2] * t
        ht = c[3] + c[4] * p + c[5] * t
        pc = plo if p < plo else (phi_ if p > phi_ else p)
        tc = tlo if t < tlo else (thi if t > thi else t)
        g11 = c[6] + c[7] * pc + c[8] * tc + c[9] * (pc * pc) + c[10] * (pc * tc) + c[11] * (tc * tc)
        g22 = c[12] + c[13] * pc + c[14] * tc + c[15] * (pc * pc) + c[16] * (pc * tc) + c[17] * (tc * tc)
        g12 = c[18] + c[19] * pc + c[20] * tc + c[21] * (pc * pc) + c[22] * (pc * tc) + c[23] * (tc * tc)
        arg = nf * p + 0.5 * (nf * nf) * (t * t)
        if arg > 700.0:
            state[0] = p; state[1] = t; state[2] = m
            return OVERFLOW, i
        fn = exp(arg)
        dfp = nf * fn
        dft = (nf * nf) * t * fn
        d2fpp = (nf * nf) * fn
        d2ftt = (nf * nf) * fn + (nf * nf * nf * nf) * (t * t) * fn
        d2fpt = (nf * nf * nf) * t * fn
        a_n = (dfp * hp + dft * ht
               + d2fpt * (g11 * g12 + g12 * g22)
               + 0.5 * d2fpp * (g11 * g11 + g12 * g12)
               + 0.5 * d2ftt * (g12 * g12 + g22 * g22))
        b_n = dfp * g11 + dft * g12
        c_n = dfp * g12 + dft * g22
        m = m + a_n * dt + (b_n * z1 + c_n * z2) * sqdt
        p = p + hp * dt + (g11 * z1 + g12 * z2) * sqdt
        t = t + ht * dt + (g12 * z1 + g22 * z2) * sqdt
        if not (-bound <= p <= bound and -bound <= t <= bound):
            state[0] = p; state[1] = t; state[2] = m
            return DIVERGED, i
        if not (-1e306 <= m <= 1e306):
            state[0] = p; state[1] = t; state[2] = m
            return OVERFLOW, i
        i += 1
        if i % subsample == 0:
            out[k, 0] = p
            out[k, 1] = t
            mout[k] = m
            k += 1
    state[0] = p; state[1] = t; state[2] = m
    return OK, i
