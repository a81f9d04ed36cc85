# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled Euler-Maruyama kernels.

Expression-for-expression mirror of ``_kernels_py`` (see that module for the
interface contract); both backends must produce bit-identical paths from the
same noise stream. The hot loops run without the GIL so ensemble paths can
integrate on worker threads.
"""

from libc.math cimport exp, sqrt

OK = 0
DIVERGED = 1
OVERFLOW = 2


def sim_chunk(double[::1] coeffs, double[::1] state, double[:, ::1] z,
              double dt, Py_ssize_t subsample, double[:, ::1] out,
              Py_ssize_t out_offset, double bound,
              double[::1] dlo, double[::1] dhi):
    cdef double c0 = coeffs[0], c1 = coeffs[1], c2 = coeffs[2]
    cdef double c3 = coeffs[3], c4 = coeffs[4], c5 = coeffs[5]
    cdef double c6 = coeffs[6], c7 = coeffs[7], c8 = coeffs[8]
    cdef double c9 = coeffs[9], c10 = coeffs[10], c11 = coeffs[11]
    cdef double c12 = coeffs[12], c13 = coeffs[13], c14 = coeffs[14]
    cdef double c15 = coeffs[15], c16 = coeffs[16], c17 = coeffs[17]
    cdef double c18 = coeffs[18], c19 = coeffs[19], c20 = coeffs[20]
    cdef double c21 = coeffs[21], c22 = coeffs[22], c23 = coeffs[23]
    cdef double p = state[0]
    cdef double t = state[1]
    cdef double sqdt = sqrt(dt)
    cdef double plo = dlo[0], tlo = dlo[1]
    cdef double phi_ = dhi[0], thi = dhi[1]
    cdef Py_ssize_t k = out_offset
    cdef Py_ssize_t i, nsub = z.shape[0]
    cdef Py_ssize_t bad = -1
    cdef int status = 0
    cdef double z1, z2, hp, ht, pc, tc, g11, g22, g12
    with nogil:
        for i in range(nsub):
            z1 = z[i, 0]; z2 = z[i, 1]
            hp = c0 + c1 * p + c2 * t
            ht = c3 + c4 * p + c5 * t
            pc = plo if p < plo else (phi_ if p > phi_ else p)
            tc = tlo if t < tlo else (thi if t > thi else t)
            g11 = c6 + c7 * pc + c8 * tc + c9 * (pc * pc) + c10 * (pc * tc) + c11 * (tc * tc)
            g22 = c12 + c13 * pc + c14 * tc + c15 * (pc * pc) + c16 * (pc * tc) + c17 * (tc * tc)
            g12 = c18 + c19 * pc + c20 * tc + c21 * (pc * pc) + c22 * (pc * tc) + c23 * (tc * tc)
            p = p + hp * dt + (g11 * z1 + g12 * z2) * sqdt
            t = t + ht * dt + (g12 * z1 + g22 * z2) * sqdt
            if not (-bound <= p <= bound and -bound <= t <= bound):
                status = 1
                bad = i
                break
            if (i + 1) % subsample == 0:
                out[k, 0] = p
                out[k, 1] = t
                k += 1
        state[0] = p
        state[1] = t
    if status:
        return status, bad
    return status, nsub


def sim_chunk_moment(double[::1] coeffs, Py_ssize_t order, double[::1] state,
                     double[:, ::1] z, double dt, Py_ssize_t subsample,
                     double[:, ::1] out, double[::1] mout, Py_ssize_t out_offset,
                     double bound, double[::1] dlo, double[::1] dhi):
    cdef double c0 = coeffs[0], c1 = coeffs[1], c2 = coeffs[2]
    cdef double c3 = coeffs[3], c4 = coeffs[4], c5 = coeffs[5]
    cdef double c6 = coeffs[6], c7 = coeffs[7], c8 = coeffs[8]
    cdef double c9 = coeffs[9], c10 = coeffs[10], c11 = coeffs[11]
    cdef double c12 = coeffs[12], c13 = coeffs[13], c14 = coeffs[14]
    cdef double c15 = coeffs[15], c16 = coeffs[16], c17 = coeffs[17]
    cdef double c18 = coeffs[18], c19 = coeffs[19], c20 = coeffs[20]
    cdef double c21 = coeffs[21], c22 = coeffs[22], c23 = coeffs[23]
    cdef double nf = <double> order
    cdef double p = state[0]
    cdef double t = state[1]
    cdef double m = state[2]
    cdef double sqdt = sqrt(dt)
    cdef double plo = dlo[0], tlo = dlo[1]
    cdef double phi_ = dhi[0], thi = dhi[1]
    cdef Py_ssize_t k = out_offset
    cdef Py_ssize_t i, nsub = z.shape[0]
    cdef Py_ssize_t bad = -1
    cdef int status = 0
    cdef double z1, z2, hp, ht, pc, tc, g11, g22, g12
    cdef double arg, fn, dfp, dft, d2fpp, d2ftt, d2fpt, a_n, b_n, c_n
    with nogil:
        for i in range(nsub):
            z1 = z[i, 0]; z2 = z[i, 1]
            hp = c0 + c1 * p + c2 * t
            ht = c3 + c4 * p + c5 * t
            pc = plo if p < plo else (phi_ if p > phi_ else p)
            tc = tlo if t < tlo else (thi if t > thi else t)
            g11 = c6 + c7 * pc + c8 * tc + c9 * (pc * pc) + c10 * (pc * tc) + c11 * (tc * tc)
            g22 = c12 + c13 * pc + c14 * tc + c15 * (pc * pc) + c16 * (pc * tc) + c17 * (tc * tc)
            g12 = c18 + c19 * pc + c20 * tc + c21 * (pc * pc) + c22 * (pc * tc) + c23 * (tc * tc)
            arg = nf * p + 0.5 * (nf * nf) * (t * t)
            if arg > 700.0:
                status = 2
                bad = i
                break
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
                status = 1
                bad = i
                break
            if not (-1e306 <= m <= 1e306):
                status = 2
                bad = i
                break
            if (i + 1) % subsample == 0:
                out[k, 0] = p
                out[k, 1] = t
                mout[k] = m
                k += 1
        state[0] = p
        state[1] = t
        state[2] = m
    if status:
        return status, bad
    return status, nsub
