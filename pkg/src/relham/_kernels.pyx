# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled pairwise kernels; see ``_pykernels`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, pow, sqrt

cnp.import_array()

cdef double SERIES_CUT = 0.1
cdef int SERIES_TERMS = 18


cdef inline double _sgn(double y) noexcept nogil:
    if y > 0.0:
        return 1.0
    if y < 0.0:
        return -1.0
    return 0.0


cdef inline double _powabs(double ad, double e) noexcept nogil:
    if e == 0.0:
        return 1.0
    if e == 1.0:
        return ad
    if e == 0.5:
        return sqrt(ad)
    if e == -0.5:
        return 1.0 / sqrt(ad)
    if e == 2.0:
        return ad * ad
    return pow(ad, e)


cdef double _bregman_pow(double a, double r) noexcept nogil:
    cdef double c, term, rk
    cdef int k
    if a == 0.0 or a == 1.0:
        return 0.0
    if a == 2.0:
        return r * r
    if fabs(r) < SERIES_CUT:
        c = 0.5 * a * (a - 1.0)
        term = 0.0
        rk = r * r
        for k in range(2, SERIES_TERMS + 2):
            term += c * rk
            c *= (a - k) / (k + 1.0)
            rk *= r
        return term
    return pow(1.0 + r, a) - 1.0 - a * r


def bregman_pow(double a, r):
    r = np.asarray(r, dtype=float)
    out = np.empty_like(r)
    cdef double[::1] rv = np.ascontiguousarray(r).ravel()
    cdef double[::1] ov = out.reshape(-1)
    cdef Py_ssize_t i
    for i in range(rv.shape[0]):
        ov[i] = _bregman_pow(a, rv[i])
    return out


cdef inline double _dkernel(double d, double p, double q, double kr, double ka) noexcept nogil:
    cdef double ad = fabs(d)
    if ad == 0.0:
        return 0.0
    return _sgn(d) * (-kr * _powabs(ad, p - 1.0) + ka * _powabs(ad, q - 1.0))


def pair_forces(const double[::1] eta, const double[::1] w, double p, double q,
                double kr, double ka):
    cdef Py_ssize_t n = eta.shape[0]
    cdef Py_ssize_t i, j
    cdef double k
    out = np.zeros(n)
    cdef double[::1] s = out
    with nogil:
        # K' is odd, so each unordered pair is evaluated once
        for i in range(n):
            for j in range(i + 1, n):
                k = _dkernel(eta[i] - eta[j], p, q, kr, ka)
                s[i] += w[j] * k
                s[j] -= w[i] * k
        for i in range(n):
            s[i] *= -2.0 * w[i]
    return out


def pair_energies(const double[::1] eta, const double[::1] w, double p, double q,
                  double kr, double ka):
    cdef Py_ssize_t n = eta.shape[0]
    cdef Py_ssize_t i, j
    cdef double er = 0.0, ea = 0.0, ad, ww
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                ad = fabs(eta[j] - eta[i])
                ww = w[i] * w[j]
                if kr != 0.0:
                    er += ww * (-kr * _powabs(ad, p) / p)
                if ka != 0.0:
                    ea += ww * (ka * _powabs(ad, q) / q)
    return 2.0 * er, 2.0 * ea


cdef int _rel_term(double y, double yb, double e, double coef,
                   double* val, double* der) noexcept nogil:
    """Bregman remainders of coef|y|^e/e and its derivative; 1 on singular input."""
    cdef double ayb = fabs(yb), sb = _sgn(yb), ay = fabs(y), r
    cdef double g, gb, dg, dgb, d2gb
    if y != 0.0 and _sgn(y) == sb:
        r = (ay - ayb) / ayb
        val[0] = coef / e * pow(ayb, e) * _bregman_pow(e, r)
        der[0] = coef * sb * _powabs(ayb, e - 1.0) * _bregman_pow(e - 1.0, r)
        return 0
    if e <= 0.0 and ay == 0.0:
        return 1
    g = coef * pow(ay, e) / e
    gb = coef * pow(ayb, e) / e
    dgb = coef * sb * _powabs(ayb, e - 1.0)
    dg = 0.0 if ay == 0.0 else coef * _sgn(y) * _powabs(ay, e - 1.0)
    d2gb = 0.0 if e == 1.0 else coef * (e - 1.0) * _powabs(ayb, e - 2.0)
    val[0] = g - gb - dgb * (y - yb)
    der[0] = dg - dgb - d2gb * (y - yb)
    return 0


def pair_relative(const double[::1] eta, const double[::1] etab, const double[::1] vb,
                  const double[::1] w, double p, double q, double kr, double ka):
    cdef Py_ssize_t n = eta.shape[0]
    cdef Py_ssize_t i, j
    cdef double er = 0.0, ea = 0.0, sr = 0.0, sa = 0.0
    cdef double y, yb, ww, dvb, val, der
    cdef int bad = 0
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                y = eta[j] - eta[i]
                yb = etab[j] - etab[i]
                if yb == 0.0:
                    bad = 2
                    break
                ww = w[i] * w[j]
                dvb = vb[j] - vb[i]
                if kr != 0.0:
                    if _rel_term(y, yb, p, -kr, &val, &der):
                        bad = 1
                        break
                    er += ww * val
                    sr += ww * dvb * der
                if ka != 0.0:
                    if _rel_term(y, yb, q, ka, &val, &der):
                        bad = 1
                        break
                    ea += ww * val
                    sa += ww * dvb * der
            if bad:
                break
    if bad == 2:
        raise FloatingPointError("reference state has coincident particles")
    if bad == 1:
        raise FloatingPointError("coincident particles under a singular kernel")
    return 2.0 * er, 2.0 * ea, 2.0 * sr, 2.0 * sa


def sticky_merge(const double[::1] eta_in, const double[::1] v_in, const double[::1] w,
                 starts_in):
    cdef Py_ssize_t n = eta_in.shape[0]
    cdef cnp.intp_t[::1] starts = np.ascontiguousarray(starts_in, dtype=np.intp)
    cdef Py_ssize_t nc = starts.shape[0]
    st_start_a = np.empty(nc, dtype=np.intp)
    st_mass_a = np.empty(nc)
    st_mom_a = np.empty(nc)
    st_mom1_a = np.empty(nc)
    st_pos_a = np.empty(nc)
    st_dirty_a = np.zeros(nc, dtype=np.int8)
    cdef cnp.intp_t[::1] st_start = st_start_a
    cdef double[::1] st_mass = st_mass_a, st_mom = st_mom_a, st_mom1 = st_mom1_a, st_pos = st_pos_a
    cdef cnp.int8_t[::1] st_dirty = st_dirty_a
    eta_a = np.array(eta_in, dtype=float)
    v_a = np.array(v_in, dtype=float)
    cdef double[::1] eta = eta_a, v = v_a
    cdef Py_ssize_t top = -1, k, a, b, i
    cdef double m, pm, s
    cdef int merges = 0
    with nogil:
        for k in range(nc):
            a = starts[k]
            b = starts[k + 1] if k + 1 < nc else n
            m = 0.0
            pm = 0.0
            s = 0.0
            for i in range(a, b):
                m += w[i]
                pm += w[i] * v[i]
                s += w[i] * eta[i]
            top += 1
            st_start[top] = a
            st_mass[top] = m
            st_mom[top] = pm
            st_mom1[top] = s
            st_pos[top] = eta[a]
            st_dirty[top] = 0
            while top > 0 and st_pos[top] <= st_pos[top - 1]:
                st_mass[top - 1] += st_mass[top]
                st_mom[top - 1] += st_mom[top]
                st_mom1[top - 1] += st_mom1[top]
                st_pos[top - 1] = st_mom1[top - 1] / st_mass[top - 1]
                st_dirty[top - 1] = 1
                top -= 1
                merges += 1
        for k in range(top + 1):
            if st_dirty[k]:
                a = st_start[k]
                b = st_start[k + 1] if k < top else n
                for i in range(a, b):
                    eta[i] = st_pos[k]
                    v[i] = st_mom[k] / st_mass[k]
    return eta_a, v_a, st_start_a[:top + 1].copy(), merges
