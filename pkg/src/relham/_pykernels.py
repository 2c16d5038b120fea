"""Pure numpy implementations of the pairwise kernels.

These mirror ``_kernels.pyx`` one to one and are used when the compiled
extension is unavailable (or when ``RELHAM_BACKEND=python``).

Pairwise kernel convention::

    K(y) = -kr |y|^p / p + ka |y|^q / q
    K'(y) = sgn(y) (-kr |y|^(p-1) + ka |y|^(q-1)),   sgn(0) = 0

Double sums exclude the diagonal and are accumulated over i < j, then doubled.
"""
import numpy as np

_SERIES_CUT = 0.1
_SERIES_TERMS = 18


def bregman_pow(a, r):
    """(1 + r)**a - 1 - a*r, accurate for small |r| (no cancellation)."""
    r = np.asarray(r, dtype=float)
    if a == 0.0 or a == 1.0:
        return np.zeros_like(r)
    if a == 2.0:
        return r * r
    out = np.empty_like(r)
    small = np.abs(r) < _SERIES_CUT
    rs = r[small]
    c = 0.5 * a * (a - 1.0)
    term = np.zeros_like(rs)
    rk = rs * rs
    for k in range(2, _SERIES_TERMS + 2):
        term += c * rk
        c *= (a - k) / (k + 1.0)
        rk = rk * rs
    out[small] = term
    rb = r[~small]
    out[~small] = (1.0 + rb) ** a - 1.0 - a * rb
    return out


def _upper(n):
    return np.triu_indices(n, 1)


def _powabs(ad, e):
    if e == 0.0:
        return np.ones_like(ad)
    if e == 1.0:
        return ad
    with np.errstate(divide="ignore"):
        return ad ** e


def pair_forces(eta, w, p, q, kr, ka):
    """Pairwise force f_i = -2 w_i sum_j w_j K'(eta_i - eta_j)."""
    d = eta[:, None] - eta[None, :]
    ad = np.abs(d)
    zero = ad == 0.0
    with np.errstate(invalid="ignore"):
        g = np.sign(d) * (-kr * _powabs(ad, p - 1.0) + ka * _powabs(ad, q - 1.0))
    g[zero] = 0.0
    return -2.0 * w * (g @ w)


def pair_energies(eta, w, p, q, kr, ka):
    """(E_r, E_a) without reference subtraction."""
    i, j = _upper(eta.size)
    ad = np.abs(eta[j] - eta[i])
    ww = w[i] * w[j]
    with np.errstate(divide="ignore"):
        er = 2.0 * np.sum(ww * (-kr * ad ** p / p)) if kr != 0.0 else 0.0
    ea = 2.0 * np.sum(ww * (ka * ad ** q / q)) if ka != 0.0 else 0.0
    return float(er), float(ea)


def _rel_terms(y, yb, e, coef):
    """Bregman remainders of g(y) = coef |y|^e / e and of g'.

    Returns (g(y|yb), g'(y|yb)) elementwise, using the scaled form when y and
    yb share a sign and the direct form otherwise (y = 0 or crossed).
    """
    ayb = np.abs(yb)
    sb = np.sign(yb)
    same = (np.sign(y) == sb) & (y != 0.0)
    val = np.empty_like(y)
    der = np.empty_like(y)
    r = (np.abs(y[same]) - ayb[same]) / ayb[same]
    ys = ayb[same]
    val[same] = coef / e * ys ** e * bregman_pow(e, r)
    der[same] = coef * sb[same] * _powabs(ys, e - 1.0) * bregman_pow(e - 1.0, r)
    o = ~same
    if np.any(o):
        yo, ybo = y[o], yb[o]
        ayo, aybo = np.abs(yo), np.abs(ybo)
        if e <= 0.0 and np.any(ayo == 0.0):
            raise FloatingPointError("coincident particles under a singular kernel")
        g = coef * ayo ** e / e
        gb = coef * aybo ** e / e
        dgb = coef * np.sign(ybo) * _powabs(aybo, e - 1.0)
        dg = np.where(ayo == 0.0, 0.0, coef * np.sign(yo) * _powabs(np.where(ayo == 0.0, 1.0, ayo), e - 1.0))
        d2gb = coef * (e - 1.0) * _powabs(aybo, e - 2.0) if e != 1.0 else np.zeros_like(aybo)
        val[o] = g - gb - dgb * (yo - ybo)
        der[o] = dg - dgb - d2gb * (yo - ybo)
    return val, der


def pair_relative(eta, etab, vb, w, p, q, kr, ka):
    """Relative pair energies and their work-rate sums.

    Returns (Er_rel, Ea_rel, Sr, Sa) with
    Er_rel = sum_{i != j} w_i w_j K_r(eta|etab)_{ij} and
    Sr = sum_{i != j} w_i w_j (vb_i - vb_j) K_r'(eta|etab)_{ij}.
    """
    i, j = _upper(eta.size)
    y = eta[j] - eta[i]
    yb = etab[j] - etab[i]
    if np.any(yb == 0.0):
        raise FloatingPointError("reference state has coincident particles")
    ww = w[i] * w[j]
    dvb = vb[j] - vb[i]
    out = []
    for e, coef in ((p, -kr), (q, ka)):
        if coef == 0.0:
            out.append((0.0, 0.0))
            continue
        val, der = _rel_terms(y, yb, e, coef)
        out.append((2.0 * float(np.sum(ww * val)), 2.0 * float(np.sum(ww * dvb * der))))
    (er, sr), (ea, sa) = out
    return er, ea, sr, sa


def sticky_merge(eta, v, w, starts):
    """Merge adjacent clusters until cluster positions strictly increase.

    ``starts`` holds the first label of each existing cluster. Existing
    clusters are never split. Returns (eta, v, starts, n_merges); arrays of
    clusters that did not take part in a merge are returned untouched.
    """
    n = eta.size
    bounds = list(starts) + [n]
    st_start, st_mass, st_mom, st_mom1, st_dirty = [], [], [], [], []
    merges = 0
    for k in range(len(bounds) - 1):
        a, b = bounds[k], bounds[k + 1]
        m = float(np.sum(w[a:b]))
        st_start.append(a)
        st_mass.append(m)
        st_mom.append(float(np.sum(w[a:b] * v[a:b])))
        st_mom1.append(float(np.sum(w[a:b] * eta[a:b])))
        st_dirty.append(False)
        while len(st_start) > 1 and _pos(st_mom1[-1], st_mass[-1], st_dirty[-1], eta, st_start[-1]) <= \
                _pos(st_mom1[-2], st_mass[-2], st_dirty[-2], eta, st_start[-2]):
            st_start.pop()
            m2, p2, s2 = st_mass.pop(), st_mom.pop(), st_mom1.pop()
            st_dirty.pop()
            st_mass[-1] += m2
            st_mom[-1] += p2
            st_mom1[-1] += s2
            st_dirty[-1] = True
            merges += 1
    eta = eta.copy()
    v = v.copy()
    ends = st_start[1:] + [n]
    for a, b, m, pm, s, dirty in zip(st_start, ends, st_mass, st_mom, st_mom1, st_dirty):
        if dirty:
            eta[a:b] = s / m
            v[a:b] = pm / m
    return eta, v, np.asarray(st_start, dtype=np.intp), merges


def _pos(mom1, mass, dirty, eta, start):
    # untouched clusters keep their stored position bit for bit
    return mom1 / mass if dirty else eta[start]
