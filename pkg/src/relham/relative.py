"""Relative energies, relative Hamiltonian, work rate and lower-bound certificates.

For a weak state (eta, v) and a strong reference state (etab, vb) on the same
reference measure, every relative energy is the Bregman remainder of the
corresponding convex integrand, summed over pairs (i != j) or cells. The
relative Hamiltonian evolves by

    d/dt H_rel = -W,   W = <vb, f[eta|etab]>,

with f[eta|etab] = -dE[eta] + dE[etab] + d2E[etab](eta - etab) the relative force.
"""
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from ._pykernels import _rel_terms
from .energy import appendix_constants, check_admissible, lipschitz, specific_volumes
from .measure import center_of_mass


@dataclass
class RelativeReport:
    t: float
    K_rel: float
    Ew_rel: float
    Er_rel: float
    Ea_rel: float
    shift_a: float
    work_rate: float = float("nan")
    correction: float = float("nan")
    H_rel: float = field(init=False)

    def __post_init__(self):
        self.H_rel = self.K_rel + self.Ew_rel + self.Er_rel + self.Ea_rel

    @property
    def E_rel(self):
        return self.Ew_rel + self.Er_rel + self.Ea_rel


def _arrays(state):
    return (np.ascontiguousarray(state.positions, dtype=float),
            np.ascontiguousarray(state.velocities, dtype=float))


def _check_pair(state, ref_state, ref, model):
    eta, v = _arrays(state)
    etab, vb = _arrays(ref_state)
    if eta.shape != etab.shape or eta.shape != ref.masses.shape:
        raise ValueError("states and reference measure have mismatched lengths")
    check_admissible(eta, ref, model)
    check_admissible(etab, ref, model)
    if np.any(np.diff(etab) <= 0):
        raise ValueError("the strong reference state must be strictly increasing")
    return eta, v, etab, vb


def _pressure_terms(eta, etab, vb, ref, gamma):
    tau, taub = specific_volumes(eta, ref), specific_volumes(etab, ref)
    r = (tau - taub) / taub
    bp = _backend.kernels.bregman_pow
    val = taub ** (1.0 - gamma) * bp(1.0 - gamma, r)
    der = (1.0 - gamma) * taub ** (-gamma) * bp(-gamma, r)
    return val, der, np.diff(vb)


def _sums(eta, v, etab, vb, ref, model):
    w = ref.masses
    er, ea, sr, sa = _backend.kernels.pair_relative(eta, etab, vb, w, *model.kernel_args())
    ew = sw = 0.0
    if model.has_pressure:
        val, der, dvb = _pressure_terms(eta, etab, vb, ref, model.gamma)
        ew = float(np.sum(ref.cell_masses * val))
        sw = float(np.sum(dvb * der))
    k = 0.5 * float(np.dot(w, (v - vb) ** 2))
    return k, ew, er, ea, sw + sr + sa


def relative_energies(state, ref_state, ref, model):
    """RelativeReport with the energy fields filled (work rate left as NaN)."""
    eta, v, etab, vb = _check_pair(state, ref_state, ref, model)
    k, ew, er, ea, _ = _sums(eta, v, etab, vb, ref, model)
    a = 0.0
    if model.formulation == "B":
        a = center_of_mass(etab, ref) - center_of_mass(eta, ref)
    return RelativeReport(float(state.t), k, ew, er, ea, a)


def centered_distance(state, ref_state, ref):
    """1/2 |v - vb|^2 + 1/2 |eta - etab + a|^2 in the mass-weighted norm."""
    eta, v = _arrays(state)
    etab, vb = _arrays(ref_state)
    a = center_of_mass(etab, ref) - center_of_mass(eta, ref)
    w = ref.masses
    return 0.5 * float(np.dot(w, (v - vb) ** 2)) + 0.5 * float(np.dot(w, (eta - etab + a) ** 2))


def sticky_correction(state, ref_state, ref):
    """1/2 sum over label pairs i > j sharing a position of w_i w_j (vb_i - vb_j)."""
    eta, _ = _arrays(state)
    _, vb = _arrays(ref_state)
    w = ref.masses
    total = 0.0
    n = eta.size
    i = 0
    while i < n:
        j = i
        while j + 1 < n and eta[j + 1] == eta[i]:
            j += 1
        if j > i:
            ww, vv = w[i:j + 1], vb[i:j + 1]
            # sum_{k>l} w_k w_l (v_k - v_l) = sum_k w_k v_k (W_<k) - w_k (sum_{l<k} w_l v_l)
            cw = np.concatenate(([0.0], np.cumsum(ww)[:-1]))
            cwv = np.concatenate(([0.0], np.cumsum(ww * vv)[:-1]))
            total += float(np.sum(ww * vv * cw - ww * cwv))
        i = j + 1
    return 0.5 * total


def relative_work_rate(state, ref_state, ref, model):
    """W = <vb, f[eta|etab]>.

    Formulation A assembles the pairwise and cell second-difference sums.
    Formulation B uses the closed form: for monotone states only label pairs
    sharing a position contribute, and W = -(sticky correction).
    """
    eta, v, etab, vb = _check_pair(state, ref_state, ref, model)
    if model.formulation == "B":
        return -sticky_correction(state, ref_state, ref)
    return -_sums(eta, v, etab, vb, ref, model)[4]


def relative_report(state, ref_state, ref, model):
    """Energies, work rate and correction term at one time."""
    eta, v, etab, vb = _check_pair(state, ref_state, ref, model)
    k, ew, er, ea, minus_w = _sums(eta, v, etab, vb, ref, model)
    a = 0.0
    if model.formulation == "B":
        a = center_of_mass(etab, ref) - center_of_mass(eta, ref)
        corr = sticky_correction(state, ref_state, ref)
        return RelativeReport(float(state.t), k, ew, er, ea, a, -corr, corr)
    return RelativeReport(float(state.t), k, ew, er, ea, a, -minus_w, 0.0)


# ---------------------------------------------------------------------------
# Monitor


@dataclass
class MonitorResult:
    reports: list
    residual: np.ndarray
    tolerance: float
    holds: bool
    gronwall_C0: float | None = None
    gronwall_holds: bool | None = None

    def series(self, name):
        return np.array([getattr(r, name) for r in self.reports])


def default_tolerance(dt, stride, work_rates, h_rel):
    """10 (dt^2 + stride dt) max|W| + 10 dt^2 max H_rel."""
    return 10.0 * (dt * dt + stride * dt) * float(np.max(np.abs(work_rates), initial=0.0)) \
        + 10.0 * dt * dt * float(np.max(h_rel, initial=0.0))


def relative_hamiltonian_monitor(traj_weak, traj_strong, ref, model, tolerance=None):
    """Relative Hamiltonian series and the residual of the relative inequality.

    residual(t) = H_rel(t) - H_rel(0) + int_0^t W ds  (trapezoid on the output
    grid); the inequality holds when residual <= tolerance everywhere. For
    formulation A also checks the Gronwall form with C0 = max of the
    pointwise-estimate constants over the run (test map vb).
    """
    if traj_weak.times.shape != traj_strong.times.shape or \
            np.max(np.abs(traj_weak.times - traj_strong.times), initial=0.0) > 1e-9 * max(1.0, traj_weak.times[-1]):
        raise ValueError("trajectories do not share an output grid")
    reports = []
    c0 = 0.0
    for k in range(len(traj_weak)):
        sw, ss = traj_weak.state(k), traj_strong.state(k)
        reports.append(relative_report(sw, ss, ref, model))
        if model.formulation == "A":
            c0 = max(c0, pp_constants(sw, ss, ref, model, ss.velocities)["C0"])
    t = traj_weak.times
    h = np.array([r.H_rel for r in reports])
    wr = np.array([r.work_rate for r in reports])
    integral = np.concatenate(([0.0], np.cumsum(0.5 * (wr[1:] + wr[:-1]) * np.diff(t))))
    residual = h - h[0] + integral
    if tolerance is None:
        tolerance = default_tolerance(traj_weak.dt, traj_weak.stride, wr, h)
    holds = bool(np.all(residual <= tolerance))
    g_holds = None
    if model.formulation == "A":
        e = np.array([r.E_rel for r in reports])
        e_int = np.concatenate(([0.0], np.cumsum(0.5 * (e[1:] + e[:-1]) * np.diff(t))))
        g_holds = bool(np.all(h <= h[0] + c0 * e_int + tolerance))
    return MonitorResult(reports, residual, float(tolerance), holds,
                         c0 if model.formulation == "A" else None, g_holds)


# ---------------------------------------------------------------------------
# Lower-bound certificates


@dataclass
class BoundCertificate:
    assertion: int
    constant: float | None
    lhs: float
    rhs: float
    satisfied: bool
    params: dict = field(default_factory=dict)
    label: str = ""


def _tol(lhs, rhs):
    return 1e-12 * max(abs(lhs), abs(rhs)) + 1e-300


def _cert(assertion, const, lhs, rhs, params, label):
    return BoundCertificate(assertion, const, float(lhs), float(rhs),
                            bool(lhs >= rhs - _tol(lhs, rhs)), params, label)


def _pair_geometry(eta, etab, x, w):
    i, j = np.triu_indices(x.size, 1)
    return dict(dx=x[j] - x[i], y=eta[j] - eta[i], yb=etab[j] - etab[i], ww=w[i] * w[j])


def _split_pair_bound(g, lbar, expo, coef, gamma_fn):
    """Two-region bound sum for a pair kernel with K'' ~ |y|^(expo-2).

    Returns (c, S1, S2): region h <= 3 Lbar gets |[eta-etab]|^2 |x-x'|^(expo-2),
    region h > 3 Lbar gets |[eta-etab]|^expo.
    """
    h = g["y"] / g["dx"]
    jump = np.abs(g["y"] - g["yb"])
    near = h <= 3.0 * lbar
    s1 = 2.0 * float(np.sum(g["ww"][near] * jump[near] ** 2 * g["dx"][near] ** (expo - 2.0)))
    s2 = gamma_fn(near, jump)
    c = coef * min((3.0 * lbar) ** (expo - 2.0), 2.0 ** (expo - 2.0))
    return c, s1, s2


def lower_bound_certificates(state, ref_state, ref, model, beta=0.5, beta_prime=None):
    """Check each applicable lower bound of the relative energies.

    Assertion ids: 0 exact zero (p = 1 or q = 1), 1 attraction with 1 < q < 2,
    2 attraction with q >= 2, 3 repulsion with 0 < p < 1, 4 pressure,
    5 repulsion with -1 < p < 0.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta={beta} must lie in (0, 1)")
    p, q = model.p, model.q
    if p < 0:
        if beta_prime is None:
            beta_prime = min(max((1.0 - p) / 2.0, -p + 1e-6), 1.0 - 1e-6)
        if not -p < beta_prime < 1.0:
            raise ValueError(f"beta'={beta_prime} must lie in ({-p}, 1)")
    rep = relative_energies(state, ref_state, ref, model)
    eta, _, etab, _ = _check_pair(state, ref_state, ref, model)
    x, w = ref.labels, ref.masses
    g = _pair_geometry(eta, etab, x, w)
    lbar, _ = lipschitz(etab, x)
    certs = []
    kr, ka = model.kappa_r, model.kappa_a

    if p == 1.0:
        certs.append(_cert(0, None, -abs(rep.Er_rel), 0.0, {}, "repulsive relative energy vanishes (p=1)"))
    if q == 1.0:
        certs.append(_cert(0, None, -abs(rep.Ea_rel), 0.0, {}, "attractive relative energy vanishes (q=1)"))

    def plain(expo):
        def fn(near, jump):
            far = ~near
            return 2.0 * float(np.sum(g["ww"][far] * jump[far] ** expo))
        return fn

    if 1.0 < q < 2.0 and ka > 0:
        c, s1, s2 = _split_pair_bound(g, lbar, q, ka * (q - 1.0) / 2.0, plain(q))
        certs.append(_cert(1, c, rep.Ea_rel, c * (s1 + s2), {"threshold": 3 * lbar}, "attraction, 1<q<2"))
    if q >= 2.0 and ka > 0:
        c = ka * (q - 1.0) * min(1.0 / (q * (q - 1.0)), 1.0 / q)
        s = 2.0 * float(np.sum(g["ww"] * np.abs(g["y"] - g["yb"]) ** q))
        certs.append(_cert(2, c, rep.Ea_rel, c * s, {}, "attraction, q>=2"))
    if 0.0 < p < 1.0 and kr > 0:
        c, s1, s2 = _split_pair_bound(g, lbar, p, kr * (1.0 - p) / 2.0, plain(p))
        certs.append(_cert(3, c, rep.Er_rel, c * (s1 + s2), {"threshold": 3 * lbar}, "repulsion, 0<p<1"))
    if p < 0.0 and kr > 0:
        s = (1.0 - p - beta_prime) / (1.0 - p)
        rexp = 1.0 / s
        consts = appendix_constants(state, ref, model), appendix_constants(ref_state, ref, model)
        dbound = consts[0]["E1"] + consts[1]["E1"]

        def holder(near, jump):
            far = ~near
            if not np.any(far):
                return 0.0
            inner = 2.0 * float(np.sum(g["ww"][far] * jump[far] ** (beta_prime + p) * g["dx"][far] ** (-beta_prime)))
            return inner ** rexp / dbound ** ((1.0 - s) / s)

        c, s1, s2 = _split_pair_bound(g, lbar, p, kr * (1.0 - p) / 2.0, holder)
        certs.append(_cert(5, c, rep.Er_rel, c * (s1 + s2),
                           {"beta_prime": beta_prime, "r_prime": rexp, "D_bound": dbound}, "repulsion, -1<p<0"))
    if model.has_pressure:
        gam = model.gamma
        tau, taub = specific_volumes(eta, ref), specific_volumes(etab, ref)
        m = ref.cell_masses
        ltau = max(lbar, float(np.max(taub)))
        near = tau <= 3.0 * ltau
        jump = np.abs(tau - taub)
        s1 = float(np.sum(m[near] * jump[near] ** 2))
        ca = gam * (gam - 1.0) / 2.0 * (3.0 * ltau) ** (-1.0 - gam)
        s = (1.0 - beta) / gam
        rexp = 1.0 / s
        params = {"beta": beta, "r": rexp, "threshold": 3 * ltau}
        if np.any(~near):
            consts = appendix_constants(state, ref, model), appendix_constants(ref_state, ref, model)
            dbound = consts[0]["E3"] + consts[1]["E3"]
            s2 = float(np.sum(m[~near] * jump[~near] ** beta)) ** rexp
            cb = gam * (gam - 1.0) / 2.0 * 2.0 ** (-1.0 - gam) / dbound ** ((1.0 - s) / s)
            c = min(ca, cb)
            params["D_bound"] = dbound
        else:
            s2, c = 0.0, ca
        certs.append(_cert(4, c, rep.Ew_rel, c * (s1 + s2), params, "pressure"))
    return certs


# ---------------------------------------------------------------------------
# Pointwise estimates of the relative force by the relative energy


def pp_constants(state, ref_state, ref, model, phi):
    """Compare |phi-weighted relative force| with the relative energy per cell/pair.

    Returns the proof constants C1 (pressure), C2 (repulsion), C3 (attraction),
    C0 = max of them, the maximal observed ratios lhs/rhs and a ``violation``
    flag raised when a zero relative energy meets a nonzero left side.
    """
    eta, _, etab, _ = _check_pair(state, ref_state, ref, model)
    phi = np.asarray(phi, dtype=float)
    x = ref.labels
    if np.any(np.diff(eta) <= 0):
        raise ValueError("pointwise estimates need a strictly increasing weak state")
    lip_phi = float(np.max(np.abs(np.diff(phi)) / np.diff(x)))
    _, linv = lipschitz(eta, x)
    _, linvb = lipschitz(etab, x)
    base = lip_phi * (linv + linvb)
    out = {"C1": None, "C2": None, "C3": None, "ratio1": 0.0, "ratio2": 0.0, "ratio3": 0.0}
    violation = False

    def ratio(lhs, rhs):
        nonlocal violation
        pos = rhs > 0
        if np.any((~pos) & (np.abs(lhs) > 1e-300)):
            violation = True
        return float(np.max(np.abs(lhs[pos]) / rhs[pos], initial=0.0))

    if model.has_pressure:
        val, der, _ = _pressure_terms(eta, etab, phi, ref, model.gamma)
        lhs = np.diff(phi) / ref.cell_masses * der
        out["C1"] = (model.gamma + 1.0) * base
        out["ratio1"] = ratio(lhs, val)
    i, j = np.triu_indices(x.size, 1)
    y, yb = eta[j] - eta[i], etab[j] - etab[i]
    dphi = phi[j] - phi[i]
    if model.kappa_r > 0:
        val, der = _rel_terms(y, yb, model.p, -model.kappa_r)
        out["C2"] = (2.0 - model.p) * base
        out["ratio2"] = ratio(dphi * der, val)
    if model.kappa_a > 0:
        val, der = _rel_terms(y, yb, model.q, model.kappa_a)
        out["C3"] = abs(model.q - 2.0) * base
        out["ratio3"] = ratio(dphi * der, val)
    out["C0"] = max(c for c in (out["C1"], out["C2"], out["C3"]) if c is not None) \
        if any(c is not None for c in (out["C1"], out["C2"], out["C3"])) else 0.0
    out["violation"] = violation
    out["ok"] = (not violation) and all(
        out[f"C{k}"] is None or out[f"ratio{k}"] <= out[f"C{k}"] * (1 + 1e-9) + 1e-12 for k in (1, 2, 3))
    return out

