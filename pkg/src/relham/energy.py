"""Hamiltonian, its constituent energies, and the force functional.

Two model families are supported:

* formulation "A": power-law kernels K_r(y) = -kr |y|^p/p, K_a(y) = ka |y|^q/q,
  optional pressure energy with psi(s) = s^(1-gamma), all measured relative to
  a reference map eta_* (identity by default);
* formulation "B": the normalized pressureless energy with
  K(y) = -|y|/4 + y^2/4, i.e. p=1, q=2, kr=1/4, ka=1/2 in the kernel law.

Double sums run over ordered pairs i != j of particles.
"""
from dataclasses import dataclass, field, replace

import numpy as np

from . import _backend


class InadmissibleStateError(ValueError):
    """State outside the admissible class of the model (e.g. collapsed cell)."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


@dataclass(frozen=True)
class ModelSpec:
    formulation: str = "B"
    p: float = 1.0
    q: float = 2.0
    kappa_r: float = 0.25
    kappa_a: float = 0.5
    gamma: float | None = None
    reference_map: np.ndarray | None = None

    def __post_init__(self):
        errors = self.validation_errors()
        if errors:
            raise ValueError("; ".join(errors))
        if self.reference_map is not None:
            ref = np.asarray(self.reference_map, dtype=float)
            ref.setflags(write=False)
            object.__setattr__(self, "reference_map", ref)

    def validation_errors(self):
        return model_errors(self.formulation, self.p, self.q, self.kappa_r, self.kappa_a, self.gamma,
                            self.reference_map is not None)

    @classmethod
    def pressureless(cls):
        """The normalized pressureless model (formulation B)."""
        return cls()

    @classmethod
    def power_law(cls, p, q, gamma=None, kappa_r=1.0, kappa_a=1.0, reference_map=None):
        return cls("A", float(p), float(q), float(kappa_r), float(kappa_a),
                   None if gamma is None else float(gamma), reference_map)

    @property
    def has_pressure(self):
        return self.gamma is not None

    def kernel_args(self):
        return self.p, self.q, self.kappa_r, self.kappa_a

    def reference_positions(self, ref):
        if self.formulation == "B":
            return None
        if self.reference_map is None:
            return ref.labels
        if self.reference_map.shape != ref.labels.shape:
            raise ValueError("reference map length does not match the reference measure")
        return self.reference_map


def model_errors(formulation, p, q, kappa_r, kappa_a, gamma=None, has_reference_map=False):
    """Every violated parameter constraint, as messages naming the bound."""
    errs = []
    if formulation not in ("A", "B"):
        return [f"formulation must be 'A' or 'B', got {formulation!r}"]
    if formulation == "B":
        if (p, q, kappa_r, kappa_a) != (1.0, 2.0, 0.25, 0.5):
            errs.append("formulation B fixes p=1, q=2, kappa_r=1/4, kappa_a=1/2")
        if gamma is not None:
            errs.append("formulation B has no pressure (gamma must be unset)")
        if has_reference_map:
            errs.append("formulation B has no reference map")
        return errs
    if not (-1.0 < p <= 1.0) or p == 0.0:
        errs.append(f"p={p} outside the kernel-law range -1 < p <= 1, p != 0")
    if not q >= 1.0:
        errs.append(f"q={q} outside the kernel-law range q >= 1")
    if kappa_r < 0:
        errs.append(f"kappa_r={kappa_r} must be >= 0")
    if kappa_a < 0:
        errs.append(f"kappa_a={kappa_a} must be >= 0")
    if gamma is not None and not gamma > 1.0:
        errs.append(f"gamma={gamma} must satisfy gamma > 1")
    return errs


@dataclass
class LagrangianState:
    positions: np.ndarray
    velocities: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.positions = np.array(self.positions, dtype=float)
        self.velocities = np.array(self.velocities, dtype=float)
        if self.positions.shape != self.velocities.shape or self.positions.ndim != 1:
            raise ValueError("positions and velocities must be 1-D arrays of equal length")

    def copy(self):
        return LagrangianState(self.positions.copy(), self.velocities.copy(), self.t)


@dataclass
class EnergyReport:
    K: float
    E_r: float
    E_a: float
    E_w: float
    H: float = field(init=False)

    def __post_init__(self):
        self.H = self.K + self.E_r + self.E_a + self.E_w


def psi(s, gamma):
    return s ** (1.0 - gamma)


def dpsi(s, gamma):
    return (1.0 - gamma) * s ** (-gamma)


def specific_volumes(eta, ref):
    """Cell gap per unit cell mass."""
    return np.diff(eta) / ref.cell_masses


def check_admissible(eta, ref, model):
    eta = np.asarray(eta)
    if eta.shape != ref.masses.shape:
        raise ValueError(f"state has {eta.size} particles, reference has {ref.n}")
    gaps = np.diff(eta)
    if model.formulation == "A":
        bad = np.flatnonzero(~(gaps > 0))
        if bad.size:
            raise InadmissibleStateError(
                f"cell {bad[0]} has nonpositive gap {gaps[bad[0]]:.3e} (contact under formulation A)",
                cell=int(bad[0]))
    else:
        bad = np.flatnonzero(gaps < 0)
        if bad.size:
            raise InadmissibleStateError(f"positions decrease at cell {bad[0]}", cell=int(bad[0]))


def kinetic_energy(v, ref):
    return 0.5 * float(np.dot(ref.masses, v * v))


def potential_parts(eta, ref, model):
    """(E_r, E_a, E_w) for an admissible placement."""
    k = _backend.kernels
    w = ref.masses
    er, ea = k.pair_energies(eta, w, *model.kernel_args())
    ew = 0.0
    if model.formulation == "A":
        star = model.reference_positions(ref)
        er0, ea0 = k.pair_energies(np.ascontiguousarray(star), w, *model.kernel_args())
        er -= er0
        ea -= ea0
        if model.has_pressure:
            tau = specific_volumes(eta, ref)
            tau0 = specific_volumes(star, ref)
            ew = float(np.sum(ref.cell_masses * (psi(tau, model.gamma) - psi(tau0, model.gamma))))
    return er, ea, ew


def hamiltonian_unchecked(eta, v, ref, model):
    """H without the admissibility check (used on crossed states before projection)."""
    er, ea, ew = potential_parts(np.ascontiguousarray(eta), ref, model)
    return kinetic_energy(v, ref) + er + ea + ew


def eval_energy(state, ref, model):
    eta = np.ascontiguousarray(state.positions)
    check_admissible(eta, ref, model)
    er, ea, ew = potential_parts(eta, ref, model)
    return EnergyReport(kinetic_energy(state.velocities, ref), er, ea, ew)


def pressure_force(eta, ref, gamma):
    """Exact negative gradient of the discrete pressure energy."""
    dp = dpsi(specific_volumes(eta, ref), gamma)
    f = np.zeros_like(eta)
    f[:-1] += dp
    f[1:] -= dp
    return f


def force_unchecked(eta, ref, model):
    f = _backend.kernels.pair_forces(eta, ref.masses, *model.kernel_args())
    if model.has_pressure:
        f += pressure_force(eta, ref, model.gamma)
    return f


def force(state, ref, model):
    """Per-particle force -dE/d(eta_i)."""
    eta = np.ascontiguousarray(state.positions)
    check_admissible(eta, ref, model)
    if model.formulation == "A" and model.p < 1.0 and np.any(np.diff(eta) == 0):
        raise InadmissibleStateError("coincident particles under a singular repulsive kernel")
    return force_unchecked(eta, ref, model)


def potential_longdouble(eta, ref, model):
    """Potential energy evaluated independently in extended precision.

    Uses the full off-diagonal double sum (no symmetry shortcut) so it also
    serves as an oracle for the production sums.
    """
    ld = np.longdouble
    eta = np.asarray(eta, dtype=ld)
    w = np.asarray(ref.masses, dtype=ld)
    p, q, kr, ka = (ld(c) for c in model.kernel_args())
    n = eta.size
    off = ~np.eye(n, dtype=bool)

    def kernel(x):
        ad = np.abs(x[:, None] - x[None, :])[off]
        ww = (w[:, None] * w[None, :])[off]
        return np.sum(ww * (-kr * ad ** p / p)), np.sum(ww * (ka * ad ** q / q))

    er, ea = kernel(eta)
    ew = ld(0)
    if model.formulation == "A":
        star = np.asarray(model.reference_positions(ref), dtype=ld)
        er0, ea0 = kernel(star)
        er, ea = er - er0, ea - ea0
        if model.has_pressure:
            g = ld(model.gamma)
            m = (w[1:] + w[:-1]) / 2
            ew = np.sum(m * ((np.diff(eta) / m) ** (1 - g) - (np.diff(star) / m) ** (1 - g)))
    return er + ea + ew


def fd_oracle_force(state, ref, model, h=1e-5):
    """Central-difference force -(E(eta + h e_i) - E(eta - h e_i)) / 2h."""
    if not h > 0:
        raise ValueError("h must be positive")
    eta = np.asarray(state.positions, dtype=float)
    check_admissible(eta, ref, model)
    ld = np.longdouble
    base = eta.astype(ld)
    hh = ld(h)
    out = np.empty(eta.size)
    for i in range(eta.size):
        plus, minus = base.copy(), base.copy()
        plus[i] += hh
        minus[i] -= hh
        for trial in (plus, minus):
            d = np.diff(trial)
            if np.any(d < 0) or (model.formulation == "A" and np.any(d <= 0)):
                raise InadmissibleStateError(f"perturbing particle {i} by h={h} breaks monotonicity", cell=i)
        out[i] = float(-(potential_longdouble(plus, ref, model) - potential_longdouble(minus, ref, model)) / (2 * hh))
    return out


def lipschitz(eta, x):
    """(Lip(eta), Lip(eta^-1)) from consecutive difference quotients."""
    quot = np.diff(eta) / np.diff(x)
    lo = np.min(quot)
    return float(np.max(quot)), (float(1.0 / lo) if lo > 0 else np.inf)


def appendix_constants(state, ref, model):
    """Integrals of |eta - eta_*| type and the energy bounds that dominate them.

    Returns a dict with lhs1, lhs2, lhs3 and bounds E1, E2, E3 (None when the
    model has no pressure) together with ``ok_k`` flags for lhs_k <= E_k.
    """
    if model.formulation != "A":
        raise ValueError("appendix constants apply to formulation A")
    eta = np.asarray(state.positions, dtype=float)
    check_admissible(eta, ref, model)
    star = np.asarray(model.reference_positions(ref), dtype=float)
    x, w = ref.labels, ref.masses
    p, q = model.p, model.q
    i, j = np.triu_indices(x.size, 1)
    dx = x[j] - x[i]
    d = eta[j] - eta[i]
    ds = star[j] - star[i]
    ww = w[i] * w[j]
    jump = np.abs(d - ds)
    lip, lipinv = lipschitz(eta, x)
    lips, lipinvs = lipschitz(star, x)

    lhs1 = 2.0 * float(np.sum(ww * dx ** (p - 1.0) * jump))
    lhs2 = 2.0 * float(np.sum(ww * dx ** (q - 1.0) * jump))
    e1 = max(lip, lips) ** (1.0 - p) * 2.0 * float(np.sum(ww * np.abs((d ** p - ds ** p) / p)))
    e2 = max(lipinv, lipinvs) ** (q - 1.0) * 2.0 * float(np.sum(ww * np.abs((d ** q - ds ** q) / q)))
    tau, taus = specific_volumes(eta, ref), specific_volumes(star, ref)
    lhs3 = float(np.sum(ref.cell_masses * np.abs(tau - taus)))
    e3 = None
    if model.has_pressure:
        g = model.gamma
        ltau = max(np.max(tau), np.max(taus))
        e3 = ltau ** g / (g - 1.0) * float(np.sum(ref.cell_masses * np.abs(psi(tau, g) - psi(taus, g))))

    def ok(lhs, bound):
        return None if bound is None else bool(lhs <= bound * (1.0 + 1e-12) + 1e-300)

    return {
        "lhs1": lhs1, "lhs2": lhs2, "lhs3": lhs3,
        "E1": e1, "E2": e2, "E3": e3,
        "ok1": ok(lhs1, e1), "ok2": ok(lhs2, e2), "ok3": ok(lhs3, e3),
    }


def with_reference_map(model, reference_map):
    return replace(model, reference_map=reference_map)
