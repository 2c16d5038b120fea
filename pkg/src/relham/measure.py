"""Reference mass measure, Lagrangian labels and Eulerian push-forward."""
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid


@dataclass(frozen=True)
class ReferenceMeasure:
    """Atomic discretization of the reference mass measure.

    Particle i carries mass ``masses[i]`` and sits at label ``labels[i]``.
    Cell c (between particles c and c+1) carries half of each neighbour's mass.
    """

    labels: np.ndarray
    masses: np.ndarray
    total_mass: float

    def __post_init__(self):
        x = np.asarray(self.labels, dtype=float)
        w = np.asarray(self.masses, dtype=float)
        if x.ndim != 1 or x.shape != w.shape:
            raise ValueError("labels and masses must be 1-D arrays of equal length")
        if x.size < 1:
            raise ValueError("need at least one particle")
        if np.any(np.diff(x) <= 0):
            raise ValueError("labels must be strictly increasing")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("masses must be positive and finite")
        x.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "labels", x)
        object.__setattr__(self, "masses", w)
        object.__setattr__(self, "total_mass", float(self.total_mass))

    @property
    def n(self):
        return self.labels.size

    @property
    def cell_masses(self):
        return 0.5 * (self.masses[1:] + self.masses[:-1])


@dataclass
class EulerianField:
    """Histogram of a particle state: density and mass-weighted velocity per bin."""

    bin_edges: np.ndarray
    density: np.ndarray
    velocity: np.ndarray

    @property
    def total_mass(self):
        return float(np.sum(self.density * np.diff(self.bin_edges)))


def build_reference(n, density=None, domain=(0.0, 1.0), total_mass=None, grid=20001):
    """Equal-mass partition of a density on ``domain`` with midpoint labels.

    ``density`` is None (uniform, density 1), a callable evaluated on a fine
    grid, or a pair ``(x_grid, values)`` of samples. Label i is the
    (i + 1/2)/n quantile of the normalized cumulative mass. If ``total_mass``
    is None the integral of the density is used.
    """
    if n < 2:
        raise ValueError(f"need N >= 2 particles, got {n}")
    a, b = float(domain[0]), float(domain[1])
    if density is None:
        if not b > a:
            raise ValueError("domain must have positive length")
        mass = (b - a) if total_mass is None else float(total_mass)
        if not mass > 0:
            raise ValueError(f"total mass must be positive, got {mass}")
        labels = a + (b - a) * (np.arange(n) + 0.5) / n
        return ReferenceMeasure(labels, np.full(n, mass / n), mass)

    if callable(density):
        xs = np.linspace(a, b, grid)
        rho = np.asarray(density(xs), dtype=float) * np.ones_like(xs)
    else:
        xs, rho = (np.asarray(s, dtype=float) for s in density)
    if np.any(rho < 0) or not np.all(np.isfinite(rho)):
        raise ValueError("density must be nonnegative and finite")
    cdf = cumulative_trapezoid(rho, xs, initial=0.0)
    integral = cdf[-1]
    if not integral > 0:
        raise ValueError("density has nonpositive total mass")
    mass = integral if total_mass is None else float(total_mass)
    if not mass > 0:
        raise ValueError(f"total mass must be positive, got {mass}")
    quantiles = (np.arange(n) + 0.5) / n
    labels = np.interp(quantiles, cdf / integral, xs)
    return ReferenceMeasure(labels, np.full(n, mass / n), mass)


def _positions(state):
    return np.asarray(getattr(state, "positions", state), dtype=float)


def center_of_mass(state, ref):
    """Mass-weighted mean position."""
    eta = _positions(state)
    if eta.shape != ref.masses.shape:
        raise ValueError(f"state has {eta.size} particles, reference has {ref.n}")
    return float(np.dot(ref.masses, eta) / np.sum(ref.masses))


def push_forward(state, ref, bins):
    """Histogram a particle state onto ``bins`` (edges). Bins are half-open except the last."""
    eta = _positions(state)
    vel = np.asarray(state.velocities, dtype=float)
    edges = np.asarray(bins, dtype=float)
    if eta.shape != ref.masses.shape:
        raise ValueError(f"state has {eta.size} particles, reference has {ref.n}")
    if np.any(eta < edges[0]) or np.any(eta > edges[-1]):
        raise ValueError("particle outside bin range")
    k = np.clip(np.searchsorted(edges, eta, side="right") - 1, 0, edges.size - 2)
    mass = np.bincount(k, weights=ref.masses, minlength=edges.size - 1)
    mom = np.bincount(k, weights=ref.masses * vel, minlength=edges.size - 1)
    u = np.divide(mom, mass, out=np.zeros_like(mom), where=mass > 0)
    return EulerianField(edges, mass / np.diff(edges), u)
