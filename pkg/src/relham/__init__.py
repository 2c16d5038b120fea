"""Lagrangian particle simulation of 1-D Euler-Poisson type Hamiltonian flows
with relative-energy stability diagnostics."""
__version__ = "0.1.0"

from ._backend import active as active_backend, use as use_backend
from .dynamics import ClusterState, Integrator, IntegratorConfig, Trajectory, run, sticky_project
from .energy import (InadmissibleStateError, LagrangianState, ModelSpec, eval_energy, fd_oracle_force,
                     force)
from .measure import ReferenceMeasure, build_reference, center_of_mass, push_forward
from .relative import (lower_bound_certificates, pp_constants, relative_energies,
                       relative_hamiltonian_monitor, relative_report, relative_work_rate)

__all__ = [
    "ClusterState", "InadmissibleStateError", "Integrator", "IntegratorConfig", "LagrangianState",
    "ModelSpec", "ReferenceMeasure", "Trajectory", "active_backend", "build_reference", "center_of_mass",
    "eval_energy", "fd_oracle_force", "force", "lower_bound_certificates", "pp_constants", "push_forward",
    "relative_energies", "relative_hamiltonian_monitor", "relative_report", "relative_work_rate", "run",
    "sticky_project", "use_backend",
]
