"""Monte Carlo checks of quadratic transportation-cost inequalities for
neutral functional SDEs and their Galerkin SPDE truncations."""

__version__ = "0.1.0"

from .pathspace import (ConfigError, DomainError, PathMetric, Segment, SegmentPath, ShapeError, TimeGrid,
                        distance, segment_at)
from .model import AuditReport, DelayWeight, NeutralModel, audit_assumptions, default_sampler
from .simulate import (CoupledSample, NoisePlan, Perturbation, constant_perturbation, feedback_perturbation,
                       run_ensemble, simulate, simulate_coupled, zero_perturbation)
from .transport import (ConstantsReport, InfeasibleError, TciVerdict, assemble_constants, coupling_distance_sq,
                        empirical_w2, entropy_from_energies, verify_tci)
from .galerkin import (HeatExampleSpec, SpdeModel, SpectralField, build_heat_example, check_smallness,
                       frac_power_apply, semigroup_apply)
