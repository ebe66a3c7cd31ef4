"""Conductivity imaging from coil emf measurements.

Forward modelling (adjoint currents and emf synthesis), the three-stage
inversion (acoustic inverse source, current recovery, resistivity recovery)
and stability diagnostics, on uniform box grids.
"""

from .coil import (
    Coil,
    CoilFields,
    biot_savart_B,
    check_curl_identity,
    coil_fields,
    disk_axis_kernel_curl,
    flux_kernel,
    kernel_curl,
    make_disk_coil,
    make_polygon_coil,
)
from .acoustic_inverse import (
    InverseSourceConfig,
    SphericalMeanOperator,
    TransducerGeometry,
    cgls,
    combine_b0,
    complete_third_component,
    invert_source,
)
from .current_recovery import (
    direct_curl_probe,
    newtonian_potential,
    potential_divergence_check,
    recover_current,
)
from .config import ExperimentConfig, config_from_dict, config_hash, load_config
from .elliptic import Conductivity, PotentialSolution, energy_check, solve_neumann
from .errors import ConfigError, ConvergenceError
from .phantoms import (
    bump_family,
    constant_sigma,
    gaussian_bumps_sigma,
    layered_sigma,
    make_sigma,
    validate_sigma,
)
from .forward import (
    CurrentField,
    MeasurementSet,
    PhysicsParams,
    SourceDistribution,
    adjoint_current,
    measurement_times,
    mollified_source,
    sphere_centers,
    spherical_means,
    synthesize_emf,
    synthesize_emf_direct,
    synthesize_emf_means,
)
from .sigma_recovery import (
    ResistivityEstimate,
    fuse_estimates,
    overdetermination_report,
    recover_resistivity,
)
from .stability import (
    StabilityReport,
    evaluate_stability,
    half_space_setup,
    lower_bound_check,
    nonzero_constraint,
    smallness_quantities,
    stability_ratio,
    weighted_estimate,
)
from .grid import (
    DomainMask,
    Grid3,
    ScalarField,
    VectorField,
    discrete_curl,
    discrete_div,
    discrete_grad,
    embed,
    hcurl_norm,
    holder_boundary_norm,
    integrate,
    lp_norm,
    restrict,
)

__version__ = "0.1.0"
