"""Conditioning of linear finite element matrices on anisotropic simplicial meshes.

Assembles stiffness and mass matrices for anisotropic diffusion on 1D/2D/3D
simplicial meshes, computes exact extreme eigenvalues, and evaluates
two-sided envelopes and calibrated condition-number bounds with and without
Jacobi diagonal scaling.
"""

from .assembly import (
    AssemblyError,
    alt_scaling,
    apply_symmetric_scaling,
    assemble_mass,
    assemble_stiffness,
    jacobi_scaling,
    write_matrix,
)
from .bounds import (
    CalibrationConstant,
    ConditionBoundReport,
    QualityMeasures,
    auto_reference_subdivisions,
    calibrate_constant,
    condition_bounds,
    lambda_max_bounds,
    lambda_max_geometric_bound,
    lambda_min_bound,
    load_calibration,
    m_uniform_bound,
    mass_condition_bounds,
    quality_measures,
    save_calibration,
)
from .diffusion import (
    DiffusionField,
    FieldError,
    constant_field,
    element_average,
    element_averages,
    evaluate_field,
    field_spectral_bounds,
    identity_field,
    parse_field_spec,
    rotated_anisotropic_field,
)
from .experiments import (
    StudyConfig,
    StudyRow,
    fit_loglog_slope,
    parse_study_config,
    run_study,
    write_study_csv,
)
from .mesh import (
    DegenerateElementError,
    ElementGeometry,
    MeshFormatError,
    MeshStatistics,
    SimplicialMesh,
    VertexPatch,
    element_geometry,
    generate_chebyshev_mesh,
    generate_skew_mesh_2d,
    generate_skew_mesh_3d,
    generate_uniform_mesh,
    mesh_statistics,
    read_mesh,
    vertex_patches,
    write_mesh,
)
from .spectral import (
    ConvergenceError,
    SpectralResult,
    cg_iteration_count,
    dense_eigenvalues_oracle,
    extreme_eigenvalues,
)

__version__ = "0.1.0"
