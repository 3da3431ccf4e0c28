"""Ray-enriched interior-penalty DG solver for the 2D periodic acoustic
wave equation at high frequency.

Pipeline: level-line wavefronts propagate along the ray equations and
record dominant directions per mesh cell; an epsilon-separation step prunes
them; plane-wave-modulated bilinear bases are assembled into an
interior-penalty system with closed-form oscillatory quadrature; leapfrog
marching (optionally after low-rank mass conditioning) evolves the field,
validated against a pseudospectral reference.
"""
from .errors import (
    AssemblyIntegrityError,
    ConfigurationError,
    InstabilityError,
    NumericalError,
    PropagationError,
    RaydgError,
    StoreIntegrityError,
)
from .medium import Medium, Mesh, make_medium
from .wavefront import (
    DirectionCapture,
    DiscreteWavefront,
    ToleranceFn,
    construct_rays,
    determine_rays,
    form_ray_cells,
    hamiltonian,
    propagate,
    reconstruct,
    seed_level_lines,
    split_front,
)
from .separation import check_separable, deviation, separate
from .oscquad import (
    LegendreExpansion,
    expand_legendre_2d,
    legendre_osc,
    legendre_osc_all,
    osc_moment_1d,
    spherical_jn_seq,
)
from .assembly import (
    AssembledSystem,
    DgSpace,
    EntryKernels,
    PodTransform,
    assemble_system,
    build_basis,
    check_hermitian,
    estimate_condition,
    evaluate_at_points,
    evaluate_on_grid,
    expand_weight,
    pod_truncate,
)
from .marching import (
    MarchResult,
    PlaneWaveData,
    StabilityReport,
    check_stability,
    leapfrog_energy,
    march,
    project_initial,
)
from .reference import (
    ReferenceField,
    default_resolution,
    reference_run,
    relative_l2_error,
    self_convergence,
)
from .offline import (
    CachedKernels,
    OfflineStore,
    PredefinedDirections,
    covering_gap,
    load_store,
    offline_build,
    online_assemble,
    online_snap,
    polar_grid,
    save_store,
)
from .driver import (
    ExperimentConfig,
    ResultRow,
    RunResult,
    run_experiment,
)

__version__ = "0.1.0"
