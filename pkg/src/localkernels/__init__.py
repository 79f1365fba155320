"""Local kernels on point clouds: generators, Laplacians and geometric regularization."""

from .errors import DataFormatError, EigensolverError, IsolatedPointError, KernelError, RankDeficiencyError
from .geometry import (
    DensityEstimate,
    DiffeoResult,
    JacobianField,
    conformal_embedding,
    conformal_kernel_matrix,
    diffeo_kernel_matrix,
    diffusion_embedding,
    estimate_density,
    estimate_jacobians,
    reconstruct_diffeomorphism,
)
from .graph import (
    GeneratorMatrix,
    SparseKernelMatrix,
    adjoint_generator,
    assemble,
    diffusion_maps_generator,
    diffusion_maps_operator,
    epsilon_heuristic,
    intrinsic_laplacian,
    intrinsic_laplacian_operator,
    left_normalize,
    local_kernel_generator,
    right_normalize,
    subtraction_generator,
)
from .kernels import (
    GAUSSIAN,
    HEAT,
    PARABOLA,
    ConformalKernel,
    ICAKernel,
    JacobianKernel,
    KernelMoments,
    LocalKernel,
    PrototypicalKernel,
    RadialKernel,
    eval_kernel,
    monte_carlo_moments,
    prototypical_moments,
    symmetrize,
)
from .manifolds import (
    PointCloud,
    apply_sphere_inversion,
    apply_torus_diffeomorphism,
    generate_ellipse,
    generate_embedded_torus_r3,
    generate_flat_torus_r4,
    load_csv,
    save_csv,
)
from .spectral import LinearMap, SpectralEmbedding, align_and_compare, decompose, embed, fit_linear_map

__version__ = "0.1.0"

__all__ = [
    "DataFormatError",
    "EigensolverError",
    "IsolatedPointError",
    "KernelError",
    "RankDeficiencyError",
    "DensityEstimate",
    "DiffeoResult",
    "JacobianField",
    "conformal_embedding",
    "conformal_kernel_matrix",
    "diffeo_kernel_matrix",
    "diffusion_embedding",
    "estimate_density",
    "estimate_jacobians",
    "reconstruct_diffeomorphism",
    "GeneratorMatrix",
    "SparseKernelMatrix",
    "adjoint_generator",
    "assemble",
    "diffusion_maps_generator",
    "diffusion_maps_operator",
    "epsilon_heuristic",
    "intrinsic_laplacian",
    "intrinsic_laplacian_operator",
    "left_normalize",
    "local_kernel_generator",
    "right_normalize",
    "subtraction_generator",
    "GAUSSIAN",
    "HEAT",
    "PARABOLA",
    "ConformalKernel",
    "ICAKernel",
    "JacobianKernel",
    "KernelMoments",
    "LocalKernel",
    "PrototypicalKernel",
    "RadialKernel",
    "eval_kernel",
    "monte_carlo_moments",
    "prototypical_moments",
    "symmetrize",
    "PointCloud",
    "apply_sphere_inversion",
    "apply_torus_diffeomorphism",
    "generate_ellipse",
    "generate_embedded_torus_r3",
    "generate_flat_torus_r4",
    "load_csv",
    "save_csv",
    "LinearMap",
    "SpectralEmbedding",
    "align_and_compare",
    "decompose",
    "embed",
    "fit_linear_map",
]
