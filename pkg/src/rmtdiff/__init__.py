"""Random-matrix predictions for finite-data linear diffusion models, with a
Monte-Carlo engine that validates every prediction against simulated
empirical denoisers and sampling maps."""

from .errors import ConvergenceError, OutOfRegimeError, SingularMatrixError, SpectrumFormatError
from .spectrum import (
    SpectralMeasure,
    df1,
    df2_two,
    load_spectrum,
    make_isotropic_spectrum,
    make_powerlaw_spectrum,
)
from .kappa import KappaCache, KappaSolution, kappa_path, kappa_solve
from .quadrature import QuadratureGrid, TensorGrid2D, gauss_legendre, halfline_grid, tensor_grid_2d
from .linalg import (
    EigenDecomposition,
    EmpiricalCovariance,
    PopulationModel,
    denoise,
    eigendecompose,
    empirical_covariance,
    half_resolvent_quadrature,
    matrix_sqrt_quadrature,
    random_rotation,
    sample_map,
    score,
    wiener_matrix,
)
from .detequiv import (
    ProbeCoefficients,
    VariancePrediction,
    chi,
    denoiser_variance,
    denoiser_variance_marginal,
    diamond,
    expected_denoiser_gain,
    half_resolvent_expected_gain,
    pentagon,
    sampling_gain_expected,
    sampling_variance,
    xi,
)
from .montecarlo import (
    ExperimentConfig,
    ExperimentReport,
    counterfactual_experiment,
    denoiser_split_experiment,
    draw_dataset,
    mse_pairwise,
    sampling_band_scan,
    sampling_map_experiment,
    stratified_split,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "OutOfRegimeError",
    "SingularMatrixError",
    "SpectrumFormatError",
    "SpectralMeasure",
    "df1",
    "df2_two",
    "load_spectrum",
    "make_isotropic_spectrum",
    "make_powerlaw_spectrum",
    "KappaCache",
    "KappaSolution",
    "kappa_path",
    "kappa_solve",
    "QuadratureGrid",
    "TensorGrid2D",
    "gauss_legendre",
    "halfline_grid",
    "tensor_grid_2d",
    "EigenDecomposition",
    "EmpiricalCovariance",
    "PopulationModel",
    "denoise",
    "eigendecompose",
    "empirical_covariance",
    "half_resolvent_quadrature",
    "matrix_sqrt_quadrature",
    "random_rotation",
    "sample_map",
    "score",
    "wiener_matrix",
    "ProbeCoefficients",
    "VariancePrediction",
    "chi",
    "denoiser_variance",
    "denoiser_variance_marginal",
    "diamond",
    "expected_denoiser_gain",
    "half_resolvent_expected_gain",
    "pentagon",
    "sampling_gain_expected",
    "sampling_variance",
    "xi",
    "ExperimentConfig",
    "ExperimentReport",
    "counterfactual_experiment",
    "denoiser_split_experiment",
    "draw_dataset",
    "mse_pairwise",
    "sampling_band_scan",
    "sampling_map_experiment",
    "stratified_split",
]
