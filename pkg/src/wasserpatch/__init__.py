"""Image superresolution with a multiscale Wasserstein patch prior.

The package is organised by concern:

``imaging``      strided convolutions, patches, crops and interpolation
``transport``    semi-dual optimal transport between patch measures
``forward``      blur + stride operators, noise, blind kernel estimation
``reconstruct``  the patch-prior objective, its gradient and the solver
``baselines``    interpolation and smoothed L2-TV
``metrics``      PSNR, SSIM and the centre-crop protocol
``synth``        Boolean-model textures and volumes
``io``, ``cli``  file formats and the command-line front end
"""

__version__ = "0.1.0"

from .baselines import TVConfig, interp_baseline, tv_reconstruct
from .errors import (
    CapacityExceededError,
    DivergenceError,
    IllPosedWarning,
    InvalidArgumentError,
    ShapeMismatchError,
)
from .forward import NoiseSpec, add_noise, estimate_kernel, make_sr_operator
from .imaging import (
    OperatorSpec,
    PatchMatrix,
    conv_valid,
    conv_valid_adjoint,
    crop_center,
    embed_center,
    extract_patches,
    gaussian_kernel,
    scatter_patches,
    subsample_rows,
    upsample,
)
from .metrics import SsimParams, evaluate, psnr, ssim
from .reconstruct import (
    ReconConfig,
    ReconResult,
    build_pyramid,
    init_reconstruction,
    objective,
    objective_gradient,
    reconstruct,
)
from .synth import boolean_model
from .transport import (
    DualPotential,
    assignment,
    c_transform,
    exact_ot,
    ot_gradient_image,
    semidual_value,
    solve_dual_asgd,
)
