"""FlowSteer: scheduled, operator-aware fidelity conditioning of
rectified-flow samplers for linear inverse problems, with an ideal-flow
conditioning variant and a DDNM-style diffusion baseline."""

from .errors import (
    ConfigError,
    FlowSteerError,
    FormatError,
    NumericalError,
    ParameterError,
    ShapeError,
    SingularityError,
    TrainingError,
)
from .flow_core import (
    GmmTarget,
    TimeGrid,
    denoise_estimate,
    euler_generate,
    euler_invert,
    gmm_velocity,
    gmm_velocity_field,
    interpolate,
    project_back,
)
from .latent_codec import LatentCodec, haar_codec, identity_codec
from .metrics import (
    MetricReport,
    evaluate_restoration,
    histogram_match,
    measurement_residual,
    mse,
    psnr,
    ssim,
)
from .operators import (
    Blur,
    Colorization,
    DegradationOperator,
    Denoise,
    FidelityUpdateConfig,
    SuperRes4,
    default_kernel_size,
    fidelity_update,
    make_gaussian_kernel,
    make_operator,
)
from .samplers import (
    AnalyticDenoiser,
    FlowSteerConfig,
    RestorationTask,
    RestorationTrace,
    StepRecord,
    generate_unconditioned,
    restore_ddnm,
    restore_flowsteer,
    restore_ideal_flow,
)
from .schedules import (
    DiffusionSchedule,
    LambdaSchedule,
    NoiseRobustStep,
    SCHEDULE_PRESETS,
    a_t_coeff,
    adaptive_lambda_gamma,
    ddpm_schedule,
    fraction_to_step,
    posterior_coeffs,
    preset_schedule,
    rect_schedule,
    two_step_schedule,
)
from .velocity_net import (
    TrainConfig,
    VelocityNet,
    dataset_sampler,
    grad_check,
    net_forward,
    net_init,
    train,
    velocity_field,
)

__version__ = "0.1.0"
