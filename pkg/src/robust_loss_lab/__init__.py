"""Noise-robust losses, output regularizers, and a verification harness.

The library studies classification under uniform label noise: a loss zoo
with analytic gradients, output regularizers with their quadratic
surrogates, exact (enumerated) noisy risks, deterministic full-batch
training, and closed-form oracles that certify robustness claims
numerically. The `robust-loss-lab` CLI drives the experiments.
"""

from .data import (
    Dataset,
    NoiseSpec,
    SyntheticSpec,
    centered_onehot,
    default_centers,
    flip_distribution,
    inject_noise,
    load_csv,
    make_blobs,
    noise_constants,
    save_csv,
    softmax,
)
from .errors import ConfigError, CsvParseError, DegenerateProblemError, DivergenceError
from .losses import (
    LossEval,
    LossSpec,
    is_symmetric,
    linearize,
    loss_eval,
    muh_square_decomposition_residual,
    parse_loss,
    symmetry_sum,
)
from .models import (
    FeatureMap,
    LinearFamily,
    Mlp2Family,
    Model,
    ModelOutput,
    Objective,
    forward,
    l2_norm,
    load_checkpoint,
    objective_value_and_grad,
    predict,
    save_checkpoint,
)
from .optimize import (
    MinimizeResult,
    RiskReport,
    TrainConfig,
    closed_form_muh_quadratic,
    exact_noisy_risk,
    hessian_pd_probe,
    minimize,
    normalized_output_distance,
    reference_direction,
    risk_identity_report,
)
from .regularizers import (
    RegularizerSpec,
    embed_outputs,
    parse_regularizer,
    quadratize,
    reduce_outputs,
    reg_eval,
    reg_hessian_at_min,
)

__version__ = "0.1.0"
