"""Differentially private variational quantum classifiers on a state-vector simulator."""
from .accountant import AccountantResult, rdp_sampled_gaussian, rdp_to_dp, sigma_for_epsilon, training_epsilon
from .baseline import MlpModel, mlp_forward, mlp_grad, mlp_init
from .circuits import (
    BlockSpec,
    VqcModel,
    build_2d_model,
    build_mnist_model,
    finite_diff_grad,
    model_forward,
    param_shift_grad,
)
from .data import Dataset, SplitSpec, make_blobs, make_circles, make_moons, split
from .dp_optim import OptimizerState, PrivacyConfig, accumulate_and_noise, clip_gradient, dp_minibatch_update, rmsprop_step
from .harness import TrainConfig, TrainReport, boundary_grid, evaluate, train

__version__ = "0.1.0"
