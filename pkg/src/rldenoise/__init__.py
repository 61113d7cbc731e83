"""Reinforcement-tuned bilateral filtering for low-dose cone-beam CT."""

__version__ = "0.1.0"

from .agents import (ActionSpace, TUNE_FACTORS, build_agent, load_agent,
                     save_agent)
from .bilateral import (BilateralParams2D, BilateralParams3D, bilateral_2d,
                        bilateral_3d, gaussian_weight)
from .ct import (ConeBeamGeometry, DoseModel, Sinogram, Volume,
                 add_poisson_noise, desk_geometry, fdk_reconstruct,
                 forward_project, make_phantom, paper_geometry)
from .metrics import (SOFT_TISSUE_WINDOW, EvalWindow, gssim, psnr,
                      reward_target, ssim, ssim_volume)
from .pipeline import (PipelineConfig, RunReport, convergence_experiment,
                       denoise_volume, desk_pipeline_config, evaluate_case,
                       run_ablation)
from .reward import (RewardScorer, RewardTrainConfig, build_reward_net,
                     load_reward_net, q_reward, save_reward_net,
                     train_reward_net)
from .training import TrainConfig, desk_train_config, run_training
