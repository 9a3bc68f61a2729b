"""RIS-aided MU-MISO workbench: channels, covariance, rates, environments, PPO."""

from .geometry import (SystemGeometry, ChannelStats, ChannelRealization,
                       pathloss_linear, upa_steering, angles_between,
                       build_stats, sample_channels)
from .covariance import (CovarianceSet, covariance_closed_form,
                         covariance_monte_carlo, covariance_set)
from .rates import (BeamformingSolution, instantaneous_sum_rate,
                    ergodic_sum_rate_mc, scsi_sum_rate, rate_decomposed)
from .envs import BeamformingEnv, EnvConfig, decode_action, quantize_phases
from .nets import PolicySpec, init_params, actor_forward, critic_forward
from .ppo import TrainConfig, RolloutBuffer, compute_gae, train, a2c_train
from .config import ExperimentConfig, desk_preset, paper_preset

__version__ = "0.1.0"
