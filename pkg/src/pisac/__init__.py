"""ISAC simulator with pinching and movable antennas.

Complex algebra over real pairs, deterministic channel synthesis, a
reverse-mode autodiff engine, a CNN policy network, penalty-loss Adam
training and an experiment CLI.
"""

from .cmatrix import (CMatrix, WidenedMatrix, cinverse, cmul, csolve,
                      logdet_hpd, widen)
from .metrics import (BeamformingSet, MetricsRecord, max_sensing_sinr,
                      min_pairwise_distance, optimal_combiner,
                      sensing_covariance, sensing_power, sensing_sinr,
                      training_loss, user_rate)
from .network import (NetworkConfig, NetworkParams, assemble_and_preprocess,
                      init_params, VARIANT_FIX_ANT, VARIANT_PROPOSED)
from .scenario import (Box, MAPlacement, PAPlacement, Scenario, SystemConfig,
                       los_channel, nlos_channel, receive_positions,
                       sample_scenario, sensing_channel, target_steering,
                       uniform_ma_grid, uniform_pa_grid, user_channel,
                       waveguide_matrix)
from .training import (AdamState, TrainConfig, adam_step, evaluate,
                       load_checkpoint, make_dataset, save_checkpoint, train)

__version__ = "0.1.0"
