"""PINN training and verification toolkit: exact third-order jets of tanh networks,
PINN and Lipschitz-regularized losses, Adam -> L-BFGS training, convergence sweeps
and covering-bound harnesses."""

from .analysis import (BoundReport, ErrorReport, MassBounds, check_lemma_bound, discrete_error,
                       estimate_holder, fit_rate, sampling_bound, sampling_probability_experiment)
from .errors import (ConfigError, DimensionError, ExpressionError, LiprError, NonFiniteError,
                     TrainingDiverged)
from .jets import (Jet3, ParamTape, forward_jet, forward_jet_taped, forward_jets,
                   forward_jets_taped, param_gradient, replay)
from .loss import (LossWeights, Objective, holder_schedule, lipr_loss, pinn_loss,
                   theory_weights)
from .network import (Architecture, Network, evaluate, load_checkpoint, param_count,
                      save_checkpoint, xavier_init)
from .optim import AdamState, LbfgsConfig, LbfgsReport, TrainPlan, adam_step, lbfgs_minimize, train
from .pde import OperatorSpec, PdeProblem, heat1d, manufacture, poisson1d, residual, residual_gradient
from .sampling import (PRESETS, DistributionConstants, TrainingSet, covering_radius, equidistant,
                       iid_uniform, make_training_set, voronoi_masses)

__version__ = "0.1.0"
