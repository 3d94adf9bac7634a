"""Sleep-like homeostatic weight regularization for spiking networks."""

from .config import ExperimentConfig, ReadoutConfig, dump_config, load_config
from .datasets import LabeledImageSet, SplitPlan, balanced_split, generate_geometric, load_dataset
from .encoding import EncoderConfig, poisson_encode
from .experiment import RunRecord, RunResult, run_experiment, run_sg_experiment, run_stdp_experiment
from .network import NetworkParams, STDPNetwork
from .neurons import LIFParams, ThresholdParams
from .plasticity import Polarity, STDPParams
from .readout import fit_readout
from .sg import SGConfig, SGModel
from .sleep import SleepSchedule, decay_step, sleep_budget, sleep_phase, wake_sleep_scheduler

__version__ = "0.1.0"
