"""Tiny configurations that run the full protocols in well under a second."""

from snn_sleep.config import ExperimentConfig
from snn_sleep.datasets import SplitPlan
from snn_sleep.encoding import EncoderConfig
from snn_sleep.network import NetworkParams
from snn_sleep.sg import SGConfig

TINY_SPLIT = SplitPlan(n_train=48, n_val=12, n_test=24, batch_size=16, n_batches=3)


def tiny_config(root, **kw) -> ExperimentConfig:
    base = ExperimentConfig(
        dataset="geometric", dataset_root=str(root), split=TINY_SPLIT,
        network=NetworkParams(n_exc=24, n_inh=6, w_in_exc=0.3),
        encoder=EncoderConfig(f_max=500.0, T_image=20.0),
        sg=SGConfig(n_hidden=24, T=10, minibatch=8),
    )
    return base.with_(**kw)


def tiny_ini(root) -> str:
    return (f"[experiment]\ndataset = geometric\ndataset_root = {root}\n"
            "[network]\nn_exc = 24\nn_inh = 6\nw_in_exc = 0.3\n"
            "[input encoding]\nf_max = 500\nT_image = 20\n"
            "[data processing]\nn_train = 48\nn_val = 12\nn_test = 24\nbatch_size = 16\n"
            "n_batches = 3\n"
            "[sg-snn]\nn_hidden = 24\nT = 10\nminibatch = 8\n")
