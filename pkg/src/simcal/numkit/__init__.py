"""Small numerical toolkit: MLPs with autograd, optimizers, GP regression, mixture densities, checkpoints."""

from simcal.numkit.container import FORMAT_VERSION, MAGIC
from simcal.numkit.gp import GpState, gp_posterior, se_kernel, ucb
from simcal.numkit.mdn import MdnHead, MixtureDensity, mdn_log_density, mdn_nll, mdn_sample
from simcal.numkit.mlp import Mlp, OptimizerState, Trainer, functional_forward, grad, mlp_forward, opt_step

__all__ = [
    "FORMAT_VERSION",
    "MAGIC",
    "GpState",
    "MdnHead",
    "MixtureDensity",
    "Mlp",
    "OptimizerState",
    "Trainer",
    "functional_forward",
    "gp_posterior",
    "grad",
    "mdn_log_density",
    "mdn_nll",
    "mdn_sample",
    "mlp_forward",
    "opt_step",
    "se_kernel",
    "ucb",
]
