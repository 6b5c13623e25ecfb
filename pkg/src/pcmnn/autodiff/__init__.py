from .adam import AdamState, NonFiniteGradient, adam_step
from .network import (
    ForwardRecord,
    MlpNetwork,
    OutputMap,
    apply,
    forward,
    grad_input,
    grad_params,
    init_network,
    load_network,
    network_from_dict,
    network_to_dict,
    param_leaves,
    save_network,
)
from .tape import Tape, TapeError, Var

__all__ = [
    "AdamState", "NonFiniteGradient", "adam_step",
    "ForwardRecord", "MlpNetwork", "OutputMap", "apply", "forward", "grad_input",
    "grad_params", "init_network", "load_network", "network_from_dict", "network_to_dict",
    "param_leaves", "save_network",
    "Tape", "TapeError", "Var",
]
