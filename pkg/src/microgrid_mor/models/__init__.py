"""Full, conventional third-order and corrected third-order droop models."""

from .full import VIRTUAL_RESISTANCE, build_network_full
from .reduced import build_network_reduced, build_reduced_nonlinear, descriptor_matrices, order_inverters
from .statespace import (
    MODEL_KINDS,
    LinearStateSpace,
    NonlinearModel,
    StateLabel,
    finite_difference_jacobian,
    inverter_labels,
)
from .twobus import build_twobus, corrections_gb, twobus_network


def build_network_model(net, inverters, kind, virtual_resistance=VIRTUAL_RESISTANCE):
    """Linear model of any kind for a network."""
    if kind == "full":
        return build_network_full(net, inverters, virtual_resistance)[0]
    return build_network_reduced(net, inverters, kind)


def build_network_nonlinear(net, inverters, kind, virtual_resistance=VIRTUAL_RESISTANCE):
    if kind == "full":
        return build_network_full(net, inverters, virtual_resistance)[1]
    return build_reduced_nonlinear(net, inverters, kind)


__all__ = [
    "MODEL_KINDS",
    "VIRTUAL_RESISTANCE",
    "LinearStateSpace",
    "NonlinearModel",
    "StateLabel",
    "build_network_full",
    "build_network_model",
    "build_network_nonlinear",
    "build_network_reduced",
    "build_reduced_nonlinear",
    "build_twobus",
    "corrections_gb",
    "descriptor_matrices",
    "finite_difference_jacobian",
    "inverter_labels",
    "order_inverters",
    "twobus_network",
]
