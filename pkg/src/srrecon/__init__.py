"""Super-resolution-involved MRI reconstruction: operators, masks,
simulation, classical and unrolled learned solvers, metrics, and a CLI.
"""

from .grid import ComplexGrid, GridError, inner_product, read_grid, write_grid
from .operators import (
    ForwardModel,
    SensitivitySet,
    adjoint,
    crop_kspace,
    data_fidelity_grad,
    dft,
    equivalent_af,
    forward,
    idft,
    zeropad_kspace,
)

__all__ = [
    "ComplexGrid",
    "GridError",
    "inner_product",
    "read_grid",
    "write_grid",
    "ForwardModel",
    "SensitivitySet",
    "adjoint",
    "crop_kspace",
    "data_fidelity_grad",
    "dft",
    "equivalent_af",
    "forward",
    "idft",
    "zeropad_kspace",
]

__version__ = "0.1.0"
