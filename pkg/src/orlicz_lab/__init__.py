"""Numerical laboratory for modular Calderon-Zygmund estimates of the Poisson problem on the unit ball."""
from .young import YoungFunction, check_delta2, check_nabla2, evaluate, parse_phi
from .fields import BallGrid, ScalarField, hessian_fd
from .modular import modular_direct, modular_layercake
from .solvers import solve_fd_disk, solve_green_ball

__all__ = [
    "YoungFunction", "check_delta2", "check_nabla2", "evaluate", "parse_phi",
    "BallGrid", "ScalarField", "hessian_fd",
    "modular_direct", "modular_layercake",
    "solve_fd_disk", "solve_green_ball",
]
