"""Bandwidth allocation for millimetre-wave train-ground networks with
full-duplex mobile relays."""
from .geometry import (Point2D, Scenario, associate_nearest, build_layout, make_scenario,
                       place_users, read_scenario, sample_blockage_reassociate, write_scenario)
from .radio import (AntennaModel, LinkBudget, RadioParams, capacity_gradient, device_avg_rate,
                    gain_db, network_capacity, received_power, user_rate)
from .qp import QpSolution, QpSubproblem, solve_qp
from .sqp import (KktPoint, NlpProblem, SolverConfig, SolverReport, bfgs_update,
                  capacity_problem, kkt_residuals, merit_line_search, solve_sqp)
from .allocators import AllocatorResult, dual_oracle, grid_oracle, ip_barrier, pd, pnou

__version__ = "0.1.0"
