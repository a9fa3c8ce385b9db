"""clockdp: optimal control with time-dependent costs, made stationary by a
clock state, solved by grid value iteration, and certified for stability."""

from .certificates import (BetaBound, CertificateBundle, RouteDecision, YFunction,
                           beta_separable, beta_separable_exp, beta_uniform_exp,
                           check_detectability, check_stabilizability,
                           check_theta_monotone, check_uniform_margins,
                           check_value_decrease, choose_route, theta,
                           vbar_from_exponential_sequence, vartheta_k, y_bounds, y_eval)
from .core import (AugmentedDynamics, AugmentedState, ComparisonFunction, Dynamics,
                   InputBox, Kinf, StageCost, augment, check_kinf_samples,
                   constant_admissible, invert_kinf, truncated_cost)
from .dp import (DiscountedSolution, InputGrid, Policy, StateGrid, TerminalRule,
                 TimeVaryingSolution, ValueTable, bellman_backup, extract_policy,
                 interpolate, solve_discounted, solve_time_varying)
from .errors import (AdmissibilityError, ClockDPError, ConfigurationError,
                     ConvergenceError, GridRangeError, NumericError, ParameterError)
from .simulate import (GreedyController, PolicyController, Trajectory, annotate_bound,
                       annotate_y, default_horizon, rollout, trajectory_from_csv,
                       verify_bound, verify_decrease, verify_vartheta_bound)
from .weights import (Band, Envelope, Geometric, Laplacian, PolyDecay, TimeWeight,
                      admissible_L_range, check_envelope, envelope, evaluate)

__version__ = "0.1.0"
