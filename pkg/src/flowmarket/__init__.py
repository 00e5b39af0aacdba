"""Markets over capacitated flow networks: equilibria, verification and shaping."""

from .agents import (AgentProfile, DomainError, LogUtility, MarketInstance, QuadraticUtility,
                     UnboundedPayoffError, best_response, concavity_check, lq_instance)
from .equilibria import (ConstructionError, EquilibriumSolution, NotConcaveError,
                         equal_price_check, interior_check, price_spread, solve_degenerate_swe,
                         solve_standard_swe, solve_swe, standard_ce_closed_form,
                         star_flow_construct, verify_ce)
from .flownet import (FlowNetwork, NetworkError, build_incidence, capacity_bounds, generate_er,
                      net_flow, star_graph)
from .qpcore import ConvexProgram, SolverError, brute_force_qp, max_slack_lp, solve
from .shaping import (ParamBox, algorithm1_enumerate, sample_admissible, sstar_membership,
                      validate_equal_prices)

__version__ = "0.1.0"
