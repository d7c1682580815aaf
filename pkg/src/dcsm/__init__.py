"""Delay-constrained SFC mapping: model, validator, exact solver and heuristics."""
from .absa import AnnealConfig, run_absa
from .delay import DelayBreakdown, InstabilityError, chain_delay, instance_delay, mm1_delay, node_delay
from .exact import CapExceeded, EnumerationCaps, ExactResult, enumerate_exact, solve_exact
from .feasibility import EconomicReport, ViolationReport, check_delay, economics, validate
from .generate import Template, generate_scenario
from .mldg import SizingPlan, SubstrateExhausted, map_chains, place_instances, run_mldg, size_instances
from .model import (BTEUROPE_PROFILE, Deployment, DerivedLoads, PhysicalLink, PhysicalNode, ResourceProfile,
                    Scenario, ScenarioError, ScenarioParseError, SfcRequest, SubstrateNetwork, VnfType,
                    derive_loads, empty_deployment, import_graphml, load_deployment, load_scenario,
                    save_deployment, save_scenario)
from .relaxation import Relaxation, RelaxedSolution, build_sp2cv, is_integral, solve

__version__ = "0.1.0"


def illustrative_scenario() -> Scenario:
    """The bundled five-chain example."""
    from importlib import resources

    with resources.as_file(resources.files(__name__) / "data" / "illustrative.yaml") as p:
        return load_scenario(p)
