"""Nonconvexity measures, Shapley-Folkman decompositions and duality-gap certificates."""

__version__ = "0.1.0"

from .caratheodory import ConicCombination, NormSpec, fw_approx, reduce_conic, reduce_convex, sample_without_replacement
from .envelope import SampledFunction, biconjugate, rho, rho_k
from .geometry import PointSet, convex_hull_2d, hausdorff_distance, minkowski_average
from .relaxation import SeparableProblem, certify, gap_bound_approx, gap_bound_basic, gap_bound_refined, solve_relaxation
from .sampling_bounds import (
    TailBoundParams,
    bennett_serfling_tail,
    constraint_sampling_bound,
    hoeffding_serfling_tail,
    required_sampling_ratio,
    sigma_m,
)
from .shapley_folkman import BlockFamily, approx_sf_decompose, sf_decompose

__all__ = [
    "BlockFamily",
    "ConicCombination",
    "NormSpec",
    "PointSet",
    "SampledFunction",
    "SeparableProblem",
    "TailBoundParams",
    "approx_sf_decompose",
    "bennett_serfling_tail",
    "biconjugate",
    "certify",
    "constraint_sampling_bound",
    "convex_hull_2d",
    "fw_approx",
    "gap_bound_approx",
    "gap_bound_basic",
    "gap_bound_refined",
    "hausdorff_distance",
    "hoeffding_serfling_tail",
    "minkowski_average",
    "reduce_conic",
    "reduce_convex",
    "required_sampling_ratio",
    "rho",
    "rho_k",
    "sample_without_replacement",
    "sf_decompose",
    "sigma_m",
    "solve_relaxation",
]
