"""Differentiable low-order d-separation and gradient-based DAG sampling."""

from .graph import BinaryDag, CycleError, GraphError, QueryIndexSets, feedback_arc_prune
from .diffsep import SoftScoreSet, soft_reach, soft_scores, soft_unreach
from .citests import CiTable, Dataset, build_ci_table, chi_square, fisher_z, oracle_table
from .objective import LossVector, energy, loss_suite

__version__ = "0.1.0"
