"""bookwalk: a one-sided order book coupled with a branching random walk.

The package simulates the order-book Markov chain, realizes it pathwise as a
functional of a colored random tree, classifies the long-run drift of the
price analytically, and corroborates each claim with seeded Monte Carlo.
"""

__version__ = "0.1.0"

from .book import Book, BookTrajectory, extinction_time, price, simulate, step
from .coupling import (
    CoupledRun,
    DistributionalReport,
    coupled_run,
    distributional_test,
    ks_two_sample,
    skeleton_chain,
    skeleton_from_measures,
    skeleton_transition_tally,
)
from .displacement import (
    DiscreteDist,
    DisplacementDist,
    HeavyTailDist,
    MgfAnalysis,
    dist_from_config,
    infimum_mgf,
    mean,
    mgf,
    prob_positive,
    sample,
    threshold,
    truncate,
)
from .phase import (
    DriftEstimate,
    RegimeReport,
    SurvivalCurve,
    SurvivalEstimate,
    classify,
    drift_estimate,
    survival_curve,
    survival_estimate,
    truncation_study,
)
from .streams import RandomStream, node_generator
from .tree import (
    GREEN,
    RED,
    WHITE,
    ColoredTree,
    GwSpec,
    append_green_child,
    child_count,
    depletion_time,
    dump_snapshot,
    green_measure,
    iterate_steps,
    load_snapshot,
    max_label_at_depth,
    price_node,
    promote_first_white,
    prune_below,
    prune_below_root,
    retire_price_node,
    reveal_next_child,
    sample_tree,
    shift_labels,
    step_count,
    strip_white,
    subtree_at,
    tree_step,
    tree_step_inplace,
    white_child_count,
)

__all__ = [name for name in dir() if not name.startswith("_")]
