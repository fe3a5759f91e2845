from prunekit.pruning.plan import RANKING_SCOPES, PrunePlan, SurvivorCensus, build_plan
from prunekit.pruning.scoring import FilterScore, filter_l1_norms, score_filters
from prunekit.pruning.shrink import ChannelRemap, shrink_graph
from prunekit.pruning.transfer import transfer_weights

__all__ = [
    "RANKING_SCOPES",
    "ChannelRemap",
    "FilterScore",
    "PrunePlan",
    "SurvivorCensus",
    "build_plan",
    "filter_l1_norms",
    "score_filters",
    "shrink_graph",
    "transfer_weights",
]
