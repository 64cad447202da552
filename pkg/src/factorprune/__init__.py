"""Approximate marginals in binary Markov networks via divergence-guided factor pruning."""
from .bp import BpConfig, MarginalEstimate, candidate_mu, candidate_mus, run_bp
from .divergence import (BoundReport, DecompositionReport, GainTable, d1, decompose, gain, gains,
                         graph_bound, nested_witness, prop2_bound, score_candidates, witness_divergence)
from .estimators import IgnorantInference, IsingDenoiser
from .exact import (DEFAULT_MAX_VARS, EnumerationCapError, ExactMoments, exact_estimate, exact_kl,
                    exact_moments)
from .graph import (Factor, FactorGraph, Feature, GraphFormatError, parse_graph, read_graph,
                    serialize_graph, write_graph)
from .pruning import (ComparisonCounter, MinDivergence, MinJoint, MinSize, PrunedInferenceResult,
                      PruneSelection, ignorant_inference, make_scheme, pick_min_divergence,
                      pick_min_joint, pick_min_size, select)

__version__ = "0.1.0"
