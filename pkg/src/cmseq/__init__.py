"""Gaussian conditionally-Markov, reciprocal and Markov sequence models."""

from .analysis import (
    SequenceClassification,
    assemble_precision,
    classify_by_oracle,
    classify_sequence,
    conditional_independence_oracle,
    markov_joint_covariance,
    model_covariance,
    model_from_covariance,
    verify_covariance_split,
)
from .blockmat import BlockMatrix, StructureReport, schur_window, schur_window_classify, structure_classify
from .errors import (
    BoundaryNotMarkov,
    CMSeqError,
    DimensionMismatch,
    IncompleteParameters,
    IndexOutOfRange,
    IndexOverlap,
    MalformedInput,
    NotPositiveDefinite,
    NotReciprocal,
)
from .models import (
    Boundary,
    CML0k2Model,
    CMcModel,
    InitialFormBoundary,
    MarkovModel,
    check_intersection_conditions,
    check_markov_condition,
    check_reciprocal_condition,
    check_window_cmf_condition,
    validate,
)
from .simulate import (
    TrajectoryBatch,
    destination_directed_generate,
    empirical_covariance,
    monte_carlo_check,
    sample_trajectories,
)
from .transforms import (
    Representation,
    classify_representation,
    construct_from_representation,
    decompose_to_representation,
    induce_cml_from_markov,
    markov_matching_boundary,
    recover_markov_from_reciprocal_cml,
    underlying_markov_of_induced,
)

__version__ = "0.1.0"
