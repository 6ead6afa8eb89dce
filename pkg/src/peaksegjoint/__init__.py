"""Joint Poisson peak segmentation of multi-sample count data."""

from .genomic import (
    BinnedProblem,
    CoverageProfile,
    CoverageRun,
    ProblemMatrix,
    bin_problem,
    extract_problem,
    parse_bedgraph,
    tile_window,
)
from .segmentation import (
    JointModel,
    ModelSequence,
    PeakInterval,
    SampleFit,
    check_constraints,
    fit_model_sequence,
    grid_search,
    joint_zoom,
    max_bin_size,
    peak_indicator,
    poisson_loss,
    search_near_peak,
    segments_and_peaks,
)
from .penalty import (
    SelectionFunction,
    TargetInterval,
    compute_target_interval,
    extract_features,
    predict_penalty,
    selection_breakpoints,
    squared_hinge,
    surrogate_loss,
    train_fista,
)
from .labels import ErrorCount, LabeledRegion, errors_by_model_size, region_error, total_error
from .estimators import JointSegmenter, PenaltyLearner

__version__ = "0.1.0"
