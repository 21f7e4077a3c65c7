"""Appearance-prior local map building with multi-index hashing.

Library layout:

- :mod:`~mih_localmap.descriptors` — 256-bit binary descriptors, Hamming
  distance, substring decomposition, uniform perturbation models.
- :mod:`~mih_localmap.mih` — multi-index hashing store with bounded
  move-to-front buckets and a brute-force query oracle.
- :mod:`~mih_localmap.covisibility` — keyframe/map-point graph, co-visible
  candidate sets, local-map intersection.
- :mod:`~mih_localmap.recall` — analytic and Monte-Carlo retrieval
  probability of the index under perturbation.
- :mod:`~mih_localmap.geometry` — poses, pinhole projection, pose
  information matrices, logDet metric, Gauss-Newton refinement.
- :mod:`~mih_localmap.selection` — greedy hash-table subset selection with
  an exhaustive oracle.
- :mod:`~mih_localmap.simulate` — synthetic end-to-end tracking benchmark.
- :mod:`~mih_localmap.cli` — the ``mih-localmap`` command line tool.
"""

from .covisibility import (
    CovisibilityGraph,
    KeyframeRecord,
    MapPointRecord,
    local_map,
    track_length,
)
from .descriptors import (
    DESCRIPTOR_BITS,
    BinaryDescriptor,
    PerturbationModel,
    PerturbationSpec,
    hamming_distance,
    perturb,
    random_descriptor,
    split_substrings,
)
from .geometry import (
    BehindCameraError,
    CameraPose,
    FeatureMatch,
    GaussNewtonResult,
    PinholeModel,
    SingularGeometryError,
    gauss_newton_refine,
    logdet_metric,
    measurement_jacobian,
    pose_info_single,
    project,
)
from .mih import MihConfig, MihIndex, QueryResult, oracle_query
from .recall import RecallQuery, coverage_probability, recall_analytic, recall_monte_carlo, sweep
from .selection import (
    SelectionConfig,
    SelectionResult,
    TableMatchSets,
    exhaustive_select,
    greedy_select,
    objective,
    refresh_policy,
)
from .simulate import (
    StrategyKind,
    StrategySpec,
    WorldConfig,
    associate,
    generate_world,
    observe,
    run_pipeline,
    summarize,
)

__version__ = "0.1.0"
