"""Scene layout engine: graph-structured, score-driven 3D layout synthesis."""

from .errors import (
    BackendError,
    ConfigError,
    DuplicateEdgeError,
    DuplicateIdError,
    GraphError,
    RelationTokenError,
    RenderError,
    ReplayMissError,
    ReplyParseError,
    SceneFileError,
    SceneLayoutError,
    SelfEdgeError,
    UnknownEndpointError,
    UnknownIdError,
)
from .geometry import OrientedBox, SizeEstimate, characteristic_length, sample_points, signed_gap, world_box
from .graph import (
    EdgeDirection,
    FeatureVector,
    ObjectNode,
    RelationEdge,
    RelationKind,
    SceneGraph,
    Subgraph,
    add_edge,
    add_node,
    neighbors,
    normalize_yaw,
    partition_subgraphs,
    remove_node,
    set_relation,
)
from .optimizer import (
    EdgeStatus,
    EdgeTrace,
    GlobalEnergy,
    OptimizerConfig,
    ProgressEvent,
    SceneReport,
    apply_scores,
    loss,
    optimize_edge,
    optimize_scene,
    optimize_subgraph,
    place_subgraphs,
    scene_energy,
)
from .scoring import (
    OracleScorer,
    RelationTarget,
    ScoreContext,
    ScoreRequest,
    ScoreVector,
    Scorer,
    bands_satisfied,
    clamp_scores,
    oracle_score,
    relation_semantics,
)
from .views import CameraRig, MontageCapturer, ViewMontage, capture_triplet, frame_cameras, render_montage

__version__ = "0.1.0"
