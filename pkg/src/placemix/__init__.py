"""placemix: visual place recognition from precomputed backbone token features.

Pipeline: token features -> mixer aggregation head -> unit-norm global
descriptor -> exact cosine retrieval -> geodesic recall@k. Training uses
place-balanced batches, multi-similarity loss, and SGD with momentum.
"""

from .kernel import (
    DegenerateVectorError,
    NumericInputError,
    ShapeError,
    central_difference,
    l2_normalize,
    matmul,
    relu,
    reshape,
    transpose,
)
from .loss import (
    LossConfig,
    PairSets,
    descriptor_grads,
    mine_pairs,
    ms_loss,
    ms_loss_backward,
    similarity_matrix,
)
from .manifest import ImageRecord, ManifestError, parse_manifest, write_manifest
from .mixer import (
    AggregatorConfig,
    AggregatorModel,
    GridFactorizationError,
    MixerBlock,
    ProjectionHead,
    aggregate,
    aggregate_backward,
    depth_projection,
    flatten_maps,
    init_model,
    mixer_block_forward,
    mixer_stack_forward,
    row_projection,
    tokens_to_maps,
)
from .retrieval import (
    EARTH_RADIUS_M,
    EvalReport,
    GeoTag,
    RetrievalIndex,
    evaluate,
    haversine_m,
    query_topk,
)
from .runconfig import RunConfig, RunConfigError, load_run_config
from .synth import synthesize
from .tensorfile import (
    BadMagicError,
    TensorFileError,
    TruncatedPayloadError,
    UnsupportedDtypeError,
    UnsupportedVersionError,
    read_header,
    read_tensor,
    write_tensor,
)
from .trainer import (
    InsufficientDataError,
    SGDState,
    TrainConfig,
    TrainingDivergedError,
    lr_at_epoch,
    sample_batch,
    sgd_step,
    train,
)
from .checkpoint import load_checkpoint, save_checkpoint

__version__ = "0.1.0"
