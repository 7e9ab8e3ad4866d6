"""Multi-target speaker detection toolkit.

Detects whether a test utterance (given as a fixed-length feature vector)
was spoken by anyone on an enrolled blacklist, and by whom: ingestion of the
challenge CSV formats, cosine-scoring against per-speaker centroids, M-Norm
score normalization, Top-S/Top-1 stack-detector error curves with EERs,
submission file handling, and a deterministic synthetic corpus generator
for end-to-end verification without the real data.
"""

from .data_model import (
    BACKGROUND_LABEL,
    DEFAULT_DIM,
    Dataset,
    DatasetKind,
    GroundTruthKey,
    RegistryEntry,
    SpeakerRegistry,
    Utterance,
    UtteranceId,
    parse_utterance_id,
    speaker_of,
)
from .detector import (
    Detection,
    MNormParams,
    ScoreMatrix,
    SpeakerModel,
    apply_mnorm,
    baseline_submission,
    detections_to_submission,
    enroll,
    length_normalize,
    load_models,
    mnorm_params,
    save_models,
    score_matrix,
    top_detection,
)
from .errors import (
    CoverageError,
    DegenerateInputError,
    EnrollmentError,
    FormatError,
    ToolkitError,
    UndefinedRateError,
    UnknownSpeakerError,
)
from .ingestion import (
    DEFAULT_PROFILES,
    DatasetProfile,
    ProfileReport,
    Submission,
    SubmissionRow,
    read_bl_matching,
    read_ivector_csv,
    read_key,
    read_submission,
    validate_profile,
    write_bl_matching,
    write_ivector_csv,
    write_key,
    write_submission,
)
from .metrics import (
    EerResult,
    ErrorCurve,
    EvaluationReport,
    Trial,
    eer,
    evaluate_submission,
    export_det,
    single_target_curve,
    top_1_curve,
    top_s_curve,
    write_det,
)
from .synth import (
    SplitMix64,
    SynthConfig,
    SynthCorpus,
    corpus_profiles,
    generate,
    shuffle_labels,
    write_corpus,
)

__version__ = "0.1.0"
