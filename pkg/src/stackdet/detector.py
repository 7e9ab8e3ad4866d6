"""Blacklist enrollment, cosine scoring, M-Norm and top-hypothesis extraction.

The scoring backend is cosine similarity on length-normalized vectors;
enrollment averages a speaker's length-normalized training vectors and
renormalizes the mean back to unit length. M-Norm standardizes each
detector's score distribution using the mean and population standard
deviation of its scores over the blacklist training utterances, so blacklist
scores sit on a comparable scale across detectors.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import IO, Iterable, Literal, Sequence, Union

import numpy as np

from .data_model import Dataset, SpeakerRegistry, UtteranceId, speaker_of
from .errors import DegenerateInputError, EnrollmentError, FormatError
from .ingestion import Submission, SubmissionRow

#: Columns are scored in fixed blocks of this many test utterances, so the
#: result is identical no matter how many workers split the blocks.
SCORE_BLOCK = 256

MNormMode = Literal["full", "shift", "scale", "off"]
MNORM_MODES: tuple[str, ...] = ("full", "shift", "scale", "off")


def length_normalize(vector: np.ndarray) -> np.ndarray:
    """Scale a vector to unit Euclidean length, preserving direction."""
    vec = np.asarray(vector, dtype=np.float64)
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise DegenerateInputError("cannot length-normalize a zero vector")
    return vec / norm


def _normalize_rows(matrix: np.ndarray, ids: Sequence[UtteranceId] | None = None) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        which = str(ids[int(zero[0])]) if ids is not None else f"row {int(zero[0])}"
        raise DegenerateInputError(f"zero vector for {which}")
    return matrix / norms[:, None]


@dataclass(frozen=True)
class SpeakerModel:
    """Enrolled blacklist speaker: global id plus unit-length centroid."""

    global_id: str
    centroid: np.ndarray

    def __post_init__(self):
        centroid = np.asarray(self.centroid, dtype=np.float64)
        if abs(float(np.linalg.norm(centroid)) - 1.0) > 1e-9:
            raise ValueError(f"centroid for {self.global_id} is not unit length")
        centroid.setflags(write=False)
        object.__setattr__(self, "centroid", centroid)

    @property
    def dim(self) -> int:
        return self.centroid.shape[0]


def enroll(train_blacklist: Dataset, registry: SpeakerRegistry) -> tuple[SpeakerModel, ...]:
    """Build one model per registry entry from the blacklist training set.

    Each utterance vector is length-normalized, vectors are averaged per
    speaker, and the mean is renormalized to unit length. Models come back
    ordered by global id ascending. Utterances whose prefix is unknown to
    the registry, or registry speakers with no utterances, are errors.
    """
    normalized = _normalize_rows(train_blacklist.vectors, train_blacklist.ids)
    by_speaker: dict[str, list[int]] = {}
    for row, uid in enumerate(train_blacklist.ids):
        global_id = speaker_of(uid, registry, "train")
        if global_id is None:
            raise EnrollmentError(
                f"utterance {uid} has prefix {uid.prefix!r} not found in the registry train column"
            )
        by_speaker.setdefault(global_id, []).append(row)
    missing = [e.global_id for e in registry if e.global_id not in by_speaker]
    if missing:
        shown = ", ".join(missing[:10])
        raise EnrollmentError(
            f"{len(missing)} registry speaker(s) have no training utterances: {shown}"
        )
    models = []
    for global_id in sorted(by_speaker):
        mean = normalized[by_speaker[global_id]].mean(axis=0)
        norm = float(np.linalg.norm(mean))
        if norm == 0.0:
            raise DegenerateInputError(f"speaker {global_id} has a zero mean vector")
        models.append(SpeakerModel(global_id, mean / norm))
    return tuple(models)


class ScoreMatrix:
    """S x N matrix of detector scores: one row per blacklist model, one
    column per test utterance."""

    def __init__(
        self,
        detector_ids: Iterable[str],
        utterance_ids: Iterable[UtteranceId],
        scores,
        normalized: bool = False,
    ):
        self.detector_ids: tuple[str, ...] = tuple(detector_ids)
        self.utterance_ids: tuple[UtteranceId, ...] = tuple(utterance_ids)
        mat = np.asarray(scores, dtype=np.float64)
        if mat.shape != (len(self.detector_ids), len(self.utterance_ids)):
            raise ValueError(
                f"score matrix shape {mat.shape} does not match "
                f"{len(self.detector_ids)} detectors x {len(self.utterance_ids)} utterances"
            )
        if mat.size and not np.isfinite(mat).all():
            raise ValueError("score matrix contains non-finite entries")
        mat = mat.copy()
        mat.setflags(write=False)
        self.scores = mat
        self.normalized = bool(normalized)

    @property
    def shape(self) -> tuple[int, int]:
        return self.scores.shape

    def row(self, global_id: str) -> np.ndarray:
        return self.scores[self.detector_ids.index(global_id)]


def score_matrix(
    models: Sequence[SpeakerModel], test: Dataset, workers: int = 1
) -> ScoreMatrix:
    """Cosine-score every model against every test utterance.

    Entry (i, j) is the dot product of model i's centroid with the
    length-normalized test vector j. Columns are processed in fixed blocks
    of ``SCORE_BLOCK`` whatever the worker count, so the result is bitwise
    identical for any ``workers`` setting.
    """
    if not models:
        raise ValueError("no models to score")
    dims = {m.dim for m in models}
    if len(dims) != 1:
        raise ValueError(f"models disagree on dimension: {sorted(dims)}")
    (dim,) = dims
    if len(test) and test.dim != dim:
        raise ValueError(f"model dim {dim} does not match test dim {test.dim}")
    centroids = np.stack([m.centroid for m in models])
    test_normed = _normalize_rows(test.vectors, test.ids) if len(test) else test.vectors
    n = len(test)
    blocks = [(start, min(start + SCORE_BLOCK, n)) for start in range(0, n, SCORE_BLOCK)]
    out = np.empty((len(models), n), dtype=np.float64)

    def fill(block):
        start, stop = block
        out[:, start:stop] = centroids @ test_normed[start:stop].T

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, blocks))
    else:
        for block in blocks:
            fill(block)
    return ScoreMatrix(
        [m.global_id for m in models], test.ids, out, normalized=False
    )


@dataclass(frozen=True)
class MNormParams:
    """Per-detector normalization parameters over the blacklist cohort:
    mean, population standard deviation, and the cohort size used."""

    mu: np.ndarray
    sigma: np.ndarray
    cohort_size: int

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        sigma = np.asarray(self.sigma, dtype=np.float64)
        if mu.ndim != 1 or sigma.shape != mu.shape:
            raise ValueError("mu and sigma must be 1-D arrays of equal length")
        if np.any(sigma < 0):
            raise ValueError("sigma entries must be nonnegative")
        mu.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    def __len__(self) -> int:
        return self.mu.shape[0]


def mnorm_params(
    cohort_matrix: ScoreMatrix,
    *,
    exclude_own: bool = False,
    utterance_speakers: Sequence[str] | None = None,
) -> MNormParams:
    """Estimate per-detector mean and population standard deviation from the
    matrix of detector scores over the blacklist cohort utterances.

    By default every cohort utterance counts for every detector, including
    the detector's own speaker. ``exclude_own=True`` drops each detector's
    own utterances from its row statistics (Z-norm style); this needs
    ``utterance_speakers``, the cohort global id per column.
    """
    s, n = cohort_matrix.shape
    if n == 0:
        raise DegenerateInputError("empty cohort: no utterances to estimate M-Norm from")
    scores = cohort_matrix.scores
    if not exclude_own:
        mu = scores.mean(axis=1)
        sigma = scores.std(axis=1)  # population std, divisor n
        return MNormParams(mu, sigma, n)
    if utterance_speakers is None:
        raise ValueError("exclude_own=True requires utterance_speakers")
    if len(utterance_speakers) != n:
        raise ValueError("utterance_speakers length does not match cohort size")
    speakers = np.asarray(utterance_speakers)
    mu = np.empty(s)
    sigma = np.empty(s)
    for i, detector_id in enumerate(cohort_matrix.detector_ids):
        keep = speakers != detector_id
        if not keep.any():
            raise DegenerateInputError(
                f"detector {detector_id} has an empty cohort after excluding its own utterances"
            )
        row = scores[i, keep]
        mu[i] = row.mean()
        sigma[i] = row.std()
    return MNormParams(mu, sigma, n)


def apply_mnorm(
    raw: ScoreMatrix,
    params: MNormParams,
    sigma_floor: float = 0.0,
    mode: MNormMode = "full",
) -> ScoreMatrix:
    """Normalize a raw score matrix per detector.

    Modes: ``full`` shifts by mu and scales by sigma, ``shift`` only
    subtracts mu, ``scale`` only divides by sigma, ``off`` returns the raw
    matrix unchanged. A zero sigma with a zero floor is an error rather than
    a silent division by zero.
    """
    if mode not in MNORM_MODES:
        raise ValueError(f"mnorm mode must be one of {MNORM_MODES}, got {mode!r}")
    if mode == "off":
        return raw
    if raw.normalized:
        raise ValueError("score matrix is already normalized")
    if sigma_floor < 0:
        raise ValueError("sigma_floor must be nonnegative")
    if len(params) != raw.shape[0]:
        raise ValueError(
            f"params cover {len(params)} detectors but matrix has {raw.shape[0]} rows"
        )
    scores = raw.scores
    if mode in ("full", "scale"):
        sigma = np.maximum(params.sigma, sigma_floor)
        dead = np.flatnonzero(sigma == 0.0)
        if dead.size:
            detector = raw.detector_ids[int(dead[0])]
            raise DegenerateInputError(
                f"detector {detector} has zero score spread over the cohort; "
                f"set a positive sigma_floor or use shift mode"
            )
        if mode == "scale":
            scores = scores / sigma[:, None]
        else:
            scores = (scores - params.mu[:, None]) / sigma[:, None]
    else:  # shift
        scores = scores - params.mu[:, None]
    return ScoreMatrix(raw.detector_ids, raw.utterance_ids, scores, normalized=True)


@dataclass(frozen=True)
class Detection:
    """Top hypothesis for one test utterance: the maximum detector score and
    the speaker that achieves it."""

    utterance_id: UtteranceId
    score: float
    claimed_speaker: str


def top_detection(matrix: ScoreMatrix) -> tuple[Detection, ...]:
    """Per test utterance, take the maximum score over detectors.

    Exact ties go to the smallest global id so output is deterministic.
    """
    s, n = matrix.shape
    if s == 0 or n == 0:
        raise ValueError("cannot take top detections of an empty score matrix")
    order = np.argsort(np.asarray(matrix.detector_ids))
    ranked = matrix.scores[order]
    best = np.argmax(ranked, axis=0)  # first max wins: smallest id after sorting
    columns = np.arange(n)
    top_scores = ranked[best, columns]
    ids = [matrix.detector_ids[order[row]] for row in best]
    return tuple(
        Detection(uid, float(score), claimed)
        for uid, score, claimed in zip(matrix.utterance_ids, top_scores, ids)
    )


def detections_to_submission(detections: Iterable[Detection]) -> Submission:
    """One submission row per detection, in input order. Every utterance
    keeps its closest blacklist speaker even when the score is very low."""
    return Submission(
        SubmissionRow(d.utterance_id, d.score, d.claimed_speaker) for d in detections
    )


def baseline_submission(
    train_blacklist: Dataset,
    registry: SpeakerRegistry,
    test: Dataset,
    *,
    mnorm: MNormMode = "full",
    sigma_floor: float = 0.0,
    cohort: Dataset | None = None,
    exclude_own: bool = False,
    workers: int = 1,
) -> Submission:
    """Run the full baseline: enroll, score, normalize, take top hypotheses.

    The M-Norm cohort defaults to the blacklist training utterances
    themselves; pass ``cohort`` to normalize against a different blacklist
    set (e.g. the dev blacklist).
    """
    models = enroll(train_blacklist, registry)
    raw = score_matrix(models, test, workers=workers)
    if mnorm != "off":
        cohort_set = cohort if cohort is not None else train_blacklist
        cohort_scores = score_matrix(models, cohort_set, workers=workers)
        speakers = None
        if exclude_own:
            # cohort prefixes may come from either column (train or dev file)
            speakers = [
                speaker_of(uid, registry, "train") or speaker_of(uid, registry, "dev") or ""
                for uid in cohort_set.ids
            ]
        params = mnorm_params(
            cohort_scores, exclude_own=exclude_own, utterance_speakers=speakers
        )
        scored = apply_mnorm(raw, params, sigma_floor=sigma_floor, mode=mnorm)
    else:
        scored = raw
    return detections_to_submission(top_detection(scored))


# ---------------------------------------------------------------------------
# binary model cache

_CACHE_MAGIC = b"SPKRMODL"
_CACHE_VERSION = 1
_HEADER = struct.Struct("<8sIII")  # magic, version, S, dim


def save_models(models: Sequence[SpeakerModel], dest: Union[str, IO[bytes]]) -> None:
    """Write enrolled models to a little-endian binary cache."""
    if not models:
        raise ValueError("refusing to write an empty model cache")
    dim = models[0].dim
    payload = bytearray(_HEADER.pack(_CACHE_MAGIC, _CACHE_VERSION, len(models), dim))
    for model in models:
        payload += model.global_id.encode("ascii")
        payload += np.ascontiguousarray(model.centroid, dtype="<f8").tobytes()
    if isinstance(payload, bytearray):
        payload = bytes(payload)
    if hasattr(dest, "write"):
        dest.write(payload)
    else:
        with open(dest, "wb") as handle:
            handle.write(payload)


def load_models(source: Union[str, IO[bytes]]) -> tuple[SpeakerModel, ...]:
    """Read a model cache written by :func:`save_models`."""
    if hasattr(source, "read"):
        blob = source.read()
    else:
        with open(source, "rb") as handle:
            blob = handle.read()
    if len(blob) < _HEADER.size:
        raise FormatError("model cache is truncated")
    magic, version, count, dim = _HEADER.unpack_from(blob)
    if magic != _CACHE_MAGIC:
        raise FormatError("not a model cache (bad magic)")
    if version != _CACHE_VERSION:
        raise FormatError(f"unsupported model cache version {version}")
    record = 8 + 8 * dim
    expected = _HEADER.size + count * record
    if len(blob) != expected:
        raise FormatError(
            f"model cache size {len(blob)} does not match header ({expected} expected)"
        )
    models = []
    offset = _HEADER.size
    for _ in range(count):
        global_id = blob[offset:offset + 8].decode("ascii")
        centroid = np.frombuffer(blob, dtype="<f8", count=dim, offset=offset + 8)
        models.append(SpeakerModel(global_id, centroid.astype(np.float64)))
        offset += record
    return tuple(models)
