"""Detection error curves and equal error rates for the stack detectors.

Conventions, fixed here and relied on by the tests:

* Misses are strict (score < threshold) and false alarms are strict
  (score > threshold).
* Candidate thresholds are placed strictly between adjacent distinct scores
  (midpoints), plus one sentinel below the minimum score and one above the
  maximum, so a score never coincides with a threshold.
* Error probabilities are exact integer counts divided once at the end.
* The EER is found by locating the sign change of (p_miss - p_fa) along the
  curve and linearly interpolating both rates in theta to the crossing. A
  curve point with p_miss exactly equal to p_fa is returned as an exact
  crossing. If the difference never changes sign, the point minimizing
  |p_miss - p_fa| is returned and flagged as inexact.

The detection-only curve ignores claimed identities entirely. The
identification curve additionally counts, as misses, accepted blacklist
trials whose claimed speaker is wrong (confusion errors); its false-alarm
column is identical to the detection-only one because false alarms are
conditioned on background trials only.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import isfinite
from typing import Iterable, Iterator, Sequence

import numpy as np

from .data_model import GroundTruthKey, SpeakerRegistry, UtteranceId
from .errors import CoverageError, UndefinedRateError, UnknownSpeakerError
from .ingestion import Submission

TOP_S = "top_s"
TOP_1 = "top_1"
SINGLE_TARGET = "single_target"


@dataclass(frozen=True)
class Trial:
    """One scored test utterance: the top score, the claimed speaker, and
    the true label (a global id, or None for background)."""

    score: float
    claimed: str | None
    truth: str | None

    def __post_init__(self):
        if not isfinite(self.score):
            raise ValueError("trial score must be finite")

    @property
    def is_blacklist(self) -> bool:
        return self.truth is not None


class ErrorCurve:
    """Ordered (threshold, p_miss, p_fa) points of a detection trade-off."""

    def __init__(self, kind: str, thetas, p_miss, p_fa):
        self.kind = kind
        thetas = np.asarray(thetas, dtype=np.float64)
        p_miss = np.asarray(p_miss, dtype=np.float64)
        p_fa = np.asarray(p_fa, dtype=np.float64)
        if not (thetas.shape == p_miss.shape == p_fa.shape) or thetas.ndim != 1:
            raise ValueError("thetas, p_miss and p_fa must be 1-D arrays of equal length")
        if thetas.size:
            if np.any(np.diff(thetas) <= 0):
                raise ValueError("thresholds must be strictly increasing")
            for label, rates in (("p_miss", p_miss), ("p_fa", p_fa)):
                if np.any(rates < 0) or np.any(rates > 1):
                    raise ValueError(f"{label} values must lie in [0, 1]")
            if np.any(np.diff(p_miss) < 0):
                raise ValueError("p_miss must be nondecreasing in theta")
            if np.any(np.diff(p_fa) > 0):
                raise ValueError("p_fa must be nonincreasing in theta")
        for arr in (thetas, p_miss, p_fa):
            arr.setflags(write=False)
        self.thetas = thetas
        self.p_miss = p_miss
        self.p_fa = p_fa

    def __len__(self) -> int:
        return self.thetas.shape[0]

    def points(self) -> Iterator[tuple[float, float, float]]:
        for theta, pm, pf in zip(self.thetas, self.p_miss, self.p_fa):
            yield float(theta), float(pm), float(pf)


@dataclass(frozen=True)
class EerResult:
    eer: float
    theta_at_eer: float
    exact_crossing: bool


def candidate_thresholds(scores: np.ndarray) -> np.ndarray:
    """Midpoints between adjacent distinct scores, with one sentinel on each
    side, so thresholds never collide with scores."""
    distinct = np.unique(np.asarray(scores, dtype=np.float64))
    if distinct.size == 0:
        raise UndefinedRateError("no scores to build thresholds from")
    mids = (distinct[:-1] + distinct[1:]) / 2.0
    thetas = np.concatenate(([distinct[0] - 1.0], mids, [distinct[-1] + 1.0]))
    thetas = np.unique(thetas)
    # adjacent representable floats can collapse a midpoint onto a neighbor;
    # drop such collisions so no threshold ever equals a score
    return thetas[~np.isin(thetas, distinct)]


def _miss_counts(sorted_scores: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    """Count of scores strictly below each threshold."""
    return np.searchsorted(sorted_scores, thetas, side="left")


def _fa_counts(sorted_scores: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    """Count of scores strictly above each threshold."""
    return sorted_scores.size - np.searchsorted(sorted_scores, thetas, side="right")


def single_target_curve(pairs: Iterable[tuple[float, bool]]) -> ErrorCurve:
    """Detection curve for plain (score, is_target) trials.

    p_miss is the fraction of target scores below each threshold, p_fa the
    fraction of non-target scores above it.
    """
    pairs = list(pairs)
    targets = np.array([score for score, is_target in pairs if is_target], dtype=np.float64)
    nons = np.array([score for score, is_target in pairs if not is_target], dtype=np.float64)
    if targets.size == 0 or nons.size == 0:
        raise UndefinedRateError(
            "need at least one target and one non-target trial to define error rates"
        )
    thetas = candidate_thresholds(np.concatenate([targets, nons]))
    targets.sort()
    nons.sort()
    p_miss = _miss_counts(targets, thetas) / targets.size
    p_fa = _fa_counts(nons, thetas) / nons.size
    return ErrorCurve(SINGLE_TARGET, thetas, p_miss, p_fa)


def _split_trials(trials: Sequence[Trial]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    blacklist = np.array([t.score for t in trials if t.is_blacklist], dtype=np.float64)
    background = np.array([t.score for t in trials if not t.is_blacklist], dtype=np.float64)
    wrong = np.array(
        [t.score for t in trials if t.is_blacklist and t.truth != t.claimed],
        dtype=np.float64,
    )
    if blacklist.size == 0 or background.size == 0:
        raise UndefinedRateError(
            "need at least one blacklist and one background trial to define error rates"
        )
    return blacklist, background, wrong


def top_s_curve(trials: Sequence[Trial], registry: SpeakerRegistry | None = None) -> ErrorCurve:
    """Detection-only curve: was the utterance spoken by anyone on the
    blacklist? Claimed identities are ignored."""
    _check_truth_ids(trials, registry)
    blacklist, background, _ = _split_trials(trials)
    thetas = candidate_thresholds(np.concatenate([blacklist, background]))
    blacklist.sort()
    background.sort()
    p_miss = _miss_counts(blacklist, thetas) / blacklist.size
    p_fa = _fa_counts(background, thetas) / background.size
    return ErrorCurve(TOP_S, thetas, p_miss, p_fa)


def top_1_curve(trials: Sequence[Trial], registry: SpeakerRegistry | None = None) -> ErrorCurve:
    """Identification curve: accepted blacklist trials with a wrong claimed
    speaker count as misses (confusion errors). False alarms are identical
    to the detection-only curve."""
    _check_truth_ids(trials, registry)
    blacklist, background, wrong = _split_trials(trials)
    thetas = candidate_thresholds(np.concatenate([blacklist, background]))
    blacklist.sort()
    background.sort()
    wrong.sort()
    miss = _miss_counts(blacklist, thetas)
    confusion = _fa_counts(wrong, thetas)  # wrong-identity trials accepted at theta
    p_miss = (miss + confusion) / blacklist.size
    p_fa = _fa_counts(background, thetas) / background.size
    return ErrorCurve(TOP_1, thetas, p_miss, p_fa)


def _check_truth_ids(trials: Sequence[Trial], registry: SpeakerRegistry | None) -> None:
    if registry is None:
        return
    for trial in trials:
        if trial.truth is not None and trial.truth not in registry:
            raise UnknownSpeakerError(f"trial truth {trial.truth!r} is not in the registry")


def eer(curve: ErrorCurve) -> EerResult:
    """Equal error rate of a curve, by linear interpolation in theta.

    Prefers an exact point with p_miss == p_fa; otherwise interpolates
    across the first sign change of the difference; falls back to the point
    minimizing |p_miss - p_fa| when the difference never changes sign.
    """
    if len(curve) == 0:
        raise ValueError("cannot compute the EER of an empty curve")
    diff = curve.p_miss - curve.p_fa
    exact = np.flatnonzero(diff == 0.0)
    if exact.size:
        k = int(exact[0])
        return EerResult(float(curve.p_miss[k]), float(curve.thetas[k]), True)
    crossings = np.flatnonzero((diff[:-1] < 0.0) & (diff[1:] > 0.0))
    if crossings.size:
        k = int(crossings[0])
        frac = -diff[k] / (diff[k + 1] - diff[k])
        value = curve.p_miss[k] + frac * (curve.p_miss[k + 1] - curve.p_miss[k])
        theta = curve.thetas[k] + frac * (curve.thetas[k + 1] - curve.thetas[k])
        return EerResult(float(value), float(theta), False)
    k = int(np.argmin(np.abs(diff)))
    value = (curve.p_miss[k] + curve.p_fa[k]) / 2.0
    return EerResult(float(value), float(curve.thetas[k]), False)


@dataclass(frozen=True)
class EvaluationReport:
    """Both stack-detector curves and EERs for one submission."""

    top_s: ErrorCurve
    top_1: ErrorCurve
    top_s_eer: EerResult
    top_1_eer: EerResult
    n_trials: int
    n_blacklist: int
    n_background: int
    n_confusable: int

    def machine_lines(self) -> list[str]:
        return [
            f"top_s_eer={self.top_s_eer.eer:.6f}",
            f"top_1_eer={self.top_1_eer.eer:.6f}",
            f"trials={self.n_trials}",
        ]

    def render_text(self) -> str:
        return "\n".join(
            [
                f"trials: {self.n_trials} "
                f"({self.n_blacklist} blacklist, {self.n_background} background)",
                f"wrong-identity blacklist trials: {self.n_confusable}",
                f"top-S EER: {self.top_s_eer.eer * 100:.4f}% "
                f"(threshold {self.top_s_eer.theta_at_eer:.6g})",
                f"top-1 EER: {self.top_1_eer.eer * 100:.4f}% "
                f"(threshold {self.top_1_eer.theta_at_eer:.6g})",
            ]
        )


def trials_from_submission(submission: Submission, key: GroundTruthKey) -> list[Trial]:
    """Pair every submission row with its ground truth; the submission must
    cover the key's utterances exactly."""
    sub_ids = set(submission.utterance_ids())
    key_ids = set(key.utterance_ids())
    if sub_ids != key_ids:
        missing = tuple(sorted(str(u) for u in key_ids - sub_ids))
        extra = tuple(sorted(str(u) for u in sub_ids - key_ids))
        raise CoverageError(missing=missing, extra=extra)
    return [Trial(row.score, row.claimed_speaker, key.truth(row.utterance_id)) for row in submission]


def evaluate_submission(
    submission: Submission, key: GroundTruthKey, registry: SpeakerRegistry
) -> EvaluationReport:
    """Score a submission against a ground-truth key.

    Checks coverage and claimed-speaker validity, then computes both stack
    detector curves and their EERs.
    """
    for row in submission:
        if row.claimed_speaker not in registry:
            raise UnknownSpeakerError(
                f"claimed speaker {row.claimed_speaker!r} for utterance "
                f"{row.utterance_id} is not in the registry"
            )
    trials = trials_from_submission(submission, key)
    curve_s = top_s_curve(trials, registry)
    curve_1 = top_1_curve(trials, registry)
    n_blacklist = sum(1 for t in trials if t.is_blacklist)
    n_confusable = sum(1 for t in trials if t.is_blacklist and t.truth != t.claimed)
    return EvaluationReport(
        top_s=curve_s,
        top_1=curve_1,
        top_s_eer=eer(curve_s),
        top_1_eer=eer(curve_1),
        n_trials=len(trials),
        n_blacklist=n_blacklist,
        n_background=len(trials) - n_blacklist,
        n_confusable=n_confusable,
    )


DET_HEADER = "theta,p_miss,p_fa"


def export_det(curve: ErrorCurve) -> str:
    """Render a curve as CSV (theta,p_miss,p_fa per point) with full
    round-trip float precision."""
    lines = [DET_HEADER]
    for theta, pm, pf in curve.points():
        lines.append(f"{theta!r},{pm!r},{pf!r}")
    return "\n".join(lines) + "\n"


def write_det(curve: ErrorCurve, dest) -> None:
    text = export_det(curve)
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w", encoding="ascii") as handle:
            handle.write(text)
