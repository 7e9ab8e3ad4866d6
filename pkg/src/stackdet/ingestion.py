"""Readers and writers for the challenge file formats, plus dataset profile
validation.

Formats (ASCII, comma-separated, no header row, LF or CRLF):

* i-vector CSV:   ``<utt_id>,<v1>,...,<vD>``
* matching CSV:   ``<8-digit id>,dev_<4 letters>,train_<4 letters>``
* submission CSV: ``<utt_id>,<score>,<8-digit id>``
* key CSV:        ``<utt_id>,<8-digit id | background>``

Spaces adjacent to commas are tolerated on input. Floats are written with
shortest round-trip precision, so write-then-read reproduces values exactly.
Parsers are streaming and single-pass; every parse error reports the 1-based
line number where it was found.
"""

from __future__ import annotations

import io
import os
from contextlib import contextmanager
from dataclasses import dataclass
from math import isfinite
from typing import IO, Iterable, Iterator, Union

import numpy as np

from .data_model import (
    BACKGROUND_LABEL,
    Dataset,
    DatasetKind,
    GroundTruthKey,
    RegistryEntry,
    SpeakerRegistry,
    UtteranceId,
    is_global_id,
    parse_utterance_id,
)
from .errors import FormatError, UnknownSpeakerError

Source = Union[str, os.PathLike, IO]


@contextmanager
def _open_text(source: Source, mode: str = "r"):
    """Yield (text stream, display name) for a path or an open file object."""
    if isinstance(source, (str, os.PathLike)):
        name = os.fspath(source)
        with open(source, mode, encoding="ascii", newline="") as handle:
            yield handle, os.path.basename(name)
    elif isinstance(source, (io.RawIOBase, io.BufferedIOBase)):
        # byte stream: wrap without closing the caller's handle
        wrapper = io.TextIOWrapper(source, encoding="ascii", newline="")
        try:
            yield wrapper, getattr(source, "name", "<stream>")
        finally:
            wrapper.flush()
            wrapper.detach()
    else:
        yield source, getattr(source, "name", "<stream>")


def _lines(stream) -> Iterator[tuple[int, str]]:
    """Yield (1-based line number, stripped nonempty line)."""
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if line:
            yield lineno, line


def _fields(line: str) -> list[str]:
    return [field.strip() for field in line.split(",")]


# ---------------------------------------------------------------------------
# i-vector CSV


def read_ivector_csv(
    source: Source,
    expected_dim: int | None = None,
    *,
    name: str | None = None,
    kind: DatasetKind = DatasetKind.MIXED,
) -> Dataset:
    """Parse an i-vector CSV into a Dataset.

    One utterance per nonempty line: the first field is the utterance id,
    the rest are the vector components. The dimension is inferred from the
    first line when ``expected_dim`` is not given; later lines must agree.
    """
    ids: list[UtteranceId] = []
    rows: list[np.ndarray] = []
    seen: set[UtteranceId] = set()
    dim = expected_dim
    with _open_text(source) as (stream, display):
        display = name or display
        for lineno, line in _lines(stream):
            fields = _fields(line)
            if len(fields) < 2:
                raise FormatError(
                    f"expected an utterance id and at least one value, got {len(fields)} field(s)",
                    line=lineno, source=display,
                )
            try:
                uid = parse_utterance_id(fields[0])
            except FormatError as exc:
                raise FormatError(exc.message, line=lineno, source=display) from None
            if uid in seen:
                raise FormatError(f"duplicate utterance id {uid}", line=lineno, source=display)
            seen.add(uid)
            try:
                values = np.asarray(fields[1:], dtype=np.float64)
            except ValueError:
                bad = next(f for f in fields[1:] if not _is_float(f))
                raise FormatError(f"non-numeric field {bad!r}", line=lineno, source=display) from None
            if not np.isfinite(values).all():
                raise FormatError("non-finite value (NaN or infinity)", line=lineno, source=display)
            if dim is None:
                dim = values.shape[0]
            elif values.shape[0] != dim:
                raise FormatError(
                    f"dimension mismatch: expected {dim} values, got {values.shape[0]}",
                    line=lineno, source=display,
                )
            ids.append(uid)
            rows.append(values)
    matrix = np.stack(rows) if rows else np.empty((0, dim or 0))
    return Dataset(display if name is None else name, ids, matrix, kind=kind, dim=dim)


def _is_float(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def write_ivector_csv(dataset: Dataset, dest: Source) -> None:
    """Write a Dataset back to i-vector CSV with full float precision."""
    with _open_text(dest, "w") as (stream, _):
        for uid, vec in zip(dataset.ids, dataset.vectors):
            stream.write(str(uid))
            for value in vec:
                stream.write(",")
                stream.write(repr(float(value)))
            stream.write("\n")


# ---------------------------------------------------------------------------
# blacklist matching CSV


def read_bl_matching(source: Source) -> SpeakerRegistry:
    """Parse the blacklist matching file into a SpeakerRegistry.

    Each line is ``<8-digit global id>,dev_<prefix>,train_<prefix>``.
    """
    entries: list[RegistryEntry] = []
    seen: dict[str, set[str]] = {"global": set(), "dev": set(), "train": set()}
    with _open_text(source) as (stream, display):
        for lineno, line in _lines(stream):
            fields = _fields(line)
            if len(fields) != 3:
                raise FormatError(
                    f"expected 3 fields (global,dev_x,train_y), got {len(fields)}",
                    line=lineno, source=display,
                )
            global_id, dev_field, train_field = fields
            if not is_global_id(global_id):
                raise FormatError(
                    f"global id {global_id!r} is not an 8-digit number",
                    line=lineno, source=display,
                )
            if not dev_field.startswith("dev_"):
                raise FormatError(
                    f"second field {dev_field!r} must start with 'dev_'",
                    line=lineno, source=display,
                )
            if not train_field.startswith("train_"):
                raise FormatError(
                    f"third field {train_field!r} must start with 'train_'",
                    line=lineno, source=display,
                )
            dev_id = dev_field[len("dev_"):]
            train_id = train_field[len("train_"):]
            for label, value in (("global", global_id), ("dev", dev_id), ("train", train_id)):
                if value in seen[label]:
                    raise FormatError(
                        f"duplicate {label} id {value!r}", line=lineno, source=display
                    )
                seen[label].add(value)
            try:
                entries.append(RegistryEntry(global_id, dev_id, train_id))
            except FormatError as exc:
                raise FormatError(exc.message, line=lineno, source=display) from None
    return SpeakerRegistry(entries)


def write_bl_matching(registry: SpeakerRegistry, dest: Source) -> None:
    with _open_text(dest, "w") as (stream, _):
        for entry in registry:
            stream.write(f"{entry.global_id},dev_{entry.dev_id},train_{entry.train_id}\n")


# ---------------------------------------------------------------------------
# submissions


@dataclass(frozen=True)
class SubmissionRow:
    utterance_id: UtteranceId
    score: float
    claimed_speaker: str


class Submission:
    """Ordered submission rows: one (utterance, score, claimed speaker) each.

    Utterance ids must be unique and scores finite; claimed ids must be
    well-formed. Membership of claimed ids in a registry is checked where a
    registry is available (reading, evaluation).
    """

    def __init__(self, rows: Iterable[SubmissionRow]):
        self.rows: tuple[SubmissionRow, ...] = tuple(rows)
        seen: set[UtteranceId] = set()
        for row in self.rows:
            if row.utterance_id in seen:
                raise FormatError(f"duplicate utterance id {row.utterance_id} in submission")
            seen.add(row.utterance_id)
            if not isfinite(row.score):
                raise FormatError(f"non-finite score for utterance {row.utterance_id}")
            if not is_global_id(row.claimed_speaker):
                raise FormatError(
                    f"claimed speaker {row.claimed_speaker!r} is not an 8-digit id"
                )

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[SubmissionRow]:
        return iter(self.rows)

    def utterance_ids(self) -> tuple[UtteranceId, ...]:
        return tuple(row.utterance_id for row in self.rows)


def read_submission(source: Source, registry: SpeakerRegistry) -> Submission:
    """Parse and validate a submission file against the registry."""
    rows: list[SubmissionRow] = []
    seen: set[UtteranceId] = set()
    with _open_text(source) as (stream, display):
        for lineno, line in _lines(stream):
            fields = _fields(line)
            if len(fields) != 3:
                raise FormatError(
                    f"expected 3 fields (utterance,score,claimed id), got {len(fields)}",
                    line=lineno, source=display,
                )
            try:
                uid = parse_utterance_id(fields[0])
            except FormatError as exc:
                raise FormatError(exc.message, line=lineno, source=display) from None
            if uid in seen:
                raise FormatError(f"duplicate utterance id {uid}", line=lineno, source=display)
            seen.add(uid)
            try:
                score = float(fields[1])
            except ValueError:
                raise FormatError(f"non-numeric score {fields[1]!r}", line=lineno, source=display) from None
            if not isfinite(score):
                raise FormatError(f"non-finite score {fields[1]!r}", line=lineno, source=display)
            claimed = fields[2]
            if not is_global_id(claimed):
                raise FormatError(
                    f"claimed speaker {claimed!r} is not an 8-digit id",
                    line=lineno, source=display,
                )
            if claimed not in registry:
                raise UnknownSpeakerError(
                    f"{display}:{lineno}: claimed speaker {claimed!r} is not in the registry"
                )
            rows.append(SubmissionRow(uid, score, claimed))
    return Submission(rows)


def write_submission(submission: Submission, dest: Source) -> None:
    """Write a submission as ASCII CSV, one row per line.

    Scores are rendered with shortest round-trip precision so that reading
    the file back reproduces them exactly.
    """
    with _open_text(dest, "w") as (stream, _):
        for row in submission:
            stream.write(f"{row.utterance_id},{repr(float(row.score))},{row.claimed_speaker}\n")


# ---------------------------------------------------------------------------
# ground-truth keys


def read_key(source: Source, registry: SpeakerRegistry | None = None) -> GroundTruthKey:
    """Parse a ground-truth key: ``<utt_id>,<global id or 'background'>``."""
    labels: dict[UtteranceId, str | None] = {}
    with _open_text(source) as (stream, display):
        for lineno, line in _lines(stream):
            fields = _fields(line)
            if len(fields) != 2:
                raise FormatError(
                    f"expected 2 fields (utterance,label), got {len(fields)}",
                    line=lineno, source=display,
                )
            try:
                uid = parse_utterance_id(fields[0])
            except FormatError as exc:
                raise FormatError(exc.message, line=lineno, source=display) from None
            if uid in labels:
                raise FormatError(f"duplicate utterance id {uid}", line=lineno, source=display)
            label = fields[1]
            if label == BACKGROUND_LABEL:
                labels[uid] = None
            elif is_global_id(label):
                labels[uid] = label
            else:
                raise FormatError(
                    f"label {label!r} is neither an 8-digit id nor {BACKGROUND_LABEL!r}",
                    line=lineno, source=display,
                )
    return GroundTruthKey(labels, registry)


def write_key(key: GroundTruthKey, dest: Source) -> None:
    with _open_text(dest, "w") as (stream, _):
        for uid, label in key.items():
            stream.write(f"{uid},{label if label is not None else BACKGROUND_LABEL}\n")


# ---------------------------------------------------------------------------
# dataset profiles


@dataclass(frozen=True)
class DatasetProfile:
    """Expected structure of a dataset: speaker count, utterances per
    speaker (exact or lower bound), and total utterance count."""

    expected_speakers: int
    expected_utts_per_speaker: int
    expected_total_utts: int
    utts_is_minimum: bool = False

    def __post_init__(self):
        for field in ("expected_speakers", "expected_utts_per_speaker", "expected_total_utts"):
            if getattr(self, field) <= 0:
                raise ValueError(f"{field} must be positive")


# Published corpus profiles, keyed by canonical file stem.
TRAIN_BLACKLIST_PROFILE = DatasetProfile(3631, 3, 10893)
TRAIN_BACKGROUND_PROFILE = DatasetProfile(5000, 4, 30952, utts_is_minimum=True)
DEV_BLACKLIST_PROFILE = DatasetProfile(3631, 1, 3631)
DEV_BACKGROUND_PROFILE = DatasetProfile(5000, 1, 5000)

DEFAULT_PROFILES: dict[str, DatasetProfile] = {
    "trn_blacklist": TRAIN_BLACKLIST_PROFILE,
    "trn_background": TRAIN_BACKGROUND_PROFILE,
    "dev_blacklist": DEV_BLACKLIST_PROFILE,
    "dev_background": DEV_BACKGROUND_PROFILE,
}


@dataclass(frozen=True)
class ProfileReport:
    """Outcome of checking a dataset against a profile.

    Validation is non-fatal: deviations are collected in ``failures`` so a
    partially conforming corpus can still be inspected.
    """

    dataset_name: str
    speaker_count: int
    total_utts: int
    per_speaker: dict[str, int]
    failures: tuple[str, ...]

    @property
    def passed(self) -> bool:
        return not self.failures

    def render(self) -> str:
        lines = [
            f"dataset {self.dataset_name}: {self.speaker_count} speakers, "
            f"{self.total_utts} utterances",
        ]
        counts = sorted(set(self.per_speaker.values()))
        if counts:
            per = f"{counts[0]}" if len(counts) == 1 else f"{counts[0]}..{counts[-1]}"
            lines.append(f"  utterances per speaker: {per}")
        for failure in self.failures:
            lines.append(f"  FAIL: {failure}")
        lines.append(f"  {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def validate_profile(dataset: Dataset, profile: DatasetProfile) -> ProfileReport:
    """Compare a dataset's structure with a profile; deviations become
    failure entries in the report rather than exceptions."""
    per_speaker: dict[str, int] = {}
    for uid in dataset.ids:
        per_speaker[uid.prefix] = per_speaker.get(uid.prefix, 0) + 1
    total = len(dataset)
    failures: list[str] = []
    if len(per_speaker) != profile.expected_speakers:
        failures.append(
            f"speaker count {len(per_speaker)} != expected {profile.expected_speakers}"
        )
    relation = ">=" if profile.utts_is_minimum else "=="
    for prefix in sorted(per_speaker):
        count = per_speaker[prefix]
        ok = count >= profile.expected_utts_per_speaker if profile.utts_is_minimum \
            else count == profile.expected_utts_per_speaker
        if not ok:
            failures.append(
                f"speaker {prefix!r} has {count} utterance(s), expected "
                f"{relation} {profile.expected_utts_per_speaker}"
            )
    if total != profile.expected_total_utts:
        failures.append(f"total utterances {total} != expected {profile.expected_total_utts}")
    return ProfileReport(
        dataset_name=dataset.name,
        speaker_count=len(per_speaker),
        total_utts=total,
        per_speaker=per_speaker,
        failures=tuple(failures),
    )
