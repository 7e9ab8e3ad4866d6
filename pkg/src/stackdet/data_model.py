"""Core domain types: utterance ids, datasets, the speaker registry and
ground-truth keys.

All types here are immutable after construction and enforce their structural
invariants eagerly, so downstream code never has to re-check identifiers or
vector shapes.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Literal, Mapping

import numpy as np

from .errors import FormatError, UnknownSpeakerError

PREFIX_LEN = 4
GLOBAL_ID_LEN = 8
DEFAULT_DIM = 600

#: Marker used in key files for utterances spoken by non-blacklist speakers.
BACKGROUND_LABEL = "background"


def is_global_id(token: str) -> bool:
    """True if ``token`` is a well-formed 8-digit blacklist speaker id."""
    return len(token) == GLOBAL_ID_LEN and token.isdigit()


@dataclass(frozen=True, order=True)
class UtteranceId:
    """Utterance identifier: a 4-letter speaker prefix plus a session suffix.

    Rendered as ``<prefix>_<suffix>``, e.g. ``aagj_239446``. The prefix is
    the per-set speaker id; the suffix distinguishes sessions.
    """

    prefix: str
    suffix: str

    def __post_init__(self):
        if len(self.prefix) != PREFIX_LEN or not self.prefix.isascii() \
                or not self.prefix.isalpha() or not self.prefix.islower():
            raise FormatError(
                f"speaker prefix {self.prefix!r} must be exactly "
                f"{PREFIX_LEN} lowercase letters"
            )
        if not self.suffix or not self.suffix.isdigit():
            raise FormatError(f"session suffix {self.suffix!r} must be a nonempty digit string")

    def __str__(self) -> str:
        return f"{self.prefix}_{self.suffix}"


def parse_utterance_id(raw: str) -> UtteranceId:
    """Split an utterance id at its first underscore and validate both parts.

    Ids that would silently truncate (prefix not exactly 4 letters, empty or
    non-numeric suffix, no underscore at all) fail loudly instead.
    """
    if not raw:
        raise FormatError("empty utterance id")
    prefix, sep, suffix = raw.partition("_")
    if not sep:
        raise FormatError(f"utterance id {raw!r} has no underscore")
    try:
        return UtteranceId(prefix, suffix)
    except FormatError as exc:
        raise FormatError(f"bad utterance id {raw!r}: {exc.message}") from None


@dataclass(frozen=True)
class Utterance:
    """One utterance: its id and its feature vector."""

    id: UtteranceId
    vector: np.ndarray

    @property
    def dim(self) -> int:
        return self.vector.shape[0]


class DatasetKind(str, Enum):
    BLACKLIST = "blacklist"
    BACKGROUND = "background"
    MIXED = "mixed"


def _as_matrix(vectors, dim: int | None, n: int) -> np.ndarray:
    mat = np.asarray(vectors, dtype=np.float64)
    if mat.ndim != 2:
        raise ValueError(f"expected a 2-D array of vectors, got shape {mat.shape}")
    if mat.shape[0] != n:
        raise ValueError(f"{n} ids but {mat.shape[0]} vectors")
    if dim is not None and mat.shape[1] != dim:
        raise ValueError(f"declared dim {dim} but vectors have dim {mat.shape[1]}")
    if mat.size and not np.isfinite(mat).all():
        bad = int(np.flatnonzero(~np.isfinite(mat).all(axis=1))[0])
        raise ValueError(f"non-finite value in vector {bad}")
    return mat


class Dataset:
    """An ordered, immutable collection of utterances sharing one dimension.

    Stores ids alongside an ``(N, dim)`` float64 matrix so scoring code can
    work on the matrix directly.
    """

    def __init__(
        self,
        name: str,
        ids: Iterable[UtteranceId],
        vectors,
        kind: DatasetKind = DatasetKind.MIXED,
        dim: int | None = None,
    ):
        self.name = name
        self.kind = DatasetKind(kind)
        self.ids: tuple[UtteranceId, ...] = tuple(ids)
        mat = _as_matrix(vectors, dim, len(self.ids))
        if len(self.ids):
            self.dim = mat.shape[1]
            if self.dim <= 0:
                raise ValueError("vectors must have positive dimension")
        else:
            # empty dataset: keep the declared dim, 0 when unknown
            self.dim = dim if dim is not None else mat.shape[1] if mat.ndim == 2 and mat.shape[1] else 0
            mat = mat.reshape(0, self.dim)
        seen: set[UtteranceId] = set()
        for uid in self.ids:
            if uid in seen:
                raise ValueError(f"duplicate utterance id {uid} in dataset {name!r}")
            seen.add(uid)
        mat.setflags(write=False)
        self.vectors = mat

    @classmethod
    def from_utterances(
        cls, name: str, utterances: Iterable[Utterance], kind: DatasetKind = DatasetKind.MIXED
    ) -> "Dataset":
        utts = list(utterances)
        ids = [u.id for u in utts]
        vectors = np.stack([u.vector for u in utts]) if utts else np.empty((0, 0))
        return cls(name, ids, vectors, kind=kind)

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self) -> Iterator[Utterance]:
        for uid, vec in zip(self.ids, self.vectors):
            yield Utterance(uid, vec)

    @property
    def utterances(self) -> tuple[Utterance, ...]:
        return tuple(self)

    def prefixes(self) -> tuple[str, ...]:
        """Distinct speaker prefixes, in first-seen order."""
        out: dict[str, None] = {}
        for uid in self.ids:
            out.setdefault(uid.prefix, None)
        return tuple(out)


@dataclass(frozen=True)
class RegistryEntry:
    """Links one blacklist speaker's global id to its per-set prefixes."""

    global_id: str
    dev_id: str
    train_id: str

    def __post_init__(self):
        if not is_global_id(self.global_id):
            raise FormatError(f"global id {self.global_id!r} must be exactly {GLOBAL_ID_LEN} digits")
        for label, prefix in (("dev", self.dev_id), ("train", self.train_id)):
            if len(prefix) != PREFIX_LEN or not prefix.isascii() or not prefix.isalpha():
                raise FormatError(f"{label} id {prefix!r} must be exactly {PREFIX_LEN} letters")


class SpeakerRegistry:
    """Bidirectional mapping between global blacklist ids and the 4-letter
    speaker prefixes used in the dev and train sets.

    The dev and train prefix columns are independent namespaces; each column
    must be duplicate-free on its own.
    """

    def __init__(self, entries: Iterable[RegistryEntry]):
        self.entries: tuple[RegistryEntry, ...] = tuple(entries)
        self._by_global: dict[str, RegistryEntry] = {}
        self._by_dev: dict[str, RegistryEntry] = {}
        self._by_train: dict[str, RegistryEntry] = {}
        for entry in self.entries:
            for attr, table in (
                ("global_id", self._by_global),
                ("dev_id", self._by_dev),
                ("train_id", self._by_train),
            ):
                value = getattr(entry, attr)
                if value in table:
                    raise FormatError(f"duplicate {attr} {value!r} in registry")
                table[value] = entry

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[RegistryEntry]:
        return iter(self.entries)

    def __contains__(self, global_id: str) -> bool:
        return global_id in self._by_global

    def by_global(self, global_id: str) -> RegistryEntry | None:
        return self._by_global.get(global_id)

    def by_prefix(self, prefix: str, set_name: Literal["train", "dev"]) -> RegistryEntry | None:
        if set_name == "train":
            return self._by_train.get(prefix)
        if set_name == "dev":
            return self._by_dev.get(prefix)
        raise ValueError(f"set name must be 'train' or 'dev', got {set_name!r}")

    def global_ids(self) -> tuple[str, ...]:
        return tuple(e.global_id for e in self.entries)


def speaker_of(
    id_or_prefix: UtteranceId | str,
    registry: SpeakerRegistry,
    set_name: Literal["train", "dev"],
) -> str | None:
    """Resolve an utterance id (or bare prefix) to its global blacklist id.

    Returns None for background speakers; absence from the registry is a
    valid result, not an error.
    """
    prefix = id_or_prefix.prefix if isinstance(id_or_prefix, UtteranceId) else id_or_prefix
    entry = registry.by_prefix(prefix, set_name)
    return entry.global_id if entry is not None else None


class GroundTruthKey:
    """Maps each test utterance to its blacklist global id, or to None for
    background speakers.

    When a registry is supplied, every referenced global id must exist in it.
    Iteration order is insertion order.
    """

    def __init__(
        self,
        labels: Mapping[UtteranceId, str | None],
        registry: SpeakerRegistry | None = None,
    ):
        self._labels: dict[UtteranceId, str | None] = dict(labels)
        if registry is not None:
            for uid, label in self._labels.items():
                if label is not None and label not in registry:
                    raise UnknownSpeakerError(
                        f"key references unknown blacklist id {label!r} for utterance {uid}"
                    )

    def __len__(self) -> int:
        return len(self._labels)

    def __contains__(self, uid: UtteranceId) -> bool:
        return uid in self._labels

    def truth(self, uid: UtteranceId) -> str | None:
        return self._labels[uid]

    def utterance_ids(self) -> tuple[UtteranceId, ...]:
        return tuple(self._labels)

    def items(self) -> Iterator[tuple[UtteranceId, str | None]]:
        return iter(self._labels.items())

    @property
    def n_blacklist(self) -> int:
        return sum(1 for v in self._labels.values() if v is not None)

    @property
    def n_background(self) -> int:
        return sum(1 for v in self._labels.values() if v is None)
