"""Deterministic synthetic corpora with the challenge's structure.

Speakers are isotropic Gaussian clusters: each speaker gets a centroid drawn
from N(0, inter_speaker_std^2 I) and each utterance is that centroid plus
N(0, intra_speaker_std^2 I) noise. This is not a model of real i-vector
statistics; it is the simplest generator whose cosine-score behavior spans
the useful range (near-perfect separation for small intra/inter ratios,
chance level once labels are shuffled).

Randomness comes from a self-contained SplitMix64 generator defined here,
so generated corpora are bitwise reproducible from the seed alone,
independent of interpreter or library versions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data_model import (
    Dataset,
    DatasetKind,
    GroundTruthKey,
    RegistryEntry,
    SpeakerRegistry,
    UtteranceId,
)
from .errors import ToolkitError
from .ingestion import (
    DatasetProfile,
    write_bl_matching,
    write_ivector_csv,
    write_key,
)

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

#: Utterances generated per background speaker in the training set (the
#: published corpus guarantees at least 4).
TRAIN_UTTS_PER_BACKGROUND = 4

PREFIX_ALPHABET = "abcdefghijklmnopqrstuvwxyz"
MAX_PREFIXES = 26 ** 4

CORPUS_FILES = (
    "trn_blacklist.csv",
    "trn_background.csv",
    "dev_blacklist.csv",
    "dev_background.csv",
    "tst_mix.csv",
    "bl_matching.csv",
    "tst_key.csv",
)


class SplitMix64:
    """SplitMix64 pseudo-random generator.

    State advances by the 64-bit golden-ratio constant each step; output is
    the finalization mix (two xor-shift-multiply rounds and a final xor
    shift). Uniforms take the top 53 output bits; normal deviates come from
    the Box-Muller transform on consecutive uniform pairs. The algorithm is
    spelled out here because byte-for-byte reproducibility of generated
    corpora is part of the toolkit's contract.
    """

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def _bulk_u64(self, n: int) -> np.ndarray:
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self._state) + steps * np.uint64(_GAMMA)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            z = z ^ (z >> np.uint64(31))
        self._state = (self._state + n * _GAMMA) & _MASK64
        return z

    def random(self) -> float:
        """Uniform float in [0, 1)."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def uniforms(self, n: int) -> np.ndarray:
        return (self._bulk_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53

    def normals(self, n: int) -> np.ndarray:
        """n standard normal deviates via Box-Muller on uniform pairs."""
        pairs = (n + 1) // 2
        u = self.uniforms(2 * pairs)
        u1 = u[0::2]
        u2 = u[1::2]
        radius = np.sqrt(-2.0 * np.log1p(-u1))  # 1 - u1 in (0, 1], no log(0)
        angle = 2.0 * math.pi * u2
        out = np.empty(2 * pairs)
        out[0::2] = radius * np.cos(angle)
        out[1::2] = radius * np.sin(angle)
        return out[:n]

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n), bias-free via rejection."""
        if n <= 0:
            raise ValueError("randrange needs a positive bound")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            value = self.next_u64()
            if value < limit:
                return value % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randrange(i + 1)
            items[i], items[j] = items[j], items[i]


def prefix_for_index(index: int) -> str:
    """Deterministic enumeration of 4-letter prefixes: 0 -> 'aaaa'."""
    if not 0 <= index < MAX_PREFIXES:
        raise ValueError(f"prefix index {index} out of range")
    letters = []
    for _ in range(4):
        index, rem = divmod(index, 26)
        letters.append(PREFIX_ALPHABET[rem])
    return "".join(reversed(letters))


@dataclass(frozen=True)
class SynthConfig:
    """Shape and randomness of a synthetic corpus.

    Background speakers get TRAIN_UTTS_PER_BACKGROUND training utterances
    and one development utterance each, mirroring the published corpus
    structure; blacklist speakers get ``train_utts_per_blacklist`` and one.
    """

    n_blacklist: int
    n_background: int
    dim: int
    train_utts_per_blacklist: int = 3
    intra_speaker_std: float = 0.3
    inter_speaker_std: float = 1.0
    test_blacklist_fraction: float = 0.5
    n_test: int = 1000
    seed: int = 0

    def __post_init__(self):
        for field in ("n_blacklist", "n_background", "dim", "train_utts_per_blacklist", "n_test"):
            if getattr(self, field) <= 0:
                raise ValueError(f"{field} must be positive")
        for field in ("intra_speaker_std", "inter_speaker_std"):
            if getattr(self, field) <= 0:
                raise ValueError(f"{field} must be positive")
        if not 0.0 <= self.test_blacklist_fraction <= 1.0:
            raise ValueError("test_blacklist_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class SynthCorpus:
    """All artifacts of one generated corpus."""

    train_blacklist: Dataset
    train_background: Dataset
    dev_blacklist: Dataset
    dev_background: Dataset
    test_mix: Dataset
    registry: SpeakerRegistry
    key: GroundTruthKey


def _draw_suffix(rng: SplitMix64, used: set[str]) -> str:
    while True:
        suffix = str(100000 + rng.randrange(900000))
        if suffix not in used:
            used.add(suffix)
            return suffix


def generate(config: SynthConfig) -> SynthCorpus:
    """Generate a full corpus: five datasets, registry and ground-truth key.

    Deterministic: the same config (seed included) always produces the same
    values, ids and file bytes. Blacklist speakers keep one centroid across
    train, dev and test but carry different prefixes per set, linked through
    the registry. Test utterances get fresh prefixes from a namespace of
    their own so the id alone leaks nothing about the truth.
    """
    nb, nbg = config.n_blacklist, config.n_background
    needed = 2 * nb + 2 * nbg + config.n_test
    if needed > MAX_PREFIXES:
        raise ToolkitError(
            f"prefix space exhausted: {needed} speakers/utterances need more "
            f"than {MAX_PREFIXES} distinct 4-letter prefixes"
        )
    rng = SplitMix64(config.seed)
    block = iter(range(needed))
    train_bl_prefixes = [prefix_for_index(next(block)) for _ in range(nb)]
    dev_bl_prefixes = [prefix_for_index(next(block)) for _ in range(nb)]
    train_bg_prefixes = [prefix_for_index(next(block)) for _ in range(nbg)]
    dev_bg_prefixes = [prefix_for_index(next(block)) for _ in range(nbg)]
    test_prefixes = [prefix_for_index(next(block)) for _ in range(config.n_test)]

    global_ids = [f"{i + 1:08d}" for i in range(nb)]
    registry = SpeakerRegistry(
        RegistryEntry(global_ids[i], dev_bl_prefixes[i], train_bl_prefixes[i])
        for i in range(nb)
    )

    def cluster(center: np.ndarray) -> np.ndarray:
        return center + config.intra_speaker_std * rng.normals(config.dim)

    def fresh_centroid() -> np.ndarray:
        return config.inter_speaker_std * rng.normals(config.dim)

    used_suffixes: dict[str, set[str]] = {}

    def new_id(prefix: str) -> UtteranceId:
        used = used_suffixes.setdefault(prefix, set())
        return UtteranceId(prefix, _draw_suffix(rng, used))

    bl_centroids = [fresh_centroid() for _ in range(nb)]

    train_bl_ids, train_bl_vecs = [], []
    for k in range(nb):
        for _ in range(config.train_utts_per_blacklist):
            train_bl_ids.append(new_id(train_bl_prefixes[k]))
            train_bl_vecs.append(cluster(bl_centroids[k]))

    dev_bl_ids, dev_bl_vecs = [], []
    for k in range(nb):
        dev_bl_ids.append(new_id(dev_bl_prefixes[k]))
        dev_bl_vecs.append(cluster(bl_centroids[k]))

    train_bg_ids, train_bg_vecs = [], []
    for k in range(nbg):
        centroid = fresh_centroid()
        for _ in range(TRAIN_UTTS_PER_BACKGROUND):
            train_bg_ids.append(new_id(train_bg_prefixes[k]))
            train_bg_vecs.append(cluster(centroid))

    dev_bg_ids, dev_bg_vecs = [], []
    for k in range(nbg):
        dev_bg_ids.append(new_id(dev_bg_prefixes[k]))
        dev_bg_vecs.append(cluster(fresh_centroid()))

    test_ids, test_vecs = [], []
    labels: dict[UtteranceId, str | None] = {}
    for j in range(config.n_test):
        uid = new_id(test_prefixes[j])
        if rng.random() < config.test_blacklist_fraction:
            k = rng.randrange(nb)
            test_vecs.append(cluster(bl_centroids[k]))
            labels[uid] = global_ids[k]
        else:
            test_vecs.append(cluster(fresh_centroid()))
            labels[uid] = None
        test_ids.append(uid)

    def dataset(name, ids, vecs, kind):
        return Dataset(name, ids, np.stack(vecs), kind=kind, dim=config.dim)

    return SynthCorpus(
        train_blacklist=dataset("trn_blacklist", train_bl_ids, train_bl_vecs, DatasetKind.BLACKLIST),
        train_background=dataset("trn_background", train_bg_ids, train_bg_vecs, DatasetKind.BACKGROUND),
        dev_blacklist=dataset("dev_blacklist", dev_bl_ids, dev_bl_vecs, DatasetKind.BLACKLIST),
        dev_background=dataset("dev_background", dev_bg_ids, dev_bg_vecs, DatasetKind.BACKGROUND),
        test_mix=dataset("tst_mix", test_ids, test_vecs, DatasetKind.MIXED),
        registry=registry,
        key=GroundTruthKey(labels, registry),
    )


def shuffle_labels(key: GroundTruthKey, seed: int) -> GroundTruthKey:
    """Permute the truth labels across utterances, preserving class counts.

    Decouples labels from scores while keeping the blacklist/background
    composition, which makes any detector perform at chance level on the
    detection task.
    """
    ids = list(key.utterance_ids())
    values = [key.truth(uid) for uid in ids]
    rng = SplitMix64(seed)
    rng.shuffle(values)
    return GroundTruthKey(dict(zip(ids, values)))


def corpus_profiles(config: SynthConfig) -> dict[str, DatasetProfile]:
    """Profiles each generated dataset is guaranteed to satisfy."""
    nb, nbg = config.n_blacklist, config.n_background
    per_bl = config.train_utts_per_blacklist
    return {
        "trn_blacklist": DatasetProfile(nb, per_bl, nb * per_bl),
        "trn_background": DatasetProfile(
            nbg, TRAIN_UTTS_PER_BACKGROUND, nbg * TRAIN_UTTS_PER_BACKGROUND,
            utts_is_minimum=True,
        ),
        "dev_blacklist": DatasetProfile(nb, 1, nb),
        "dev_background": DatasetProfile(nbg, 1, nbg),
    }


def write_corpus(corpus: SynthCorpus, outdir) -> dict[str, Path]:
    """Write the canonical file set into ``outdir`` and return the paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {name: outdir / name for name in CORPUS_FILES}
    write_ivector_csv(corpus.train_blacklist, paths["trn_blacklist.csv"])
    write_ivector_csv(corpus.train_background, paths["trn_background.csv"])
    write_ivector_csv(corpus.dev_blacklist, paths["dev_blacklist.csv"])
    write_ivector_csv(corpus.dev_background, paths["dev_background.csv"])
    write_ivector_csv(corpus.test_mix, paths["tst_mix.csv"])
    write_bl_matching(corpus.registry, paths["bl_matching.csv"])
    write_key(corpus.key, paths["tst_key.csv"])
    return paths
