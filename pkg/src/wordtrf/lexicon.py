"""Phoneme inventory, wordform lexicon, and the phoneme confusion model.

The confusion model is a column-stochastic matrix ``P(perceived | true)``
built from raw transcription count matrices, with unobserved pairs imputed
to a count of 1 before normalization.  A temperature parameter flattens
(``lam > 1``) or sharpens (``lam < 1``) the evidence it contributes; the
tempered likelihood is left unnormalized and is only ever used inside a
posterior that normalizes over candidates.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ValidationError

__all__ = [
    "PhonemeInventory",
    "Lexicon",
    "ConfusionMatrix",
    "build_confusion",
    "concat_confusion_counts",
    "phoneme_likelihood",
    "load_confusion_counts",
    "save_confusion_counts",
    "load_lexicon",
    "save_lexicon",
]


@dataclass(frozen=True)
class PhonemeInventory:
    """Ordered universe of phoneme symbols with a symbol<->index bijection."""

    symbols: tuple[str, ...]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.symbols) == 0:
            raise ValidationError("phoneme inventory is empty")
        if any(not s for s in self.symbols):
            raise ValidationError("phoneme inventory contains an empty symbol")
        index = {s: i for i, s in enumerate(self.symbols)}
        if len(index) != len(self.symbols):
            dupes = sorted({s for s in self.symbols if self.symbols.count(s) > 1})
            raise ValidationError(f"duplicate phoneme symbols: {dupes}")
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._index

    def index(self, symbol: str) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise ValidationError(f"phoneme {symbol!r} not in inventory") from None

    def indices(self, symbols) -> tuple[int, ...]:
        return tuple(self.index(s) for s in symbols)


class Lexicon:
    """Map from wordform to its phoneme sequence (inventory indices).

    Parameters
    ----------
    inventory : PhonemeInventory
        Phoneme universe; every entry's phonemes must come from it.
    entries : dict[str, tuple[int, ...]]
        Wordform -> phoneme index sequence, each of length >= 1.
    """

    def __init__(self, inventory: PhonemeInventory, entries: dict[str, tuple[int, ...]]):
        n = len(inventory)
        for form, seq in entries.items():
            if len(seq) == 0:
                raise ValidationError(f"lexicon entry {form!r} has no phonemes")
            if any(not (0 <= p < n) for p in seq):
                raise ValidationError(f"lexicon entry {form!r} has phoneme index outside inventory")
        self.inventory = inventory
        self.entries = {form: tuple(seq) for form, seq in entries.items()}

    @classmethod
    def from_symbols(cls, inventory: PhonemeInventory, entries: dict[str, list[str]]) -> "Lexicon":
        converted = {}
        for form, symbols in entries.items():
            try:
                converted[form] = inventory.indices(symbols)
            except ValidationError as exc:
                raise ValidationError(f"lexicon entry {form!r}: {exc}") from None
        return cls(inventory, converted)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, form: str) -> bool:
        return form in self.entries

    def phonemes(self, form: str) -> tuple[int, ...]:
        try:
            return self.entries[form]
        except KeyError:
            raise ValidationError(f"wordform {form!r} not in lexicon") from None

    def forms(self) -> list[str]:
        return list(self.entries)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Column-stochastic phoneme confusion probabilities with a temperature.

    ``probs[i, j]`` is P(perceived phoneme i | true phoneme j).  The
    temperature ``lam`` is stored here but applied at likelihood time.
    """

    inventory: PhonemeInventory
    probs: np.ndarray
    lam: float

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        n = len(self.inventory)
        if probs.shape != (n, n):
            raise ValidationError(f"confusion matrix shape {probs.shape} does not match inventory size {n}")
        if not np.all(probs > 0):
            raise ValidationError("confusion matrix has non-positive entries")
        col_sums = probs.sum(axis=0)
        if not np.allclose(col_sums, 1.0, atol=1e-9):
            raise ValidationError("confusion matrix columns do not sum to 1")
        if not (self.lam > 0):
            raise ValidationError(f"temperature must be positive, got {self.lam}")
        object.__setattr__(self, "probs", probs)

    @property
    def log_probs(self) -> np.ndarray:
        return np.log(self.probs)


def build_confusion(counts, labels, lam: float, inventory: PhonemeInventory | None = None) -> ConfusionMatrix:
    """Build a confusion model from a raw square count matrix.

    Zero cells (unobserved confusion pairs) are imputed to a count of 1,
    then each column is normalized into ``P(perceived | true)``.

    Parameters
    ----------
    counts : array_like
        Square matrix of non-negative counts; cell ``[r, c]`` is how often
        phoneme ``labels[r]`` was reported when ``labels[c]`` was spoken.
    labels : sequence of str
        Phoneme symbol per row/column of ``counts``.
    lam : float
        Evidence temperature, stored for likelihood evaluation.
    inventory : PhonemeInventory, optional
        If given, rows/columns are permuted into inventory order; the label
        set must match the inventory exactly.  Otherwise the labels define
        the inventory.

    Returns
    -------
    ConfusionMatrix
    """
    counts = np.asarray(counts, dtype=float)
    labels = list(labels)
    if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
        raise ValidationError(f"confusion counts must be square, got shape {counts.shape}")
    if counts.shape[0] != len(labels):
        raise ValidationError(f"{len(labels)} labels for a {counts.shape[0]}x{counts.shape[1]} count matrix")
    if np.any(counts < 0):
        raise ValidationError("confusion counts must be non-negative")

    if inventory is None:
        inventory = PhonemeInventory(tuple(labels))
        order = np.arange(len(labels))
    else:
        extra = sorted(set(labels) - set(inventory.symbols))
        if extra:
            raise ValidationError(f"confusion labels not in inventory: {extra}")
        missing = sorted(set(inventory.symbols) - set(labels))
        if missing:
            raise ValidationError(f"inventory phonemes missing from confusion data: {missing}")
        pos = {s: i for i, s in enumerate(labels)}
        order = np.array([pos[s] for s in inventory.symbols])

    aligned = counts[np.ix_(order, order)]
    imputed = np.where(aligned == 0, 1.0, aligned)
    probs = imputed / imputed.sum(axis=0, keepdims=True)
    return ConfusionMatrix(inventory=inventory, probs=probs, lam=float(lam))


def concat_confusion_counts(blocks) -> tuple[np.ndarray, list[str]]:
    """Concatenate per-class count matrices into one block-diagonal matrix.

    Cross-class cells are left at 0 so that :func:`build_confusion` imputes
    them to a count of 1 like any other unobserved pair.

    Parameters
    ----------
    blocks : sequence of (counts, labels)
        Independent square count matrices with disjoint label sets.

    Returns
    -------
    counts : np.ndarray
        Combined square count matrix.
    labels : list of str
        Concatenated labels in block order.
    """
    labels: list[str] = []
    sizes = []
    for counts, block_labels in blocks:
        counts = np.asarray(counts)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValidationError(f"confusion count block must be square, got shape {counts.shape}")
        if counts.shape[0] != len(block_labels):
            raise ValidationError("block labels do not match block size")
        sizes.append(counts.shape[0])
        labels.extend(block_labels)
    if len(set(labels)) != len(labels):
        raise ValidationError("confusion blocks share phoneme labels")

    total = sum(sizes)
    combined = np.zeros((total, total))
    offset = 0
    for (counts, _), size in zip(blocks, sizes):
        combined[offset:offset + size, offset:offset + size] = counts
        offset += size
    return combined, labels


def phoneme_likelihood(observed: int, hypothesized: int, cm: ConfusionMatrix) -> float:
    """Tempered likelihood of perceiving ``observed`` given ``hypothesized``.

    Returns ``probs[observed, hypothesized] ** (1 / lam)``; unnormalized by
    design, since it only ever appears inside a normalized posterior.
    """
    n = len(cm.inventory)
    if not (0 <= observed < n and 0 <= hypothesized < n):
        raise ValidationError(f"phoneme index out of range for inventory of size {n}")
    if np.isinf(cm.lam):
        return 1.0
    return float(cm.probs[observed, hypothesized] ** (1.0 / cm.lam))


# ---------------------------------------------------------------------------
# File formats


def load_confusion_counts(path) -> tuple[np.ndarray, list[str]]:
    """Read a confusion count CSV: label header row/column, counts in cells."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValidationError(f"{path}: confusion CSV needs a header row and at least one data row")
    col_labels = [c.strip() for c in rows[0][1:]]
    row_labels = []
    counts = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(col_labels) + 1:
            raise ValidationError(f"{path}:{lineno}: expected {len(col_labels) + 1} cells, got {len(row)}")
        row_labels.append(row[0].strip())
        try:
            counts.append([float(c) for c in row[1:]])
        except ValueError as exc:
            raise ValidationError(f"{path}:{lineno}: {exc}") from None
    if row_labels != col_labels:
        raise ValidationError(f"{path}: row labels do not match column labels")
    return np.asarray(counts), col_labels


def save_confusion_counts(path, counts, labels) -> None:
    counts = np.asarray(counts)
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + list(labels))
        for label, row in zip(labels, counts):
            writer.writerow([label] + [format_count(v) for v in row])


def format_count(v) -> str:
    f = float(v)
    return str(int(f)) if f.is_integer() else repr(f)


def load_lexicon(path, inventory: PhonemeInventory) -> Lexicon:
    """Read a JSON-lines lexicon: one ``{"form", "phonemes"}`` record per line.

    Every phoneme symbol must exist in ``inventory``; a miss is an error
    rather than a silent fallback, since it would corrupt likelihoods.
    """
    path = Path(path)
    entries: dict[str, list[str]] = {}
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
            if "form" not in record or "phonemes" not in record:
                raise ValidationError(f"{path}:{lineno}: record needs 'form' and 'phonemes'")
            form = record["form"]
            if form in entries:
                raise ValidationError(f"{path}:{lineno}: duplicate wordform {form!r}")
            missing = [s for s in record["phonemes"] if s not in inventory]
            if missing:
                raise ValidationError(f"{path}:{lineno}: wordform {form!r} uses phonemes not in inventory: {missing}")
            entries[form] = record["phonemes"]
    return Lexicon.from_symbols(inventory, entries)


def save_lexicon(path, lexicon: Lexicon) -> None:
    path = Path(path)
    with path.open("w") as fh:
        for form, seq in lexicon.entries.items():
            symbols = [lexicon.inventory.symbols[p] for p in seq]
            fh.write(json.dumps({"form": form, "phonemes": symbols}) + "\n")
