"""Force-aligned stimulus transcripts: word and phoneme timing.

Phoneme onsets are stored relative to their word's onset.  Acoustic control
values (envelope variance, eight spectral-band powers) arrive pre-averaged
per phoneme span; no audio processing happens here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ValidationError

N_SPECTRAL_BANDS = 8

__all__ = ["AlignedPhoneme", "AlignedWord", "StimulusTranscript", "load_transcript", "save_transcript"]


@dataclass(frozen=True)
class AlignedPhoneme:
    symbol: str
    onset_s: float      # relative to word onset
    duration_s: float
    envelope_var: float = 0.0
    spectral: tuple[float, ...] = (0.0,) * N_SPECTRAL_BANDS

    def __post_init__(self):
        if self.duration_s < 0:
            raise ValidationError(f"phoneme {self.symbol!r} has negative duration {self.duration_s}")
        if self.onset_s < 0:
            raise ValidationError(f"phoneme {self.symbol!r} has negative onset {self.onset_s}")
        if len(self.spectral) != N_SPECTRAL_BANDS:
            raise ValidationError(f"phoneme {self.symbol!r} has {len(self.spectral)} spectral bands, expected {N_SPECTRAL_BANDS}")


@dataclass(frozen=True)
class AlignedWord:
    token_index: int
    form: str
    onset_s: float
    phonemes: tuple[AlignedPhoneme, ...]

    def __post_init__(self):
        if not self.phonemes:
            raise ValidationError(f"token {self.token_index} ({self.form!r}) has no phonemes")
        onsets = [p.onset_s for p in self.phonemes]
        if any(b <= a for a, b in zip(onsets, onsets[1:])):
            raise ValidationError(f"token {self.token_index} ({self.form!r}) has non-increasing phoneme onsets")

    @property
    def duration_s(self) -> float:
        last = self.phonemes[-1]
        return last.onset_s + last.duration_s

    def phoneme_onsets(self) -> np.ndarray:
        return np.array([p.onset_s for p in self.phonemes])

    def phoneme_durations(self) -> np.ndarray:
        return np.array([p.duration_s for p in self.phonemes])


class StimulusTranscript:
    """Sequence of force-aligned words, sorted by onset.

    Words are reordered by onset at construction so downstream feature
    builders are stable under input record order; token indices must be
    unique.
    """

    def __init__(self, words):
        words = sorted(words, key=lambda w: (w.onset_s, w.token_index))
        indices = [w.token_index for w in words]
        if len(set(indices)) != len(indices):
            raise ValidationError("transcript has duplicate token indices")
        self.words: tuple[AlignedWord, ...] = tuple(words)
        self._by_index = {w.token_index: w for w in words}

    def __len__(self) -> int:
        return len(self.words)

    def __iter__(self):
        return iter(self.words)

    def word(self, token_index: int) -> AlignedWord:
        try:
            return self._by_index[token_index]
        except KeyError:
            raise ValidationError(f"token index {token_index} not in transcript") from None

    @property
    def end_s(self) -> float:
        if not self.words:
            return 0.0
        return max(w.onset_s + w.duration_s for w in self.words)


def load_transcript(path) -> StimulusTranscript:
    """Read a JSON-lines transcript, one word record per line."""
    path = Path(path)
    words = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                phonemes = tuple(
                    AlignedPhoneme(
                        symbol=p["symbol"],
                        onset_s=float(p["onset_s"]),
                        duration_s=float(p["duration_s"]),
                        envelope_var=float(p.get("envelope_var", 0.0)),
                        spectral=tuple(float(v) for v in p.get("spectral", (0.0,) * N_SPECTRAL_BANDS)),
                    )
                    for p in record["phonemes"]
                )
                words.append(
                    AlignedWord(
                        token_index=int(record["token_index"]),
                        form=record["form"],
                        onset_s=float(record["onset_s"]),
                        phonemes=phonemes,
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ValidationError(f"{path}:{lineno}: bad transcript record: {exc}") from None
    return StimulusTranscript(words)


def save_transcript(path, transcript: StimulusTranscript) -> None:
    path = Path(path)
    with path.open("w") as fh:
        for word in transcript:
            record = {
                "token_index": word.token_index,
                "form": word.form,
                "onset_s": word.onset_s,
                "phonemes": [
                    {
                        "symbol": p.symbol,
                        "onset_s": p.onset_s,
                        "duration_s": p.duration_s,
                        "envelope_var": p.envelope_var,
                        "spectral": list(p.spectral),
                    }
                    for p in word.phonemes
                ],
            }
            fh.write(json.dumps(record) + "\n")
