"""Shared fixtures: tiny hand-built linguistic objects and random factories."""

import numpy as np
import pytest

ACCEPTANCE_RESULTS: list[tuple[int, str, bool, str]] = []


def record_acceptance(number: int, name: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE_RESULTS.append((number, name, passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        suffix = f"  ({detail})" if detail else ""
        terminalreporter.write_line(f"ACCEPTANCE {number} {name}: {status}{suffix}")

from wordtrf import (
    AlignedPhoneme,
    AlignedWord,
    CandidateSet,
    Lexicon,
    PhonemeInventory,
    StimulusTranscript,
    build_confusion,
)


@pytest.fixture
def inventory():
    return PhonemeInventory(("k", "a", "t", "b", "s"))


@pytest.fixture
def lexicon(inventory):
    return Lexicon.from_symbols(
        inventory,
        {
            "ka": ["k", "a"],
            "ta": ["t", "a"],
            "kat": ["k", "a", "t"],
            "kab": ["k", "a", "b"],
            "tas": ["t", "a", "s"],
        },
    )


@pytest.fixture
def sharp_cm(inventory):
    """Nearly-diagonal confusion: off-diagonal mass only from imputation."""
    n = len(inventory)
    return build_confusion(np.eye(n) * 90, inventory.symbols, lam=1.0, inventory=inventory)


@pytest.fixture
def noisy_cm(inventory):
    n = len(inventory)
    counts = np.full((n, n), 10.0)
    counts[np.diag_indices(n)] = 30.0
    return build_confusion(counts, inventory.symbols, lam=1.0, inventory=inventory)


def random_lexicon(rng, inventory_size=6, n_words=20, max_len=5, prefix_free=False):
    """Random lexicon with distinct pronunciations (optionally prefix-free)."""
    symbols = tuple(f"p{i}" for i in range(inventory_size))
    inv = PhonemeInventory(symbols)
    seqs = []
    seen = set()
    while len(seqs) < n_words:
        length = int(rng.integers(1, max_len + 1))
        seq = tuple(int(v) for v in rng.integers(0, inventory_size, size=length))
        if seq in seen:
            continue
        if prefix_free and any(s[: len(seq)] == seq or seq[: len(s)] == s for s in seen):
            continue
        seen.add(seq)
        seqs.append(seq)
    entries = {f"w{i}": seq for i, seq in enumerate(seqs)}
    return inv, Lexicon(inv, entries)


def random_candidates(rng, lexicon, token_index=0, n_candidates=None):
    """Candidate set over a random subset of the lexicon with Dirichlet priors."""
    forms = lexicon.forms()
    if n_candidates is None:
        n_candidates = int(rng.integers(2, min(len(forms), 12) + 1))
    chosen = [forms[int(i)] for i in rng.choice(len(forms), size=n_candidates, replace=False)]
    priors = rng.dirichlet(np.ones(n_candidates)) * 0.95
    truth = chosen[int(rng.integers(n_candidates))]
    return CandidateSet(token_index, chosen, priors, truth)


def random_confusion(rng, inventory, lam=1.0):
    n = len(inventory)
    counts = rng.integers(0, 20, size=(n, n)).astype(float)
    counts[np.diag_indices(n)] += rng.integers(20, 60, size=n)
    return build_confusion(counts, inventory.symbols, lam=lam, inventory=inventory)


def direct_double_sum(theta, layout, x):
    """Literal evaluation of the lagged response, quadruple loop."""
    n_sensors = theta.shape[1]
    n_samples = x.shape[1]
    y = np.zeros((n_sensors, n_samples))
    for f in range(layout.n_features):
        base = layout.offsets[f]
        for s in range(n_sensors):
            for t in range(n_samples):
                for d in range(layout.n_lags(f)):
                    if t - d >= 0:
                        y[s, t] += theta[base + d, s] * x[f, t - d]
    return y


def word_from_sequence(lexicon, form, token_index=0, onset_s=0.2, dur_s=0.08):
    """Aligned word with uniform phoneme durations for timing-light tests."""
    seq = lexicon.phonemes(form)
    phonemes = tuple(
        AlignedPhoneme(
            symbol=lexicon.inventory.symbols[p],
            onset_s=i * dur_s,
            duration_s=dur_s,
        )
        for i, p in enumerate(seq)
    )
    return AlignedWord(token_index=token_index, form=form, onset_s=onset_s, phonemes=phonemes)


def toy_transcript(lexicon, forms, gap_s=0.1, dur_s=0.08):
    words = []
    clock = 0.1
    for i, form in enumerate(forms):
        w = word_from_sequence(lexicon, form, token_index=i, onset_s=clock, dur_s=dur_s)
        words.append(w)
        clock += w.duration_s + gap_s
    return StimulusTranscript(words)
