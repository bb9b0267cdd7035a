"""Walk through the incremental word-recognition model on a toy lexicon.

A listener hears "cat" one phoneme at a time.  Their belief starts at the
contextual prior and sharpens with each phoneme according to a noisy
phoneme-confusion channel; the word counts as recognized once the belief
clears a threshold, and the recognition time lands a fraction of the way
into that phoneme.
"""

import numpy as np

from wordtrf import (
    CandidateSet,
    CognitiveParams,
    Lexicon,
    PhonemeInventory,
    StimulusTranscript,
    build_confusion,
    posterior_trajectory,
    recognition_point,
    recognition_time,
    recognize_transcript,
)
from wordtrf.transcript import AlignedPhoneme, AlignedWord

# ---------------------------------------------------------------------------
# A five-phoneme inventory and a handful of words that share onsets.

inventory = PhonemeInventory(("k", "ae", "t", "b", "s"))
lexicon = Lexicon.from_symbols(
    inventory,
    {
        "cat": ["k", "ae", "t"],
        "cab": ["k", "ae", "b"],
        "cask": ["k", "ae", "s", "k"],
        "tab": ["t", "ae", "b"],
        "sat": ["s", "ae", "t"],
    },
)

# Confusion counts: mostly correct transcriptions, some k/t mixups.
counts = np.array(
    [
        [90,  2,  8,  1,  2],
        [ 2, 95,  2,  2,  2],
        [ 8,  1, 85,  4,  3],
        [ 1,  1,  3, 92,  1],
        [ 1,  1,  2,  1, 92],
    ]
)
cm = build_confusion(counts, inventory.symbols, lam=1.0)

# The context makes "cab" most expected, with "cat" an underdog.
cands = CandidateSet(
    token_index=0,
    forms=["cat", "cab", "cask", "tab", "sat"],
    priors=[0.15, 0.45, 0.20, 0.10, 0.05],
    ground_truth="cat",
)

print("Posterior on the true word 'cat' after each phoneme:")
traj = posterior_trajectory(cands, lexicon.phonemes("cat"), cm, lexicon)
for k, mass in enumerate(traj):
    heard = "".join(inventory.symbols[p] for p in lexicon.phonemes("cat")[:k]) or "(nothing)"
    print(f"  k={k}  heard {heard:>8}   P(cat) = {mass:.3f}")

for gamma in (0.3, 0.6, 0.9):
    k_star = recognition_point(cands, cm, lexicon, gamma)
    print(f"threshold {gamma:.1f} -> recognition point k* = {k_star}")

# ---------------------------------------------------------------------------
# Turning a recognition point into a recognition time needs phoneme timing.

onsets = np.array([0.00, 0.09, 0.21])
durations = np.array([0.09, 0.12, 0.08])
for k_star in (0, 2, 3):
    tau = recognition_time(k_star, onsets, durations, alpha=0.5, alpha_p=0.5)
    print(f"k* = {k_star}: recognized {tau * 1000:.0f} ms after word onset")

# ---------------------------------------------------------------------------
# The same machinery over a (one-word) transcript, as the pipeline runs it.

word = AlignedWord(
    token_index=0,
    form="cat",
    onset_s=1.0,
    phonemes=tuple(
        AlignedPhoneme(symbol=s, onset_s=o, duration_s=d)
        for s, o, d in zip(["k", "ae", "t"], onsets, durations)
    ),
)
params = CognitiveParams(gamma=0.6, lam=1.0, alpha=0.5, alpha_p=0.5)
[result] = recognize_transcript(StimulusTranscript([word]), {0: cands}, params, cm, lexicon)
print(
    f"transcript run: k*={result.k_star}, tau={result.tau_s * 1000:.0f} ms, "
    f"threshold_reached={result.threshold_reached}"
)
