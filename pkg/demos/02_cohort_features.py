"""Phoneme-level predictability from lexical cohorts.

As phonemes arrive, the set of words compatible with the prefix (the
cohort) shrinks, and renormalizing a contextual word prior over the cohort
yields a next-phoneme distribution.  Its entropy and the surprisal of the
true next phoneme are the sublexical control features used by the neural
models.
"""

import numpy as np

from wordtrf import (
    CandidateSet,
    Lexicon,
    PhonemeInventory,
    advance_cohort,
    next_phoneme_dist,
    onset_cohort,
    phoneme_surprisal_entropy,
)

inventory = PhonemeInventory(("k", "ae", "t", "b", "s", "i"))
lexicon = Lexicon.from_symbols(
    inventory,
    {
        "cat": ["k", "ae", "t"],
        "cab": ["k", "ae", "b"],
        "cask": ["k", "ae", "s", "k"],
        "kit": ["k", "i", "t"],
        "tab": ["t", "ae", "b"],
        "sit": ["s", "i", "t"],
    },
)
cands = CandidateSet(
    token_index=0,
    forms=["cat", "cab", "cask", "kit", "tab", "sit"],
    priors=[0.30, 0.25, 0.15, 0.10, 0.12, 0.07],
    ground_truth="cat",
)

state = onset_cohort(cands, lexicon)
print("hearing 'cat' phoneme by phoneme:\n")
for truth in lexicon.phonemes("cat"):
    dist = next_phoneme_dist(state, lexicon)
    surprisal, entropy = phoneme_surprisal_entropy(state, truth, lexicon)
    top = {inventory.symbols[i]: round(float(p), 3) for i, p in enumerate(dist) if p > 0}
    print(f"cohort {sorted(state.forms)}")
    print(f"  next-phoneme distribution: {top}")
    print(f"  true next = {inventory.symbols[truth]!r}: surprisal {surprisal:.2f} bits, entropy {entropy:.2f} bits\n")
    state = advance_cohort(state, truth, lexicon)

# The chain rule: multiplying the per-phoneme probabilities along a word
# recovers its share of the onset-cohort prior mass (here there are no
# words that are prefixes of other words, so the product telescopes).
state = onset_cohort(cands, lexicon)
product = 1.0
for truth in lexicon.phonemes("cask"):
    product *= float(next_phoneme_dist(state, lexicon)[truth])
    state = advance_cohort(state, truth, lexicon)
expected = 0.15 / np.sum(cands.priors)
print(f"chain-rule check for 'cask': product {product:.6f} vs renormalized prior {expected:.6f}")
