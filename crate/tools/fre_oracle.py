"""Reference FRE values with syllables from the CMU pronouncing dictionary.

Writes `sentence<TAB>words<TAB>syllables<TAB>fre` rows. Each input line is
one single-sentence text.
"""
import re
import sys

import pronouncing


def syllables(word):
    phones = pronouncing.phones_for_word(word.lower())
    if not phones:
        sys.exit(f"not in dictionary: {word}")
    counts = {pronouncing.syllable_count(p) for p in phones}
    if len(counts) > 1:
        sys.exit(f"ambiguous syllable count for {word}: {sorted(counts)}")
    return counts.pop()


for line in sys.stdin:
    s = line.strip()
    if not s:
        continue
    words = re.findall(r"[A-Za-z]+", s)
    syl = sum(syllables(w) for w in words)
    score = 206.835 - 1.015 * len(words) - 84.6 * syl / len(words)
    print(f"{s}\t{len(words)}\t{syl}\t{score:.6f}")
