"""Reference ROUGE-2 / ROUGE-Lsum values from the `rouge-score` package.

Emits JSONL rows {candidate, reference, rouge2, rouge_lsum} for random small
pairs. Sentences are capitalized and period-terminated for the crate and with newlines for
rouge-score, which splits Lsum sentences on newlines. Stemming is off: the
package uses Porter, the crate Snowball.
"""
import json
import random
import sys

from rouge_score import rouge_scorer

VOCAB = "cells brain heart blood water fish grow move fast slow the a of in".split()


def text(rng):
    n_sent = rng.randint(1, 3)
    budget = rng.randint(n_sent, 20)
    cuts = sorted(rng.sample(range(1, budget), n_sent - 1)) if n_sent > 1 else []
    bounds = [0] + cuts + [budget]
    return [" ".join(rng.choice(VOCAB) for _ in range(b - a)) for a, b in zip(bounds, bounds[1:])]


def crate_text(sentences):
    # Capitalized so the segmenter sees sentence starts.
    return " ".join(s[0].upper() + s[1:] + "." for s in sentences)


def main(n, seed):
    rng = random.Random(seed)
    scorer = rouge_scorer.RougeScorer(["rouge2", "rougeLsum"], use_stemmer=False)
    for _ in range(n):
        c, r = text(rng), text(rng)
        s = scorer.score("\n".join(r), "\n".join(c))
        print(json.dumps({
            "candidate": crate_text(c),
            "reference": crate_text(r),
            "rouge2": s["rouge2"].fmeasure,
            "rouge_lsum": s["rougeLsum"].fmeasure,
        }))


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 25, 2024)
