"""Builds the 100-record augmented corpus used by the format round-trip test.

Records mix awkward content on purpose: embedded plan headers and separator
text, blank lines, non-ASCII, and empty plans.
"""
import json
import random

rng = random.Random(2024)
WORDS = ("cells brain heart naïve café río blood water Planning Questions: q1: "
         "### SUMMARY ### fish ‘quoted’ 50% {document} grow — ⟨x⟩").split(" ")
CATS = ["Background", "Elaboration", "Explanation", "Comparison"]
SPLITS = ["train", "validation", "test"]


def sentence():
    return " ".join(rng.choice(WORDS) for _ in range(rng.randint(3, 12))).strip() + "."


def text(lo, hi):
    parts = [sentence() for _ in range(rng.randint(lo, hi))]
    seps = ["  ", " ", "\n", "\n\n", "\n\nPlanning Questions:\n"]
    out = parts[0]
    for p in parts[1:]:
        out += rng.choice(seps) + p
    if rng.random() < 0.1:
        out += "\n"
    return out


def question():
    q = " ".join(rng.choice(WORDS) for _ in range(rng.randint(2, 9))).strip()
    return q.rstrip("?") + "?"


for i in range(100):
    explanatory = rng.random() < 0.7
    n_q = 0 if i % 10 == 3 else rng.randint(1, 8)
    questions = [
        {
            "text": question(),
            "category": rng.choice(CATS) if explanatory else None,
            "source_target_index": rng.randint(0, 20),
            "order": k,
        }
        for k in range(n_q)
    ]
    rec = {
        "id": f"fmt-{i:03d}",
        "document": text(2, 8),
        "summary": text(1, 4),
        "split": SPLITS[i % 3],
        "plan": {"strategy": "Explanatory" if explanatory else "Lead3", "seed": None, "questions": questions},
        "pairs": [],
        "provenance": "rule-based",
    }
    print(json.dumps(rec, ensure_ascii=False))
