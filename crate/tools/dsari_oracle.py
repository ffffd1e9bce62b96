"""Independent D-SARI trace in the style of the original SARI script.

Counter arithmetic (`&` = min, `-` = positive difference) with a single
reference, so the reference-count replication of the multi-reference code
drops out. Sentences are split with a plain regex rather than the crate's
segmenter; the example texts avoid abbreviations so the two agree.
"""
import math
import re
import sys
from collections import Counter


def ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def order(s, c, r, n):
    sg, cg, rg = ngrams(s, n), ngrams(c, n), ngrams(r, n)

    keep = sg & cg
    keep_good = keep & rg
    keep_all = sg & rg
    kp = sum(keep_good[k] / keep[k] for k in keep) / len(keep) if keep else 0.0
    kr = sum(keep_good[k] / keep_all[k] for k in keep_good) / len(keep_all) if keep_all else 0.0
    kf = 2 * kp * kr / (kp + kr) if kp + kr > 0 else 0.0

    dele = sg - cg
    del_good = dele - rg
    dp = sum(del_good[k] / dele[k] for k in dele) / len(dele) if dele else 0.0

    add = set(cg) - set(sg)
    add_good = add & set(rg)
    add_all = set(rg) - set(sg)
    ap = len(add_good) / len(add) if add else 0.0
    ar = len(add_good) / len(add_all) if add_all else 0.0
    af = 2 * ap * ar / (ap + ar) if ap + ar > 0 else 0.0
    return kf, dp, af


def sentences(text):
    return len([x for x in re.split(r"(?<=[.!?])\s+", text.strip()) if x])


def d_sari(source, candidate, reference):
    s, c, r = (t.lower().split() for t in (source, candidate, reference))
    rows = [order(s, c, r, n) for n in range(1, 5)]
    keep, dele, add = (sum(x[i] for x in rows) / 4 for i in range(3))
    o, rl, i = len(c), len(r), len(s)
    lp1 = 1.0 if o >= rl else math.exp((o - rl) / o)
    lp2 = 1.0 if o <= rl else math.exp((rl - o) / max(i - rl, 1))
    so, sr = sentences(candidate), sentences(reference)
    slp = math.exp(-abs(sr - so) / max(sr, so))
    score = 100 * (keep * lp2 * slp + dele * lp2 + add * lp1) / 3
    return rows, dict(O=o, R=rl, I=i, So=so, Sr=sr, keep=keep, delete=dele, add=add,
                      lp1=lp1, lp2=lp2, slp=slp, score=score)


if __name__ == "__main__":
    source, candidate, reference = (l.rstrip("\n") for l in sys.stdin.readlines()[:3])
    rows, out = d_sari(source, candidate, reference)
    for n, (k, d, a) in enumerate(rows, 1):
        print(f"n={n}\tkeep={k:.10f}\tdelete={d:.10f}\tadd={a:.10f}")
    for k, v in out.items():
        print(f"{k}\t{v:.10f}" if isinstance(v, float) else f"{k}\t{v}")
