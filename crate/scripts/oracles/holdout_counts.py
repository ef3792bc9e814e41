#!/usr/bin/env python3
"""Count the per-user most-recent holdout over u.data with exact rationals.

holdout(n) = ceil(n * fraction); a user whose holdout would leave nothing for
training contributes zero test events.
"""
import collections
import fractions
import math
import sys

path = sys.argv[1] if len(sys.argv) > 1 else "data/ml-100k/u.data"
frac = fractions.Fraction(sys.argv[2] if len(sys.argv) > 2 else "0.2")
per_user = collections.Counter()
with open(path) as fh:
    for line in fh:
        if line.strip():
            per_user[line.split("\t")[0]] += 1

test = 0
excluded = 0
for n in per_user.values():
    h = math.ceil(n * frac)
    if n - h < 1:
        excluded += 1
        continue
    test += h
total = sum(per_user.values())
print(f"users={len(per_user)} events={total} test={test} train={total - test} excluded={excluded}")
