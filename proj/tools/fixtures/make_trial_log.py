#!/usr/bin/env python3
"""Writes fixtures/trial_log.jsonl: the recruitment log of the evaluation trial.

Randomized counts per country and arm, CROM/PROM completion counts and the
per-practice weekly rates are fixed below; everything else (pseudonyms,
dates, which subjects complete which form) is filled in deterministically.
"""
import datetime as dt
import itertools
import json
import pathlib
import random

OUT = pathlib.Path(__file__).resolve().parents[2] / "fixtures" / "trial_log.jsonl"
START = dt.date(2016, 3, 7)

# (practice, country, arm, pair, randomized, weeks); weeks only where paired.
PRACTICES = [
    ("GR-T1", "Greece", "T", "GR1", 30, 7),
    ("GR-T2", "Greece", "T", "GR2", 31, 13),
    ("GR-T3", "Greece", "T", "GR3", 30, 14),
    ("GR-T4", "Greece", "T", "GR4", 31, 9),
    ("PL-T1", "Poland", "T", "PL1", 39, 14),
    ("PL-T2", "Poland", "T", "PL2", 39, 16),
    ("PL-T3", "Poland", "T", "PL3", 39, 16),
    ("PL-T4", "Poland", "T", "PL4", 39, 14),
    ("GR-C1", "Greece", "C", "GR1", 30, 24),
    ("GR-C2", "Greece", "C", "GR2", 30, 19),
    ("GR-C3", "Greece", "C", "GR3", 30, 22),
    ("GR-C4", "Greece", "C", "GR4", 31, 13),
    ("PL-C1", "Poland", "C", "PL1", 44, 15),
    ("PL-C2", "Poland", "C", "PL2", 44, 15),
    ("PL-C3", "Poland", "C", "PL3", 44, 17),
    ("PL-C4", "Poland", "C", "PL4", 45, 11),
    ("NL-T1", "Netherlands", "T", None, 10, None),
    ("NL-C1", "Netherlands", "C", None, 6, None),
    ("UK-T1", "UK", "T", None, 5, None),
    ("UK-C1", "UK", "C", None, 3, None),
]

# Second CROM and PROM take-up per arm; every randomized subject has a first CROM.
CROM2 = {"T": 249, "C": 218}
PROM1 = {"T": 100, "C": 100}
PROM2 = {"T": 61, "C": 100}


def instant(day, minute):
    return f"{day.isoformat()}T{9 + minute // 60:02d}:{minute % 60:02d}"


def main():
    rng = random.Random(2016)
    practice_lines = []
    subjects = {"T": [], "C": []}
    for pid, country, arm, pair, n, weeks in PRACTICES:
        rec = {"practice": pid, "country": country, "arm": arm, "source": "fixture"}
        if pair:
            rec["pair"] = pair
            rec["weeks"] = weeks
        practice_lines.append(rec)
        span_days = 7 * (weeks or 8) - 3
        for i in range(n):
            day = START + dt.timedelta(days=(i * span_days) // max(n - 1, 1))
            subjects[arm].append((pid, country, arm, f"{pid}-{i + 1:04d}", day))

    events = []
    for arm, group in subjects.items():
        crom2 = set(rng.sample(range(len(group)), CROM2[arm]))
        prom1 = rng.sample(range(len(group)), PROM1[arm])
        prom2 = set(rng.sample(prom1, PROM2[arm]))
        prom1 = set(prom1)
        for idx, (pid, country, _, pseudonym, day) in enumerate(group):
            chain = [("Flagged", day, 0), ("Consented", day, 20), ("Randomized", day, 25), ("Crom1", day, 40)]
            if idx in prom1:
                chain.append(("Prom1", day + dt.timedelta(days=1), 0))
            follow = day + dt.timedelta(days=28)
            if idx in crom2:
                chain.append(("Crom2", follow, 30))
            if idx in prom2:
                chain.append(("Prom2", follow + dt.timedelta(days=1), 0))
            for kind, d, minute in chain:
                events.append({"event": kind, "practice": pid, "country": country, "pseudonym": pseudonym,
                               "instant": instant(d, minute), "arm": arm})
    events.sort(key=lambda e: (e["instant"], e["pseudonym"]))

    with OUT.open("w") as out:
        for rec in itertools.chain(practice_lines, events):
            out.write(json.dumps(rec, separators=(",", ":")) + "\n")


if __name__ == "__main__":
    main()
