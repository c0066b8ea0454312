#!/usr/bin/env python3
"""Recomputes Recall@k, MRR@k and nDCG@k from `cobweb query` output and
compares them with an `cobweb eval` JSON report.

Usage: check_metrics.py RANKINGS.tsv QRELS.tsv REPORT.json [--tol 1e-9]
"""

import argparse
import json
import math
import sys
from collections import defaultdict


def load_rankings(path):
    ranks = defaultdict(list)
    with open(path) as f:
        header = f.readline().rstrip("\n")
        assert header == "query_id\trank\tdoc_id\tscore", header
        for line in f:
            if line.startswith("#"):
                continue
            q, r, d, _ = line.rstrip("\n").split("\t")
            ranks[q].append((int(r), d))
    return {q: [d for _, d in sorted(v)] for q, v in ranks.items()}


def load_qrels(path):
    qrels = defaultdict(dict)
    with open(path) as f:
        for line in f:
            q, d, g = line.rstrip("\n").split("\t")
            qrels[q][d] = int(g)
    return qrels


def metrics(ranking, grades, k, exponential):
    gain = (lambda g: 2.0**g - 1.0) if exponential else float
    relevant = {d for d, g in grades.items() if g > 0}
    top = []
    for d in ranking[:k]:
        if d not in top:
            top.append(d)
    hits = sum(1 for d in top if d in relevant)
    recall = hits / len(relevant)
    mrr = 0.0
    for i, d in enumerate(ranking[:k]):
        if d in relevant:
            mrr = 1.0 / (i + 1)
            break
    dcg = 0.0
    seen = set()
    for i, d in enumerate(ranking[:k]):
        if d in seen:
            continue
        seen.add(d)
        dcg += gain(grades.get(d, 0)) / math.log2(i + 2)
    ideal = sorted((g for g in grades.values() if g > 0), reverse=True)[:k]
    idcg = sum(gain(g) / math.log2(i + 2) for i, g in enumerate(ideal))
    return recall, mrr, dcg / idcg


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("rankings")
    ap.add_argument("qrels")
    ap.add_argument("report")
    ap.add_argument("--tol", type=float, default=1e-9)
    args = ap.parse_args()

    rankings = load_rankings(args.rankings)
    qrels = load_qrels(args.qrels)
    with open(args.report) as f:
        report = json.load(f)
    exponential = report["gain"] == "exponential"
    assert report["query_count"] == len(qrels), (report["query_count"], len(qrels))

    ok = True
    for k_str, got in sorted(report["per_cutoff"].items(), key=lambda kv: int(kv[0])):
        k = int(k_str)
        sums = [0.0, 0.0, 0.0]
        for q, grades in qrels.items():
            for i, v in enumerate(metrics(rankings.get(q, []), grades, k, exponential)):
                sums[i] += v
        want = dict(zip(("recall", "mrr", "ndcg"), (s / len(qrels) for s in sums)))
        for name, value in want.items():
            diff = abs(value - got[name])
            status = "ok" if diff <= args.tol else "MISMATCH"
            ok &= diff <= args.tol
            print(f"{status} k={k} {name}: report {got[name]:.12f} recomputed {value:.12f}")
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    main()
