#!/usr/bin/env python3
"""Writes the small clustered fixture used by the CLI integration tests.

The embedding files are produced here with numpy and struct rather than by
the Rust writer, so reading them back in Rust also checks the file format.
"""

import argparse
import struct
from pathlib import Path

import numpy as np

N_DOCS = 200
N_QUERIES = 40
N_CLUSTERS = 8
LATENT = 8
DIM = 24
TOP_GRADE = 5


def write_embeddings(path: Path, ids, rows: np.ndarray) -> None:
    rows = np.ascontiguousarray(rows, dtype="<f4")
    header = b"CWEB" + struct.pack("<IQIB", 1, rows.shape[0], rows.shape[1], 0)
    path.write_bytes(header + rows.tobytes())
    Path(str(path) + ".ids").write_text("".join(f"{i}\n" for i in ids))


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("out", type=Path)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)

    centers = rng.normal(0.0, 3.0, size=(N_CLUSTERS, LATENT))
    # Anisotropic mixing plus an offset so whitening has real work to do.
    mix = rng.normal(size=(LATENT, DIM)) * np.linspace(0.2, 4.0, DIM)
    offset = rng.normal(0.0, 5.0, size=DIM)

    def sample(labels):
        z = centers[labels] + rng.normal(0.0, 0.6, size=(len(labels), LATENT))
        return z @ mix + offset + rng.normal(0.0, 0.05, size=(len(labels), DIM))

    doc_labels = np.arange(N_DOCS) % N_CLUSTERS
    query_labels = np.arange(N_QUERIES) % N_CLUSTERS
    docs = sample(doc_labels)
    queries = sample(query_labels)
    doc_ids = [f"doc{i:03d}" for i in range(N_DOCS)]
    query_ids = [f"qry{j:02d}" for j in range(N_QUERIES)]

    write_embeddings(args.out / "corpus.cweb", doc_ids, docs)
    write_embeddings(args.out / "queries.cweb", query_ids, queries)

    lines = []
    for j, label in enumerate(query_labels):
        members = np.flatnonzero(doc_labels == label)
        dist = np.linalg.norm(docs[members] - queries[j], axis=1)
        top = set(members[np.argsort(dist, kind="stable")[:TOP_GRADE]])
        for m in members:
            lines.append(f"{query_ids[j]}\t{doc_ids[m]}\t{2 if m in top else 1}\n")
    (args.out / "qrels.tsv").write_text("".join(lines))

    (args.out / "docs.tsv").write_text(
        "".join(f"{doc_ids[i]}\ttopic {doc_labels[i]} passage {i}\n" for i in range(N_DOCS))
    )


if __name__ == "__main__":
    main()
