#!/usr/bin/env python3
"""Convert the classic citation-network text distribution (cora.content +
cora.cites, same layout for citeseer) into a graph bundle directory.

Input format, one line per paper:
  <name>.content: <paper_id> <d binary word features> <class name>
  <name>.cites:   <cited_paper_id> <citing_paper_id>

Node ids follow content-file order. Citation pairs are deduplicated as
undirected edges, self-citations dropped; for Cora this yields 2708 nodes
and 5278 edges. Split: the first 20 nodes of each class (content order) are
train, the next 500 remaining nodes are val, everything else is test. This
mirrors the usual semi-supervised split sizes without requiring the binary
split files.

Usage: convert_planetoid.py <content_file> <cites_file> <out_bundle_dir>
"""

import sys
from pathlib import Path

import numpy as np

from ingsl.graph import Graph, canonical_edges, save_bundle

TRAIN_PER_CLASS = 20
VAL_COUNT = 500


def convert(content_path: str, cites_path: str, out_dir: str) -> Graph:
    ids: list[str] = []
    rows: list[list[float]] = []
    names: list[str] = []
    for line in Path(content_path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        ids.append(parts[0])
        rows.append([float(v) for v in parts[1:-1]])
        names.append(parts[-1])
    index = {pid: i for i, pid in enumerate(ids)}
    classes = sorted(set(names))
    label_of = {c: i for i, c in enumerate(classes)}
    labels = np.array([label_of[c] for c in names], dtype=np.int64)
    features = np.array(rows, dtype=np.float64)
    n = len(ids)

    pairs = []
    skipped = 0
    for line in Path(cites_path).read_text().splitlines():
        parts = line.split()
        if len(parts) != 2:
            continue
        a, b = index.get(parts[0]), index.get(parts[1])
        if a is None or b is None or a == b:
            skipped += 1
            continue
        pairs.append((a, b))
    edges = canonical_edges(pairs, n)

    train = np.zeros(n, dtype=bool)
    for c in range(len(classes)):
        train[np.flatnonzero(labels == c)[:TRAIN_PER_CLASS]] = True
    rest = np.flatnonzero(~train)
    val = np.zeros(n, dtype=bool)
    val[rest[: min(VAL_COUNT, max(1, rest.size - 1))]] = True  # keep test non-empty
    test = ~(train | val)

    g = Graph(
        features=features,
        labels=labels,
        edges=edges,
        train_mask=train,
        val_mask=val,
        test_mask=test,
        classes=len(classes),
    )
    save_bundle(g, out_dir)
    print(
        f"wrote {out_dir}: n={g.n}, edges={g.num_edges}, d={g.d}, "
        f"classes={g.classes} ({skipped} citation lines skipped)"
    )
    return g


if __name__ == "__main__":
    if len(sys.argv) != 4:
        print(__doc__)
        sys.exit(1)
    convert(sys.argv[1], sys.argv[2], sys.argv[3])
