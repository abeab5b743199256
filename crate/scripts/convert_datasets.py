#!/usr/bin/env python3
"""Convert raw Cora / CiteSeer files into the edge-list + label TSV layout.

Raw inputs are the files shipped under ``pgl/data/`` in the PGL 2.2.6 wheel
(pgl-2.2.6-cp310-cp310-manylinux1_x86_64.whl):

  cora/cora.cites, cora/cora.content          (LINQS release)
  citeseer/ind.citeseer.{ally,ty,graph,test.index}   (Planetoid release)

Usage: convert_datasets.py RAW_DIR OUT_DIR
"""
import os
import pickle
import sys

import numpy as np


def write(out_dir, name, edges, labels):
    path = os.path.join(out_dir, name)
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, "edges.tsv"), "w") as f:
        f.write(f"# {name}: undirected edges, 0-indexed\n")
        for a, b in sorted(edges):
            f.write(f"{a}\t{b}\n")
    with open(os.path.join(path, "labels.tsv"), "w") as f:
        for i, c in enumerate(labels):
            f.write(f"{i}\t{c}\n")
    print(name, "nodes", len(labels), "undirected edges", len(edges), "classes", max(labels) + 1)


def cora(raw, out):
    ids, names = [], []
    with open(os.path.join(raw, "cora", "cora.content")) as f:
        for line in f:
            parts = line.split()
            ids.append(parts[0])
            names.append(parts[-1])
    index = {pid: i for i, pid in enumerate(ids)}
    classes = {c: k for k, c in enumerate(sorted(set(names)))}
    labels = [classes[c] for c in names]
    edges = set()
    with open(os.path.join(raw, "cora", "cora.cites")) as f:
        for line in f:
            a, b = line.split()
            i, j = index[a], index[b]
            if i != j:
                edges.add((min(i, j), max(i, j)))
    write(out, "cora", edges, labels)


def load_pickle(path):
    with open(path, "rb") as f:
        return pickle.load(f, encoding="latin1")


def citeseer(raw, out):
    base = os.path.join(raw, "citeseer", "ind.citeseer.")
    ally = load_pickle(base + "ally")
    ty = load_pickle(base + "ty")
    graph = load_pickle(base + "graph")
    test_index = [int(x) for x in open(base + "test.index")]
    sorted_test = sorted(test_index)
    # Isolated test nodes missing from the release get all-zero label rows.
    span = sorted_test[-1] - sorted_test[0] + 1
    ty_ext = np.zeros((span, ty.shape[1]))
    ty_ext[np.array(sorted_test) - sorted_test[0], :] = ty
    y = np.vstack([ally, ty_ext])
    y[test_index, :] = y[sorted_test, :]
    labels = [int(v) for v in y.argmax(1)]
    n = len(labels)
    edges = set()
    for i, nbrs in graph.items():
        for j in nbrs:
            if i != j and i < n and j < n:
                edges.add((min(i, j), max(i, j)))
    write(out, "citeseer", edges, labels)


if __name__ == "__main__":
    raw_dir, out_dir = sys.argv[1], sys.argv[2]
    cora(raw_dir, out_dir)
    citeseer(raw_dir, out_dir)
