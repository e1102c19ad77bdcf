"""Typed heterogeneous graph store, on-disk format, and validation.

A graph lives in a directory: ``meta.json`` (schema, target type, classes,
label mode), one ``edges_<relation>.tsv`` per relation (src<TAB>dst), optional
``features_<type>.bin`` (u64 rows, u64 cols header then float32 payload,
little-endian), ``labels.tsv`` and ``splits.tsv`` over target-type indices.
Graphs are immutable after load.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

ABSENT = None  # featureless node types carry no matrix

SINGLE = "single"
MULTI = "multi"


class GraphError(Exception):
    """Base for all graph format/validation errors."""


class MissingFileError(GraphError):
    pass


class SchemaMismatchError(GraphError):
    pass


class IndexOutOfRangeError(GraphError):
    pass


class OverlappingSplitsError(GraphError):
    pass


class IoFailureError(GraphError):
    pass


@dataclass(frozen=True)
class Relation:
    name: str
    src_type: str
    dst_type: str


@dataclass
class HetGraph:
    node_types: list
    relations: list  # list[Relation]
    node_counts: dict  # type -> int
    edges: dict  # relation name -> (E, 2) int64 array
    features: dict  # type -> float32 matrix, types missing here are ABSENT
    target_type: str
    num_classes: int
    label_mode: str  # SINGLE or MULTI
    labels: np.ndarray  # single: (n,) int64 with -1 = unlabeled; multi: (n, C) uint8
    splits: dict  # "train"/"val"/"test" -> sorted int64 index arrays
    _adjacency: dict = field(default_factory=dict, repr=False)

    @property
    def num_targets(self):
        return self.node_counts[self.target_type]

    def relation(self, name):
        for r in self.relations:
            if r.name == name:
                return r
        raise SchemaMismatchError(f"unknown relation {name!r}")

    def adjacency(self, name):
        """CSR adjacency of one relation; duplicate edges sum to multiplicity."""
        if name not in self._adjacency:
            r = self.relation(name)
            e = self.edges[name]
            shape = (self.node_counts[r.src_type], self.node_counts[r.dst_type])
            if len(e) == 0:
                mat = sp.csr_matrix(shape, dtype=np.int64)
            else:
                mat = sp.coo_matrix(
                    (np.ones(len(e), dtype=np.int64), (e[:, 0], e[:, 1])), shape=shape
                ).tocsr()
            self._adjacency[name] = mat
        return self._adjacency[name]

    def labeled_mask(self):
        if self.label_mode == SINGLE:
            return self.labels >= 0
        return self.labels.sum(axis=1) > 0

    def feature_dim(self, node_type):
        feats = self.features.get(node_type, ABSENT)
        return None if feats is ABSENT else feats.shape[1]


def validate(g: HetGraph):
    """Return a list of human-readable invariant violations (empty = valid)."""
    violations = []
    if len(g.node_types) + len(g.relations) <= 2:
        violations.append(
            f"graph is not heterogeneous: |node types| + |relation types| = "
            f"{len(g.node_types) + len(g.relations)} <= 2"
        )
    known = set(g.node_types)
    for r in g.relations:
        if r.src_type not in known or r.dst_type not in known:
            violations.append(f"relation {r.name!r} references unknown node type")
    for r in g.relations:
        e = g.edges.get(r.name)
        if e is None:
            violations.append(f"relation {r.name!r} has no edge array")
            continue
        if len(e):
            if e.min() < 0:
                violations.append(f"relation {r.name!r} has a negative endpoint")
            if r.src_type in g.node_counts and e[:, 0].max() >= g.node_counts[r.src_type]:
                violations.append(
                    f"relation {r.name!r} has src index {int(e[:, 0].max())} >= "
                    f"{g.node_counts[r.src_type]}"
                )
            if r.dst_type in g.node_counts and e[:, 1].max() >= g.node_counts[r.dst_type]:
                violations.append(
                    f"relation {r.name!r} has dst index {int(e[:, 1].max())} >= "
                    f"{g.node_counts[r.dst_type]}"
                )
    for t, mat in g.features.items():
        if mat is not ABSENT and mat.shape[0] != g.node_counts.get(t, -1):
            violations.append(
                f"features for type {t!r} have {mat.shape[0]} rows, expected "
                f"{g.node_counts.get(t)}"
            )
    n = g.node_counts.get(g.target_type, 0)
    names = ("train", "val", "test")
    for name in names:
        idx = g.splits.get(name, np.empty(0, dtype=np.int64))
        if len(idx) and (idx.min() < 0 or idx.max() >= n):
            violations.append(f"split {name!r} has an index outside [0, {n})")
        dup = idx[np.concatenate(([False], idx[1:] == idx[:-1]))] if len(idx) > 1 else []
        for d in np.unique(dup):
            violations.append(f"split {name!r} repeats index {int(d)}")
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            a, b = g.splits.get(names[i]), g.splits.get(names[j])
            if a is None or b is None:
                continue
            inter = np.intersect1d(a, b)
            for d in inter:
                violations.append(
                    f"index {int(d)} appears in both {names[i]!r} and {names[j]!r}"
                )
    if g.label_mode == SINGLE:
        bad = g.labels[(g.labels < -1) | (g.labels >= g.num_classes)]
        if len(bad):
            violations.append(
                f"single-label values outside [0, {g.num_classes}): {sorted(set(bad.tolist()))}"
            )
    else:
        if g.labels.ndim != 2 or g.labels.shape[1] != g.num_classes:
            violations.append("multi-label matrix shape does not match num_classes")
        elif not np.isin(g.labels, (0, 1)).all():
            violations.append("multi-label entries must be 0/1")
    if g.labels.shape[0] != n:
        violations.append(f"labels cover {g.labels.shape[0]} nodes, expected {n}")
    return violations


def _require(path, kind):
    if not os.path.exists(path):
        raise MissingFileError(f"{kind} not found: {path}")
    return path


def load_graph(dir_path):
    """Load and fully validate a graph directory."""
    meta_path = _require(os.path.join(dir_path, "meta.json"), "meta.json")
    try:
        with open(meta_path) as f:
            meta = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise IoFailureError(f"cannot read {meta_path}: {e}") from e

    node_types = list(meta["node_types"])
    node_counts = {t: int(meta["node_counts"][t]) for t in node_types}
    relations = [Relation(*triple) for triple in meta["relations"]]
    target_type = meta["target_type"]
    num_classes = int(meta["num_classes"])
    label_mode = meta.get("label_mode", SINGLE)
    if target_type not in node_counts:
        raise SchemaMismatchError(f"target type {target_type!r} not declared")
    for r in relations:
        if r.src_type not in node_counts or r.dst_type not in node_counts:
            raise SchemaMismatchError(
                f"relation {r.name!r} references unknown type "
                f"({r.src_type!r} -> {r.dst_type!r})"
            )

    edges = {}
    for r in relations:
        path = _require(
            os.path.join(dir_path, f"edges_{r.name}.tsv"), f"edge file for {r.name!r}"
        )
        if os.path.getsize(path) == 0:
            e = np.empty((0, 2), dtype=np.int64)
        else:
            try:
                raw = np.loadtxt(path, dtype=np.int64, ndmin=2)
            except ValueError as err:
                raise IoFailureError(f"cannot parse {path}: {err}") from err
            e = raw.reshape(-1, 2) if raw.size else np.empty((0, 2), dtype=np.int64)
        if len(e):
            if e.min() < 0 or e[:, 0].max() >= node_counts[r.src_type] or (
                e[:, 1].max() >= node_counts[r.dst_type]
            ):
                raise IndexOutOfRangeError(
                    f"edge file for {r.name!r} references a node index outside its type"
                )
        edges[r.name] = e

    features = {}
    for t in node_types:
        path = os.path.join(dir_path, f"features_{t}.bin")
        if not os.path.exists(path):
            continue
        with open(path, "rb") as f:
            header = np.frombuffer(f.read(16), dtype="<u8")
            if header.size != 2:
                raise IoFailureError(f"truncated feature header in {path}")
            rows, cols = int(header[0]), int(header[1])
            payload = np.frombuffer(f.read(4 * rows * cols), dtype="<f4")
            if payload.size != rows * cols:
                raise IoFailureError(f"truncated feature payload in {path}")
        if rows != node_counts[t]:
            raise SchemaMismatchError(
                f"feature file for {t!r} has {rows} rows, expected {node_counts[t]}"
            )
        features[t] = payload.reshape(rows, cols).astype(np.float32)

    n = node_counts[target_type]
    if label_mode == SINGLE:
        labels = np.full(n, -1, dtype=np.int64)
    else:
        labels = np.zeros((n, num_classes), dtype=np.uint8)
    labels_path = _require(os.path.join(dir_path, "labels.tsv"), "labels.tsv")
    with open(labels_path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            idx_s, value = line.split("\t")
            idx = int(idx_s)
            if idx < 0 or idx >= n:
                raise IndexOutOfRangeError(f"label row for node {idx} out of range")
            if label_mode == SINGLE:
                labels[idx] = int(value)
            else:
                vec = np.array([int(v) for v in value.split(",")], dtype=np.uint8)
                if vec.size != num_classes:
                    raise SchemaMismatchError(
                        f"label vector for node {idx} has {vec.size} entries, "
                        f"expected {num_classes}"
                    )
                labels[idx] = vec

    splits = {"train": [], "val": [], "test": []}
    splits_path = _require(os.path.join(dir_path, "splits.tsv"), "splits.tsv")
    with open(splits_path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            idx_s, name = line.split("\t")
            if name not in splits:
                raise SchemaMismatchError(f"unknown split name {name!r}")
            splits[name].append(int(idx_s))
    splits = {k: np.array(sorted(v), dtype=np.int64) for k, v in splits.items()}

    g = HetGraph(
        node_types=node_types,
        relations=relations,
        node_counts=node_counts,
        edges=edges,
        features=features,
        target_type=target_type,
        num_classes=num_classes,
        label_mode=label_mode,
        labels=labels,
        splits=splits,
    )
    violations = validate(g)
    for v in violations:
        if "appears in both" in v or "repeats index" in v:
            raise OverlappingSplitsError(v)
    for v in violations:
        if "outside" in v or "out of range" in v:
            raise IndexOutOfRangeError(v)
    if violations:
        raise SchemaMismatchError("; ".join(violations))
    return g


def save_graph(g: HetGraph, dir_path):
    """Write a graph directory that load_graph reproduces exactly."""
    try:
        os.makedirs(dir_path, exist_ok=True)
        meta = {
            "node_types": list(g.node_types),
            "node_counts": {t: int(g.node_counts[t]) for t in g.node_types},
            "relations": [[r.name, r.src_type, r.dst_type] for r in g.relations],
            "target_type": g.target_type,
            "num_classes": int(g.num_classes),
            "label_mode": g.label_mode,
        }
        with open(os.path.join(dir_path, "meta.json"), "w") as f:
            json.dump(meta, f, indent=2)
        for r in g.relations:
            with open(os.path.join(dir_path, f"edges_{r.name}.tsv"), "w") as f:
                for s, d in g.edges[r.name]:
                    f.write(f"{int(s)}\t{int(d)}\n")
        for t, mat in g.features.items():
            if mat is ABSENT:
                continue
            with open(os.path.join(dir_path, f"features_{t}.bin"), "wb") as f:
                f.write(np.array(mat.shape, dtype="<u8").tobytes())
                f.write(mat.astype("<f4").tobytes(order="C"))
        with open(os.path.join(dir_path, "labels.tsv"), "w") as f:
            if g.label_mode == SINGLE:
                for i, y in enumerate(g.labels):
                    if y >= 0:
                        f.write(f"{i}\t{int(y)}\n")
            else:
                for i, row in enumerate(g.labels):
                    if row.sum() > 0:
                        f.write(f"{i}\t{','.join(str(int(v)) for v in row)}\n")
        with open(os.path.join(dir_path, "splits.tsv"), "w") as f:
            for name in ("train", "val", "test"):
                for i in g.splits.get(name, ()):
                    f.write(f"{int(i)}\t{name}\n")
    except OSError as e:
        raise IoFailureError(f"cannot write graph to {dir_path}: {e}") from e


def make_graph(
    node_types,
    relations,
    node_counts,
    edges,
    target_type,
    num_classes,
    labels,
    splits,
    features=None,
    label_mode=SINGLE,
):
    """Convenience constructor used by generators and tests; validates."""
    g = HetGraph(
        node_types=list(node_types),
        relations=[r if isinstance(r, Relation) else Relation(*r) for r in relations],
        node_counts=dict(node_counts),
        edges={k: np.asarray(v, dtype=np.int64).reshape(-1, 2) for k, v in edges.items()},
        features={k: np.asarray(v, dtype=np.float32) for k, v in (features or {}).items()},
        target_type=target_type,
        num_classes=num_classes,
        label_mode=label_mode,
        labels=np.asarray(labels, dtype=np.int64 if label_mode == SINGLE else np.uint8),
        splits={k: np.array(sorted(v), dtype=np.int64) for k, v in splits.items()},
    )
    problems = validate(g)
    if problems:
        raise SchemaMismatchError("; ".join(problems))
    return g
