"""Synthetic graphs and simulations that make the constructive theory runnable.

Three families: the two-class author/paper separation construction (identical
features, class structure carried only by co-paper counts), clique-based
label injection with a swap ratio for homophily sweeps, and the closed-form
heterophily-bias simulation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import MULTI, HetGraph, Relation, make_graph
from .metapaths import build_induced_graph, parse_metapath


class ConfigError(ValueError):
    pass


class SameClassPairRequiredError(ConfigError):
    pass


HIGH = "high"
LOW = "low"


@dataclass
class Theorem1Config:
    n: int  # authors per class
    m_same: int  # co-papers on designated same-label pairs
    m_diff: int  # co-papers on designated cross-label pairs
    feat_dim: int = 8


@dataclass
class SbmInjectConfig:
    base: HetGraph
    metapaths: list  # metapath strings or Metapath objects
    rho: float
    mode: str = LOW
    seed: int = 0


def gen_theorem1(cfg: Theorem1Config):
    """Author/paper graph with identical author features and count asymmetry.

    Baseline wiring: paper p_i links exactly one class-0 and one class-1
    author, so every author has an isomorphic typed rooted neighborhood.
    Extra papers realize co-paper counts m_same on the designated same-label
    cycle pairs (a_i, a_{i+1}) / (b_i, b_{i+1}) and m_diff on the cross pairs
    (a_i, b_i). Splits interleave [train, train, val, test] around each cycle.
    """
    n, m_same, m_diff = cfg.n, cfg.m_same, cfg.m_diff
    if not (m_same > m_diff >= 1):
        raise ConfigError(f"need m_same > m_diff >= 1, got {m_same}, {m_diff}")
    if n < 2:
        raise SameClassPairRequiredError(
            "n >= 2 required: n=1 leaves no same-label author pair to separate"
        )
    n_authors = 2 * n
    a = np.arange(n)  # class 0
    b = np.arange(n, 2 * n)  # class 1

    writes = []  # (author, paper)
    papers = 0

    def add_paper(members):
        nonlocal papers
        pid = papers
        papers += 1
        for m in members:
            writes.append((m, pid))

    for i in range(n):  # baseline: one mixed paper per cross pair
        add_paper((a[i], b[i]))
    for i in range(n):  # same-label cycle pairs
        for _ in range(m_same):
            add_paper((a[i], a[(i + 1) % n]))
            add_paper((b[i], b[(i + 1) % n]))
    for i in range(n):  # top up cross pairs to m_diff
        for _ in range(m_diff - 1):
            add_paper((a[i], b[i]))

    writes = np.array(writes, dtype=np.int64)
    labels = np.concatenate([np.zeros(n, dtype=np.int64), np.ones(n, dtype=np.int64)])
    splits = {"train": [], "val": [], "test": []}
    for cls_idx in (a, b):
        for j, node in enumerate(cls_idx):
            splits[("train", "train", "val", "test")[j % 4]].append(int(node))

    x0 = np.ones(cfg.feat_dim, dtype=np.float32)
    features = {"author": np.tile(x0, (n_authors, 1))}  # papers stay featureless

    return make_graph(
        node_types=["author", "paper"],
        relations=[
            Relation("writes", "author", "paper"),
            Relation("writes_rev", "paper", "author"),
        ],
        node_counts={"author": n_authors, "paper": papers},
        edges={"writes": writes, "writes_rev": writes[:, ::-1]},
        target_type="author",
        num_classes=2,
        labels=labels,
        splits=splits,
        features=features,
    )


def gen_clustered(
    n_cliques=100,
    clique_size=3,
    same_frac=0.7,
    n_classes=4,
    feat_dim=8,
    feat_mode="class",
    seed=0,
    train_frac=0.5,
    val_frac=0.25,
):
    """Homophily-controlled base: disjoint author groups sharing one hub paper.

    A fraction same_frac of the cliques is single-class; the rest mix two
    classes (size-1 minority), giving a global metapath homophily of
    same_frac + (1 - same_frac) * within-mixed-fraction. feat_mode 'class'
    gives noisy class-indicator features, 'constant' an identical vector.
    """
    rng = np.random.default_rng(seed)
    n_target = n_cliques * clique_size
    labels = np.zeros(n_target, dtype=np.int64)
    writes = []
    for k in range(n_cliques):
        members = np.arange(k * clique_size, (k + 1) * clique_size)
        base_class = int(rng.integers(n_classes))
        labels[members] = base_class
        if rng.random() >= same_frac:
            other = int((base_class + 1 + rng.integers(n_classes - 1)) % n_classes)
            labels[members[-1]] = other
        for m in members:
            writes.append((m, k))
    writes = np.array(writes, dtype=np.int64)

    if feat_mode == "constant":
        features = np.tile(np.ones(feat_dim, dtype=np.float32), (n_target, 1))
    else:
        eye = np.eye(n_classes, feat_dim, dtype=np.float32)
        features = eye[labels] + 0.3 * rng.standard_normal((n_target, feat_dim)).astype(
            np.float32
        )

    order = rng.permutation(n_target)
    n_tr = int(train_frac * n_target)
    n_va = int(val_frac * n_target)
    splits = {
        "train": order[:n_tr],
        "val": order[n_tr : n_tr + n_va],
        "test": order[n_tr + n_va :],
    }
    return make_graph(
        node_types=["author", "paper"],
        relations=[
            Relation("writes", "author", "paper"),
            Relation("writes_rev", "paper", "author"),
        ],
        node_counts={"author": n_target, "paper": n_cliques},
        edges={"writes": writes, "writes_rev": writes[:, ::-1]},
        target_type="author",
        num_classes=n_classes,
        labels=labels,
        splits=splits,
        features={"author": features},
    )


def same_frac_for_homophily(clique_size, target):
    """Single-class clique fraction giving the requested global homophily.

    Mixed cliques split (k-1, 1), whose same-label pair fraction is
    (k-2)/k; solve target = s + (1-s) * (k-2)/k for s.
    """
    mixed = (clique_size - 2) / clique_size
    if target <= mixed:
        raise ConfigError(
            f"homophily {target} unreachable with clique size {clique_size}"
        )
    return (target - mixed) / (1.0 - mixed)


def _find_cliques(g: HetGraph, metapaths):
    """Connected components (size >= 2) of the union of induced graphs."""
    n = g.num_targets
    parent = np.arange(n)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for p in metapaths:
        mp = parse_metapath(p, g) if isinstance(p, str) else p
        ig = build_induced_graph(g, mp)
        u, v, _ = ig.edge_arrays()
        for x, y in zip(u, v):
            rx, ry = find(x), find(y)
            if rx != ry:
                parent[rx] = ry
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    cliques = [np.array(m, dtype=np.int64) for m in groups.values() if len(m) >= 2]
    cliques.sort(key=lambda m: int(m[0]))
    return cliques


def sbm_inject(cfg: SbmInjectConfig):
    """Relabel metapath cliques with swap ratio rho; topology is untouched.

    Selection draws one uniform per clique keyed by (seed, clique index) and
    selects iff u < rho, so sweeps over rho under one seed are nested (the
    measured homophily is monotone in rho by construction). HIGH gives every
    selected clique one shared random label; LOW deals classes round-robin
    over a seeded shuffle of the clique's members.
    """
    if not (0.0 <= cfg.rho <= 1.0):
        raise ConfigError(f"rho must be in [0, 1], got {cfg.rho}")
    g = cfg.base
    if g.label_mode == MULTI:
        raise ConfigError("label injection supports single-label graphs")
    labels = g.labels.copy()
    if cfg.rho > 0:
        cliques = _find_cliques(g, cfg.metapaths)
        c = g.num_classes
        for k, members in enumerate(cliques):
            rng = np.random.default_rng([int(cfg.seed), 5, k])
            u = rng.random()
            shared = int(rng.integers(c))
            order = rng.permutation(len(members))
            if u >= cfg.rho:
                continue
            if cfg.mode == HIGH:
                labels[members] = shared
            elif cfg.mode == LOW:
                labels[members[order]] = (shared + np.arange(len(members))) % c
            else:
                raise ConfigError(f"unknown mode {cfg.mode!r}")
    out = HetGraph(
        node_types=list(g.node_types),
        relations=list(g.relations),
        node_counts=dict(g.node_counts),
        edges={k: v.copy() for k, v in g.edges.items()},
        features={k: v.copy() for k, v in g.features.items()},
        target_type=g.target_type,
        num_classes=g.num_classes,
        label_mode=g.label_mode,
        labels=labels,
        splits={k: v.copy() for k, v in g.splits.items()},
    )
    return out


def gen_mixed_homophily(base: HetGraph, metapaths, seed=0):
    """Shared-label half / round-robin half relabeling over the base cliques.

    Even-indexed cliques become single-label (high local homophily), odd
    ones get round-robin class assignments (low local homophily).
    """
    g = base
    labels = g.labels.copy()
    cliques = _find_cliques(g, metapaths)
    c = g.num_classes
    for k, members in enumerate(cliques):
        rng = np.random.default_rng([int(seed), 7, k])
        shared = int(rng.integers(c))
        if k % 2 == 0:
            labels[members] = shared
        else:
            order = rng.permutation(len(members))
            labels[members[order]] = (shared + np.arange(len(members))) % c
    out = sbm_inject(SbmInjectConfig(base=g, metapaths=metapaths, rho=0.0, seed=seed))
    out.labels = labels
    return out


def gen_homophily_halves(
    n_units_per_kind=12,
    n_classes=4,
    pairs_per_class=2,
    feat_dim=8,
    feat_signal=0.5,
    feat_noise=1.0,
    train_frac=0.6,
    val_frac=0.2,
    seed=0,
):
    """Half homophilic hub-cliques, half heterophilic units whose neighbor
    mass is dominated by cross-class pairs.

    Heterophilic unit: 2 * pairs_per_class authors per class; each author
    shares m = 2 * pairs_per_class papers with one same-class partner and
    exactly one paper with every cross-class author of the unit, so local
    homophily there is 1 / (1 + m * (n_classes - 1)) and the softmax
    structural weights concentrate on the partner (exp(m) vs exp(1)).
    Features are weak class indicators (feat_signal) buried in Gaussian
    noise (feat_noise): informative enough to anchor pseudo-labels, weak
    enough that mean aggregation over mostly-cross neighborhoods hurts.
    Set feat_signal=0 for identical features everywhere.
    """
    unit = 2 * pairs_per_class * n_classes
    m_same = 2 * pairs_per_class
    rng = np.random.default_rng(seed)
    writes = []
    labels = []
    papers = 0
    node = 0

    def add_paper(members):
        nonlocal papers
        for m in members:
            writes.append((m, papers))
        papers += 1

    for k in range(2 * n_units_per_kind):
        members = np.arange(node, node + unit)
        node += unit
        if k % 2 == 0:  # homophilic hub clique
            cls = int(rng.integers(n_classes))
            labels.extend([cls] * unit)
            add_paper(members)
            continue
        by_class = []
        for c in range(n_classes):
            group = members[c * 2 * pairs_per_class : (c + 1) * 2 * pairs_per_class]
            labels.extend([c] * len(group))
            by_class.append(group)
            for i in range(pairs_per_class):  # disjoint same-class partner pairs
                u, v = int(group[2 * i]), int(group[2 * i + 1])
                for _ in range(m_same):
                    add_paper((u, v))
        for ca in range(n_classes):  # one shared paper per cross-class pair
            for cb in range(ca + 1, n_classes):
                for u in by_class[ca]:
                    for v in by_class[cb]:
                        add_paper((int(u), int(v)))

    n_target = node
    labels = np.array(labels, dtype=np.int64)
    writes = np.array(writes, dtype=np.int64)
    if feat_signal == 0:
        features = np.tile(np.ones(feat_dim, dtype=np.float32), (n_target, 1))
    else:
        eye = np.eye(n_classes, feat_dim, dtype=np.float32)
        features = feat_signal * eye[labels] + feat_noise * rng.standard_normal(
            (n_target, feat_dim)
        ).astype(np.float32)
    order = rng.permutation(n_target)
    n_tr = int(train_frac * n_target)
    n_va = int(val_frac * n_target)
    splits = {
        "train": order[:n_tr],
        "val": order[n_tr : n_tr + n_va],
        "test": order[n_tr + n_va :],
    }
    return make_graph(
        node_types=["author", "paper"],
        relations=[
            Relation("writes", "author", "paper"),
            Relation("writes_rev", "paper", "author"),
        ],
        node_counts={"author": n_target, "paper": papers},
        edges={"writes": writes, "writes_rev": writes[:, ::-1]},
        target_type="author",
        num_classes=n_classes,
        labels=labels,
        splits=splits,
        features={"author": features},
    )


def bias_simulation(q_grid, trials=32, seed=0, num_neighbors=16):
    """Empirical squared bias of a normalized linear smoother vs 4 q^2.

    The label model is deterministic: homophilic neighbors carry y_v and
    heterophilic ones -y_v, so a smoother whose heterophilic coefficient
    mass is exactly q predicts (1 - 2q) y_v. Returns rows
    (q, empirical squared bias, 4 q^2).
    """
    rng = np.random.default_rng(seed)
    rows = []
    for q in q_grid:
        if not (0.0 <= q <= 1.0):
            raise ConfigError(f"q must be in [0, 1], got {q}")
        errs = np.empty(trials)
        for t in range(trials):
            y = rng.choice((-1.0, 1.0))
            k_het = int(rng.integers(1, num_neighbors))
            k_hom = num_neighbors - k_het
            w_het = rng.random(k_het)
            w_hom = rng.random(k_hom)
            w_het = w_het / w_het.sum() * q if q > 0 else w_het * 0.0
            w_hom = w_hom / w_hom.sum() * (1.0 - q) if q < 1 else w_hom * 0.0
            pred = float(w_hom.sum() * y + w_het.sum() * (-y))
            errs[t] = (pred - y) ** 2
        rows.append((float(q), float(errs.mean()), float(4.0 * q * q)))
    return rows


def bias_gap(q, q_tilde, trials=32, seed=0):
    """Empirical Bias^2(q) - Bias^2(q_tilde); closed form is 4 (q^2 - q_tilde^2)."""
    rows = bias_simulation([q, q_tilde], trials=trials, seed=seed)
    return rows[0][1] - rows[1][1]
