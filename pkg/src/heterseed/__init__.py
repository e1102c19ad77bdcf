"""Heterogeneous-graph learning under heterophily.

Dual-channel node representation learning (relation-aware semantics plus
pseudo-label-guided homo/hetero structure), metapath counting and homophily
tooling, synthetic benchmark generators, and a from-scratch reverse-mode
tape backing it all.

Submodules are loaded lazily so the CLI can apply HETERSEED_THREADS to the
BLAS environment before numpy comes up.
"""
import importlib

_EXPORTS = {
    "HetGraph": "graph",
    "load_graph": "graph",
    "save_graph": "graph",
    "validate": "graph",
    "InducedGraph": "metapaths",
    "Metapath": "metapaths",
    "Partition": "metapaths",
    "StructuralWeights": "metapaths",
    "average_homophily": "metapaths",
    "bin_by_local_homophily": "metapaths",
    "build_induced_graph": "metapaths",
    "global_homophily": "metapaths",
    "local_homophily": "metapaths",
    "parse_metapath": "metapaths",
    "partition_neighbors": "metapaths",
    "similarity_vs_homophily": "metapaths",
    "structural_weights": "metapaths",
    "HeterSeedModel": "model",
    "TrainConfig": "trainer",
    "TrainResult": "trainer",
    "evaluate": "trainer",
    "train": "trainer",
    "train_full_batch": "trainer",
    "train_mini_batch": "trainer",
}

__all__ = sorted(_EXPORTS)


def __getattr__(name):
    if name in _EXPORTS:
        module = importlib.import_module(f".{_EXPORTS[name]}", __name__)
        return getattr(module, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(set(globals()) | set(_EXPORTS))
