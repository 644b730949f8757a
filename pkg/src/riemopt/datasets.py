"""Bundled and synthetic datasets for the experiment tasks."""

from importlib import resources

from .embed import ingest_edges, read_edges, transitive_closure

BUILTIN_EDGES = ("mammals", "tree15")


def mammal_closure_path():
    """Path of the bundled WordNet mammal closure (child TAB ancestor)."""
    return resources.files("riemopt") / "data" / "mammal_closure.tsv"


def load_mammals():
    with resources.as_file(mammal_closure_path()) as path:
        return read_edges(path)


def balanced_tree_edges(depth=3, branching=2):
    """``child<TAB>parent`` lines of a complete tree, heap-numbered from ``n0``."""
    n_nodes = sum(branching**i for i in range(depth + 1))
    return [f"n{i}\tn{(i - 1) // branching}" for i in range(1, n_nodes)]


def balanced_tree_closure(depth=3, branching=2):
    return transitive_closure(ingest_edges(balanced_tree_edges(depth, branching)))


def load_builtin(name):
    if name == "mammals":
        return load_mammals()
    if name == "tree15":
        return balanced_tree_closure(3, 2)
    raise ValueError(f"unknown built-in dataset {name!r}; choose from {BUILTIN_EDGES}")
