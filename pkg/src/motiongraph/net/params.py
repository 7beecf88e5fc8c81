"""Nested parameter trees.

Model parameters live in plain nested dicts mapping str to ndarray (or
to a sub-dict). Flattening walks keys in sorted depth-first order, so
optimizer state, gradient accumulation, and checkpoints all agree on
one canonical layout without any registration machinery.
"""

import numpy as np


def tree_leaves(tree, prefix=""):
    """Yield ``(path, array)`` pairs in sorted depth-first order."""
    for key in sorted(tree):
        value = tree[key]
        path = f"{prefix}/{key}" if prefix else key
        if isinstance(value, dict):
            yield from tree_leaves(value, path)
        else:
            yield path, value


def tree_map(fn, tree, *rest):
    """Apply ``fn`` leafwise across trees of identical structure."""
    out = {}
    for key, value in tree.items():
        others = [r[key] for r in rest]
        if isinstance(value, dict):
            out[key] = tree_map(fn, value, *others)
        else:
            out[key] = fn(value, *others)
    return out


def tree_zeros_like(tree):
    return tree_map(np.zeros_like, tree)


def tree_insert(tree, path, value):
    """Place ``value`` at the ``/``-separated ``path``, creating sub-dicts."""
    parts = path.split("/")
    node = tree
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value
    return tree
