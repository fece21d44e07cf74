"""Exact counterfactual explanations for decision trees."""

import json

from . import _cftree
from ._cftree import Error, Tree

__all__ = ["Error", "Tree", "load_tree", "explain", "explain_margin", "search_baseline",
           "gen_random_oblique", "make_blobs", "train_axis_aligned", "check_kkt"]


def _text(doc):
    return doc if isinstance(doc, str) else json.dumps(doc)


def load_tree(doc):
    """Tree from a document (dict or JSON text)."""
    return Tree(_text(doc))


def explain(tree, instance, target, cost=None, constraints=None, epsilon=0.0, diverse_k=0,
            include_timing=True):
    """Counterfactual result document for one query."""
    request = {"instance": instance, "target": target, "epsilon": epsilon, "diverse_k": diverse_k}
    if cost is not None:
        request["cost"] = cost
    if constraints is not None:
        request["constraints"] = constraints
    return json.loads(_cftree.explain(tree, _text(request), include_timing))


def explain_margin(tree, request, schedule, include_timing=True):
    return json.loads(_cftree.explain_margin(tree, _text(request), list(schedule), include_timing))


def search_baseline(tree, request, dataset, include_timing=True):
    return json.loads(_cftree.search_baseline(tree, _text(request), _text(dataset), include_timing))


def gen_random_oblique(dim, depth, classes, seed):
    return json.loads(_cftree.gen_random_oblique(dim, depth, classes, seed))


def make_blobs(dim, classes, per_class, spread, seed):
    return json.loads(_cftree.make_blobs(dim, classes, per_class, spread, seed))


def train_axis_aligned(dataset, max_depth):
    return json.loads(_cftree.train_axis_aligned(_text(dataset), max_depth))


def check_kkt(program, outcome, tolerance=1e-8):
    return _cftree.check_kkt(_text(program), _text(outcome), tolerance)
