"""Tree-structured latent class models with a Dirichlet diffusion tree prior."""

import json

from ._core import (
    Chain,
    Tree,
    TreelcmError,
    fit,
    format_summary,
    log_tree_density,
    sample_ddt_tree,
    simulate,
    summarize_json,
)


def summarize(chain, burnin=0, relabel=True, level=0.95):
    """Posterior summary of `chain` as a dict (same schema as summary.json)."""
    return json.loads(summarize_json(chain, burnin=burnin, relabel=relabel, level=level))


__all__ = [
    "Chain",
    "Tree",
    "TreelcmError",
    "fit",
    "format_summary",
    "log_tree_density",
    "sample_ddt_tree",
    "simulate",
    "summarize",
]
