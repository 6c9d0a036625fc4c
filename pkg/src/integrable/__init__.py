"""Integrable systems from splittings of loop algebras: hierarchies, dressing, factorization and finite-type solutions."""
from .algebra import AlgebraContext, ContextError, catalog_ids, get_context, make_context

__all__ = ["AlgebraContext", "ContextError", "catalog_ids", "get_context", "make_context"]
__version__ = "0.1.0"
