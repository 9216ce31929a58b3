"""Exact probabilistic inference over proofs.

Import from the submodules (``circuit``, ``engine``, ``proofs``); the
logic solver depends on ``proofs`` so this package stays import-light.
"""
