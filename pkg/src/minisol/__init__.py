"""Invariant verification for a small Solidity-like contract language.

The toolchain parses a contract, instruments one candidate invariant at a
time, and verifies it by inductive checking backed by bounded model
checking with stratified call-site inlining, all over configurable finite
domains. Candidates are produced and ranked by pluggable providers.
"""

__version__ = "0.1.0"

from .lang import SourceFile, parse, typecheck  # noqa: F401
