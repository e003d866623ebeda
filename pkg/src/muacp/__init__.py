"""Minimal four-verb agent messaging.

Layers, bottom up: wire (binary codec), resources (cost accounting),
agent (processing semantics), simnet (seeded discrete-event network),
fipa (performative translation and protocol checking), consensus
(single-decree agreement), compression (entropy analysis), workloads
(scale traffic), cli (command line entry points).
"""

__version__ = "0.1.0"

from .wire import (  # noqa: F401
    Header,
    Message,
    Option,
    OptionType,
    Verb,
    WireError,
    decode,
    encode,
    message,
    validate,
)
