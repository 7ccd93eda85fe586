"""Deterministic UTXO tangle ledger, cooperative-consensus agents and a
discrete-event network simulator with post-hoc finality analysis."""

from .analysis import analyze, beta, is_final, load_trace, mu_bound
from .ledger import LedgerState, Output, OutputId, Transaction, apply, validate_transaction
from .netsim import Simulation, run
from .params import ConfigError, LedgerParams
from .scenario import load_scenario, validate_scenario
from .tangle import UtxoTangle

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "LedgerParams",
    "LedgerState",
    "Output",
    "OutputId",
    "Simulation",
    "Transaction",
    "UtxoTangle",
    "analyze",
    "apply",
    "beta",
    "is_final",
    "load_scenario",
    "load_trace",
    "mu_bound",
    "run",
    "validate_scenario",
]
