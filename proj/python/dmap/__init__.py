"""Regional ledgers for crowd-sensed vehicle map data."""

import json
from pathlib import Path

from ._dmap import (
    ConfigError,
    DecodeError,
    build_data_tx,
    decode_data_tx,
    derive_seed,
    generate_keypair,
    reference_fixtures,
    seed_from_u64,
    sha256,
    sign,
    validate_ledger,
    verify,
    verify_data_tx,
)
from ._dmap import run_scenario as _run_scenario

__all__ = [
    "ConfigError",
    "DecodeError",
    "build_data_tx",
    "decode_data_tx",
    "derive_seed",
    "generate_keypair",
    "reference_fixtures",
    "run",
    "seed_from_u64",
    "sha256",
    "sign",
    "validate_ledger",
    "verify",
    "verify_data_tx",
]


def run(scenario, seed=None):
    """Run a scenario given as a dict, JSON text or path.

    Returns (report dict, {region: ledger dump bytes}).
    """
    if isinstance(scenario, dict):
        text = json.dumps(scenario)
    elif isinstance(scenario, Path) or (isinstance(scenario, str) and not scenario.lstrip().startswith("{")):
        text = Path(scenario).read_text()
    else:
        text = scenario
    report, ledgers = _run_scenario(text, seed)
    return json.loads(report), ledgers
