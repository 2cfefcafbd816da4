"""Python bindings for the topoleak C++ core."""

import json as _json

from ._topoleak import *  # noqa: F401,F403
from ._topoleak import attack as _attack


def run_attack(config=None, out=None):
    """Run the full attack and return the mean metrics as a dict."""
    return _json.loads(_attack(config, out))
