"""Machine-readable reports shared by every CLI subcommand."""

from __future__ import annotations

import json
import math
from importlib import resources

from .errors import IdSelectError

__all__ = ["build_report", "dumps", "schema", "SIGNIFICANT_DIGITS"]

SIGNIFICANT_DIGITS = 12


def _clean(obj):
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, int):
        return obj
    if isinstance(obj, float) or hasattr(obj, "dtype"):
        x = float(obj)
        if not math.isfinite(x):
            raise IdSelectError(f"refusing to serialise non-finite number {x}")
        return float(f"{x:.{SIGNIFICANT_DIGITS}g}")
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def build_report(command, inputs, certificates=(), estimates=(), dominance=(), warnings=(), result=None) -> dict:
    """Assemble the stable report layout; numbers are rounded to 12 significant digits."""
    return _clean(
        {
            "command": command,
            "inputs": inputs,
            "certificates": list(certificates),
            "estimates": list(estimates),
            "dominance": list(dominance),
            "warnings": list(warnings),
            "result": result,
        }
    )


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=False, allow_nan=False) + "\n"


def schema() -> dict:
    text = resources.files("idselect.data").joinpath("report.schema.json").read_text(encoding="utf-8")
    return json.loads(text)
