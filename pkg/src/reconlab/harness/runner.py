"""Dispatch a validated config to its experiment and persist the report."""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from reconlab.exceptions import ParameterError
from reconlab.harness.config import ExperimentConfig, validate
from reconlab.harness.experiments import REGISTRY

OUT_ENV = "RECONLAB_OUT"


@dataclass
class ExperimentReport:
    """Config echo, scalar metrics, named CSV tables and wall-clock runtime.

    ``extra`` carries structured payloads such as the accountant ledger.
    Only ``metrics``, ``tables`` and ``extra`` are deterministic.
    """

    config: dict
    metrics: dict[str, float]
    tables: dict[str, str] = field(default_factory=dict)
    extra: dict[str, Any] = field(default_factory=dict)
    runtime_ms: int = 0

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "metrics": self.metrics,
            "tables": self.tables,
            **self.extra,
            "runtime_ms": self.runtime_ms,
        }

    def metrics_json(self) -> str:
        return json.dumps(self.metrics, sort_keys=True)

    def write(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in self.tables.items():
            (out / f"{name}.csv").write_text(text, encoding="utf-8")
        path = out / "report.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _plain(value):
    if isinstance(value, bool):
        return int(value)
    if hasattr(value, "item"):
        return value.item()
    return value


def run(config: ExperimentConfig | Mapping[str, Any]) -> ExperimentReport:
    """Execute one experiment in-process; nothing is written to disk.

    Raises:
        ParameterError: the config has schema violations.
    """
    if isinstance(config, ExperimentConfig):
        raw = {"experiment": config.experiment, "seed": config.seed, "parameters": dict(config.parameters), "output_path": config.output_path}
    else:
        raw = dict(config)
    problems = validate(raw)
    if problems:
        raise ParameterError("; ".join(problems))
    cfg = ExperimentConfig.from_dict(raw)
    start = time.perf_counter()
    metrics, tables, extra = REGISTRY[cfg.experiment](cfg.resolved(), cfg.seed)
    runtime_ms = int(round((time.perf_counter() - start) * 1000))
    return ExperimentReport(
        config=cfg.to_dict(),
        metrics={k: _plain(v) for k, v in metrics.items()},
        tables=tables,
        extra=extra,
        runtime_ms=runtime_ms,
    )


def resolve_output_dir(cli_out: str | None, config_out: str | None, experiment: str) -> Path:
    """``--out`` beats ``RECONLAB_OUT`` beats ``output_path``; default ``out/<experiment>``."""
    for candidate in (cli_out, os.environ.get(OUT_ENV), config_out):
        if candidate:
            return Path(candidate)
    return Path("out") / experiment


def format_sig(value, digits: int = 4) -> str:
    """Render a number with ``digits`` significant figures."""
    if value is None:
        return "-"
    if isinstance(value, int) and abs(value) < 10**digits:
        return str(value)
    value = float(value)
    if value == 0 or not math.isfinite(value):
        return repr(value) if not math.isfinite(value) else "0"
    return f"{value:.{digits}g}"


def summary_table(report: ExperimentReport, digits: int = 4) -> str:
    """Two-column metric/value table at ``digits`` significant figures."""
    rows = [(k, format_sig(v, digits)) for k, v in report.metrics.items()]
    width = max((len(k) for k, _ in rows), default=6)
    lines = [f"{'metric':<{width}}  value", f"{'-' * width}  -----"]
    lines += [f"{k:<{width}}  {v}" for k, v in rows]
    return "\n".join(lines)
