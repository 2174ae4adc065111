"""Pipeline persisting run records as CSV tables plus a JSON summary and manifest.

Records are buffered per type while a run is open and written when it closes,
so the CSV bytes depend only on the records and their order.
"""

import csv
import json
import logging
import statistics
from dataclasses import asdict, fields
from pathlib import Path

from softanchor_swarm.items import (
    CouplingResultItem,
    DecouplingResultItem,
    PipDisagreementItem,
    PlanRecord,
    RunManifest,
    StepRecord,
    TimingItem,
)

logger = logging.getLogger(__name__)

TABLES: dict[type, str] = {
    StepRecord: "trajectory.csv",
    CouplingResultItem: "coupling.csv",
    DecouplingResultItem: "decoupling.csv",
    TimingItem: "timing.csv",
    PipDisagreementItem: "pip_disagreements.csv",
}
SUMMARY_FILE = "summary.json"
MANIFEST_FILE = "manifest.json"

Record = StepRecord | PlanRecord | CouplingResultItem | DecouplingResultItem | TimingItem | PipDisagreementItem


def format_cell(value: object) -> str:
    """Render one CSV cell: floats with 10 significant digits, None as empty, booleans lowercase."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)


def write_csv(path: Path, item_type: type, rows: list[Record]) -> None:
    """Write records of one type with a header row taken from the dataclass fields."""
    headers = [item_field.name for item_field in fields(item_type)]
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(headers)
        for row in rows:
            writer.writerow([format_cell(row[header]) for header in headers])


class RunArtifactsPipeline:
    """Collect the records of one run and write its artifacts."""

    def __init__(self, output_dir: Path | str) -> None:
        """Remember where the artifacts go.

        Args:
            output_dir (Path | str): Directory receiving the artifacts, created on open.
        """
        self.output_dir = Path(output_dir)
        self.manifest: RunManifest | None = None
        self.summary: dict[str, object] = {}
        self._tables: dict[type, list[Record]] = {}
        self._plans: list[PlanRecord] = []

    def open_run(
        self,
        command: str,
        seed: int,
        config_path: str | None = None,
        config_hash: str | None = None,
        tables: tuple[type, ...] = (),
    ) -> None:
        """Start a run.

        Args:
            command (str): Subcommand name.
            seed (int): Seed used.
            config_path (str, optional): Scenario file.
            config_hash (str, optional): SHA-256 of the canonical configuration.
            tables (tuple[type, ...]): Record types whose CSV is written even when empty.
        """
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(
            command=command,
            config_path=config_path,
            seed=seed,
            output_dir=str(self.output_dir),
            config_hash=config_hash,
        )
        self.summary = {"command": command, "seed": seed, "config_hash": config_hash}
        self._tables = {item_type: [] for item_type in tables}
        self._plans = []
        logger.info("Run '%s' opened, writing to %s", command, self.output_dir)

    def process_item(self, item: Record) -> Record:
        """Buffer one record.

        Args:
            item: Any record from ``softanchor_swarm.items``.

        Returns:
            The same record.

        Raises:
            TypeError: If the record type has no table.
            RuntimeError: If no run is open.
        """
        if self.manifest is None:
            raise RuntimeError("process_item called before open_run")
        if isinstance(item, PlanRecord):
            self._plans.append(item)
        elif type(item) in TABLES:
            self._tables.setdefault(type(item), []).append(item)
        else:
            raise TypeError(f"Unknown item type: {type(item)}")
        return item

    def update_summary(self, **entries: object) -> None:
        """Add entries to the JSON summary."""
        self.summary.update(entries)

    def _solver_summary(self) -> dict[str, object]:
        times = [plan.solve_time_ms for plan in self._plans]
        return {
            "solves": len(self._plans),
            "converged": sum(plan.converged for plan in self._plans),
            "failsafe": sum(plan.failsafe for plan in self._plans),
            "median_solve_ms": statistics.median(times) if times else None,
            "max_solve_ms": max(times) if times else None,
        }

    def close_run(self, status: str = "ok") -> RunManifest:
        """Write every buffered table, the summary and finally the manifest.

        Args:
            status (str): Outcome recorded in the manifest and the summary.

        Returns:
            RunManifest: What was written.
        """
        if self.manifest is None:
            raise RuntimeError("close_run called before open_run")
        artifacts = []
        for item_type, rows in self._tables.items():
            name = TABLES[item_type]
            write_csv(self.output_dir / name, item_type, rows)
            artifacts.append(name)
            logger.info("Wrote %d row(s) to %s", len(rows), self.output_dir / name)

        if self._plans:
            self.summary["solver"] = self._solver_summary()
        self.summary["status"] = status
        (self.output_dir / SUMMARY_FILE).write_text(json.dumps(self.summary, indent=2, sort_keys=True, default=str) + "\n")
        artifacts.append(SUMMARY_FILE)

        self.manifest.artifacts = artifacts
        self.manifest.status = status
        (self.output_dir / MANIFEST_FILE).write_text(json.dumps(asdict(self.manifest), indent=2, sort_keys=True) + "\n")
        logger.info("Run '%s' closed with status %s, %d artifact(s)", self.manifest.command, status, len(artifacts) + 1)
        manifest, self.manifest = self.manifest, None
        return manifest
