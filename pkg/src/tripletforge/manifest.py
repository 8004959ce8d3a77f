"""Append-only JSONL manifest with checkpoint/resume semantics.

Layout: two ``#!`` header lines (format tag, then run metadata as JSON),
followed by one canonical-JSON record per line. State updates are written
as fresh lines; a scan keeps the latest line per record id. A torn final
line (crash mid-write) is tolerated on read and trimmed before the next
append.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Optional

from .records import Stage, TripletRecord, stage_index

FORMAT_TAG = "#! tripletforge-manifest 1"


class ManifestError(Exception):
    pass


def _canonical(data: dict[str, Any]) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


@dataclass
class Manifest:
    """Handle to a manifest file.

    Reads always come from disk, so ``resume`` is a plain re-open and
    other processes may tail the file. The only in-memory state is a
    lazily built id -> stage map used to reject duplicate appends and
    stage regressions without rescanning the whole file on every write;
    this assumes a single writer per file, which the pipeline guarantees.
    """

    path: str
    _stages: Optional[dict[str, Stage]] = field(default=None, repr=False, compare=False)

    def _stage_map(self) -> dict[str, Stage]:
        if self._stages is None:
            self._stages = {rec.id: rec.stage for rec in self.scan_log()}
        return self._stages

    @classmethod
    def create(cls, path: str, metadata: Optional[dict[str, Any]] = None) -> "Manifest":
        if os.path.exists(path):
            raise ManifestError(f"manifest already exists: {path}")
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        header_meta = _canonical(metadata or {})
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(FORMAT_TAG + "\n")
            fh.write("#! " + header_meta + "\n")
        return cls(path)

    @classmethod
    def open(cls, path: str) -> "Manifest":
        manifest = cls(path)
        manifest.metadata()  # validates the header
        return manifest

    def metadata(self) -> dict[str, Any]:
        with open(self.path, "r", encoding="utf-8") as fh:
            tag = fh.readline().rstrip("\n")
            if tag != FORMAT_TAG:
                raise ManifestError(f"bad manifest header: {tag!r}")
            meta_line = fh.readline().rstrip("\n")
        if not meta_line.startswith("#! "):
            raise ManifestError("manifest metadata line missing")
        try:
            return json.loads(meta_line[3:])
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest metadata unreadable: {exc}") from exc

    # -- writing ---------------------------------------------------------

    def _repair_tail(self) -> None:
        """Drop a torn trailing line so the next append starts clean."""
        with open(self.path, "rb") as fh:
            raw = fh.read()
        if not raw or raw.endswith(b"\n"):
            return
        cut = raw.rfind(b"\n") + 1
        with open(self.path, "r+b") as fh:
            fh.truncate(cut)

    def append(self, record: TripletRecord) -> None:
        """Add a brand-new record; duplicate ids are an error."""
        if record.id in self._stage_map():
            raise ManifestError(f"duplicate record id: {record.id}")
        self._write_line(record)

    def append_many(self, records: Iterable[TripletRecord]) -> None:
        """Add a batch of brand-new records with a single flush.

        Same duplicate-id rule as :meth:`append`, applied across the
        batch as well as against the file.
        """
        batch = list(records)
        known = self._stage_map()
        seen: set[str] = set()
        for record in batch:
            if record.id in known or record.id in seen:
                raise ManifestError(f"duplicate record id: {record.id}")
            seen.add(record.id)
        self.metadata()
        self._repair_tail()
        with open(self.path, "a", encoding="utf-8") as fh:
            for record in batch:
                fh.write(record.to_json() + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        for record in batch:
            known[record.id] = record.stage

    def checkpoint(self, record: TripletRecord) -> None:
        """Persist an updated state for a known record.

        The stage may only stay or move forward; a checkpoint for an
        unknown id is an error (use ``append`` first).
        """
        prior = self._stage_map().get(record.id)
        if prior is None:
            raise ManifestError(f"checkpoint for unknown record id: {record.id}")
        if stage_index(record.stage) < stage_index(prior):
            raise ManifestError(
                f"stage regression for {record.id}: "
                f"{prior.value} -> {record.stage.value}"
            )
        self._write_line(record)

    def _write_line(self, record: TripletRecord) -> None:
        self.metadata()  # refuse to append to a malformed file
        self._repair_tail()
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(record.to_json() + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        self._stage_map()[record.id] = record.stage

    # -- reading ---------------------------------------------------------

    def scan_log(self) -> Iterator[TripletRecord]:
        """Every record line in file order, including superseded states."""
        with open(self.path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
        if not lines or lines[0].rstrip("\n") != FORMAT_TAG:
            raise ManifestError("bad manifest header")
        body = lines[1:]
        for index, line in enumerate(body):
            text = line.rstrip("\n")
            if not text:
                continue
            if text.startswith("#!"):
                continue
            try:
                yield TripletRecord.from_json(text)
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                torn_tail = index == len(body) - 1 and not line.endswith("\n")
                if torn_tail:
                    return
                raise ManifestError(f"corrupt manifest line {index + 2}: {exc}") from exc

    def scan(self) -> list[TripletRecord]:
        """Latest state per record id, in first-appearance order."""
        latest: dict[str, TripletRecord] = {}
        for record in self.scan_log():
            latest[record.id] = record
        return list(latest.values())

    def get(self, record_id: str) -> TripletRecord:
        for record in self.scan():
            if record.id == record_id:
                return record
        raise KeyError(record_id)


# -- summary statistics ---------------------------------------------------


@dataclass
class StatsRow:
    label: str
    count: int
    mean_gpt: Optional[float]
    mean_epe: Optional[float]


def _scored(records: list[TripletRecord]) -> list[TripletRecord]:
    return [
        rec for rec in records
        if rec.scores is not None
        and rec.scores.gpt_score is not None
        and rec.scores.epe is not None
    ]


def _mean(values: list[float]) -> Optional[float]:
    return sum(values) / len(values) if values else None


def manifest_stats(records: list[TripletRecord], by: str = "kind") -> list[StatsRow]:
    """Per-group count and means over fully scored records.

    ``by`` selects the grouping key: ``kind`` (source kind) or ``origin``
    (the corpus a record came from).
    """
    if by not in ("kind", "origin"):
        raise ValueError(f"unknown grouping: {by}")
    groups: dict[str, list[TripletRecord]] = {}
    for rec in _scored(records):
        key = rec.source_kind.value if by == "kind" else rec.origin
        groups.setdefault(key, []).append(rec)
    rows = []
    for label in sorted(groups):
        members = groups[label]
        rows.append(StatsRow(
            label=label,
            count=len(members),
            mean_gpt=_mean([float(rec.scores.gpt_score) for rec in members]),
            mean_epe=_mean([float(rec.scores.epe) for rec in members]),
        ))
    return rows


def overall_row(rows: list[StatsRow]) -> StatsRow:
    """Count-weighted combination of per-group rows."""
    total = sum(row.count for row in rows)
    if total == 0:
        return StatsRow("overall", 0, None, None)
    gpt = sum(row.mean_gpt * row.count for row in rows if row.mean_gpt is not None)
    epe = sum(row.mean_epe * row.count for row in rows if row.mean_epe is not None)
    return StatsRow("overall", total, gpt / total, epe / total)
