"""Long-format CSV panels: ``device_id,role,time_hours,value``.

``role`` is ``stressed`` or ``reference``; every device of a role must have a
reading at every readout time of that role.
"""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .data_model import ReadoutSchedule, TrajectoryPanel, UnitSpace
from .errors import DriftGuardError, IncompletePanel

HEADER = ("device_id", "role", "time_hours", "value")
ROLES = ("stressed", "reference")


def _panel_from_rows(rows, role):
    times = sorted({t for _, t, _ in rows})
    col = {t: i for i, t in enumerate(times)}
    order, cells = [], {}
    for dev, t, v in rows:
        if dev not in cells:
            order.append(dev)
            cells[dev] = {}
        if t in cells[dev]:
            raise DriftGuardError(f"duplicate {role} reading for {dev!r} at t={t}")
        cells[dev][t] = v
    values = np.full((len(order), len(times)), np.nan)
    for i, dev in enumerate(order):
        missing = [t for t in times if t not in cells[dev]]
        if missing:
            raise IncompletePanel(f"{role} device {dev!r} has no reading at t={missing[0]}")
        for t, v in cells[dev].items():
            values[i, col[t]] = v
    return TrajectoryPanel(ReadoutSchedule(tuple(times)), values, tuple(order), UnitSpace.RAW)


def parse_panel_csv(text: str):
    """Parse CSV text into ``(stressed, reference_or_None)`` raw panels."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != HEADER:
        raise DriftGuardError(f"CSV header must be {','.join(HEADER)}")
    by_role = {r: [] for r in ROLES}
    for lineno, rec in enumerate(reader, start=2):
        if not rec or all(not c.strip() for c in rec):
            continue
        if len(rec) != 4:
            raise DriftGuardError(f"line {lineno}: expected 4 fields, got {len(rec)}")
        dev, role, t, v = (c.strip() for c in rec)
        if role not in by_role:
            raise DriftGuardError(f"line {lineno}: unknown role {role!r}")
        try:
            by_role[role].append((dev, float(t), float(v)))
        except ValueError:
            raise DriftGuardError(f"line {lineno}: non-numeric time or value") from None
    if not by_role["stressed"]:
        raise DriftGuardError("no stressed devices in input")
    stressed = _panel_from_rows(by_role["stressed"], "stressed")
    reference = _panel_from_rows(by_role["reference"], "reference") if by_role["reference"] else None
    return stressed, reference


def read_panel_csv(path):
    return parse_panel_csv(Path(path).read_text())


def format_panel_csv(panel: TrajectoryPanel, role="stressed", reference: TrajectoryPanel | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for p, r in ((panel, role), (reference, "reference")):
        if p is None:
            continue
        for dev, row in zip(p.device_ids, p.values):
            for t, v in zip(p.schedule.times, row):
                w.writerow((dev, r, repr(float(t)), _fmt(v, p.unit_space)))
    return buf.getvalue()


def _fmt(v, unit_space):
    if unit_space is UnitSpace.NORMALIZED:
        return str(int(v))
    return repr(float(v))


def write_panel_csv(panel: TrajectoryPanel, path, role="stressed", reference=None):
    Path(path).write_text(format_panel_csv(panel, role, reference))


def format_tidy_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()
