"""Per-point cross-checks of scan results against the exact oracles."""

from __future__ import annotations

import numpy as np

from .detector import ScanRecord, detect_jumps
from .exactdiag import ED_CAP, ed_solve
from .freefermion import ff_critical_scan, ff_ground_energy, jw_build
from .models import StaggeredHeisenberg

# DMRG against an exact energy, relative to max(1, |E|).
ED_ENERGY_TOL = 1e-8
FF_ENERGY_TOL = 1e-6


def _label(params: dict[str, float]) -> str:
    return ";".join(f"{k}={v!r}" for k, v in params.items())


def _row(point, oracle, quantity, value, reference, tol) -> dict:
    err = abs(value - reference)
    return {
        "point": point,
        "oracle": oracle,
        "quantity": quantity,
        "value": float(value),
        "reference": float(reference),
        "abs_error": float(err),
        "passed": bool(err <= tol),
    }


def oracle_rows(cfg, records: list[ScanRecord]) -> list[dict]:
    rows: list[dict] = []
    for rec in records:
        if rec.error:
            continue
        spec = cfg.model.replace(**rec.parameters)
        label = _label(rec.parameters)
        tol_scale = max(1.0, abs(rec.ground_energy))
        if "ed" in cfg.oracle_checks and spec.local_dim**spec.n <= ED_CAP[spec.local_dim]:
            ref = ed_solve(spec).energies
            for i, e in enumerate(rec.k_energies):
                rows.append(_row(label, "ed", f"energy_{i}", e, ref[i], ED_ENERGY_TOL * tol_scale))
        if (
            "freefermion" in cfg.oracle_checks
            and isinstance(spec, StaggeredHeisenberg)
            and spec.delta == 0
        ):
            ref = ff_ground_energy(jw_build(spec))
            rows.append(
                _row(label, "freefermion", "ground_energy", rec.ground_energy, ref, FF_ENERGY_TOL * tol_scale)
            )
    if "freefermion" in cfg.oracle_checks and isinstance(cfg.model, StaggeredHeisenberg):
        rows.extend(_crossing_rows(cfg, records))
    return rows


def _crossing_rows(cfg, records: list[ScanRecord]) -> list[dict]:
    """Each free-fermion crossing on a 1-axis scan should sit within a grid step of a jump."""
    if len(cfg.axes) != 1 or cfg.model.delta != 0:
        return []
    axis = cfg.axes[0]
    good = [r for r in records if not r.error]
    if len(good) != len(records) or len(records) < 4:
        return []
    jumps = [j.location for j in detect_jumps(records, axis.name, cfg.threshold_factor, cfg.min_jump)]
    rows = []
    for c in ff_critical_scan(cfg.model, axis.name, axis.lo, axis.hi, axis.step):
        nearest = min(jumps, key=lambda x: abs(x - c)) if jumps else np.inf
        rows.append(_row(f"{axis.name}={c!r}", "freefermion", "crossing_to_jump", nearest, c, axis.step))
    return rows
