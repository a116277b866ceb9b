"""Scenario files: JSON with units spelled out in the key names.

Example (abridged)::

    {
      "grid": {"cap_mF": [...], "res_mOhm": [...], "ind_mH": [...],
               "cap_load_mF": 0.47, "res_load_Ohm": 1.5, "p_load_W": 1875},
      "v_bus_target_V": 24.0,
      "initial_state": {"v_V": [...], "it_A": [...], "vL_V": 9.0},
      "controller": "scc"
    }

Inductances may be given either as ``ind_mH`` or ``ind_H``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .controllers import DroopConfig, SccConfig
from .errors import ConfigError
from .model import GridParams, pack_state
from .simulation import CONTROLLERS, Scenario

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_vec = {"type": "array", "items": _num, "minItems": 1}
_posvec = {"type": "array", "items": _pos, "minItems": 1}
_num_or_vec = {"oneOf": [_num, _vec]}
_pair = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["grid", "v_bus_target_V", "initial_state"],
    "properties": {
        "name": {"type": "string"},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["cap_mF", "res_mOhm", "cap_load_mF", "res_load_Ohm", "p_load_W"],
            "oneOf": [{"required": ["ind_mH"]}, {"required": ["ind_H"]}],
            "properties": {
                "cap_mF": _posvec,
                "res_mOhm": _posvec,
                "ind_mH": _posvec,
                "ind_H": _posvec,
                "cap_load_mF": _pos,
                "res_load_Ohm": {"oneOf": [_pos, {"type": "null"}]},
                "p_load_W": {"type": "number", "minimum": 0},
                "v_cpl_min_V": _pos,
                "v_safe_lo_V": _num_or_vec,
                "v_safe_hi_V": _num_or_vec,
            },
        },
        "v_bus_target_V": _pos,
        "initial_state": {
            "type": "object",
            "additionalProperties": False,
            "required": ["v_V", "it_A", "vL_V"],
            "properties": {"v_V": _vec, "it_A": _vec, "vL_V": _num},
        },
        "controller": {"enum": list(CONTROLLERS)},
        "timing": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dt_plant_s": _pos,
                "dt_control_s": _pos,
                "t_final_s": {"type": "number", "minimum": 0},
                "record_interval_s": {"oneOf": [_pos, {"type": "null"}]},
                "avg_window_s": _pos,
                "settle_tol_V": _pos,
            },
        },
        "scc": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "m": _pos,
                "gamma_slope": {"oneOf": [_pos, {"type": "null"}]},
                "u_bounds_A": {"oneOf": [_pair, {"type": "null"}]},
                "hold_margin_V": {"oneOf": [{"type": "number", "minimum": 0}, {"type": "null"}]},
                "poles": {"oneOf": [_vec, {"type": "null"}]},
                "alpha": {"oneOf": [_pos, {"type": "null"}]},
                "beta": _pos,
                "clf_q_diag": {"oneOf": [_posvec, {"type": "null"}]},
            },
        },
        "droop": {
            "type": "object",
            "additionalProperties": False,
            "required": ["v_nominal_V", "droop_gain_Ohm"],
            "properties": {
                "v_nominal_V": _num,
                "droop_gain_Ohm": _vec,
                "k_p": _pos,
                "u_bounds_A": {"oneOf": [_pair, {"type": "null"}]},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "samples": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "t_final_s": _pos,
                "v_range_V": _pair,
                "vL_range_V": _pair,
                "it_scale": _pair,
            },
        },
    },
}


@dataclass(frozen=True)
class SweepSpec:
    samples: int = 20
    seed: int = 0
    t_final: float = 0.05
    v_range: tuple[float, float] = (6.0, 49.0)
    v_load_range: tuple[float, float] = (10.0, 40.0)
    it_scale: tuple[float, float] = (0.5, 1.5)


@dataclass(frozen=True)
class ScenarioFile:
    name: str
    scenario: Scenario
    sweep: SweepSpec
    raw: dict


def _where(err: jsonschema.ValidationError) -> str:
    path = "/".join(str(p) for p in err.absolute_path)
    return path or "<root>"


def validate(doc: Any) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{_where(e)}: {e.message}" for e in errors]
        raise ConfigError("invalid scenario file:\n  " + "\n  ".join(lines))


def _vector(value, n: int, key: str) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=float), (n,)) if np.ndim(value) == 0 else np.asarray(value, float)
    if arr.shape != (n,):
        raise ConfigError(f"{key}: expected {n} entries, got {arr.size}")
    return np.array(arr)


def grid_from_dict(g: dict) -> GridParams:
    cap = np.asarray(g["cap_mF"], float) * 1e-3
    n = cap.size
    res = _vector(g["res_mOhm"], n, "grid/res_mOhm") * 1e-3
    ind = _vector(g["ind_mH"], n, "grid/ind_mH") * 1e-3 if "ind_mH" in g else _vector(g["ind_H"], n, "grid/ind_H")
    extra = {}
    if "v_cpl_min_V" in g:
        extra["v_cpl_min"] = float(g["v_cpl_min_V"])
    if "v_safe_lo_V" in g:
        extra["v_safe_lo"] = _vector(g["v_safe_lo_V"], n, "grid/v_safe_lo_V")
    if "v_safe_hi_V" in g:
        extra["v_safe_hi"] = _vector(g["v_safe_hi_V"], n, "grid/v_safe_hi_V")
    r_load = g["res_load_Ohm"]
    try:
        return GridParams(
            cap=cap,
            res=res,
            ind=ind,
            cap_load=float(g["cap_load_mF"]) * 1e-3,
            res_load=float("inf") if r_load is None else float(r_load),
            p_load=float(g["p_load_W"]),
            **extra,
        )
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None


def scenario_from_dict(doc: dict, **overrides) -> ScenarioFile:
    """Validate ``doc`` and build a :class:`Scenario`; ``overrides`` are
    passed to :meth:`Scenario.with_` (e.g. ``controller``, ``t_final``)."""
    validate(doc)
    params = grid_from_dict(doc["grid"])
    n = params.n
    init = doc["initial_state"]
    x0 = pack_state(
        _vector(init["v_V"], n, "initial_state/v_V"),
        _vector(init["it_A"], n, "initial_state/it_A"),
        float(init["vL_V"]),
    )
    timing = doc.get("timing", {})
    s = doc.get("scc", {})
    scc = SccConfig(
        m=s.get("m", 100.0),
        gamma_slope=s.get("gamma_slope"),
        u_bounds=tuple(s["u_bounds_A"]) if s.get("u_bounds_A") else None,
        hold_margin=s.get("hold_margin_V", 0.1),
    )
    droop = None
    if "droop" in doc:
        d = doc["droop"]
        droop = DroopConfig(
            v_nominal=d["v_nominal_V"],
            droop_gain=_vector(d["droop_gain_Ohm"], n, "droop/droop_gain_Ohm"),
            k_p=d.get("k_p", 2e4),
            u_bounds=tuple(d["u_bounds_A"]) if d.get("u_bounds_A") else None,
        )
    poles = s.get("poles")
    if poles is not None and len(poles) != n + 2:
        raise ConfigError(f"scc/poles: expected {n + 2} entries, got {len(poles)}")
    q_diag = s.get("clf_q_diag")
    if q_diag is not None and len(q_diag) != n + 2:
        raise ConfigError(f"scc/clf_q_diag: expected {n + 2} entries, got {len(q_diag)}")
    kwargs = dict(
        params=params,
        v_bus_target=float(doc["v_bus_target_V"]),
        x0=x0,
        controller=doc.get("controller", "scc"),
        dt_plant=timing.get("dt_plant_s", 1e-6),
        dt_control=timing.get("dt_control_s", 1e-5),
        t_final=timing.get("t_final_s", 0.5),
        record_interval=timing.get("record_interval_s"),
        avg_window=timing.get("avg_window_s", 1e-5),
        settle_tol=timing.get("settle_tol_V", 0.05),
        poles=tuple(poles) if poles is not None else None,
        clf_q=np.diag(q_diag) if q_diag is not None else None,
        alpha=s.get("alpha"),
        beta=s.get("beta", 1.0),
        scc=scc,
        droop=droop,
    )
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    try:
        scenario = Scenario(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    sw = doc.get("sweep", {})
    defaults = SweepSpec()
    sweep = SweepSpec(
        samples=sw.get("samples", defaults.samples),
        seed=sw.get("seed", defaults.seed),
        t_final=sw.get("t_final_s", defaults.t_final),
        v_range=tuple(sw.get("v_range_V", defaults.v_range)),
        v_load_range=tuple(sw.get("vL_range_V", defaults.v_load_range)),
        it_scale=tuple(sw.get("it_scale", defaults.it_scale)),
    )
    return ScenarioFile(name=doc.get("name", "scenario"), scenario=scenario, sweep=sweep, raw=doc)


def load_scenario(path: str | Path, **overrides) -> ScenarioFile:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(doc, **overrides)


def builtin_scenario_path() -> Path:
    """The reference five-converter grid shipped with the package."""
    return Path(str(resources.files("microgrid_scc") / "data" / "paper_table1.json"))
