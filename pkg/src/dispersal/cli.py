"""Batch front-end: ``dispersal <mode> [--config file.json] [--out dir] [overrides]``.

Settings are layered as built-in defaults, then the JSON config, then
command-line overrides; the merged document is validated against
:data:`CONFIG_SCHEMA` and hashed, and the hash is written into every output.

Exit status: 0 on success, 1 when an invariant check fails, 2 for a bad
configuration, 3 when a solve fails (non-convergence, non-existence, ...).
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from . import airy
from .asymptotics import build_theory_profile, run_sweep, sweep_checks, write_sweep_csv, write_sweep_json
from .discrete import (DiscreteTraitSystem, discrete_rows, evolve_discrete, nearest_neighbor_mutation,
                       steady_discrete, write_discrete_csv)
from .eigen import sigma_star_curve
from .errors import ConfigError, DispersalError
from .grid import HABITAT_PRESETS, SpatialField, SpatialGrid, StateField, habitat
from .logistic import solve_theta
from .solver import (ModelConfig, SteadyState, evolve, layer_guess, load_checkpoint, save_checkpoint,
                     solve_steady_state, steady_state_checks)

log = logging.getLogger("dispersal")

MODES = ("steady", "evolve", "sweep", "eigen-curve", "airy", "discrete")
EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_SOLVE = 0, 1, 2, 3

_pos = {"type": "number", "exclusiveMinimum": 0}
_poslist = {"type": "array", "items": _pos, "minItems": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "mode": {"enum": list(MODES)},
        "space": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "extents": {"type": "array", "items": _pos, "minItems": 1, "maxItems": 2},
                "cells": {"type": "array", "items": {"type": "integer", "minimum": 8},
                          "minItems": 1, "maxItems": 2},
            },
        },
        "habitat": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"enum": list(HABITAT_PRESETS)},
                "amplitude": {"type": "number"},
                "mean": {"type": "number"},
                "width": _pos,
                "samples": {"type": "array", "items": {"type": "number"}, "minItems": 8},
            },
        },
        "alpha_lo": _pos,
        "alpha_hi": _pos,
        "epsilon": _pos,
        "epsilons": _poslist,
        "trait_cells": {"type": ["integer", "null"], "minimum": 2},
        "trait_factor": _pos,
        "min_trait_cells": {"type": "integer", "minimum": 2},
        "tol": _pos,
        "dt": _pos,
        "t_end": _pos,
        "trivial": {"type": "boolean"},
        "strict": {"type": "boolean"},
        "seed": {"type": "integer", "minimum": 0},
        "perturbation": {"type": "number", "minimum": 0, "maximum": 0.5},
        "eigen_points": {"type": "integer", "minimum": 2},
        "airy": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"a1": {"type": ["number", "null"], "exclusiveMinimum": 0},
                           "samples": {"type": "integer", "minimum": 3}},
        },
        "discrete": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alphas": _poslist,
                "epsilons": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                "t_end": _pos,
                "invasion": _pos,
            },
        },
    },
}

DEFAULTS = {
    "space": {"extents": [1.0], "cells": [96]},
    "habitat": {"preset": "cosine", "amplitude": 0.5, "mean": 1.0, "width": 0.1},
    "alpha_lo": 0.5,
    "alpha_hi": 2.0,
    "epsilon": 0.04,
    "epsilons": [0.08, 0.04, 0.02, 0.01],
    "trait_cells": None,
    "trait_factor": 8.0,
    "min_trait_cells": 128,
    "tol": 1e-9,
    "dt": 0.5,
    "t_end": 200.0,
    "trivial": False,
    "strict": True,
    "seed": 0,
    "perturbation": 0.0,
    "eigen_points": 31,
    "airy": {"a1": None, "samples": 401},
    "discrete": {"alphas": [0.5, 1.25, 2.0], "epsilons": [0.1, 0.05, 0.02], "t_end": 1000.0,
                 "invasion": 0.01},
}


@dataclass(frozen=True)
class ExperimentSpec:
    """A validated, merged experiment description plus where to put results."""

    settings: dict
    out: Path
    threads: int = 1

    @property
    def mode(self) -> str:
        return self.settings["mode"]

    @property
    def config_hash(self) -> str:
        doc = dict(self.settings, threads=self.threads)
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def habitat_field(self) -> SpatialField:
        sp = self.settings["space"]
        grid = SpatialGrid(tuple(sp["extents"]), tuple(sp["cells"]))
        hab = self.settings["habitat"]
        if "samples" in hab:
            vals = np.asarray(hab["samples"], dtype=float)
            if vals.size != grid.size:
                raise ConfigError(f"{vals.size} habitat samples for {grid.size} cells",
                                  ("habitat", "samples"))
            return SpatialField(vals, grid)
        return habitat(grid, hab["preset"], hab["amplitude"], hab["mean"], hab["width"])

    def model_config(self, epsilon: float | None = None) -> ModelConfig:
        s = self.settings
        return ModelConfig(
            self.habitat_field(), s["alpha_lo"], s["alpha_hi"],
            s["epsilon"] if epsilon is None else epsilon,
            trait_cells=s["trait_cells"], trait_factor=s["trait_factor"],
            min_trait_cells=s["min_trait_cells"], tol=s["tol"], dt=s["dt"],
            trivial=s["trivial"], strict=s["strict"])


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def validate_settings(doc: dict) -> None:
    """Schema plus cross-field checks; raises :class:`ConfigError` naming the offending field."""
    errors = sorted(jsonschema.Draft202012Validator(CONFIG_SCHEMA).iter_errors(doc),
                    key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(err.message, tuple(err.absolute_path))
    if doc.get("mode") not in MODES:
        raise ConfigError("mode is required", ("mode",))
    if not doc["alpha_lo"] < doc["alpha_hi"]:
        raise ConfigError("alpha_lo must be below alpha_hi", ("alpha_lo",))
    if len(doc["space"]["extents"]) != len(doc["space"]["cells"]):
        raise ConfigError("extents and cells differ in length", ("space", "cells"))
    hab = doc["habitat"]
    if hab.get("preset") == "one" and "samples" not in hab and not doc["trivial"]:
        raise ConfigError("constant habitat requires trivial=true", ("habitat", "preset"))
    alphas = doc["discrete"]["alphas"]
    if any(b <= a for a, b in zip(alphas, alphas[1:])):
        raise ConfigError("discrete alphas must be strictly increasing", ("discrete", "alphas"))


def build_spec(mode: str, config_path=None, overrides: dict | None = None, out=".",
               threads: int = 1) -> ExperimentSpec:
    doc = dict(DEFAULTS)
    if config_path is not None:
        try:
            with open(config_path) as fh:
                user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
        if "mode" in user and user["mode"] != mode:
            raise ConfigError(f"config mode {user['mode']!r} conflicts with subcommand {mode!r}",
                              ("mode",))
        doc = _merge(doc, user)
    doc = _merge(doc, overrides or {})
    doc["mode"] = mode
    validate_settings(doc)
    if threads < 1:
        raise ConfigError("threads must be at least 1", ("threads",))
    return ExperimentSpec(doc, Path(out), threads)


def _write_json(path: Path, doc: dict, spec: ExperimentSpec, kind: str) -> None:
    doc = {"format": kind, "config_sha256": spec.config_hash, **doc}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_plain)
        fh.write("\n")


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _report_checks(checks: dict) -> bool:
    ok = True
    for name, (passed, value) in checks.items():
        log.info("%-22s %s  %.6g", name, "ok  " if passed else "FAIL", value)
        ok &= bool(passed)
    return ok


def _checks_doc(checks: dict) -> dict:
    return {k: {"passed": bool(p), "value": float(v)} for k, (p, v) in checks.items()}


def _finish_state(spec: ExperimentSpec, state: SteadyState, stem: str, gate=None) -> int:
    """Save, run the invariant suite, and fail on the checks named in ``gate`` (default: all)."""
    save_checkpoint(state, spec.out / f"{stem}.json", spec.config_hash)
    checks = steady_state_checks(state)
    _report_checks(checks)
    ok = all(p for k, (p, _) in checks.items() if gate is None or k in gate)
    _write_json(spec.out / f"{stem}_diagnostics.json",
                {"epsilon": state.epsilon, "sup_u": state.sup_u, "residual_inf": state.residual_inf,
                 "iterations": state.iterations, "checks": _checks_doc(checks)},
                spec, "diagnostics-v1")
    return EXIT_OK if ok else EXIT_INVARIANT


def run_steady(spec: ExperimentSpec) -> int:
    state = solve_steady_state(spec.model_config())
    return _finish_state(spec, state, "steady")


def run_evolve(spec: ExperimentSpec) -> int:
    cfg = spec.model_config()
    u0 = layer_guess(cfg)
    amp = spec.settings["perturbation"]
    if amp > 0:
        rng = np.random.default_rng(spec.settings["seed"])
        u0 = StateField(u0.values * (1.0 + amp * rng.uniform(-1, 1, u0.values.shape)), cfg.space, cfg.trait)
    u = evolve(cfg, u0, spec.settings["t_end"])
    # a transient need not satisfy the steady-state identities; positivity must hold throughout
    return _finish_state(spec, SteadyState.from_state(u, cfg), "evolve", gate=("positive",))


def run_sweep_mode(spec: ExperimentSpec) -> int:
    s = spec.settings
    base = spec.model_config(s["epsilons"][0])
    kw = {k: getattr(base, k) for k in ("alpha_lo", "alpha_hi", "trait_factor", "min_trait_cells", "tol",
                                         "dt", "trivial", "strict")}
    if s["trait_cells"] is not None:
        kw["trait_cells"] = s["trait_cells"]
    report, states = run_sweep(base.m, s["epsilons"], threads=spec.threads, keep_states=True, **kw)
    write_sweep_csv(report, spec.out / "sweep.csv", spec.config_hash)
    write_sweep_json(report, spec.out / "sweep.json", spec.config_hash)
    ok = _report_checks(sweep_checks(report))
    for st in states:
        ok &= _report_checks(steady_state_checks(st))
    return EXIT_OK if ok else EXIT_INVARIANT


def run_eigen_curve(spec: ExperimentSpec) -> int:
    cfg = spec.model_config()
    theta = solve_theta(cfg.alpha_lo, cfg.m)
    alphas = np.linspace(cfg.alpha_lo, cfg.alpha_hi, spec.settings["eigen_points"])
    curve = sigma_star_curve(cfg.m, theta, alphas)
    with open(spec.out / "eigen_curve.csv", "w") as fh:
        fh.write(f"# format=eigen-curve-v1 config_sha256={spec.config_hash}\n")
        fh.write("alpha,sigma,dsigma_dalpha\n")
        for a, s_, d in zip(curve.alphas, curve.sigma, curve.derivative):
            fh.write(f"{a!r},{float(s_)!r},{float(d)!r}\n")
    _write_json(spec.out / "eigen_curve.json",
                {"sigma0": curve.sigma0, "sigma1": curve.sigma1, "alphas": curve.alphas,
                 "sigma": curve.sigma, "derivative": curve.derivative}, spec, "eigen-curve-v1")
    ok = abs(curve.sigma0) <= 5e-7 and bool(np.all(np.diff(curve.sigma) > 0))
    return EXIT_OK if ok else EXIT_INVARIANT


def run_airy(spec: ExperimentSpec) -> int:
    a1 = spec.settings["airy"]["a1"]
    if a1 is None:
        a1 = build_theory_profile(spec.model_config().m, spec.model_config()).sigma1_star
    eta = airy.build_eta_star(a1)
    s = np.linspace(0.0, eta.s_max, spec.settings["airy"]["samples"])
    vals = np.array([eta(x) for x in s])
    with open(spec.out / "eta_star.csv", "w") as fh:
        fh.write(f"# format=airy-v1 config_sha256={spec.config_hash}\n")
        fh.write("s,eta\n")
        for x, y in zip(s, vals):
            fh.write(f"{float(x)!r},{float(y)!r}\n")
    _write_json(spec.out / "airy.json",
                {"A0": airy.A0, "a1": a1, "a0": eta.a0, "normalization": eta.normalization,
                 "s_max": eta.s_max, "inflection": eta.inflection, "mass_K_099": eta.quantile(0.99)},
                spec, "airy-v1")
    return EXIT_OK


def run_discrete(spec: ExperimentSpec) -> int:
    d = spec.settings["discrete"]
    m = spec.habitat_field()
    alphas = np.asarray(d["alphas"], dtype=float)
    M = nearest_neighbor_mutation(alphas.size)
    rows, summary = [], []
    for eps in d["epsilons"]:
        sys_ = DiscreteTraitSystem(alphas, M, eps, m)
        if eps > 0:
            fields = steady_discrete(sys_, tol=spec.settings["tol"])
        else:
            theta_fast = solve_theta(alphas[-1], m).values
            u0 = [d["invasion"] * theta_fast] * (alphas.size - 1) + [theta_fast]
            fields = evolve_discrete(sys_, u0, d["t_end"], spec.settings["dt"])
        r = discrete_rows(sys_, fields)
        rows.extend(r)
        summary.append({"epsilon": eps, "mass_frac": [x[4] for x in r]})
    write_discrete_csv(rows, spec.out / "discrete.csv", spec.config_hash)
    _write_json(spec.out / "discrete.json", {"alphas": alphas, "runs": summary}, spec, "sweep-v1")
    ok = all(r[3] >= 0 for r in rows)
    return EXIT_OK if ok else EXIT_INVARIANT


RUNNERS = {"steady": run_steady, "evolve": run_evolve, "sweep": run_sweep_mode,
           "eigen-curve": run_eigen_curve, "airy": run_airy, "discrete": run_discrete}


def check_checkpoint(path) -> int:
    state = load_checkpoint(path)
    return EXIT_OK if _report_checks(steady_state_checks(state)) else EXIT_INVARIANT


def run(spec: ExperimentSpec) -> int:
    spec.out.mkdir(parents=True, exist_ok=True)
    return RUNNERS[spec.mode](spec)


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dispersal", description=__doc__.split("\n\n")[0])
    p.add_argument("mode", nargs="?", choices=MODES)
    p.add_argument("--config", help="JSON experiment file")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--threads", type=int, default=1, help="worker processes for sweeps (default 1)")
    p.add_argument("--check", metavar="CHECKPOINT", help="run the invariant suite on a saved state")
    p.add_argument("-v", "--verbose", action="store_true")
    g = p.add_argument_group("overrides")
    g.add_argument("--epsilon", type=float)
    g.add_argument("--epsilons", type=_floats, help="comma-separated list")
    g.add_argument("--alpha-lo", type=float)
    g.add_argument("--alpha-hi", type=float)
    g.add_argument("--cells", type=int, help="spatial cells (1D)")
    g.add_argument("--trait-cells", type=int)
    g.add_argument("--habitat", choices=HABITAT_PRESETS)
    g.add_argument("--amplitude", type=float)
    g.add_argument("--trivial", action="store_true", default=None)
    g.add_argument("--tol", type=float)
    g.add_argument("--dt", type=float)
    g.add_argument("--t-end", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--a1", type=float, help="airy mode: slope a1 (default: sigma_1* of the habitat)")
    return p


def _overrides(ns) -> dict:
    out = {}
    for key in ("epsilon", "epsilons", "alpha_lo", "alpha_hi", "trait_cells", "trivial", "tol", "dt",
                "t_end", "seed"):
        val = getattr(ns, key)
        if val is not None:
            out[key] = val
    if ns.cells is not None:
        out["space"] = {"extents": [1.0], "cells": [ns.cells]}
    hab = {k: v for k, v in (("preset", ns.habitat), ("amplitude", ns.amplitude)) if v is not None}
    if hab:
        out["habitat"] = hab
    if ns.a1 is not None:
        out["airy"] = {"a1": ns.a1}
    return out


def main(argv=None) -> int:
    ns = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if ns.check:
            return check_checkpoint(ns.check)
        if ns.mode is None:
            raise ConfigError("a mode is required unless --check is given", ("mode",))
        spec = build_spec(ns.mode, ns.config, _overrides(ns), ns.out, ns.threads)
        status = run(spec)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DispersalError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if status != EXIT_OK:
        print("invariant check failed", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
