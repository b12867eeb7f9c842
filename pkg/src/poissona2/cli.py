"""Batch driver.

Usage::

    poissona2 SUBCOMMAND --config CONFIG.json --out DIR [--seed N] [--threads N]

Subcommands are ``characteristics``, ``walk``, ``largestep``, ``transform``
and ``validate``.  Every report embeds a hash of the effective configuration.
Exit codes: 0 success, 1 configuration error, 2 validation failure,
3 budget exhausted.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import large_step, simplex_walk, small_step, weights
from .simplex_walk import BudgetError

log = logging.getLogger("poissona2")

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION, EXIT_BUDGET = 0, 1, 2, 3
REPORT_SCHEMA = "poissona2.report/1"


class ConfigError(ValueError):
    pass


class ValidationFailure(RuntimeError):
    pass


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _get(cfg, key, typ, default=None, required=False):
    if key not in cfg or cfg[key] is None:
        if required:
            raise ConfigError(f"missing required parameter {key!r}")
        return default
    try:
        return typ(cfg[key])
    except (TypeError, ValueError):
        raise ConfigError(f"parameter {key!r} must be {typ.__name__}") from None


def _load_json(path, base: Path) -> dict:
    p = Path(path)
    if not p.is_absolute():
        p = base / p
    try:
        return json.loads(p.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p} is not valid JSON: {exc}") from None


def _weight_from(cfg, base: Path) -> weights.PiecewiseWeight:
    source = cfg.get("weight", "identity")
    if source == "identity":
        return weights.PiecewiseWeight.constant(np.eye(2), _get(cfg, "leaf_depth", int, 2))
    doc = source if isinstance(source, dict) else _load_json(source, base)
    try:
        return weights.PiecewiseWeight.from_dict(doc)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad weight: {exc}") from None


def _ruleset_from(cfg, base: Path):
    if "ruleset" in cfg:
        try:
            return large_step.TableRuleset.from_json(json.dumps(_load_json(cfg["ruleset"], base)))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad ruleset: {exc}") from None
    q = _get(cfg, "Q", float, 4.0)
    if q < 1:
        raise ConfigError("Q must be at least 1")
    return large_step.SurrogateRuleset(q, _get(cfg, "N0", int, large_step.DEFAULT_N0))


def _n0(cfg) -> int:
    n0 = _get(cfg, "N0", int, large_step.DEFAULT_N0)
    if n0 < 1:
        raise ConfigError("N0 must be at least 1")
    return n0


def _assemble(cfg, base) -> large_step.MartingaleX:
    try:
        return large_step.assemble_F(_ruleset_from(cfg, base), _n0(cfg))
    except large_step.AssemblyError as exc:
        raise ValidationFailure(json.dumps(exc.report.to_dict() if exc.report else str(exc))) from None


# subcommands --------------------------------------------------------------------

def cmd_characteristics(cfg, base, seed):
    w = _weight_from(cfg, base)
    g = cfg.get("grid")
    grid = weights.LambdaGrid(**g) if isinstance(g, dict) else None
    rep = weights.characteristics(w, grid)
    return {"characteristics": rep.to_dict()}, {"characteristics.csv": rep.to_csv()}


def cmd_walk(cfg, base, seed):
    d = _get(cfg, "d", int, required=True)
    if d < 1:
        raise ConfigError("d must be at least 1")
    tol = _get(cfg, "tolerance", float, simplex_walk.DEFAULT_TOLERANCE)
    cap = _get(cfg, "cap", int)
    mode = cfg.get("mode", "dp")
    if mode == "explicit":
        if cap is None:
            raise ConfigError("explicit mode needs a cap")
        _, stats = simplex_walk.run_walk_explicit(d, np.eye(4), cap, _get(cfg, "budget", int, simplex_walk.DEFAULT_EXPLICIT_BUDGET))
    elif mode == "dp":
        stats = simplex_walk.run_walk_dp(d, cap) if cap else simplex_walk.grow_cap(d, tol)
    else:
        raise ConfigError(f"unknown walk mode {mode!r}")
    out = {"walk_stats": stats.to_dict()}
    est = simplex_walk.hitting_time_expectation(d, tol)
    out["hitting_time"] = {
        "expected_tau_truncated": est.expected_tau_truncated,
        "band": list(est.band),
        "cap": est.cap,
        "bounds": list(est.bounds),
        "bounds_ok": est.bounds_ok,
    }
    paths = _get(cfg, "mc_paths", int, 0)
    if paths:
        if seed is None:
            raise ConfigError("Monte Carlo sampling needs --seed")
        mc = simplex_walk.monte_carlo(d, paths, stats.depth_cap, seed)
        out["monte_carlo"] = mc.__dict__
    if not est.bounds_ok or abs(stats.total_mass - 1) > 1e-12:
        raise ValidationFailure(json.dumps(out))
    return out, {"tau_distribution.csv": stats.tau_csv()}


def cmd_largestep(cfg, base, seed):
    F = _assemble(cfg, base)
    rep = large_step.validate_F(F)
    out = {
        "validation": rep.to_dict(),
        "families": F.fam.counts(),
        "dyadic_a2_W": large_step.w_dyadic_a2(F),
        "pairing": small_step.pairing_of_F(F),
    }
    files = {"F.json": F.to_json()}
    if not rep.ok:
        raise ValidationFailure(json.dumps(out))
    return out, files


def cmd_transform(cfg, base, seed):
    F = _assemble(cfg, base)
    delta = _get(cfg, "delta", float)
    eps = _get(cfg, "epsilon", float)
    if delta is None and eps is not None:
        # (1 + delta)^3 <= 1 + eps
        delta = (1 + eps) ** (1 / 3) - 1
    d = _get(cfg, "d", int)
    if d is None:
        if delta is None:
            raise ConfigError("transform needs d, delta or epsilon")
        d = small_step.choose_d(delta, F)
    tcfg = small_step.TransformConfig(
        d=d,
        delta_target=delta,
        tail_tol=_get(cfg, "tail_tol", float, small_step.DEFAULT_TAIL_TOL),
        node_budget=_get(cfg, "node_budget", int, small_step.DEFAULT_NODE_BUDGET),
        materialize=bool(cfg.get("materialize", True)),
        cap=_get(cfg, "cap", int),
    )
    res = small_step.transform(F, tcfg)
    dmg = small_step.damage_ratio(F, res)
    entries, cert, complete = small_step.build_T(res, F, budget=_get(cfg, "remap_budget", int, 10_000))
    pb = small_step.verify_pullback(F, res)
    out = {
        "d": d,
        "delta": delta,
        "summary": res.summary(),
        "damage": dmg.to_dict(),
        "certificate": {"ok": cert.ok, "total": cert.total, "max_deviation": cert.max_deviation, "tail": cert.tail},
        "remap_complete": complete,
        "pullback": {**pb.__dict__, "norms_ok": pb.norms_ok},
    }
    ok = cert.ok and pb.max_deviation <= 1e-12 and pb.norms_ok
    ok &= dmg.deviation <= 1e-8 + dmg.tail_band and dmg.universality_spread <= 1e-10 and abs(dmg.A1_block) <= 1e-12
    if delta is not None:
        audit = small_step.smoothness_and_a2_audit(F, d, delta, _get(cfg, "point_budget", int, small_step.DEFAULT_POINT_BUDGET), res)
        out["audit"] = audit.to_dict()
        ok &= audit.ok
    files = {"remap.csv": small_step.remap_csv(entries)}
    if not ok:
        raise ValidationFailure(json.dumps(out, default=str))
    return out, files


def cmd_validate(cfg, base, seed):
    path = cfg.get("artifact")
    if path is None:
        raise ConfigError("validate needs an 'artifact' path")
    doc = _load_json(path, base)
    schema = doc.get("schema", "")
    if schema == "poissona2.martingale_x/1":
        try:
            F = large_step.MartingaleX.from_json(json.dumps(doc))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad artifact: {exc}") from None
        rep = large_step.validate_F(F)
        out = {"schema": schema, "validation": rep.to_dict()}
        ok = rep.ok
    elif schema == weights.WEIGHT_SCHEMA:
        try:
            weights.PiecewiseWeight.from_dict(doc)
            out, ok = {"schema": schema, "valid": True}, True
        except ValueError as exc:
            out, ok = {"schema": schema, "valid": False, "error": str(exc)}, False
    elif schema == simplex_walk.WalkStats.SCHEMA:
        total = sum(doc["stopped_mass_per_vertex"]) + doc["unstopped_mass"]
        vmax = max(doc["stopped_mass_per_vertex"])
        ok = abs(total - 1) <= 1e-12 and vmax <= 0.25 + 1e-12
        out = {"schema": schema, "total_mass": total, "max_vertex_mass": vmax, "valid": ok}
    else:
        raise ConfigError(f"unknown artifact schema {schema!r}")
    if not ok:
        raise ValidationFailure(json.dumps(out))
    return out, {}


COMMANDS = {
    "characteristics": cmd_characteristics,
    "walk": cmd_walk,
    "largestep": cmd_largestep,
    "transform": cmd_transform,
    "validate": cmd_validate,
}


def _write(out_dir: Path, name: str, payload: dict, files: dict, chash: str, cfg: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    report = {"schema": REPORT_SCHEMA, "subcommand": name, "config_hash": chash, "config": cfg,
              "tolerances": {"matrix_order_slack": weights.MATRIX_ORDER_SLACK}, **payload}
    (out_dir / f"{name}.json").write_text(json.dumps(report, indent=2, sort_keys=True, default=_jsonable) + "\n")
    for fname, text in files.items():
        if fname.endswith(".csv"):
            text = f"# config_hash={chash}\n" + text
        (out_dir / fname).write_text(text)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if hasattr(x, "level") and hasattr(x, "index"):
        return [x.level, x.index]
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return str(x)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poissona2", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=sorted(COMMANDS))
    p.add_argument("--config", type=Path, help="JSON configuration file")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--seed", type=int, default=None, help="seed for sampling modes")
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    base = Path.cwd()
    cfg: dict = {}
    try:
        if args.config is not None:
            cfg = _load_json(args.config, base)
            base = args.config.resolve().parent
            if not isinstance(cfg, dict):
                raise ConfigError("configuration must be a JSON object")
        if args.threads < 1:
            raise ConfigError("--threads must be positive")
        effective = {"subcommand": args.subcommand, "seed": args.seed, **cfg}
        chash = config_hash(effective)
        log.info("running %s (config %s)", args.subcommand, chash[:12])
        payload, files = COMMANDS[args.subcommand](cfg, base, args.seed)
        _write(args.out, args.subcommand, payload, files, chash, effective)
        return EXIT_OK
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationFailure as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except BudgetError as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
