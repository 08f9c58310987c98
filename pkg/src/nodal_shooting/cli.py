"""Command-line front end.

Every subcommand builds a run configuration (JSON file given by ``--config``
with command-line overrides), does its work and writes artifacts named
``<command>-<hash>.{json,csv}`` where ``hash`` is a digest of the
configuration.  Artifacts embed the configuration and the tool version and
contain no timestamps, so equal configurations give identical files.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, geometry, matcher, verification
from .errors import BudgetExhausted, FamilyError, ShootingError
from .shooting import scan_spiral
from .singular_ivp import solve_backward, solve_forward

DEFAULTS = {
    "family": [1, 2, 2],
    "mu": None,
    "lambda": None,
    "p": 3.0,
    "atol": 1e-10,
    "rtol": 1e-10,
    "k": 3,
    "budget": 1000.0,
    "out": "artifacts",
    "seed": 0,
    "workers": 1,
}

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_BUDGET = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


def _parse_family(text):
    if isinstance(text, (list, tuple)):
        parts = list(text)
    else:
        parts = [s for s in str(text).replace(" ", "").split(",") if s]
    if len(parts) != 3:
        raise ConfigError(f"--family expects ell,m-,m+ (got {text!r})")
    try:
        return [int(x) for x in parts]
    except ValueError as exc:
        raise ConfigError(f"--family entries must be integers (got {text!r})") from exc


def build_config(args: argparse.Namespace) -> dict:
    """Defaults, then the ``--config`` file, then explicit flags."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg.update(loaded)
    for key, val in vars(args).items():
        if key in ("config", "func") or val is None:
            continue
        cfg[key.replace("-", "_")] = val
    cfg["command"] = args.command
    cfg["family"] = _parse_family(cfg["family"])
    ell = cfg["family"][0]
    if cfg.get("mu") is not None and cfg.get("lambda") is not None:
        if not math.isclose(cfg["mu"], cfg["lambda"] / ell**2, rel_tol=1e-12):
            raise ConfigError("--mu and --lambda disagree (mu = lambda / ell^2)")
    if cfg.get("mu") is None:
        cfg["mu"] = 1.0 if cfg.get("lambda") is None else cfg["lambda"] / ell**2
    cfg["lambda"] = cfg["mu"] * ell**2
    for key in ("mu", "p", "atol", "rtol", "budget"):
        cfg[key] = float(cfg[key])
    if not cfg["mu"] > 0:
        raise ConfigError("mu must be positive")
    if not cfg["p"] > 1:
        raise ConfigError("p must exceed 1")
    if not (cfg["atol"] > 0 and cfg["rtol"] > 0):
        raise ConfigError("tolerances must be positive")
    return cfg


def config_hash(cfg: dict) -> str:
    body = {k: v for k, v in cfg.items() if k not in ("out", "workers")}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:16]


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def write_artifacts(cfg: dict, result: dict, csv_text: str | None = None) -> dict:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{cfg['command']}-{config_hash(cfg)}"
    doc = {"tool": "nodal-shooting", "version": __version__, "config": cfg, "result": result}
    paths = {"json": str(out / f"{stem}.json")}
    Path(paths["json"]).write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n")
    if csv_text is not None:
        paths["csv"] = str(out / f"{stem}.csv")
        Path(paths["csv"]).write_text(csv_text)
    return paths


def _family(cfg):
    return geometry.make_family(*cfg["family"])


# --------------------------------------------------------------------------
# subcommands


def _split_or_none(fam):
    try:
        return geometry.default_split(fam)
    except FamilyError:
        return None


def cmd_family(cfg):
    fam = _family(cfg)
    rng = geometry.admissible_p(fam)
    result = {
        "family": fam.as_dict(), "n": fam.n, "a0": fam.a0,
        "a0_over_pi": fam.a0 / math.pi,
        "admissible_p": {"lower": rng.lower, "upper": rng.upper, "critical": rng.critical},
        "focal_dimensions": [fam.dim_focal_minus, fam.dim_focal_plus],
        "split": _split_or_none(fam),
    }
    lines = [
        f"family ell={fam.ell} m-={fam.m_minus} m+={fam.m_plus}",
        f"sphere dimension n = {fam.n}",
        f"a0 = {fam.a0:.15g} ({fam.a0 / math.pi:.15g} pi)",
        f"admissible p in ({rng.lower:g}, {rng.upper:g}); critical exponent {rng.critical:g}",
        f"focal dimensions {fam.dim_focal_minus}, {fam.dim_focal_plus}",
    ]
    return result, None, "\n".join(lines)


def cmd_shoot(cfg):
    fam = _family(cfg)
    side = cfg.get("side", "forward")
    value = float(cfg.get("d", 1.0))
    solver = solve_forward if side in ("fwd", "forward") else solve_backward
    traj = solver(fam, cfg["mu"], cfg["p"], value, cfg["atol"], cfg["rtol"])
    meta = traj.metadata()
    meta.pop("label", None)
    text = f"{side} value={value:g}: endpoint {meta['endpoint']}, {len(meta['zeros'])} zeros"
    return meta, traj.to_csv(), text


def cmd_spiral(cfg):
    fam = _family(cfg)
    curve = scan_spiral(cfg.get("side", "fwd"), float(cfg.get("from_", 1.0)), float(cfg.get("to", 200.0)), fam,
                        cfg["mu"], cfg["p"], atol=cfg["atol"], rtol=cfg["rtol"], workers=int(cfg["workers"]),
                        budget=int(cfg.get("samples", 20000)))
    result = json.loads(curve.to_json())
    result.update(angle_min=float(curve.angles.min()), angle_max=float(curve.angles.max()),
                  formula_matches_events=bool(np.all(curve.zero_count_formula() == curve.zero_counts)))
    text = f"{curve.side}: {len(curve.params)} samples, {len(curve.crossings)} crossings"
    return result, curve.to_csv(), text


def cmd_match(cfg):
    fam = _family(cfg)
    sol = matcher.solve_for_k(fam, cfg["mu"], cfg["p"], int(cfg["k"]), cfg["budget"], atol=cfg["atol"],
                              rtol=cfg["rtol"], workers=int(cfg["workers"]))
    result = sol.summary()
    text = f"k={cfg['k']}: d={sol.d:.12g} c={sol.c:.12g} zeros={sol.k_zeros} residual={sol.match_residual:.3e}"
    return result, sol.to_csv(), text


def cmd_verify(cfg):
    fam = _family(cfg)
    suite = cfg.get("suite", "pohozaev")
    result = verification.run_suite(suite, fam, cfg["mu"], cfg["p"], cfg["atol"], cfg["rtol"])
    return result, None, f"suite {suite}: {'passed' if result['passed'] else 'FAILED'}"


def sphere_points(fam, split, count, seed, min_focal=1e-2):
    rng = np.random.default_rng(seed)
    pts = []
    while len(pts) < count:
        for x in geometry.random_sphere_points(fam.n, count, rng):
            if geometry.focal_distance(fam, split, x) > min_focal and len(pts) < count:
                pts.append(x)
    return np.array(pts)


def cmd_sphere(cfg):
    fam = _family(cfg)
    split = geometry.default_split(fam)
    sol = matcher.solve_for_k(fam, cfg["mu"], cfg["p"], int(cfg["k"]), cfg["budget"], atol=cfg["atol"],
                              rtol=cfg["rtol"], workers=int(cfg["workers"]))
    pts = sphere_points(fam, split, int(cfg.get("points", 100)), int(cfg["seed"]))
    rows = geometry.residual_rows(sol, fam, split, cfg["lambda"], cfg["p"], pts)
    umax = max(abs(r[2]) for r in rows)
    worst = max(abs(r[3]) for r in rows)
    limit = 1e-3 * (1 + umax ** cfg["p"])
    lines = ["index,f,u,residual"] + [f"{i},{f!r},{u!r},{res!r}" for i, f, u, res in
                                      ((i, float(f), float(u), float(res)) for i, f, u, res in rows)]
    result = {"d": sol.d, "c": sol.c, "k_zeros": sol.k_zeros, "points": len(rows), "max_abs_u": umax,
              "max_residual": worst, "limit": limit, "passed": worst <= limit}
    return result, "\n".join(lines) + "\n", f"max residual {worst:.3e} (limit {limit:.3e})"


COMMANDS = {"family": cmd_family, "shoot": cmd_shoot, "spiral": cmd_spiral, "match": cmd_match,
            "verify": cmd_verify, "sphere": cmd_sphere}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with run configuration")
    common.add_argument("--family", help="ell,m-,m+ (default 1,2,2)")
    grp = common.add_mutually_exclusive_group()
    grp.add_argument("--mu", type=float, help="ODE coefficient mu")
    grp.add_argument("--lambda", dest="lambda", type=float, help="sphere coefficient; mu = lambda/ell^2")
    common.add_argument("--p", type=float, help="exponent p > 1")
    common.add_argument("--atol", type=float)
    common.add_argument("--rtol", type=float)
    common.add_argument("--k", type=int, help="required number of zeros")
    common.add_argument("--budget", type=float, help="largest shooting parameter scanned")
    common.add_argument("--out", help="artifact directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)

    parser = argparse.ArgumentParser(prog="nodal-shooting", description="Double shooting for nodal solutions")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("family", parents=[common], help="report on a family")
    sp = sub.add_parser("shoot", parents=[common], help="integrate one IVP")
    sp.add_argument("--side", choices=["fwd", "bwd", "forward", "backward"])
    sp.add_argument("--d", type=float, help="initial value (w(0) forward, w(pi) backward)")
    sp = sub.add_parser("spiral", parents=[common], help="scan a phase map")
    sp.add_argument("--side", choices=["fwd", "bwd", "forward", "backward"])
    sp.add_argument("--from", dest="from_", type=float)
    sp.add_argument("--to", type=float)
    sp.add_argument("--samples", type=int, help="sample budget")
    sub.add_parser("match", parents=[common], help="nodal solution with at least k zeros")
    sp = sub.add_parser("verify", parents=[common], help="run a verification suite")
    sp.add_argument("--suite", choices=list(verification.SUITES))
    sp = sub.add_parser("sphere", parents=[common], help="PDE residual of the lifted solution")
    sp.add_argument("--points", type=int)
    return parser


def _error(exc: Exception, code: int) -> int:
    body = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    for attr in ("achieved", "best", "deviation", "r"):
        if getattr(exc, attr, None) is not None:
            body[attr] = getattr(exc, attr)
    print(json.dumps(_clean(body), sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_config(args)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            result, csv_text, text = COMMANDS[args.command](cfg)
        paths = write_artifacts(cfg, result, csv_text)
    except BudgetExhausted as exc:
        return _error(exc, EXIT_BUDGET)
    except (FamilyError, ConfigError) as exc:
        return _error(exc, EXIT_VALIDATION)
    except ShootingError as exc:
        return _error(exc, EXIT_NUMERICAL)
    except ValueError as exc:
        return _error(exc, EXIT_VALIDATION)
    print(text)
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
