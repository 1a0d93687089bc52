"""Command-line front end for the bound pipeline.

Subcommands: conjugate (transform calculator), norm (estimate norms from a
sample file), bound (optimized block-sum bound), simulate (empirical tails
only), verify (tails, calibration, and the lower/empirical/bound sandwich),
and models (list the registries).

A run is configured by an optional JSON file plus flags; flags win.  Every
output file is written atomically (temp file, then rename) with no
timestamps, so rerunning a fixed (config, seed) is byte-identical.  CSV and
JSON twins carry the same numbers; CSV floats use %.17g, which round-trips
float64 exactly.

Exit codes: 0 success, 2 bad configuration or domain error, 3 transform
nonconvergence, 4 all-divergent bound, 5 calibration or dominance failure,
6 censored tail grid (too few exceedances to estimate anything).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import tempfile
from typing import List, Optional, Sequence

import numpy as np

from .engine import (DEFAULT_KMAX, NormingSequence, SigmaProfile,
                     constant_norming, iterated_log_norming, optimized_bound,
                     single_time_lower_bound)
from .errors import (CalibrationError, DomainError, LilboundError,
                     NonconvergenceError)
from .models import (MartingaleModel, chaos_model, power_law_surrogate,
                     weighted_iid_model)
from .norms import Sample, estimate_norms
from .phi import (PhiFunction, chi_square_phi, conjugate, cosh_phi,
                  phi_from_csv, phi2, power_phi)
from .verify import (CENSOR_COUNT, TailEstimate, calibrate_constant,
                     empirical_sup_tail, exact_sup_tail, single_time_tail)

EXIT_OK = 0
EXIT_DOMAIN = 2
EXIT_NONCONVERGENCE = 3
EXIT_DIVERGENT = 4
EXIT_DOMINANCE = 5
EXIT_CENSORED = 6

PHI_REGISTRY = "phi2, power:q=Q, cosh, chi2, csv:PATH"
NORMING_REGISTRY = "vr:R, const:C"
MODEL_REGISTRY = "chaos:d=D, weightedA:beta=B[,r=R]"
SIGMA_REGISTRY = "model (exact profile), powerlaw:gamma=G[,m=one|log|invlog]"


# ---------------------------------------------------------------------------
# registries
# ---------------------------------------------------------------------------

def _parse_kv(spec: str, what: str) -> dict:
    out = {}
    for piece in spec.split(","):
        if not piece:
            continue
        if "=" not in piece:
            raise DomainError(f"bad {what} parameter {piece!r}, "
                              f"expected key=value")
        key, _, val = piece.partition("=")
        out[key.strip()] = val.strip()
    return out


def phi_from_id(phi_id: str) -> PhiFunction:
    """Resolve a generator id; unknown ids name the registry."""
    head, _, rest = phi_id.partition(":")
    if head == "phi2":
        return phi2()
    if head == "cosh":
        return cosh_phi()
    if head == "chi2":
        return chi_square_phi()
    if head == "power":
        kv = _parse_kv(rest, "phi")
        if set(kv) != {"q"}:
            raise DomainError(f"power generator takes q=..., got {rest!r}")
        return power_phi(float(kv["q"]))
    if head == "csv":
        if not rest:
            raise DomainError("csv generator needs a path: csv:PATH")
        return phi_from_csv(rest)
    raise DomainError(f"unknown phi id {phi_id!r}; registry: {PHI_REGISTRY}")


def norming_from_id(norming_id: str) -> NormingSequence:
    head, _, rest = norming_id.partition(":")
    if head == "vr":
        return iterated_log_norming(float(rest))
    if head == "const":
        return constant_norming(float(rest) if rest else 1.0)
    raise DomainError(f"unknown norming id {norming_id!r}; registry: "
                      f"{NORMING_REGISTRY}")


def model_from_id(model_id: str) -> MartingaleModel:
    head, _, rest = model_id.partition(":")
    kv = _parse_kv(rest, "model")
    if head == "chaos":
        if set(kv) != {"d"}:
            raise DomainError(f"chaos model takes d=..., got {rest!r}")
        return chaos_model(int(kv["d"]))
    if head == "weightedA":
        extra = set(kv) - {"beta", "r"}
        if extra:
            raise DomainError(f"weightedA model takes beta=,r=; got {extra}")
        return weighted_iid_model(beta=float(kv.get("beta", "1")),
                                  weibull_r=(float(kv["r"]) if "r" in kv
                                             else None))
    raise DomainError(f"unknown model id {model_id!r}; registry: "
                      f"{MODEL_REGISTRY}")


def profile_from_id(sigma_id: str) -> SigmaProfile:
    head, _, rest = sigma_id.partition(":")
    if head == "powerlaw":
        kv = _parse_kv(rest, "sigma")
        extra = set(kv) - {"gamma", "m"}
        if "gamma" not in kv or extra:
            raise DomainError(f"powerlaw profile takes gamma=[,m=]; "
                              f"got {rest!r}")
        return power_law_surrogate(float(kv["gamma"]), kv.get("m", "one"))
    raise DomainError(f"unknown sigma id {sigma_id!r}; registry: "
                      f"{SIGMA_REGISTRY}")


def parse_grid(spec: str, what: str) -> np.ndarray:
    """Grid specs: 'log:lo:hi:n', 'lin:lo:hi:n', or a comma list."""
    parts = spec.split(":")
    try:
        if parts[0] == "log" and len(parts) == 4:
            lo, hi, n = float(parts[1]), float(parts[2]), int(parts[3])
            return np.geomspace(lo, hi, n)
        if parts[0] == "lin" and len(parts) == 4:
            lo, hi, n = float(parts[1]), float(parts[2]), int(parts[3])
            return np.linspace(lo, hi, n)
        if len(parts) == 1:
            return np.array([float(x) for x in spec.split(",") if x])
    except ValueError as exc:
        raise DomainError(f"bad {what} spec {spec!r}: {exc}")
    raise DomainError(f"bad {what} spec {spec!r}; use log:lo:hi:n, "
                      f"lin:lo:hi:n, or a comma list")


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

@dataclasses.dataclass
class RunConfig:
    """One reproducible run: the model/norming/phi triple plus budgets."""
    model: str = "chaos:d=1"
    phi: str = ""            # empty: the model's own generator
    norming: str = "vr:2"
    sigma: str = ""          # empty: the model's exact profile
    u_grid: str = "log:1:8:16"
    horizon: int = 16384
    paths: int = 100000
    seed: int = 1
    ratio_grid: str = "log:2:16:12"
    tolerance: float = 1e-12
    out_dir: str = "."

    def validate(self) -> None:
        if self.horizon < 1 or self.paths < 1 or self.seed < 1:
            raise DomainError("horizon, paths, and seed must be positive")
        if not 0.0 < self.tolerance < 1.0:
            raise DomainError(f"tolerance must lie in (0, 1), got "
                              f"{self.tolerance}")


_CONFIG_FIELDS = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def load_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the JSON config file, then explicit flags."""
    cfg = RunConfig()
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
        unknown = set(raw) - set(_CONFIG_FIELDS)
        if unknown:
            raise DomainError(f"unknown config keys {sorted(unknown)}; "
                              f"known: {sorted(_CONFIG_FIELDS)}")
        for key, val in raw.items():
            setattr(cfg, key, type(getattr(cfg, key))(val))
    for key in _CONFIG_FIELDS:
        flag = getattr(args, key, None)
        if flag is not None:
            setattr(cfg, key, flag)
    cfg.validate()
    return cfg


def _resolve(cfg: RunConfig):
    """(model, v, sigma, phi) from a validated config."""
    model = model_from_id(cfg.model)
    v = norming_from_id(cfg.norming)
    sigma = profile_from_id(cfg.sigma) if cfg.sigma else model.sigma_profile()
    phi = phi_from_id(cfg.phi) if cfg.phi else model.phi
    return model, v, sigma, phi


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return "%.17g" % float(value)


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str, header: Sequence[str],
              rows: Sequence[Sequence]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(cell) for cell in row) for row in rows)
    _atomic_write(path, "\n".join(lines) + "\n")


def _jsonify(obj):
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    return obj


def write_json(path: str, obj: dict) -> None:
    _atomic_write(path, json.dumps(_jsonify(obj), indent=2,
                                   sort_keys=True) + "\n")


def _out(cfg_or_dir, name: str) -> str:
    base = cfg_or_dir if isinstance(cfg_or_dir, str) else cfg_or_dir.out_dir
    return os.path.join(base, name)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_conjugate(args: argparse.Namespace) -> int:
    phi = phi_from_id(args.phi)
    grid = [float(x) for x in args.u.split(",") if x]
    if not grid:
        raise DomainError("empty u grid")
    values = [conjugate(phi, u) for u in grid]
    if args.json:
        print(json.dumps({"u": grid, "phi_star": values}))
    else:
        print("u,phi_star")
        for u, val in zip(grid, values):
            print(f"{_fmt(u)},{_fmt(val)}")
    if args.out_dir:
        payload = {"u": grid, "phi_star": values, "phi": phi.label}
        write_csv(_out(args.out_dir, "conjugate.csv"), ("u", "phi_star"),
                  list(zip(grid, values)))
        write_json(_out(args.out_dir, "conjugate.json"), payload)
    return EXIT_OK


def cmd_norm(args: argparse.Namespace) -> int:
    sample = Sample.from_csv(args.sample)
    phi = phi_from_id(args.phi)
    est = estimate_norms(sample, phi)
    print(f"b_norm={est.b_norm:.6g} g_norm={est.g_norm:.6g} "
          f"(sample {sample.label!r}, M={est.sample_size}, phi {phi.label})")
    if args.out_dir:
        d = est.to_dict()
        keys = ("b_norm", "g_norm", "lambda_grid_max", "p_max", "mean_abs",
                "sample_size")
        write_csv(_out(args.out_dir, "norms.csv"), keys,
                  [[d[k] for k in keys]])
        write_json(_out(args.out_dir, "norms.json"), d)
    return EXIT_OK


def cmd_bound(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    _, v, sigma, phi = _resolve(cfg)
    u_grid = parse_grid(cfg.u_grid, "u grid")
    ratios = parse_grid(cfg.ratio_grid, "ratio grid")
    report = optimized_bound(v, sigma, phi, u_grid, ratio_grid=ratios,
                             tol=cfg.tolerance)
    d = report.to_dict()
    write_csv(_out(cfg, "bound.csv"), ("u", "bound", "ratio_chosen", "k_used"),
              list(zip(d["u"], d["bound"], d["ratio_chosen"], d["k_used"])))
    write_json(_out(cfg, "bound.json"), {**d, "config": dataclasses.asdict(cfg)})
    if report.all_divergent:
        print("bound diverges at every grid point (non-summable blocks); "
              "nothing usable written", file=sys.stderr)
        return EXIT_DIVERGENT
    best = int(np.argmin(d["bound"]))
    print(f"minimal bound {d['bound'][best]:.6g} at u={d['u'][best]:.6g} "
          f"(ratio {d['ratio_chosen'][best]:.4g}, {d['k_used'][best]} blocks)")
    return EXIT_OK


def _tail_files(cfg: RunConfig, estimate) -> None:
    d = estimate.to_dict()
    rows = list(zip(d["u"], d["w_hat"], d["ci_low"], d["ci_high"])) \
        if "ci_low" in d else \
        list(zip(d["u"], d["w_hat"], d["w_hat"], d["w_hat"]))
    write_csv(_out(cfg, "tails.csv"), ("u", "w_hat", "ci_low", "ci_high"),
              rows)
    write_json(_out(cfg, "tails.json"), {**d, "config": dataclasses.asdict(cfg)})


def _censor_guard(cfg: RunConfig) -> Optional[int]:
    if cfg.paths < 1000:
        print(f"{cfg.paths} paths cannot resolve any tail at the "
              f"{CENSOR_COUNT}-count censoring threshold; increase paths",
              file=sys.stderr)
        return EXIT_CENSORED
    return None


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    model, v, _, _ = _resolve(cfg)
    guard = _censor_guard(cfg)
    if guard is not None:
        return guard
    u_grid = parse_grid(cfg.u_grid, "u grid")
    estimate = empirical_sup_tail(model, v, cfg.horizon, cfg.paths, u_grid,
                                  cfg.seed)
    _tail_files(cfg, estimate)
    if all(estimate.censored):
        print("every grid point censored (tail counts below "
              f"{CENSOR_COUNT}); estimates written but unusable",
              file=sys.stderr)
        return EXIT_CENSORED
    print(f"tails written to {_out(cfg, 'tails.csv')}; "
          f"{sum(estimate.censored)}/{len(estimate.censored)} cells censored")
    return EXIT_OK


def _exact_as_estimate(exact, paths_pow: int) -> TailEstimate:
    """Wrap enumeration output so calibration sees exact degenerate CIs."""
    w = tuple(float(f) for f in exact.w)
    return TailEstimate(
        u_grid=exact.u_grid, w_hat=w,
        w_plus_hat=tuple(float(f) for f in exact.w_plus),
        ci_low=w, ci_high=w,
        counts=tuple(f.numerator * (2 ** paths_pow // f.denominator)
                     for f in exact.w),
        counts_plus=tuple(f.numerator * (2 ** paths_pow // f.denominator)
                          for f in exact.w_plus),
        censored=tuple(False for _ in exact.w),
        horizon=exact.horizon, paths=2 ** paths_pow, seed=0,
        model_label=exact.model_label, norming_label=exact.norming_label)


def _lower_bounds(model, v, horizon: int, u_grid: np.ndarray) -> np.ndarray:
    """Single-time floor at the horizon; zero when no exact tail exists."""
    j0 = horizon - (model.n_min - 1)

    def tail(x: float) -> float:
        return float(single_time_tail(model, horizon, [x])[0])

    try:
        return np.array([single_time_lower_bound(tail, j0, v, float(u))
                         for u in u_grid])
    except DomainError:
        return np.zeros(len(u_grid))


def cmd_verify(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    model, v, sigma, phi = _resolve(cfg)
    u_grid = parse_grid(cfg.u_grid, "u grid")
    if args.exact:
        exact = exact_sup_tail(model, v, cfg.horizon, u_grid)
        estimate = _exact_as_estimate(exact, cfg.horizon)
        _tail_files(cfg, exact)
    else:
        guard = _censor_guard(cfg)
        if guard is not None:
            return guard
        estimate = empirical_sup_tail(model, v, cfg.horizon, cfg.paths,
                                      u_grid, cfg.seed)
        _tail_files(cfg, estimate)
        if all(estimate.censored):
            print("every grid point censored; cannot calibrate",
                  file=sys.stderr)
            return EXIT_CENSORED
    ratios = parse_grid(cfg.ratio_grid, "ratio grid")
    try:
        calibration = calibrate_constant(estimate, v, sigma, phi,
                                         ratio_grid=ratios,
                                         tol=cfg.tolerance)
    except CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_DOMINANCE
    write_json(_out(cfg, "calibration.json"),
               {**calibration.to_dict(), "config": dataclasses.asdict(cfg)})
    lower = _lower_bounds(model, v, cfg.horizon, u_grid)
    bound = np.asarray(calibration.bound_values)
    rows = []
    violations = 0
    for i in range(len(u_grid)):
        if estimate.censored[i]:
            continue
        row = (float(u_grid[i]), float(lower[i]), estimate.w_hat[i],
               estimate.ci_high[i], float(bound[i]))
        rows.append(row)
        if not (row[1] <= row[2] + 1e-15 and row[2] <= row[3] + 1e-15
                and row[3] <= row[4] * (1 + 1e-12)):
            violations += 1
    write_csv(_out(cfg, "sandwich.csv"),
              ("u", "lower_bound", "w_hat", "ci_high", "bound_at_Chat_u"),
              rows)
    write_json(_out(cfg, "sandwich.json"), {
        "u": [r[0] for r in rows],
        "lower_bound": [r[1] for r in rows],
        "w_hat": [r[2] for r in rows],
        "ci_high": [r[3] for r in rows],
        "bound_at_Chat_u": [r[4] for r in rows],
        "config": dataclasses.asdict(cfg),
    })
    if violations or calibration.margin < 1.0:
        print(f"dominance failed on {violations} rows "
              f"(margin {calibration.margin:.4g}); this signals an "
              f"inconsistency between bound and estimator", file=sys.stderr)
        return EXIT_DOMINANCE
    print(f"C_hat={calibration.c_hat:.4g} margin={calibration.margin:.4g} "
          f"({len(rows)} usable grid points; outputs in {cfg.out_dir})")
    return EXIT_OK


def cmd_models(args: argparse.Namespace) -> int:
    print("models:   chaos:d=D          degree-D sign chaos (simulation "
          "closed-form for D<=3)")
    print("          weightedA:beta=B   geometrically weighted signs, "
          "noise scale B")
    print("          weightedA:beta=B,r=R  same weights, symmetric noise "
          "with tail exp(-x^R), R>1")
    print(f"phi:      {PHI_REGISTRY}")
    print(f"normings: {NORMING_REGISTRY}")
    print(f"sigma:    {SIGMA_REGISTRY}")
    print("grids:    log:lo:hi:n | lin:lo:hi:n | comma list")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def _add_config_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON run configuration; flags override")
    sub.add_argument("--model", help=f"model id ({MODEL_REGISTRY})")
    sub.add_argument("--phi", help=f"generator id ({PHI_REGISTRY}); "
                     f"default: the model's own")
    sub.add_argument("--norming", help=f"norming id ({NORMING_REGISTRY})")
    sub.add_argument("--sigma", help=f"sigma profile ({SIGMA_REGISTRY}); "
                     f"default: the model's exact profile")
    sub.add_argument("--u-grid", dest="u_grid", help="u grid spec")
    sub.add_argument("--horizon", type=int, help="sup truncation horizon N")
    sub.add_argument("--paths", type=int, help="Monte Carlo paths M")
    sub.add_argument("--seed", type=int, help="master seed")
    sub.add_argument("--ratio-grid", dest="ratio_grid",
                     help="partition ratio grid spec")
    sub.add_argument("--tolerance", type=float,
                     help="series truncation tolerance")
    sub.add_argument("--out-dir", dest="out_dir", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lilbound",
        description="Exponential tail bounds for normalized martingale "
                    "maxima, with Monte Carlo verification.")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("conjugate", help="evaluate the convex conjugate")
    p.add_argument("--phi", required=True, help=f"generator id "
                   f"({PHI_REGISTRY})")
    p.add_argument("--u", required=True, help="comma list of points")
    p.add_argument("--json", action="store_true",
                   help="print JSON instead of CSV")
    p.add_argument("--out-dir", dest="out_dir",
                   help="also write conjugate.csv/json here")
    p.set_defaults(func=cmd_conjugate)

    p = subs.add_parser("norm", help="estimate norms from a sample file")
    p.add_argument("--sample", required=True,
                   help="one-column CSV of observations")
    p.add_argument("--phi", default="phi2", help=f"generator id "
                   f"({PHI_REGISTRY})")
    p.add_argument("--out-dir", dest="out_dir",
                   help="also write norms.csv/json here")
    p.set_defaults(func=cmd_norm)

    p = subs.add_parser("bound", help="compute the optimized tail bound")
    _add_config_flags(p)
    p.set_defaults(func=cmd_bound)

    p = subs.add_parser("simulate", help="estimate empirical tails only")
    _add_config_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = subs.add_parser("verify", help="tails, calibration, and sandwich")
    _add_config_flags(p)
    p.add_argument("--exact", action="store_true",
                   help="exhaustive enumeration instead of Monte Carlo "
                        "(horizon <= 20)")
    p.set_defaults(func=cmd_verify)

    p = subs.add_parser("models", help="list the registries")
    p.set_defaults(func=cmd_models)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NonconvergenceError as exc:
        print(f"nonconvergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (DomainError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except LilboundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
