"""Batch experiment driver.

Every subcommand runs one reproducible experiment and writes a CSV file
whose first line is a ``#``-prefixed JSON header recording the effective
configuration (seed, worker count, version, every parameter).  Re-running
a command with the same configuration produces byte-identical output.

Precedence: command-line flags override config-file values override
defaults.  Config files are JSON objects or simple ``key = value`` lines.
The default output directory is taken from ``KACLAB_OUTDIR`` (falling
back to the working directory).

Exit codes: 0 success, 1 validation/usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np
from scipy.stats import chi2 as chi2_dist

from . import __version__
from . import conditioned as cond
from . import densities as dens
from . import lclt as lclt_mod
from . import walk as walk_mod
from . import wild as wild_mod

__all__ = ["main", "run"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _parse_ints(text: str) -> list[int]:
    return [int(float(t)) for t in text.split(",") if t.strip()]


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        text = fh.read()
    try:
        data = json.loads(text)
        if not isinstance(data, dict):
            raise UsageError("config file must contain a JSON object")
        return data
    except json.JSONDecodeError:
        out = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"bad config line: {line!r}")
            key, val = line.split("=", 1)
            out[key.strip().replace("-", "_")] = val.strip()
        return out


def _effective(args: argparse.Namespace, config: dict, spec: dict) -> dict:
    """flags > config > defaults, with per-key type coercion."""
    eff = {}
    for key, (typ, default) in spec.items():
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            eff[key] = cli_val
        elif key in config:
            eff[key] = typ(config[key])
        else:
            eff[key] = default
    return eff


def _out_path(eff: dict, command: str) -> str:
    out = eff.get("out")
    if out:
        return out
    base = os.environ.get("KACLAB_OUTDIR", ".")
    return os.path.join(base, f"{command}.csv")


def _write_csv(path: str, header: dict, columns: list[str], rows: list[tuple]) -> None:
    header = {k: header[k] for k in sorted(header)}
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _density_from_name(name: str):
    if name == "gamma":
        return dens.maxwellian(1.0)
    if name == "uniform":
        return None  # handled by caller (grid construction)
    if name.startswith("bc:"):
        return dens.bc_mixture(float(name[3:]))
    if name.startswith("maxwellian:"):
        return dens.maxwellian(float(name[11:]))
    raise UsageError(f"unknown density {name!r}; use gamma, uniform, bc:<delta>, maxwellian:<a>")


def _uniform_grid_density() -> dens.GridDensity1D:
    v_min, v_max, n = dens.DEFAULT_GRID
    x = np.linspace(v_min, v_max, n)
    dv = x[1] - x[0]
    h = math.sqrt(3.0)
    vals = np.clip((np.minimum(x + dv / 2, h) - np.maximum(x - dv / 2, -h)) / dv, 0.0, 1.0)
    return dens.GridDensity1D(v_min, v_max, vals / (2.0 * h))


# ---------------------------------------------------------------- commands

def _cmd_walk(eff: dict) -> tuple[dict, list[str], list[tuple]]:
    N = eff["n"]
    rng = np.random.default_rng(eff["seed"])
    state = walk_mod.SphereState(np.concatenate([[math.sqrt(N)], np.zeros(N - 1)]))
    burn = eff["burn_steps"] if eff["burn_steps"] >= 0 else 10_000 * N
    state = walk_mod.run_steps(state, burn, rng, eff["renorm_interval"])
    thin = eff["thin"] if eff["thin"] > 0 else 2 * N
    n_collect = max(1, eff["samples"] // N)
    coords = np.empty((n_collect, N))
    for k in range(n_collect):
        state = walk_mod.run_steps(state, thin, rng, eff["renorm_interval"])
        coords[k] = state.velocities
    values = coords.ravel()
    vmax = math.sqrt(N)
    edges = np.linspace(-min(6.0, vmax), min(6.0, vmax), eff["bins"] + 1)
    counts, _ = np.histogram(values, bins=edges)
    # expected bin probabilities from the first-coordinate marginal of sigma^N
    fine = 64
    probs = np.empty(eff["bins"])
    for b in range(eff["bins"]):
        xs = np.linspace(edges[b], edges[b + 1], fine)
        probs[b] = np.trapezoid(cond.marginal_sigma(N, 1, xs), xs)
    probs /= probs.sum()
    expected = probs * values.size
    stat = float(np.sum((counts - expected) ** 2 / np.maximum(expected, 1e-12)))
    dof = eff["bins"] - 1
    pval = float(chi2_dist.sf(stat, dof))
    header = dict(eff, chi2=stat, dof=dof, p_value=pval, collected=int(values.size))
    rows = [(edges[b], edges[b + 1], int(counts[b]), float(expected[b]))
            for b in range(eff["bins"])]
    return header, ["bin_lo", "bin_hi", "count", "expected"], rows


def _cmd_gap(eff: dict) -> tuple[dict, list[str], list[tuple]]:
    rng = np.random.default_rng(eff["seed"])
    rows = []
    for N in _parse_ints(eff["n"]):
        rep = walk_mod.rayleigh_quotient(walk_mod.phi_gap_values, N,
                                         int(eff["samples"]), rng)
        exact = walk_mod.spectral_gap_exact(N)
        z = abs(rep.value - exact) / rep.std_error if rep.std_error > 0 else 0.0
        rows.append((N, rep.value, rep.std_error, exact, z))
    return dict(eff), ["N", "estimate", "std_error", "exact", "abs_z"], rows


def _cmd_bk_evolve(eff: dict) -> tuple[dict, list[str], list[tuple]]:
    f0 = _density_from_name(eff["density"])
    if f0 is None:
        raise UsageError("bk-evolve expects a mixture density (gamma, bc:<delta>, maxwellian:<a>)")
    quad = wild_mod.ThetaQuadrature(eff["theta_nodes"])
    trace = wild_mod.evolve(f0, eff["duration"], eff["dt"], quad,
                            record_every=eff["record_every"])
    rows = list(zip(trace.times, trace.entropy, trace.production, trace.mass, trace.energy))
    return dict(eff), ["t", "H", "D", "mass", "energy"], rows


def _cmd_dsmall(eff: dict) -> tuple[dict, list[str], list[tuple]]:
    quad = wild_mod.ThetaQuadrature(eff["theta_nodes"])
    rows = []
    for d in _parse_floats(eff["deltas"]):
        rep = wild_mod.dsmall_report(d, quad)
        rows.append((rep.delta, rep.entropy, rep.production, rep.ratio,
                     rep.paper_upper_bound, rep.paper_upper_bound / rep.entropy))
    cols = ["delta", "entropy", "production", "ratio", "paper_bound", "bound_over_entropy"]
    return dict(eff), cols, rows


def _cmd_zprofile(eff: dict) -> tuple[dict, list[str], list[tuple]]:
    f = _density_from_name(eff["density"])
    if f is None:
        raise UsageError("zprofile expects a mixture density")
    N = eff["n"]
    table = cond.build_ztable(f, N, n_points=eff["points"])
    mom = dens.moments(f)
    center = N * mom.energy
    width = eff["window_sigmas"] * math.sqrt(N) * mom.sigma
    mask = (table.u >= center - width) & (table.u <= center + width)
    idx = np.nonzero(mask)[0][:: eff["stride"]]
    rows = []
    for i in idx:
        u = float(table.u[i])
        asym = cond.asymptotic_log_Z(f, N, math.sqrt(u)) if u > 0 else -math.inf
        rows.append((u, float(table.log_Z[i]), float(table.log_Z_prime[i]),
                     asym, float(table.log_Z[i]) - asym))
    lzpN = float(table.log_z_prime_at(np.array(float(N))))
    header = dict(eff, log_z_prime_at_N=lzpN,
                  target_log_sqrt2_over_sigma=math.log(math.sqrt(2.0) / mom.sigma),
                  energy=mom.energy, sigma=mom.sigma)
    return header, ["u", "log_Z", "log_Z_prime", "asymptotic_log_Z", "diff"], rows


def _cmd_chaos(eff: dict) -> tuple[dict, list[str], list[tuple]]:
    f = _density_from_name(eff["density"])
    if f is None:
        raise UsageError("chaos expects a mixture density")
    metrics = [m.strip() for m in eff["metrics"].split(",") if m.strip()]
    bad = set(metrics) - {"marginal", "entropy", "production"}
    if bad:
        raise UsageError(f"unknown metrics: {sorted(bad)}")
    rng = np.random.default_rng(eff["seed"])
    href = dens.relative_entropy_to_gaussian(f)
    dref = 2.0 * wild_mod.entropy_production_D(f)
    rows = []
    for N in _parse_ints(eff["n"]):
        table = cond.build_ztable(f, N, n_points=eff["points"])
        gap = ent = ent_se = prod = prod_se = float("nan")
        if "marginal" in metrics:
            tmk = cond.build_ztable(f, N - eff["k"], n_points=eff["points"])
            gap = cond.marginal_entropy_gap(f, N, eff["k"], table, tmk)
        cp = cond.ConditionedProduct(
            f=f, N=N, log_z_prime=float(table.log_z_prime_at(np.array(float(N)))))
        if "entropy" in metrics:
            rep = cond.entropy_per_particle(cp, int(eff["samples"]), rng,
                                            n_chains=eff["workers"],
                                            thinning=eff["thinning"] * N)
            ent, ent_se = rep.value, rep.std_error
        if "production" in metrics:
            rep = cond.entropy_production_per_particle(
                cp, int(eff["samples"]), rng, n_chains=eff["workers"],
                pairs_per_state=eff["pairs_per_state"])
            prod, prod_se = rep.value, rep.std_error
        rows.append((N, gap, ent, ent_se, prod, prod_se))
    header = dict(eff, h_ref=href, d_ref=dref)
    cols = ["N", "marginal_gap", "entropy_pp", "entropy_pp_se",
            "production_pp", "production_pp_se"]
    return header, cols, rows


def _cmd_lclt(eff: dict) -> tuple[dict, list[str], list[tuple]]:
    name = eff["density"]
    if name == "uniform":
        g = _uniform_grid_density()
    else:
        f = _density_from_name(name)
        g = dens.to_grid(f)
    g = lclt_mod.standardize(g)
    cf = lclt_mod.char_fn(g)
    rows = []
    for N in _parse_ints(eff["n"]):
        rep = lclt_mod.lclt_error_bound(g, N, eff["delta"], eff["p"])
        rows.append((N, rep.observed_sup_error, rep.term_high, rep.term_gauss_tail,
                     rep.term_low, rep.bound_total,
                     rep.log_term_high, rep.log_term_gauss_tail))
    header = dict(eff,
                  alpha=lclt_mod.measure_alpha(cf, eff["delta"]),
                  alpha0=lclt_mod.find_alpha0(cf),
                  eps=lclt_mod.measure_eps(cf, eff["delta"]),
                  constructive_alpha_bound=lclt_mod.entropy_alpha_lower_bound(
                      g, eff["delta"]))
    cols = ["N", "observed", "term_high", "term_gauss_tail", "term_low",
            "bound_total", "log_term_high", "log_term_gauss_tail"]
    return header, cols, rows


_COMMON = {
    "seed": (int, 0),
    "workers": (int, os.cpu_count() or 1),
    "out": (str, None),
}

_COMMANDS = {
    "walk": (_cmd_walk, {
        "n": (int, 10), "burn_steps": (int, -1), "thin": (int, -1),
        "samples": (int, 50_000), "bins": (int, 41),
        "renorm_interval": (int, 10_000),
    }),
    "gap": (_cmd_gap, {
        "n": (str, "2,5,10,50"), "samples": (float, 1e6),
    }),
    "bk-evolve": (_cmd_bk_evolve, {
        "density": (str, "bc:0.3"), "duration": (float, 10.0), "dt": (float, 1e-2),
        "theta_nodes": (int, 64), "record_every": (int, 1),
    }),
    "dsmall": (_cmd_dsmall, {
        "deltas": (str, "1e-1,1e-2,1e-3,1e-4"), "theta_nodes": (int, 64),
    }),
    "zprofile": (_cmd_zprofile, {
        "density": (str, "bc:0.3"), "n": (int, 1024), "points": (int, 65_536),
        "window_sigmas": (float, 8.0), "stride": (int, 64),
    }),
    "chaos": (_cmd_chaos, {
        "density": (str, "bc:0.3"), "n": (str, "64,128,256,512,1024"),
        "k": (int, 1), "metrics": (str, "marginal"),
        "samples": (float, 1e5), "points": (int, 65_536),
        "thinning": (int, 2), "pairs_per_state": (int, 4),
    }),
    "lclt": (_cmd_lclt, {
        "density": (str, "uniform"), "n": (str, "8,64,256"),
        "delta": (float, 0.25), "p": (float, 2.0),
    }),
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="kaclab", description=__doc__, add_help=True)
    sub = parser.add_subparsers(dest="command")
    for name, (_, params) in _COMMANDS.items():
        p = sub.add_parser(name, add_help=True)
        p.add_argument("--config", default=None)
        for key in _COMMON:
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None,
                           type=_COMMON[key][0] if _COMMON[key][1] is not None else str)
        for key, (typ, _default) in params.items():
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None, type=typ)
    return parser


def run(argv) -> int:
    """Execute one CLI invocation; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("missing subcommand")
        func, params = _COMMANDS[args.command]
        config = _load_config(args.config)
        spec = dict(_COMMON)
        spec.update(params)
        eff = _effective(args, config, spec)
        header, cols, rows = func(eff)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (wild_mod.SolverInstabilityError, ArithmeticError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    path = _out_path(eff, args.command)
    header = dict(header, command=args.command, version=__version__)
    header.pop("out", None)
    _write_csv(path, header, cols, rows)
    print(path)
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
