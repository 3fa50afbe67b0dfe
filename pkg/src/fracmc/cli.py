"""
Command-line pipelines: ``gen-fbm``, ``estimate-hurst``, ``price-tvo``,
``rand-check`` and ``realized-var``.

Every command writes its outputs plus ``manifest.json`` (resolved
configuration and SHA-256 of each output) into the output directory. Settings
come from defaults, then a ``key = value`` config file (``--config``; a
previous ``manifest.json`` also works), then command-line flags.

Exit codes: 0 success, 1 invalid configuration, 2 data/ingestion problems
(including an exhausted entropy file or a failed randomness check),
3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .errors import DataError, EntropyFileError, Exhausted, FracMCError, NumericalError
from .fbm import CHOLESKY_MAX_N, SCHEMES, TimeGrid
from .rng import NORMAL_METHODS, PseudoSource, export_words, open_entropy_file, rand_check

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
OUTPUT_ENV = "FRACMC_OUTPUT_DIR"
DEFAULT_OUT = "fracmc-out"


class ConfigError(Exception):
    """Invalid configuration (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# value parsers
# --------------------------------------------------------------------------


def _bool(s) -> bool:
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off", ""):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {s!r}")


def _count(s) -> int:
    """Positive integer; accepts ``1e5`` style."""
    v = float(s)
    if v != int(v) or v < 1:
        raise argparse.ArgumentTypeError(f"not a positive integer: {s!r}")
    return int(v)


def _float_list(s) -> list[float]:
    """``a,b,c`` or ``lo:hi:count`` (inclusive, evenly spaced)."""
    if isinstance(s, (list, tuple)):
        return [float(v) for v in s]
    s = str(s).strip()
    if ":" in s:
        lo, hi, k = s.split(":")
        return [float(v) for v in np.linspace(float(lo), float(hi), _count(k))]
    return [float(v) for v in s.split(",") if v.strip()]


def _int_list(s) -> list[int]:
    """``a,b,c`` or an inclusive range ``lo-hi``."""
    if isinstance(s, (list, tuple)):
        return [int(v) for v in s]
    out = []
    for part in str(s).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(_count(part))
    return out


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

COMMON_DEFAULTS = {"seed": 0, "entropy_file": None, "entropy_offset": 0,
                   "normal_method": "box-muller", "threads": None}

DEFAULTS = {
    "gen-fbm": {"H": 0.1, "T": 0.5, "n": 500, "N": 10000, "scheme": "hybrid",
                "write_paths": "none", "write_cov": False, "batch_size": 4096},
    "estimate-hurst": {"input": None, "column": None, "symbol": None, "symbol_column": "symbol",
                       "transform": "none", "simulate_rfsv": False, "H": 0.14, "T": 1.0,
                       "n": 5000, "nu": 0.3, "alpha_dt": 5e-4, "sigma0": 1.0, "x0": 0.0,
                       "q": "0.5,1,1.5,2,3", "lags": "1-30", "dv_lags": "1-30",
                       "peng_blocks": None},
    "price-tvo": {"H": 0.1, "S0": 1.0, "K": None, "strikes": None, "T": 0.5, "sigma0": 0.3,
                  "sigma_bar": 0.3, "rho": -0.5, "nu": 1.0, "n": 500, "N": 10000,
                  "side": "both", "convergence": None, "batch_size": 4096},
    "rand-check": {"words": 1_000_000, "alpha": 0.01, "export": None},
    "realized-var": {"input": None, "window": 21, "AF": 252.0, "date_column": "date",
                     "close_column": "close"},
}


def _common(p):
    S = argparse.SUPPRESS
    src = p.add_mutually_exclusive_group()
    src.add_argument("--seed", type=int, default=S, help="seed of the pseudo source (default 0)")
    src.add_argument("--entropy-file", default=S, help="raw little-endian uint32 entropy file")
    p.add_argument("--entropy-offset", type=int, default=S, help="first word to use (default 0)")
    p.add_argument("--normal-method", choices=NORMAL_METHODS, default=S)
    p.add_argument("--out", default=S, help=f"output directory (default ${OUTPUT_ENV} or "
                                            f"./{DEFAULT_OUT})")
    p.add_argument("--config", default=S, help="key = value file; flags override it")
    p.add_argument("--threads", type=_count, default=S, help="worker threads (default: all CPUs)")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = _Parser(prog="fracmc", description="Fractional Brownian motion Monte Carlo toolkit")
    parser.add_argument("--version", action="version", version=f"fracmc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-fbm", help="simulate fBM ensembles and report moment errors")
    _common(p)
    p.add_argument("--H", type=float, default=S)
    p.add_argument("--T", type=float, default=S)
    p.add_argument("--n", type=_count, default=S, help="time steps")
    p.add_argument("--N", type=_count, default=S, help="paths")
    p.add_argument("--scheme", choices=SCHEMES, default=S)
    p.add_argument("--write-paths", choices=("none", "csv", "bin"), default=S)
    p.add_argument("--write-cov", type=_bool, nargs="?", const=True, default=S,
                   help="also write covariance.csv (k, j, value)")
    p.add_argument("--batch-size", type=_count, default=S)

    p = sub.add_parser("estimate-hurst", help="estimate H from a series or a simulated RFSV path")
    _common(p)
    p.add_argument("--input", default=S, help="CSV series (one value per row, or a header)")
    p.add_argument("--column", default=S)
    p.add_argument("--symbol", default=S, help="keep rows with this symbol")
    p.add_argument("--symbol-column", default=S)
    p.add_argument("--transform", choices=("none", "log", "half-log"), default=S,
                   help="half-log turns realized variance into log-volatility")
    p.add_argument("--simulate-rfsv", type=_bool, nargs="?", const=True, default=S)
    p.add_argument("--H", type=float, default=S)
    p.add_argument("--T", type=float, default=S)
    p.add_argument("--n", type=_count, default=S)
    p.add_argument("--nu", type=float, default=S)
    p.add_argument("--alpha-dt", type=float, default=S, help="mean reversion per step")
    p.add_argument("--sigma0", type=float, default=S)
    p.add_argument("--x0", type=float, default=S)
    p.add_argument("--q", default=S, help="moment orders, e.g. 0.5,1,1.5,2,3")
    p.add_argument("--lags", default=S, help="lags for m(q, lag), e.g. 1-30")
    p.add_argument("--dv-lags", default=S)
    p.add_argument("--peng-blocks", default=S)

    p = sub.add_parser("price-tvo", help="Monte Carlo target-volatility option prices")
    _common(p)
    for name in ("H", "S0", "K", "T", "sigma0", "sigma-bar", "rho", "nu"):
        p.add_argument(f"--{name}", type=float, default=S)
    p.add_argument("--strikes", default=S, help="a,b,c or lo:hi:count")
    p.add_argument("--n", type=_count, default=S)
    p.add_argument("--N", type=_count, default=S)
    p.add_argument("--side", choices=("call", "put", "both"), default=S)
    p.add_argument("--convergence", default=S, help="increasing path counts, e.g. 1e4,5e4,1e5")
    p.add_argument("--batch-size", type=_count, default=S)

    p = sub.add_parser("rand-check", help="sanity battery on a random source, optional raw export")
    _common(p)
    p.add_argument("--words", type=_count, default=S)
    p.add_argument("--alpha", type=float, default=S)
    p.add_argument("--export", type=_count, default=S, help="export this many words to words.bin")

    p = sub.add_parser("realized-var", help="rolling realized volatility from daily closes")
    _common(p)
    p.add_argument("--input", default=S)
    p.add_argument("--window", type=_count, default=S, help="returns per window")
    p.add_argument("--AF", type=float, default=S, help="annualisation factor")
    p.add_argument("--date-column", default=S)
    p.add_argument("--close-column", default=S)
    return parser


def _subparser(parser, command):
    for a in parser._actions:
        if isinstance(a, argparse._SubParsersAction):
            return a.choices[command]
    raise KeyError(command)


def read_config_file(path) -> dict:
    """``key = value`` lines (``#`` comments) or a JSON manifest's ``config``."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        data = json.loads(text)
        return dict(data.get("config", data))
    out = {}
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[k.strip().lstrip("-").replace("-", "_")] = v.strip()
    return out


def resolve_config(argv=None) -> dict:
    """Merge defaults, config file and flags into one flat dict."""
    parser = build_parser()
    ns = vars(parser.parse_args(argv))
    command = ns.pop("command")
    cfg = dict(COMMON_DEFAULTS)
    cfg.update(DEFAULTS[command])
    cfg["out"] = os.environ.get(OUTPUT_ENV) or DEFAULT_OUT
    config_path = ns.pop("config", None)
    if config_path is not None:
        try:
            fromfile = read_config_file(config_path)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        fromfile.pop("command", None)
        types = {a.dest: a.type for a in _subparser(parser, command)._actions}
        for k, v in fromfile.items():
            if k not in cfg:
                raise ConfigError(f"unknown config key {k!r} for {command}")
            t = types.get(k)
            if v is None or isinstance(v, (bool, int, float, list)) or t is None:
                cfg[k] = v
            else:
                try:
                    cfg[k] = t(v)
                except (ValueError, argparse.ArgumentTypeError) as exc:
                    raise ConfigError(f"config key {k}: {exc}") from exc
    cfg.update(ns)
    # a source given on the command line beats one from the config file
    if "seed" in ns:
        cfg["entropy_file"] = None
    if cfg.get("entropy_file"):
        cfg["seed"] = None
    cfg["command"] = command
    return cfg


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def make_source(cfg):
    if cfg.get("entropy_file"):
        src = open_entropy_file(cfg["entropy_file"], normal_method=cfg["normal_method"])
        off = int(cfg.get("entropy_offset") or 0)
        if off < 0 or off > src.stop:
            raise ConfigError(f"entropy offset {off} outside the file ({src.stop} words)")
        src.cursor = off
        return src
    return PseudoSource(int(cfg["seed"] or 0), normal_method=cfg["normal_method"])


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class _Run:
    """Output directory bookkeeping and the manifest."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.dir = cfg["out"]
        os.makedirs(self.dir, exist_ok=True)
        self.outputs = []

    def path(self, name):
        self.outputs.append(name)
        return os.path.join(self.dir, name)

    def finish(self, source=None, extra=None):
        config = {k: v for k, v in sorted(self.cfg.items()) if k not in ("out", "config")}
        manifest = {"fracmc_version": __version__, "command": self.cfg["command"],
                    "config": config,
                    "outputs": {n: _sha256(os.path.join(self.dir, n)) for n in self.outputs}}
        if source is not None and source.kind == "entropy-file":
            manifest["entropy"] = {"path": source.path, "words_in_file": int(source.stop),
                                   "first_word": int(self.cfg.get("entropy_offset") or 0),
                                   "next_unused_word": int(source.cursor)}
        if extra:
            manifest.update(extra)
        from .fileio import write_json

        write_json(os.path.join(self.dir, "manifest.json"), manifest)


def _check_hurst_arg(H):
    if not 0 < H < 1:
        raise ConfigError(f"H must lie in (0, 1), got {H}")


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_gen_fbm(cfg) -> int:
    from .fileio import (write_covariance_csv, write_errors_csv, write_json, write_moments_csv,
                         write_path_frames, write_csv)
    from .stats import rmse_errors, simulate_moments

    H, scheme = cfg["H"], cfg["scheme"]
    _check_hurst_arg(H)
    if not cfg["T"] > 0:
        raise ConfigError("T must be positive")
    if cfg["N"] < 2:
        raise ConfigError("N must be at least 2")
    if scheme == "cholesky" and cfg["n"] > CHOLESKY_MAX_N:
        raise ConfigError(f"--scheme cholesky is limited to n <= {CHOLESKY_MAX_N} "
                          f"(O(n^3) factor, O(n^2) per path); use davies-harte for n = {cfg['n']}")
    if scheme == "hybrid" and cfg["n"] < 2:
        raise ConfigError("the hybrid scheme needs n >= 2")
    grid = TimeGrid(cfg["T"], cfg["n"])
    src = make_source(cfg)
    run = _Run(cfg)
    keep = cfg["write_paths"] != "none"
    moments, paths = simulate_moments(scheme, grid, H, cfg["N"], src, cfg["threads"],
                                      cfg["batch_size"], keep_paths=keep)
    report = rmse_errors(moments, H, grid, source_label=src.label)
    write_moments_csv(run.path("moments.csv"), moments, grid)
    write_errors_csv(run.path("errors.csv"), report)
    write_json(run.path("errors.json"), report.to_dict())
    if cfg["write_cov"]:
        write_covariance_csv(run.path("covariance.csv"), moments)
    if cfg["write_paths"] == "bin":
        write_path_frames(run.path("paths.bin"), paths, grid, H)
    elif cfg["write_paths"] == "csv":
        t = grid.times
        rows = ((i, t[k], paths[i, k]) for i in range(paths.shape[0]) for k in range(grid.n + 1))
        write_csv(run.path("paths.csv"), ("path", "t", "value"), rows)
    run.finish(src)
    print(f"eps1={report.eps1:.6g} eps2={report.eps2:.6g} eps3={report.eps3:.6g} "
          f"(N={report.N}, {scheme}, {src.label})")
    return EXIT_OK


def cmd_estimate_hurst(cfg) -> int:
    from . import hurst
    from .fbm import davies_harte
    from .fileio import load_value_series, write_csv, write_json, write_series_csv, write_surface_csv
    from .models import RfsvParams, simulate_rfsv

    run = _Run(cfg)
    src = None
    if cfg["simulate_rfsv"]:
        _check_hurst_arg(cfg["H"])
        grid = TimeGrid(cfg["T"], cfg["n"])
        params = RfsvParams(H=cfg["H"], sigma0=cfg["sigma0"], nu=cfg["nu"],
                            alpha=cfg["alpha_dt"] / grid.dt, m=cfg["x0"], x0=cfg["x0"])
        src = make_source(cfg)
        path = simulate_rfsv(params, grid, davies_harte(grid, params.H, src))
        x = np.log(path.Y)
        write_series_csv(run.path("logvol.csv"), x, "log_vol")
    elif cfg["input"]:
        x = load_value_series(cfg["input"], cfg["column"], cfg["symbol"], cfg["symbol_column"])
        if cfg["transform"] != "none":
            if np.any(x <= 0):
                bad = int(np.flatnonzero(x <= 0)[0])
                raise DataError(f"value {x[bad]} at data row {bad + 1} is not positive; "
                                f"cannot apply the {cfg['transform']} transform")
            x = np.log(x) * (0.5 if cfg["transform"] == "half-log" else 1.0)
    else:
        raise ConfigError("give --input FILE or --simulate-rfsv")

    q = _float_list(cfg["q"])
    lags = _int_list(cfg["lags"])
    est, surface = hurst.hurst_scaling(x, q, lags)
    dv = hurst.hurst_difference_variance(x, _int_list(cfg["dv_lags"]))
    blocks = _int_list(cfg["peng_blocks"]) if cfg["peng_blocks"] else None
    pg = hurst.hurst_peng(x, blocks)
    write_surface_csv(run.path("surface.csv"), surface)
    zeta = est.fit_diagnostics
    write_csv(run.path("zeta.csv"), ("q", "zeta", "r2"), zip(zeta["q"], zeta["zeta"],
                                                               zeta["zeta_r2"]))
    write_json(run.path("hurst.json"), {"samples": int(x.size), "scaling": est.to_dict(),
                                        "diff_variance": dv.to_dict(), "peng": pg.to_dict()})
    run.finish(src)
    print(f"H scaling={est.H_hat:.4f} diff-variance={dv.H_hat:.4f} peng={pg.H_hat:.4f} "
          f"({x.size} samples)")
    return EXIT_OK


def cmd_price_tvo(cfg) -> int:
    from .fileio import write_csv
    from .models import FsabrParams
    from .pricing import CONVERGENCE_COLUMNS, PRICE_COLUMNS, TvoSpec, price_rows, simulate_terminals

    _check_hurst_arg(cfg["H"])
    if cfg["n"] < 2:
        raise ConfigError("n must be at least 2")
    if cfg["N"] < 100:
        raise ConfigError("N must be at least 100")
    params = FsabrParams(S0=cfg["S0"], alpha0=cfg["sigma0"], nu=cfg["nu"], rho=cfg["rho"],
                         H=cfg["H"])
    if cfg["strikes"] is not None:
        strikes = _float_list(cfg["strikes"])
    else:
        strikes = [cfg["K"] if cfg["K"] is not None else cfg["S0"]]
    if not strikes or min(strikes) <= 0:
        raise ConfigError("strikes must be positive")
    sides = ("call", "put") if cfg["side"] == "both" else (cfg["side"],)
    conv = [int(v) for v in _float_list(cfg["convergence"])] if cfg["convergence"] else []
    if any(b <= a for a, b in zip(conv, conv[1:])) or any(v < 2 for v in conv):
        raise ConfigError("--convergence must list increasing path counts >= 2")
    grid = TimeGrid(cfg["T"], cfg["n"])
    template = TvoSpec(strikes[0], cfg["T"], cfg["sigma_bar"], sides[0])
    src = make_source(cfg)
    run = _Run(cfg)
    N_total = max([cfg["N"]] + conv)
    sim = simulate_terminals(params, grid, N_total, src, cfg["threads"], cfg["batch_size"])
    columns = PRICE_COLUMNS + (("oracle", "z_score") if params.nu == 0 else ())
    for side in sides:
        ests = [sim.estimate(template.with_side(side).with_strike(k), cfg["N"]) for k in strikes]
        write_csv(run.path(f"prices_{side}.csv"), columns, price_rows(ests, params, grid, src.label))
        if conv:
            conv_K = cfg["K"] if cfg["K"] is not None else strikes[0]
            spec = template.with_side(side).with_strike(conv_K)
            trace = [sim.estimate(spec, N) for N in conv]
            rows = [(e.N, e.price, e.std_error) + e.ci95 for e in trace]
            write_csv(run.path(f"convergence_{side}.csv"), CONVERGENCE_COLUMNS, rows)
        if len(strikes) == 1:
            e = ests[0]
            z = "" if e.z_score is None else f" z={e.z_score:+.2f} vs oracle {e.oracle:.6g}"
            print(f"{side}: K={e.spec.K:g} price={e.price:.6g} se={e.std_error:.3g}{z}")
        else:
            print(f"{side}: {len(strikes)} strikes written")
    run.finish(src)
    return EXIT_OK


def cmd_rand_check(cfg) -> int:
    from .fileio import write_json

    src = make_source(cfg)
    run = _Run(cfg)
    report = rand_check(src, cfg["words"], cfg["alpha"])
    if cfg["export"]:
        # the export reads the same words the battery saw, from a fresh cursor
        twin = make_source(cfg)
        nbytes = export_words(twin, run.path("words.bin"), cfg["export"])
        print(f"exported {cfg['export']} words ({nbytes} bytes)")
    write_json(run.path("sanity.json"), report.to_dict())
    run.finish(src)
    flags = ", ".join(f"{k}={'pass' if v else 'FAIL'}" for k, v in report.flags.items())
    print(f"{report.words} words: {flags}")
    return EXIT_OK if report.passed else EXIT_DATA


def cmd_realized_var(cfg) -> int:
    from .fileio import write_csv
    from .stats import load_price_csv, rolling_realized_vol

    if not cfg["input"]:
        raise ConfigError("--input is required")
    if cfg["window"] < 2:
        raise ConfigError("--window must be at least 2")
    series = load_price_csv(cfg["input"], cfg["date_column"], cfg["close_column"], cfg["AF"])
    dates, vols = rolling_realized_vol(series, cfg["window"])
    run = _Run(cfg)
    write_csv(run.path("realized_vol.csv"), ("date", "realized_vol"), zip(dates, vols))
    run.finish()
    print(f"{len(vols)} windows of {cfg['window']} returns; median vol {np.median(vols):.4g}")
    return EXIT_OK


COMMANDS = {"gen-fbm": cmd_gen_fbm, "estimate-hurst": cmd_estimate_hurst,
            "price-tvo": cmd_price_tvo, "rand-check": cmd_rand_check,
            "realized-var": cmd_realized_var}


def main(argv=None) -> int:
    try:
        cfg = resolve_config(argv)
        return COMMANDS[cfg["command"]](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exhausted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, EntropyFileError, OSError) as exc:
        print(f"data error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, FracMCError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
