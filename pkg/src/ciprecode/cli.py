"""Command-line interface.

Subcommands ``precode``, ``feasibility``, ``ber`` and ``validate``. Exit
codes: 0 success, 1 invalid configuration, 2 numerical failure, 3 a
validation bound was violated.
"""

import argparse
import json
import logging
import sys

import numpy as np

from . import harness
from .baselines import rzf_precode, solve_p1_oracle
from .channel import load_channel, save_channel
from .config import ExperimentConfig, parse_int_list
from .constellation import index_to_symbol
from .errors import ChannelFileError, ConfigError, NumericalError
from .precoder import precode

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATION = 0, 1, 2, 3

log = logging.getLogger("ciprecode")


def _common(parser):
    g = parser.add_argument_group("experiment")
    g.add_argument("--config", help="JSON config file; flags override its entries")
    g.add_argument("--nt", type=int)
    g.add_argument("--k", help="number of streams: '9', '8-12' or '8,10,12'")
    g.add_argument("--mod", type=int, help="PSK order (2, 4, 8, ...)")
    g.add_argument("--snr-db", dest="snr_db", help="comma-separated SNR grid in dB")
    g.add_argument("--trials", type=int)
    g.add_argument("--symbol-slots", dest="symbol_slots", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--p0", type=float)
    g.add_argument("--precoder", choices=["ci", "rzf", "oracle"])
    g.add_argument("--fallback-rzf", dest="fallback_rzf", action=argparse.BooleanOptionalAction,
                   default=None, help="use RZF when CI is infeasible (default on)")
    g.add_argument("--strict-ci", dest="strict_ci", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--rank-tol", dest="rank_tol", type=float)
    g.add_argument("--qp-tol", dest="qp_tol", type=float)
    g.add_argument("--alpha-rzf", dest="alpha_rzf", type=float)
    g.add_argument("--min-bits", dest="min_bits", type=int)
    g.add_argument("--min-errors", dest="min_errors", type=int)
    g.add_argument("--max-trials", dest="max_trials", type=int)
    g.add_argument("--time-budget", dest="time_budget", type=float, help="seconds per K value")
    g.add_argument("--workers", type=int, help="worker processes for trials (default 1)")
    g.add_argument("--out", help="output path (stdout if omitted)")
    g.add_argument("-v", "--verbose", action="count", default=0)


_CONFIG_KEYS = ("nt", "k", "mod", "snr_db", "trials", "symbol_slots", "seed", "p0", "precoder",
                "fallback_rzf", "strict_ci", "rank_tol", "qp_tol", "alpha_rzf", "min_bits",
                "min_errors", "max_trials", "time_budget", "workers", "out")


def build_parser():
    parser = argparse.ArgumentParser(prog="ciprecode", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("precode", help="solve one instance and print the result as JSON")
    _common(p)
    p.add_argument("--channel", help="read H from a channel file")
    p.add_argument("--save-channel", dest="save_channel", help="write the channel used to this file")
    p.add_argument("--symbols", help="comma-separated angular symbol indices (default: drawn from --seed)")
    p.add_argument("--snr-for-rzf", dest="snr_for_rzf", type=float, default=None,
                   help="SNR (dB) setting the RZF regularizer when --precoder rzf")

    for name, text in (("feasibility", "feasibility probability versus K"),
                       ("ber", "bit error rate versus SNR and K"),
                       ("validate", "pipeline versus reference-oracle campaign")):
        _common(sub.add_parser(name, help=text))
    return parser


def _config(args, defaults=None):
    overrides = {k: getattr(args, k, None) for k in _CONFIG_KEYS}
    file_keys = set()
    if args.config:
        file_keys = set(_read_keys(args.config))
    for key, value in (defaults or {}).items():
        if overrides.get(key) is None and key not in file_keys:
            overrides[key] = value
    return ExperimentConfig.from_json(args.config, overrides)


def _read_keys(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return list(data) if isinstance(data, dict) else []


def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cplx(a):
    a = np.asarray(a)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def cmd_precode(args, cfg):
    K = cfg.k[0]
    rng_draw = harness.draw_trial(cfg.seed, 0, K, cfg.nt, cfg.mod)
    if args.channel:
        H = load_channel(args.channel)
        K, nt = H.shape
    else:
        H, nt = rng_draw.H, cfg.nt
    if args.save_channel:
        save_channel(H, args.save_channel)
    if args.symbols:
        idx = np.array(parse_int_list(args.symbols))
        if idx.size != K:
            raise ConfigError(f"--symbols gives {idx.size} indices for K={K}")
    elif args.channel:
        idx = harness.draw_trial(cfg.seed, 0, K, nt, cfg.mod).index[0]
    else:
        idx = rng_draw.index[0]
    s = index_to_symbol(idx, cfg.mod)
    result = {"k": K, "nt": nt, "m": cfg.mod, "p0": cfg.p0, "precoder": cfg.precoder,
              "symbols": idx.tolist()}
    if cfg.precoder == "ci":
        sol = precode(H, s, cfg.p0, cfg.mod, cfg.rank_tol, cfg.qp_tol, strict=cfg.strict_ci)
        result.update(W=_cplx(sol.W), Lambda=_cplx(sol.Lambda), t_star=sol.t_star,
                      feasible=sol.feasible, u=sol.u.tolist(), alpha0=sol.alpha0,
                      kkt_residual=sol.kkt_residual, fallback_dual=sol.fallback_dual)
    elif cfg.precoder == "oracle":
        res = solve_p1_oracle(H, s, cfg.p0, cfg.mod)
        result.update(W=_cplx(res.W), Lambda=_cplx(res.Lambda), t_star=res.t_star,
                      feasible=res.feasible, bisection_iters=res.bisection_iters)
    else:
        if cfg.alpha_rzf is not None:
            alpha = cfg.alpha_rzf
        else:
            snr = args.snr_for_rzf if args.snr_for_rzf is not None else max(cfg.snr_db)
            alpha = K * 10.0 ** (-snr / 10.0)
        W = rzf_precode(H, s, cfg.p0, alpha)
        lam = (H @ (W @ s)) * s.conj()
        result.update(W=_cplx(W), Lambda=_cplx(lam), alpha=alpha,
                      t_star=float(np.min(lam.real - np.abs(lam.imag) / np.tan(np.pi / cfg.mod)))
                      if cfg.mod > 2 else float(lam.real.min()))
        result["feasible"] = result["t_star"] > 0
    _emit(json.dumps(result, indent=2) + "\n", cfg.out)
    return EXIT_OK


def cmd_feasibility(args, cfg):
    rows, _ = harness.run_feasibility_sweep(cfg)
    _emit(harness.to_csv(rows, harness.metadata(cfg, "feasibility")), cfg.out)
    return EXIT_OK


def cmd_ber(args, cfg):
    rows, _ = harness.run_ber_sweep(cfg)
    _emit(harness.to_csv(rows, harness.metadata(cfg, "ber")), cfg.out)
    return EXIT_OK


def cmd_validate(args, cfg):
    explicit = args.nt is not None or args.k is not None or args.mod is not None
    grid = None
    if explicit:
        grid = [(cfg.nt, k, cfg.mod) for k in cfg.k]
    rows, summary = harness.run_validation(cfg, grid=grid)
    meta = harness.metadata(cfg, "validate")
    meta["summary"] = summary
    _emit(harness.to_csv(rows, meta), cfg.out)
    print(json.dumps(summary, indent=2, sort_keys=True), file=sys.stderr)
    return EXIT_OK if summary["ok"] else EXIT_VALIDATION


# validation runs the oracle on every instance, so it defaults to fewer trials
COMMAND_DEFAULTS = {"validate": {"trials": 200}}

COMMANDS = {"precode": cmd_precode, "feasibility": cmd_feasibility, "ber": cmd_ber,
            "validate": cmd_validate}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args, COMMAND_DEFAULTS.get(args.command))
        cfg.validate(need_snr=args.command == "ber")
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, ChannelFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
