"""Monte Carlo experiments: feasibility sweeps, BER sweeps and oracle validation.

Seeding: trial ``i`` uses ``SeedSequence(seed + i)``. Its child 0 draws the
channel; children ``1 + 2j`` and ``2 + 2j`` draw the symbols and the
unit-variance noise of symbol slot ``j``. Channel draws are row-consistent
(see :mod:`ciprecode.channel`), so the same trial index yields the same
users and symbols in every experiment and for every ``K``.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
import csv
import io
import json
import logging
import math
import time

import numpy as np

from . import __version__
from .baselines import rzf_precode, solve_p1_oracle
from .channel import sample_channel
from .constellation import bit_errors, bits_per_symbol, detect, index_to_symbol
from .errors import NumericalError
from .precoder import invariant_residuals, precode

log = logging.getLogger(__name__)

# hard bounds checked by the validation campaign
BOUNDS = {
    "power": 1e-8,
    "prescale": 1e-8,
    "equal_columns": 1e-8,
    "margin_min": -1e-8,
    "binding": 1e-6,
    "null_space": 1e-6,
    "oracle_gap": 1e-4,
}
DUALITY_RTOL = 1e-5


@dataclass
class TrialDraw:
    H: np.ndarray
    index: np.ndarray  # angular symbol indices, one row per slot
    noise: np.ndarray  # unit CN(0, 1) noise, one row per slot


def draw_trial(seed, trial, K, Nt, M, slots=1):
    ss = np.random.SeedSequence(seed + trial)
    children = ss.spawn(1 + 2 * slots)
    H = sample_channel(K, Nt, np.random.default_rng(children[0]))
    index = np.empty((slots, K), dtype=np.int64)
    noise = np.empty((slots, K), dtype=complex)
    for j in range(slots):
        u = np.random.default_rng(children[1 + 2 * j]).random(K)
        index[j] = np.minimum((u * M).astype(np.int64), M - 1)
        z = np.random.default_rng(children[2 + 2 * j]).standard_normal((K, 2))
        noise[j] = (z[:, 0] + 1j * z[:, 1]) * math.sqrt(0.5)
    return TrialDraw(H, index, noise)


@dataclass
class TrialRecord:
    trial: int
    seed: int
    feasible: bool
    t_star: float
    bit_errors: np.ndarray = None  # per user, summed over slots
    bits: int = 0
    runtime: float = 0.0


def _ci_solve(cfg, H, s):
    return precode(H, s, p0=cfg.p0, M=cfg.mod, rank_tol=cfg.rank_tol,
                   qp_tol=cfg.qp_tol, strict=cfg.strict_ci)


def _map(fn, items, workers):
    """Ordered map, in-process or over a process pool."""
    items = list(items)
    if workers <= 1 or len(items) < 2:
        return [fn(it) for it in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunk))


def _feasibility_trial(job):
    cfg, K, i = job
    draw = draw_trial(cfg.seed, i, K, cfg.nt, cfg.mod)
    s = index_to_symbol(draw.index[0], cfg.mod)
    t0 = time.perf_counter()
    failed = False
    try:
        sol = _ci_solve(cfg, draw.H, s)
        feasible, t_star = sol.feasible, sol.t_star
    except NumericalError as exc:
        log.warning("K=%d trial %d: %s", K, i, exc)
        failed = True
        feasible, t_star = False, float("nan")
    rec = TrialRecord(i, cfg.seed + i, feasible, t_star, runtime=time.perf_counter() - t0)
    return rec, failed


def run_feasibility_sweep(cfg):
    """Fraction of trials with ``t* > 0`` for every K in ``cfg.k``.

    Returns ``(rows, records)``; ``records`` maps K to its TrialRecords.
    Pipeline failures count as infeasible and are tallied in ``errors``.
    """
    cfg.validate()
    rows, records = [], {}
    for K in cfg.k:
        out = _map(_feasibility_trial, ((cfg, K, i) for i in range(cfg.trials)), cfg.workers)
        recs = [rec for rec, _ in out]
        count = sum(r.feasible for r in recs)
        rows.append({
            "nt": cfg.nt, "k": K, "m": cfg.mod, "trials": cfg.trials,
            "feasible_count": count, "probability": count / cfg.trials,
            "errors": sum(failed for _, failed in out),
        })
        records[K] = recs
    return rows, records


def _noiseless(cfg, H, s, K, sigma2_list):
    """Noiseless received vectors per SNR point, plus CI status for the slot."""
    infeasible = None
    if cfg.precoder == "rzf":
        out = []
        for sigma2 in sigma2_list:
            alpha = cfg.alpha_rzf if cfg.alpha_rzf is not None else K * sigma2
            out.append(H @ (rzf_precode(H, s, cfg.p0, alpha) @ s))
        return out, infeasible, float("nan")
    if cfg.precoder == "oracle":
        res = solve_p1_oracle(H, s, cfg.p0, cfg.mod)
        feasible, t_star, x = res.feasible, res.t_star, res.x
    else:
        try:
            sol = _ci_solve(cfg, H, s)
            feasible, t_star, x = sol.feasible, sol.t_star, sol.x
        except NumericalError as exc:
            log.warning("CI solve failed: %s", exc)
            feasible, t_star, x = False, float("nan"), None
    infeasible = not feasible
    if feasible or (not cfg.fallback_rzf and x is not None):
        r0 = H @ x
        return [r0] * len(sigma2_list), infeasible, t_star
    out = []
    for sigma2 in sigma2_list:
        alpha = cfg.alpha_rzf if cfg.alpha_rzf is not None else K * sigma2
        out.append(H @ (rzf_precode(H, s, cfg.p0, alpha) @ s))
    return out, infeasible, t_star


def _ber_trial(job):
    """Errors per SNR point for one trial (all symbol slots)."""
    cfg, K, i = job
    M = cfg.mod
    sigma2 = [10.0 ** (-snr / 10.0) for snr in cfg.snr_db]
    t0 = time.perf_counter()
    draw = draw_trial(cfg.seed, i, K, cfg.nt, M, cfg.symbol_slots)
    errs = np.zeros(len(sigma2), dtype=np.int64)
    user_err = np.zeros(K, dtype=np.int64)
    solved = infeasible = 0
    t_min = float("inf")
    for j in range(cfg.symbol_slots):
        idx = draw.index[j]
        s = index_to_symbol(idx, M)
        r0s, infeas, t_star = _noiseless(cfg, draw.H, s, K, sigma2)
        if infeas is not None:
            solved += 1
            infeasible += int(infeas)
            t_min = min(t_min, t_star)
        for p, (r0, s2) in enumerate(zip(r0s, sigma2)):
            r = r0 + math.sqrt(s2) * draw.noise[j]
            e = bit_errors(idx, detect(r, M), M)
            errs[p] += int(e.sum())
            if p == len(sigma2) - 1:
                user_err += e
    bits = K * bits_per_symbol(M) * cfg.symbol_slots
    rec = TrialRecord(i, cfg.seed + i, solved > 0 and infeasible == 0, t_min, user_err, bits,
                      time.perf_counter() - t0)
    return errs, solved, infeasible, rec


def trial_cap(cfg, K):
    """Trial limit for one K: ``max_trials``, else 10x what ``min_bits`` needs."""
    if cfg.max_trials is not None:
        return cfg.max_trials
    per_trial = K * bits_per_symbol(cfg.mod) * cfg.symbol_slots
    return max(cfg.trials, 10 * math.ceil(cfg.min_bits / per_trial))


def run_ber_sweep(cfg):
    """BER per (K, SNR) for ``cfg.precoder``; one precoder solve per symbol slot.

    The precoded signal does not depend on the SNR for CI, so each slot is
    solved once and reused across the SNR grid with common noise draws.
    Trials run in batches of ``cfg.trials``; after each batch the sweep stops
    once every SNR point of the current K has ``min_bits`` bits and
    ``min_errors`` errors, or when :func:`trial_cap` or ``time_budget`` is hit.
    Stopping is decided only at batch boundaries, so results do not depend
    on ``workers``.
    """
    cfg.validate(need_snr=True)
    rows, records = [], {}
    for K in cfg.k:
        errs = np.zeros(len(cfg.snr_db), dtype=np.int64)
        bits = solved = infeasible = 0
        recs = []
        cap = trial_cap(cfg, K)
        start = time.perf_counter()
        i = 0
        while i < cap:
            batch = range(i, min(i + cfg.trials, cap))
            for e, n_solved, n_inf, rec in _map(_ber_trial, ((cfg, K, j) for j in batch), cfg.workers):
                errs += e
                solved += n_solved
                infeasible += n_inf
                bits += rec.bits
                recs.append(rec)
            i = batch.stop
            if bits >= cfg.min_bits and errs.min() >= cfg.min_errors:
                break
            if cfg.time_budget is not None and time.perf_counter() - start > cfg.time_budget:
                log.warning("K=%d: time budget reached after %d trials", K, i)
                break
        frac = infeasible / solved if solved else ""
        for p, snr in enumerate(cfg.snr_db):
            rows.append({
                "nt": cfg.nt, "k": K, "m": cfg.mod, "snr_db": snr, "precoder": cfg.precoder,
                "trials": i, "bits": bits, "bit_errors": int(errs[p]),
                "ber": errs[p] / bits, "ci_infeasible_fraction": frac,
            })
        records[K] = recs
    return rows, records


VALIDATION_GRID = [(nt, k, m) for nt in (2, 4) for k in range(nt + 1, nt + 4) for m in (4, 8)]


def validate_instance(H, s, p0, M, qp_tol=1e-10, rank_tol=None, strict=False, oracle=True):
    """Run pipeline (and oracle) on one instance and collect residuals."""
    sol = precode(H, s, p0=p0, M=M, rank_tol=rank_tol, qp_tol=qp_tol, strict=strict)
    res = invariant_residuals(H, s, sol.W, sol.Lambda, sol.t_star, p0, M)
    res.update(t_pipeline=sol.t_star, feasible=sol.feasible, fallback_dual=sol.fallback_dual,
               kkt=sol.kkt_residual, qp_objective=sol.qp_objective)
    if sol.feasible:
        res["duality_rel"] = sol.duality_residual(p0) / sol.t_star
    else:
        res["duality_rel"] = float("nan")
    if oracle:
        orc = solve_p1_oracle(H, s, p0, M)
        res["t_oracle"] = orc.t_star
        res["oracle_feasible"] = orc.feasible
        if orc.feasible:
            res["oracle_gap"] = abs(sol.t_star - orc.t_star) / max(1.0, orc.t_star)
        else:
            res["oracle_gap"] = float("nan")
    return res


def violations(res):
    """Names of hard bounds an instance breaks."""
    bad = []
    for key in ("power", "prescale", "equal_columns", "binding", "null_space"):
        if not res[key] <= BOUNDS[key]:
            bad.append(key)
    if not res["margin_min"] >= BOUNDS["margin_min"]:
        bad.append("margin_min")
    if "t_oracle" in res:
        if res["oracle_feasible"] and not res["oracle_gap"] <= BOUNDS["oracle_gap"]:
            bad.append("oracle_gap")
        # an instance the oracle cannot serve must not be reported feasible
        if not res["oracle_feasible"] and res["feasible"] and res["t_oracle"] <= 0:
            bad.append("feasibility_flag")
    return bad


def _validation_instance(job):
    cfg, i, (nt, K, M) = job
    draw = draw_trial(cfg.seed, i, K, nt, M)
    s = index_to_symbol(draw.index[0], M)
    try:
        res = validate_instance(draw.H, s, cfg.p0, M, cfg.qp_tol, cfg.rank_tol, cfg.strict_ci)
        bad = violations(res)
    except NumericalError as exc:
        log.error("instance %d: %s", i, exc)
        res, bad = {}, ["numerical_error"]
    if res.get("feasible") and not res["duality_rel"] <= DUALITY_RTOL:
        log.warning("instance %d: duality residual %.3e", i, res["duality_rel"])
    return dict({"instance": i, "seed": cfg.seed + i, "nt": nt, "k": K, "m": M},
                **res, violations=";".join(bad))


def run_validation(cfg, instances=None, grid=None):
    """Pipeline-versus-oracle campaign.

    Instance ``i`` takes dimensions ``grid[i % len(grid)]`` and trial seed
    ``cfg.seed + i``. Returns ``(rows, summary)``; ``summary["ok"]`` is False
    if any hard bound is violated. Duality mismatches are logged only.
    """
    if grid is None:
        grid = VALIDATION_GRID
    n = cfg.trials if instances is None else instances
    jobs = ((cfg, i, grid[i % len(grid)]) for i in range(n))
    rows = _map(_validation_instance, jobs, cfg.workers)
    return rows, summarize_validation(rows)


def _quantiles(values):
    v = np.asarray([x for x in values if x == x], dtype=float)
    if v.size == 0:
        return {}
    q = np.quantile(v, [0.5, 0.99, 1.0])
    return {"median": float(q[0]), "p99": float(q[1]), "max": float(q[2])}


def summarize_validation(rows):
    keys = ("power", "prescale", "equal_columns", "binding", "null_space", "oracle_gap", "duality_rel")
    feasible = [r for r in rows if r.get("feasible")]
    dual_ok = sum(1 for r in feasible if r["duality_rel"] <= DUALITY_RTOL)
    return {
        "instances": len(rows),
        "feasible": len(feasible),
        "oracle_feasible": sum(1 for r in rows if r.get("oracle_feasible")),
        "violating": sum(1 for r in rows if r["violations"]),
        "duality_within_tol": dual_ok,
        "quantiles": {k: _quantiles(r.get(k, float("nan")) for r in rows) for k in keys},
        "margin_min": min((r["margin_min"] for r in rows if "margin_min" in r), default=float("nan")),
        "ok": not any(r["violations"] for r in rows),
    }


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def to_csv(rows, meta):
    """CSV text with a leading ``# {json}`` metadata line."""
    buf = io.StringIO()
    buf.write("# " + json.dumps(meta, sort_keys=True) + "\n")
    if rows:
        writer = csv.writer(buf, lineterminator="\n")
        header = list(rows[0])
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(row.get(h, "")) for h in header])
    return buf.getvalue()


def read_csv(path_or_text):
    """Parse a file written by :func:`to_csv` into ``(meta, rows)`` of strings."""
    text = path_or_text
    if "\n" not in text:
        with open(text) as fh:
            text = fh.read()
    first, _, rest = text.partition("\n")
    meta = json.loads(first[2:])
    rows = list(csv.DictReader(io.StringIO(rest)))
    return meta, rows


def metadata(cfg, kind):
    return {
        "experiment": kind,
        "version": f"ciprecode-{__version__}",
        # worker count and output path do not change results
        "config": {k: v for k, v in cfg.to_dict().items() if k not in ("workers", "out")},
        "tolerances": {
            "rank_tol": cfg.rank_tol if cfg.rank_tol is not None else "2K*eps",
            "qp_tol": cfg.qp_tol,
            "alpha_rzf": cfg.alpha_rzf if cfg.alpha_rzf is not None else "K*sigma2",
            "eps": float(np.finfo(float).eps),
        },
        "seed_rule": "trial_seed = seed + trial_index",
    }
