"""Experiment runner: run/sweep/privacy-trace/report over config files.

Artifacts are deterministic by construction: floats print with repr (their
shortest round-trip form), nothing embeds a clock, and every file header
carries the canonical config hash, so re-running a config reproduces every
byte. Output lands under $GOSSIPSHIELD_OUT (default ./runs).
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .bounds import ConvergenceBoundInputs, theorem2_rhs, theorem3_rhs
from .config import apply_overrides, build_experiment, load_config
from .engine import run, run_ensemble
from .errors import ConfigError, GossipShieldError
from .objectives import benchmark_problem
from .privacy import global_epsilon, required_variance_local, sensitivity_default
from .schedules import DecayingSchedule

__all__ = ["main", "run_experiment", "sweep_experiment", "privacy_trace"]

_RUN_COLUMNS = "k,D,D_tilde,f_bar,f_best,gap,dk_bound"
_ENSEMBLE_COLUMNS = (
    "k,D_mean,D_tilde_mean,f_bar_mean,gap_mean_of_min,gap_min_of_mean,dk_bound"
)


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def _out_root() -> Path:
    return Path(os.environ.get("GOSSIPSHIELD_OUT", "runs"))


def _write_lines(path: Path, lines) -> None:
    with open(path, "w", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


def _seed_csv(log, cfg_hash: str):
    yield f"# config_hash={cfg_hash}"
    yield f"# seed={log.seed}"
    yield f"# status={log.status}"
    yield _RUN_COLUMNS
    bound = log.dk_bound
    for i in range(len(log.k)):
        yield ",".join(
            (
                str(int(log.k[i])),
                _fmt(log.consensus[i]),
                _fmt(log.pre_agg[i]),
                _fmt(log.f_bar[i]),
                _fmt(log.f_best[i]),
                _fmt(log.gap[i]),
                _fmt(bound[i]) if bound is not None else "",
            )
        )


def _ensemble_csv(ens, cfg_hash: str, seeds):
    yield f"# config_hash={cfg_hash}"
    yield "# seeds=" + "|".join(str(s) for s in seeds)
    yield _ENSEMBLE_COLUMNS
    for i in range(len(ens.k)):
        yield ",".join(
            (
                str(int(ens.k[i])),
                _fmt(ens.consensus_mean[i]),
                _fmt(ens.pre_agg_mean[i]),
                _fmt(ens.f_bar_mean[i]),
                _fmt(ens.gap_mean_of_min[i]),
                _fmt(ens.gap_min_of_mean[i]),
                _fmt(ens.dk_bound[i]) if ens.dk_bound is not None else "",
            )
        )


def _bounds_block(exp, ens):
    if exp.consts is None:
        return
    c = exp.consts
    yield "theory:"
    yield f"  contraction rho={_fmt(c.rho)} admissible={_fmt(c.rho_bar)}"
    yield f"  mixing={_fmt(c.mixing_sq)} phi={_fmt(c.phi)} k0={c.k0}"
    yield (
        f"  theta={_fmt(c.theta)} theta_min={_fmt(c.theta_min)} "
        f"regime_valid={c.regime_valid}"
    )
    if ens.dk_bound is not None:
        yield f"  disagreement ceiling final={_fmt(ens.dk_bound[-1])}"
    try:
        inputs = ConvergenceBoundInputs(
            consts=c,
            f0_gap=float(np.mean([log.gap[0] for log in ens.logs])),
            d_series=ens.consensus_mean,
            schedule=exp.sched,
        )
        if isinstance(exp.sched, DecayingSchedule):
            breakdown = theorem2_rhs(inputs)
        else:
            breakdown = theorem3_rhs(inputs)
    except GossipShieldError as exc:
        yield f"  gap ceiling skipped: {exc}"
        return
    yield f"  gap ceiling total={_fmt(breakdown.total)}"
    for term in breakdown.terms:
        yield f"    {term.name} ({term.driver}) = {_fmt(term.value)}"


def _privacy_block(exp):
    yield "privacy:"
    source = "derived from local budget" if exp.noise_derived else "configured"
    yield f"  masking variance={_fmt(exp.noise.variance)} ({source})"
    if exp.local_dp is not None:
        need = required_variance_local(
            exp.local_dp["epsilon"],
            exp.local_dp["delta"],
            sensitivity_default(exp.local_dp["grad_bound"]),
            exp.sched,
        )
        ok = exp.noise.variance >= need * (1.0 - 1e-12)
        yield (
            f"  local budget (eps={_fmt(exp.local_dp['epsilon'])}, "
            f"delta={_fmt(exp.local_dp['delta'])}): required variance={_fmt(need)} "
            f"met={ok}"
        )
    if exp.budget is not None:
        report = global_epsilon(exp.budget, exp.noise.variance)
        yield (
            f"  global budget: epsilon={_fmt(report.epsilon)} "
            f"delta={_fmt(exp.budget.delta)}"
        )
        yield (
            f"    variance_ok={report.variance_ok} "
            f"renyi_cap={_fmt(report.renyi_cap)} "
            f"preconditions_ok={report.preconditions_ok}"
        )


def _summary_lines(exp, ens):
    yield f"config_hash: {exp.config_hash}"
    yield (
        f"network: {exp.normalized['topology']['kind']} n={exp.net.n_agents} "
        f"reliable={len(exp.net.reliable)} byzantine={len(exp.net.byzantine)}"
    )
    yield (
        f"attack: {exp.attack.kind}  aggregation: {exp.agg}  "
        f"schedule: {exp.sched.kind} scale={_fmt(exp.sched.scale)}"
    )
    yield f"horizon: {exp.horizon}  seeds: {','.join(str(s) for s in exp.seeds)}"
    yield "per-seed:"
    for log in ens.logs:
        tail = f" diverged_at={log.diverged_at}" if log.status == "diverged" else ""
        yield (
            f"  seed={log.seed} status={log.status} final_D={_fmt(log.consensus[-1])} "
            f"final_gap={_fmt(log.gap[-1])}{tail}"
        )
    yield "ensemble:"
    yield f"  final_D_mean={_fmt(ens.consensus_mean[-1])}"
    yield f"  final_gap_mean_of_min={_fmt(ens.gap_mean_of_min[-1])}"
    yield f"  final_gap_min_of_mean={_fmt(ens.gap_min_of_mean[-1])}"
    yield from _privacy_block(exp)
    yield from _bounds_block(exp, ens)


def run_experiment(cfg: dict, out_dir: Path, name: str = "run") -> dict:
    """Execute one config: per-seed CSVs, ensemble CSV, summary. Returns
    a small result dict used by sweep summaries."""
    exp = build_experiment(cfg, name=name)
    if exp.sweep_axes:
        raise ConfigError("config declares sweep axes; use the sweep verb")
    out_dir.mkdir(parents=True, exist_ok=True)
    ens = run_ensemble(
        exp.net,
        exp.prob,
        exp.sched,
        exp.horizon,
        exp.seeds,
        consts=exp.consts,
        noise=exp.noise,
        attack=exp.attack,
        agg=exp.agg,
        tau=exp.tau,
        theory_mode=exp.theory_mode,
    )
    for log in ens.logs:
        _write_lines(
            out_dir / f"run_seed{log.seed}.csv", _seed_csv(log, exp.config_hash)
        )
    _write_lines(
        out_dir / "ensemble.csv", _ensemble_csv(ens, exp.config_hash, exp.seeds)
    )
    _write_lines(out_dir / "summary.txt", _summary_lines(exp, ens))
    (out_dir / "config.json").write_text(
        json.dumps(exp.normalized, sort_keys=True, indent=2) + "\n"
    )
    return {
        "hash": exp.config_hash,
        "statuses": ens.statuses,
        "final_gap_mean_of_min": float(ens.gap_mean_of_min[-1]),
        "final_d_mean": float(ens.consensus_mean[-1]),
        "n_seed_files": len(ens.logs),
    }


def _strip_sweep(cfg: dict) -> dict:
    out = json.loads(json.dumps(cfg))
    out.pop("sweep", None)
    return out


def _sweep_worker(args):
    idx, cell_cfg, out_dir = args
    result = run_experiment(cell_cfg, Path(out_dir), name=f"cell{idx:03d}")
    return idx, result


def sweep_experiment(cfg: dict, out_dir: Path, max_workers: int | None = None) -> list:
    """Cartesian sweep over the declared axes, one subdirectory per cell."""
    exp = build_experiment(cfg, name="sweep")
    axes = exp.sweep_axes
    if not axes:
        raise ConfigError("sweep verb needs a sweep.axes section")
    out_dir.mkdir(parents=True, exist_ok=True)
    keys = [key for key, _ in axes]
    cells = list(itertools.product(*(values for _, values in axes)))
    jobs = []
    for idx, combo in enumerate(cells):
        overrides = [f"{key}={json.dumps(val)}" for key, val in zip(keys, combo)]
        cell_cfg = apply_overrides(_strip_sweep(cfg), overrides)
        jobs.append((idx, cell_cfg, str(out_dir / f"cell{idx:03d}")))

    if max_workers == 1 or len(jobs) == 1:
        results = [_sweep_worker(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(_sweep_worker, jobs))
    results.sort(key=lambda pair: pair[0])

    n_files = sum(res["n_seed_files"] for _, res in results)
    expected = len(cells) * len(exp.seeds)
    assert n_files == expected, f"artifact count {n_files} != {expected}"

    lines = [f"# config_hash={exp.config_hash}", "cell,axes,statuses,final_gap_mean_of_min,final_D_mean"]
    for idx, res in results:
        axes_txt = ";".join(
            f"{key}={json.dumps(val)}" for key, val in zip(keys, cells[idx])
        )
        lines.append(
            ",".join(
                (
                    f"cell{idx:03d}",
                    axes_txt,
                    "|".join(res["statuses"]),
                    _fmt(res["final_gap_mean_of_min"]),
                    _fmt(res["final_d_mean"]),
                )
            )
        )
    _write_lines(out_dir / "sweep_summary.csv", lines)
    return [res for _, res in results]


def _trace_csv(log, cfg_hash: str, label: str):
    yield f"# config_hash={cfg_hash}"
    yield f"# seed={log.seed}"
    yield f"# variant={label}"
    n = log.traces.shape[1]
    yield "k," + ",".join(f"x_{i}" for i in range(n))
    for i in range(len(log.k)):
        yield str(int(log.k[i])) + "," + ",".join(_fmt(v) for v in log.traces[i])


def privacy_trace(cfg: dict, out_dir: Path, swap_agent: int | None = None) -> dict:
    """Paired runs on adjacent function sets with identical seeds.

    The observed agent's objective is replaced by the configured family in
    the second run; everything else, including every random draw, stays
    fixed. Emits full per-agent trajectory CSVs for both variants plus the
    largest per-round deviation an observer of the traces would see.
    """
    if swap_agent is not None:
        cfg = apply_overrides(cfg, [f"privacy_trace.swap_agent={swap_agent}"])
    exp = build_experiment(cfg, name="trace")
    if exp.trace_swap is None:
        raise ConfigError(
            "privacy-trace needs a privacy_trace section (or --swap) with "
            "swap_agent and replacement_family"
        )
    agent, family = exp.trace_swap
    families = [obj.family for obj in exp.prob.objectives]
    swapped_families = list(families)
    swapped_families[agent] = family
    prob_swapped = benchmark_problem(
        byzantine=exp.net.byzantine,
        n_agents=exp.net.n_agents,
        u_std=exp.prob.u_std,
        v_std=exp.prob.v_std,
        family_of=swapped_families,
    )

    out_dir.mkdir(parents=True, exist_ok=True)
    kwargs = dict(
        noise=exp.noise,
        attack=exp.attack,
        agg=exp.agg,
        tau=exp.tau,
        record_traces=True,
    )
    max_dev = 0.0
    lines = [
        f"config_hash: {exp.config_hash}",
        f"swap_agent: {agent}  family: {families[agent]} -> {family}",
        f"masking variance: {_fmt(exp.noise.variance)}",
        "per-seed max per-round trace deviation:",
    ]
    for seed in exp.seeds:
        base = run(exp.net, exp.prob, exp.sched, exp.horizon, seed, **kwargs)
        swap = run(exp.net, prob_swapped, exp.sched, exp.horizon, seed, **kwargs)
        _write_lines(
            out_dir / f"trace_base_seed{seed}.csv",
            _trace_csv(base, exp.config_hash, "base"),
        )
        _write_lines(
            out_dir / f"trace_swapped_seed{seed}.csv",
            _trace_csv(swap, exp.config_hash, "swapped"),
        )
        rows = min(len(base.k), len(swap.k))
        dev = float(
            np.max(np.abs(base.traces[:rows] - swap.traces[:rows]))
        ) if rows else float("nan")
        max_dev = max(max_dev, dev)
        lines.append(f"  seed={seed} deviation={_fmt(dev)}")
    lines.append(f"max_deviation: {_fmt(max_dev)}")
    _write_lines(out_dir / "trace_summary.txt", lines)
    return {"hash": exp.config_hash, "max_deviation": max_dev}


def report(run_dir: Path) -> str:
    """Re-read a finished run directory and render its summary."""
    summary = run_dir / "summary.txt"
    if not summary.exists():
        raise ConfigError(f"{run_dir} has no summary.txt; not a finished run")
    parts = [summary.read_text().rstrip("\n")]
    seeds = sorted(run_dir.glob("run_seed*.csv"))
    if seeds:
        parts.append("seed files:")
        for path in seeds:
            with open(path) as fh:
                header = [next(fh).rstrip("\n") for _ in range(3)]
            status = header[2].removeprefix("# status=")
            parts.append(f"  {path.name}: {status}")
    return "\n".join(parts)


def _resolve_out(args, cfg_path: Path) -> Path:
    if args.out is not None:
        return Path(args.out)
    return _out_root() / cfg_path.stem


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gossipshield",
        description="resilient decentralized optimization experiment runner",
    )
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in ("run", "sweep", "privacy-trace"):
        p = sub.add_parser(verb)
        p.add_argument("config", type=Path)
        p.add_argument("--out", type=Path, default=None)
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config value (dotted path, YAML scalar)",
        )
        if verb == "privacy-trace":
            p.add_argument("--swap", type=int, default=None)
        if verb == "sweep":
            p.add_argument("--workers", type=int, default=None)
    p_report = sub.add_parser("report")
    p_report.add_argument("run_dir", type=Path)
    args = parser.parse_args(argv)

    try:
        if args.verb == "report":
            print(report(args.run_dir))
            return 0
        cfg = apply_overrides(load_config(args.config), args.overrides)
        out_dir = _resolve_out(args, args.config)
        if args.verb == "run":
            result = run_experiment(cfg, out_dir, name=args.config.stem)
            print(f"wrote {out_dir} (hash {result['hash'][:12]})")
        elif args.verb == "sweep":
            results = sweep_experiment(cfg, out_dir, max_workers=args.workers)
            print(f"wrote {out_dir}: {len(results)} cells")
        else:
            result = privacy_trace(cfg, out_dir, swap_agent=args.swap)
            print(
                f"wrote {out_dir} (max trace deviation "
                f"{_fmt(result['max_deviation'])})"
            )
        return 0
    except GossipShieldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
