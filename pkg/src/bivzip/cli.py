"""Command-line workflow: fit, simulate, compare, summarize.

Exit codes: 0 success, 2 validation error, 3 runtime divergence.  On
failure a machine-readable error JSON is printed to stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__, config, data_io, diagnostics, model, sampler, simulate
from .errors import BivZipError, ChainDivergenceError

EXIT_VALIDATION = 2
EXIT_DIVERGENCE = 3


def _chain_seed(seed: int, chain: int) -> int:
    return int(seed) * 1000 + chain


def _fit_chains(bundle, priors, table, run_cfg, chains):
    outputs = []
    for c in range(chains):
        cfg_kwargs = {
            "total_iterations": run_cfg.total_iterations,
            "burn_in": run_cfg.burn_in,
            "thin": run_cfg.thin,
            "adapt_window": run_cfg.adapt_window,
            "adapt_cutoff": run_cfg.adapt_cutoff,
            "seed": _chain_seed(run_cfg.seed, c),
            "latent_mode": run_cfg.latent_mode,
            "store_lambda": run_cfg.store_lambda,
        }
        cfg = sampler.RunConfig(**cfg_kwargs)
        outputs.append(sampler.run_chain(cfg, bundle, priors, table.y1, table.y2))
    return outputs


def _write_draws(out_dir: Path, outputs, bundle):
    for c, chain in enumerate(outputs):
        frame = pd.DataFrame(chain.params, columns=list(chain.param_names))
        frame.insert(0, "loglik", chain.loglik)
        if chain.lambda_draws is not None:
            n = chain.lambda_draws.shape[1]
            for ell in range(3):
                cols = {
                    f"lambda_tilde{ell + 1}[{j}]": chain.lambda_draws[:, j, ell]
                    for j in range(n)
                }
                frame = pd.concat([frame, pd.DataFrame(cols)], axis=1)
        frame.to_csv(out_dir / f"draws_chain{c}.csv", index=False)


def _write_curves(out_dir: Path, merged, bundle, table, grid_size=50):
    written = []
    for ell, design in enumerate(bundle.intensity, start=1):
        for block in design.spline_blocks:
            xs = table.frame[block.name].to_numpy(dtype=float)
            grid = np.linspace(xs.min(), xs.max(), grid_size)
            g, mean, lo, hi = diagnostics.spline_curve(
                merged, bundle, ell, block.name, grid
            )
            frame = pd.DataFrame(
                {"grid": g, "mean": mean, "lower": lo, "upper": hi}
            )
            path = out_dir / f"curve_intensity{ell}_{block.name}.csv"
            frame.to_csv(path, index=False)
            written.append(path.name)
    return written


def cmd_fit(args) -> int:
    spec, priors = config.parse_model_config(args.model)
    table = data_io.load_table(args.data, spec)
    bundle = model.build_designs(table.frame, spec)
    run_cfg = sampler.RunConfig(
        total_iterations=args.iters,
        burn_in=args.burn,
        thin=args.thin,
        seed=args.seed,
        latent_mode=args.latent_mode,
        store_lambda=args.store_lambda,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = _fit_chains(bundle, priors, table, run_cfg, args.chains)
    merged = simulate._merge_chains(outputs)
    _write_draws(out_dir, outputs, bundle)
    curves = _write_curves(out_dir, merged, bundle, table)

    dic = diagnostics.compute_dic(merged, bundle, table.y1, table.y2)
    summary = {
        "parameters": [
            {
                "name": s.name,
                "mean": s.mean,
                "lower": s.lower,
                "upper": s.upper,
                "significant": s.significant,
            }
            for s in diagnostics.summarize(merged)
        ],
        "dic": {"dbar": dic.dbar, "dhat": dic.dhat, "p_d": dic.p_d, "dic": dic.dic},
        "convergence": _jsonable(diagnostics.convergence_report(merged)),
        "acceptance_per_chain": [o.acceptance for o in outputs],
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2))

    manifest = {
        "command": "fit",
        "data": str(args.data),
        "model": str(args.model),
        "seed": args.seed,
        "chains": args.chains,
        "iters": args.iters,
        "burn": args.burn,
        "thin": args.thin,
        "latent_mode": args.latent_mode,
        "store_lambda": bool(args.store_lambda),
        "config_hash": outputs[0].config.digest(),
        "bundle_digest": bundle.digest(),
        "curve_files": curves,
        "versions": {
            "bivzip": __version__,
            "numpy": np.__version__,
            "pandas": pd.__version__,
        },
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return 0


def cmd_simulate(args) -> int:
    truth, _ = config.parse_truth_config(args.truth)
    rng = np.random.default_rng(args.seed)
    table, record = simulate.simulate_dataset(truth, rng)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(out, index=False)
    record_path = out.with_suffix(".truth.json")
    record_path.write_text(
        json.dumps(
            {
                "seed": args.seed,
                "n": truth.n,
                "labels": record["labels"].tolist(),
                "lambda_tilde": record["lambda_tilde"].tolist(),
            }
        )
    )
    return 0


def cmd_compare(args) -> int:
    rows = []
    for path in args.models:
        spec, priors = config.parse_model_config(path)
        table = data_io.load_table(args.data, spec)
        bundle = model.build_designs(table.frame, spec)
        run_cfg = sampler.RunConfig(
            total_iterations=args.iters, burn_in=args.burn, thin=args.thin,
            seed=args.seed, latent_mode=args.latent_mode,
        )
        outputs = _fit_chains(bundle, priors, table, run_cfg, args.chains)
        merged = simulate._merge_chains(outputs)
        dic = diagnostics.compute_dic(merged, bundle, table.y1, table.y2)
        rows.append(
            {"model": str(path), "dic": dic.dic, "dbar": dic.dbar,
             "p_d": dic.p_d}
        )
    frame = pd.DataFrame(rows).sort_values("dic").reset_index(drop=True)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(args.out, index=False)
    print(frame.to_string(index=False))
    return 0


def cmd_summarize(args) -> int:
    draws_dir = Path(args.draws)
    files = sorted(draws_dir.glob("draws_chain*.csv"))
    if not files:
        raise BivZipError(f"no draw files in {draws_dir}")
    frames = [pd.read_csv(f) for f in files]
    merged = pd.concat(frames, ignore_index=True)
    cols = [c for c in merged.columns
            if c != "loglik" and not c.startswith("lambda_tilde")]
    out = []
    for c in cols:
        x = merged[c].to_numpy(dtype=float)
        lo, hi = np.quantile(x, [0.025, 0.975])
        out.append(
            {
                "name": c,
                "mean": float(x.mean()),
                "lower": float(lo),
                "upper": float(hi),
                "significant": bool(lo > 0 or hi < 0),
            }
        )
    payload = json.dumps({"parameters": out}, indent=2)
    if args.out:
        Path(args.out).write_text(payload)
    else:
        print(payload)
    return 0


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and (obj != obj):
        return None
    return obj


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bivzip",
        description="Bivariate zero-inflated Poisson regression by MCMC",
    )
    sub = p.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a model to a CSV data file")
    fit.add_argument("--data", required=True)
    fit.add_argument("--model", required=True)
    fit.add_argument("--out", required=True)
    fit.add_argument("--iters", type=int, default=120_000)
    fit.add_argument("--burn", type=int, default=20_000)
    fit.add_argument("--thin", type=int, default=5)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--chains", type=int, default=1)
    fit.add_argument("--latent-mode", default="exact-conditional",
                     choices=sampler.LATENT_MODES)
    fit.add_argument("--store-lambda", action="store_true")
    fit.set_defaults(func=cmd_fit)

    sim = sub.add_parser("simulate", help="generate a synthetic dataset")
    sim.add_argument("--truth", required=True)
    sim.add_argument("--out", required=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.set_defaults(func=cmd_simulate)

    cmp_ = sub.add_parser("compare", help="DIC comparison across model configs")
    cmp_.add_argument("--data", required=True)
    cmp_.add_argument("--models", nargs="+", required=True)
    cmp_.add_argument("--out", default=None)
    cmp_.add_argument("--iters", type=int, default=120_000)
    cmp_.add_argument("--burn", type=int, default=20_000)
    cmp_.add_argument("--thin", type=int, default=5)
    cmp_.add_argument("--seed", type=int, default=0)
    cmp_.add_argument("--chains", type=int, default=1)
    cmp_.add_argument("--latent-mode", default="exact-conditional",
                      choices=sampler.LATENT_MODES)
    cmp_.set_defaults(func=cmd_compare)

    summ = sub.add_parser("summarize", help="summarize a draws directory")
    summ.add_argument("--draws", required=True)
    summ.add_argument("--out", default=None)
    summ.set_defaults(func=cmd_summarize)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ChainDivergenceError as exc:
        print(json.dumps({"error": "divergence", "message": str(exc),
                          "iteration": exc.iteration, "block": exc.block}))
        return EXIT_DIVERGENCE
    except BivZipError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}))
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
