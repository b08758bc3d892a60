"""Command line front end.

Subcommands mirror the analysis pipeline: ingest raw timestamps,
simulate synthetic records, fit models by EM, smooth a record under a
model, predict a held-out bin, and compare candidate models. Every
stochastic subcommand demands an explicit --seed; reruns with the same
arguments produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io as tio
from . import selection
from .core import (
    ObservationSequence,
    ZeroLikelihoodError,
    clamp_counts,
    forward_filter,
    log_likelihood,
    predict_bin,
    smooth,
)
from .ingest import (
    DEFAULT_TICK_RESOLUTION,
    TimestampOrderError,
    TimestampParseError,
    bin_counts,
    parse_timestamps,
    write_timestamps,
)
from .simulate import (
    DEFAULT_BIN_WIDTH,
    SimConfig,
    default_paper_model,
    run_simulation,
)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_counts(args) -> ObservationSequence:
    bin_width = getattr(args, "bin_width", None)
    return tio.read_counts_csv(args.counts, bin_width=bin_width)


def _maybe_clamp(obs: ObservationSequence, model, args) -> ObservationSequence:
    if getattr(args, "clamp", False):
        return clamp_counts(obs, model.max_count)
    return obs


def _crossings(p: np.ndarray, level: float = 0.5) -> int:
    above = p > level
    return int(np.count_nonzero(above[1:] != above[:-1]))


def cmd_ingest(args) -> int:
    record = parse_timestamps(
        args.input, fmt=args.format, tick_resolution=args.tick_resolution
    )
    obs = bin_counts(record, args.bin_width, span=args.span)
    out = _out_dir(args)
    tio.write_counts_csv(obs, out / "counts.csv", force=args.force)
    total = int(obs.counts.sum())
    print(
        f"ingested {record.n_clicks} clicks into {obs.n_bins} bins of "
        f"{obs.bin_width:g} s ({total} kept, "
        f"mean {total / obs.n_bins:.4f} counts/bin)"
    )
    print(f"wrote {out / 'counts.csv'}")
    return 0


def cmd_simulate(args) -> int:
    if args.model is not None:
        model = tio.load_model(args.model)
        model_origin = str(args.model)
    else:
        model = default_paper_model(max_count=args.max_count)
        model_origin = "builtin three-state telegraph model"

    config = SimConfig(
        model=model,
        n_bins=args.n_bins,
        seed=args.seed,
        bin_width=args.bin_width,
        emit_timestamps=args.emit_timestamps,
        tick_resolution=args.tick_resolution,
    )
    states, obs, record = run_simulation(config)

    out = _out_dir(args)
    tio.write_counts_csv(obs, out / "counts.csv", force=args.force)
    tio.write_states_csv(states, out / "states.csv", force=args.force)
    tio.write_json(
        {
            "seed": config.seed,
            "n_bins": config.n_bins,
            "bin_width_s": config.bin_width,
            "tick_resolution_s": config.tick_resolution,
            "emit_timestamps": config.emit_timestamps,
            "model": model_origin,
            "n_states": model.n_states,
            "max_count": model.max_count,
        },
        out / "sim_config.json",
        force=args.force,
    )
    written = ["counts.csv", "states.csv", "sim_config.json"]
    if record is not None:
        name = "timestamps.txt" if args.timestamp_format == "text" else "timestamps.bin"
        target = out / name
        if target.exists() and not args.force:
            raise FileExistsError(f"{target} already exists; pass --force")
        write_timestamps(record, target, fmt=args.timestamp_format)
        written.append(name)

    print(
        f"simulated {obs.n_bins} bins ({int(obs.counts.sum())} counts) "
        f"with seed {config.seed}"
    )
    print(f"wrote {', '.join(written)} in {out}")
    return 0


def _comparison_doc(fits: list[selection.KStateFit]) -> dict:
    if len(fits) >= 2:
        comparison = selection.compare_models(fits)
        entries = comparison.entries
        ranked_aic = comparison.ranked_by_aic()
        ranked_bic = comparison.ranked_by_bic()
        n_obs = comparison.n_obs
    else:
        fit = fits[0]
        entries = (
            selection.comparison_entry(
                fit.n_states,
                fit.best.log_likelihood,
                fit.best.model.max_count,
                fit.n_obs,
                fit.best.converged,
            ),
        )
        ranked_aic = ranked_bic = (fit.n_states,)
        n_obs = fit.n_obs
    return {
        "n_obs": n_obs,
        "entries": [
            {
                "n_states": e.n_states,
                "log_likelihood": e.log_likelihood,
                "n_params": e.n_params,
                "aic": e.aic,
                "bic": e.bic,
                "converged": e.converged,
            }
            for e in entries
        ],
        "ranked_by_aic": list(ranked_aic),
        "ranked_by_bic": list(ranked_bic),
    }


def cmd_fit(args) -> int:
    obs = _load_counts(args)
    out = _out_dir(args)

    fits = []
    all_converged = True
    for k in args.n_states:
        fit = selection.fit_restarts(
            obs,
            k,
            base_seed=args.seed,
            restarts=args.restarts,
            tol=args.tol,
            max_iter=args.max_iter,
            max_count=args.max_count,
            workers=args.workers,
        )
        fits.append(fit)
        best = fit.best
        tio.save_model(best.model, out / f"model_k{k}.json", force=args.force)
        tio.write_loglik_trace_csv(
            best.loglik_trace, out / f"loglik_trace_k{k}.csv", force=args.force
        )
        status = "converged" if best.converged else "DID NOT CONVERGE"
        all_converged = all_converged and best.converged
        print(
            f"k={k}: loglik {best.log_likelihood:.6f} after "
            f"{best.iterations} iterations ({status}, "
            f"final delta {best.final_delta:.3e}, "
            f"best restart {fit.best_index} of {len(fit.restart_logliks)})"
        )

    tio.write_json(_comparison_doc(fits), out / "comparison.json", force=args.force)
    print(f"wrote models and comparison.json in {out}")
    if not all_converged:
        print("warning: at least one fit did not converge", file=sys.stderr)
        return 1
    return 0


def cmd_smooth(args) -> int:
    model = tio.load_model(args.model)
    obs = _maybe_clamp(_load_counts(args), model, args)
    out = _out_dir(args)

    filtered = forward_filter(model, obs)
    smoothed, _ = smooth(model, obs)
    labeling = selection.assign_labels(model, threshold=args.threshold)
    agg_f = selection.aggregate_populations(filtered, labeling)
    agg_s = selection.aggregate_populations(smoothed, labeling)

    tio.write_posterior_csv(filtered, obs.bin_width, out / "filtered.csv", force=args.force)
    tio.write_posterior_csv(smoothed, obs.bin_width, out / "smoothed.csv", force=args.force)
    tio.write_aggregate_csv(
        agg_f, obs.bin_width, out / "aggregate_filtered.csv", force=args.force
    )
    tio.write_aggregate_csv(
        agg_s, obs.bin_width, out / "aggregate_smoothed.csv", force=args.force
    )

    print(
        f"log-likelihood {filtered.log_likelihood():.6f} over {obs.n_bins} bins"
    )
    print(
        f"bright-population 0.5 crossings: filtered {_crossings(agg_f[:, 0])}, "
        f"smoothed {_crossings(agg_s[:, 0])}"
    )
    print(f"wrote filtered/smoothed posteriors and aggregates in {out}")
    return 0


def cmd_predict(args) -> int:
    model = tio.load_model(args.model)
    obs = _maybe_clamp(_load_counts(args), model, args)
    prediction = predict_bin(model, obs, args.bin)
    realized = int(obs.counts[args.bin - 1])

    doc = {
        "t": prediction.t,
        "realized_count": realized,
        "full_record": prediction.full_record.tolist(),
        "forward_only": prediction.forward_only.tolist(),
        "log_score_full": float(np.log(prediction.full_record[realized])),
        "log_score_forward": float(np.log(prediction.forward_only[realized])),
    }
    out = _out_dir(args)
    tio.write_json(doc, out / "prediction.json", force=args.force)
    print(
        f"bin {prediction.t}: realized count {realized}, "
        f"log score {doc['log_score_full']:.6f} (full record) vs "
        f"{doc['log_score_forward']:.6f} (forward only)"
    )
    print(f"wrote {out / 'prediction.json'}")
    return 0


def cmd_compare(args) -> int:
    obs = _load_counts(args)
    entries = []
    for model_path in args.model:
        model = tio.load_model(model_path)
        used = clamp_counts(obs, model.max_count) if args.clamp else obs
        ll = log_likelihood(model, used)
        p = selection.n_free_parameters(model.n_states, model.max_count)
        entries.append(
            {
                "file": str(model_path),
                "n_states": model.n_states,
                "max_count": model.max_count,
                "log_likelihood": ll,
                "n_params": p,
                "aic": 2.0 * p - 2.0 * ll,
                "bic": p * float(np.log(obs.n_bins)) - 2.0 * ll,
            }
        )

    doc = {
        "n_obs": obs.n_bins,
        "entries": entries,
        "ranked_by_aic": [
            e["file"] for e in sorted(entries, key=lambda e: (e["aic"], e["file"]))
        ],
        "ranked_by_bic": [
            e["file"] for e in sorted(entries, key=lambda e: (e["bic"], e["file"]))
        ],
    }
    out = _out_dir(args)
    tio.write_json(doc, out / "comparison.json", force=args.force)
    for e in entries:
        print(
            f"{e['file']}: k={e['n_states']} loglik {e['log_likelihood']:.6f} "
            f"aic {e['aic']:.3f} bic {e['bic']:.3f}"
        )
    print(f"best by BIC: {doc['ranked_by_bic'][0]}")
    print(f"wrote {out / 'comparison.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="telegraph-hmm",
        description="HMM analysis of photon-count telegraph signals",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_out(p):
        p.add_argument("-o", "--out", required=True, help="output directory")
        p.add_argument(
            "--force", action="store_true", help="overwrite existing output files"
        )

    p = sub.add_parser("ingest", help="bin a photon timestamp stream into counts")
    p.add_argument("-i", "--input", required=True, help="timestamp file")
    p.add_argument("--format", choices=("text", "binary"), default="text")
    p.add_argument("--bin-width", type=float, default=DEFAULT_BIN_WIDTH)
    p.add_argument("--tick-resolution", type=float, default=DEFAULT_TICK_RESOLUTION)
    p.add_argument(
        "--span",
        type=float,
        default=None,
        help="record duration in seconds (defaults to the last click)",
    )
    add_out(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("simulate", help="generate a synthetic telegraph record")
    p.add_argument("--n-bins", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument(
        "--model", default=None, help="model JSON (defaults to the builtin model)"
    )
    p.add_argument("--max-count", type=int, default=12,
                   help="count table size of the builtin model")
    p.add_argument("--bin-width", type=float, default=DEFAULT_BIN_WIDTH)
    p.add_argument("--emit-timestamps", action="store_true")
    p.add_argument("--timestamp-format", choices=("text", "binary"), default="text")
    p.add_argument("--tick-resolution", type=float, default=DEFAULT_TICK_RESOLUTION)
    add_out(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit models by EM with random restarts")
    p.add_argument("--counts", required=True, help="counts CSV")
    p.add_argument(
        "-k",
        "--n-states",
        type=int,
        nargs="+",
        required=True,
        help="state counts to fit, e.g. -k 2 3 4",
    )
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--max-count", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--bin-width", type=float, default=None)
    add_out(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("smooth", help="filter and smooth a record under a model")
    p.add_argument("--counts", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--bin-width", type=float, default=None)
    p.add_argument(
        "--threshold",
        type=float,
        default=None,
        help="emission-mean cut separating bright from dark states",
    )
    p.add_argument(
        "--clamp",
        action="store_true",
        help="clip counts above the model's max_count instead of failing",
    )
    add_out(p)
    p.set_defaults(func=cmd_smooth)

    p = sub.add_parser("predict", help="predictive distribution for one bin")
    p.add_argument("--counts", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--bin", type=int, required=True, help="1-based bin index")
    p.add_argument("--bin-width", type=float, default=None)
    p.add_argument("--clamp", action="store_true")
    add_out(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("compare", help="rank model files on a record by AIC/BIC")
    p.add_argument("--counts", required=True)
    p.add_argument("--model", nargs="+", required=True, help="model JSON files")
    p.add_argument("--bin-width", type=float, default=None)
    p.add_argument("--clamp", action="store_true")
    add_out(p)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (
        ValueError,
        FileExistsError,
        FileNotFoundError,
        TimestampParseError,
        TimestampOrderError,
        ZeroLikelihoodError,
        tio.ModelFileError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
