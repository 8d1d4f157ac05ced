"""Command-line interface.

Input recordings are long CSV files with the header
``time,trial,label,<channel names...>``: one row per sample, trials stored
contiguously, the state label constant within a trial.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bandfilter import DEFAULT_ORDER, design_butterworth, filter_zero_phase
from .baselines import (aggregate_equal_weights, aggregate_pca,
                        mean_pairwise_coherence, pairwise_band_coherence)
from .cbc import direction_matrix, filter_recording, per_trial_directions
from .errors import (InvalidConfigurationError, KencohError, ParseError,
                     TrialFailure)
from .inference import (DEFAULT_PERMUTATIONS, fdr_adjust, permutation_test,
                        significance_stars)
from .simgen import (Link, NoiseCase, PowerCell, PowerDesign, SimulationScenario,
                     calibrate_mixing, gen_scenario, power_study,
                     random_base_mixing, write_power_csv)
from .types import EstimatorKind, LagGrid, MultiChannelTrials, get_band, standard_bands

log = logging.getLogger("kencoh")

ESTIMATORS = tuple(k.value for k in EstimatorKind)


# --- CSV input / output -------------------------------------------------------

def _fmt(x) -> str:
    return format(float(x), ".17g")


def parse_groups(specs, header):
    """Column order and split from ``X=a,b Y=c,d`` specifications."""
    groups = {}
    for spec in specs:
        name, sep, cols = spec.partition("=")
        name = name.strip().upper()
        if not sep or name not in ("X", "Y") or not cols.strip():
            raise InvalidConfigurationError(f"bad group specification {spec!r}; expected X=ch1,ch2")
        groups[name] = [c.strip() for c in cols.split(",") if c.strip()]
    if set(groups) != {"X", "Y"}:
        raise InvalidConfigurationError("both X= and Y= groups are required")
    order = []
    for name in groups["X"] + groups["Y"]:
        if name not in header:
            raise InvalidConfigurationError(f"unknown channel {name!r}")
        if name in order:
            raise InvalidConfigurationError(f"channel {name!r} assigned twice")
        order.append(name)
    return order, len(groups["X"])


def read_trials_csv(path, groups=None, split=None, sampling_rate: float = 128.0) -> MultiChannelTrials:
    """Read a long-format recording; raises :class:`ParseError` with the offending line."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(0, "empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 5 or [h.lower() for h in header[:3]] != ["time", "trial", "label"]:
            raise ParseError(1, "header must be time,trial,label followed by at least two channels")
        channels = header[3:]
        if len(set(channels)) != len(channels):
            raise ParseError(1, "duplicate channel names")
        trial_ids, labels, rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(lineno, f"expected {len(header)} fields, found {len(row)}")
            try:
                values = [float(c) for c in row[3:]]
                label = int(float(row[2]))
            except ValueError as err:
                raise ParseError(lineno, f"non-numeric value ({err})") from None
            if not np.all(np.isfinite(values)):
                raise ParseError(lineno, "non-finite channel value")
            if label not in (0, 1):
                raise ParseError(lineno, f"label must be 0 or 1, found {label}")
            trial_ids.append((row[1].strip(), lineno))
            labels.append(label)
            rows.append(values)
    if not rows:
        raise ParseError(1, "no data rows")

    # trials must be contiguous and equally long, with one label each
    starts = [0] + [i for i in range(1, len(rows)) if trial_ids[i][0] != trial_ids[i - 1][0]]
    seen = set()
    for i in starts:
        if trial_ids[i][0] in seen:
            raise ParseError(trial_ids[i][1], f"trial {trial_ids[i][0]!r} is not contiguous")
        seen.add(trial_ids[i][0])
    bounds = starts + [len(rows)]
    lengths = {bounds[k + 1] - bounds[k] for k in range(len(starts))}
    if len(lengths) != 1:
        raise ParseError(trial_ids[starts[-1]][1], f"trials have unequal lengths {sorted(lengths)}")
    trial_labels = []
    for k, i in enumerate(starts):
        block = labels[i:bounds[k + 1]]
        if len(set(block)) != 1:
            bad = i + next(j for j, lab in enumerate(block) if lab != block[0])
            raise ParseError(trial_ids[bad][1], "label changes within a trial")
        trial_labels.append(block[0])

    values = np.asarray(rows, dtype=float)
    names = list(channels)
    if groups:
        order, split = parse_groups(groups, channels)
        values = values[:, [channels.index(c) for c in order]]
        names = order
    elif split is None:
        split = len(channels) // 2
    return MultiChannelTrials(values, lengths.pop(), len(starts), split, sampling_rate,
                              np.asarray(trial_labels), tuple(names))


def write_trials_csv(data: MultiChannelTrials, out) -> None:
    """Write the long format with 17 significant digits (lossless round trip)."""
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["time", "trial", "label", *data.channel_names])
    T, S = data.trial_length, data.sampling_rate
    for n in range(data.num_trials):
        block = data.trial(n)
        lab = int(data.labels[n])
        for t in range(T):
            writer.writerow([_fmt(t / S), n, lab, *(_fmt(x) for x in block[t])])


def _open_out(path):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


def _emit_json(doc, path):
    out, close = _open_out(path)
    try:
        json.dump(doc, out, indent=2)
        out.write("\n")
    finally:
        if close:
            out.close()


def _bands(names, sampling_rate):
    names = [n for item in names for n in item.split(",") if n.strip()]
    if not names:
        names = ["delta"]
    return [get_band(n, sampling_rate) for n in names]


def _threads(value):
    if value is not None:
        return max(1, int(value))
    env = os.environ.get("KENCOH_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidConfigurationError(f"KENCOH_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _seed(args):
    if args.seed is None:
        args.seed = int(np.random.SeedSequence().generate_state(1)[0])
        print(f"seed: {args.seed}", file=sys.stderr)
    return args.seed


# --- commands -----------------------------------------------------------------

def cmd_bands(args):
    for band in standard_bands(args.sampling_rate):
        print(f"{band.name}\t{band.low_hz:g}\t{band.high_hz:g}")
    return 0


def cmd_filter(args):
    data = read_trials_csv(args.input, args.groups, args.split, args.sampling_rate)
    band = get_band(args.band, args.sampling_rate)
    filtered = filter_zero_phase(data.values, design_butterworth(band, args.order), axis=0)
    out, close = _open_out(args.output)
    try:
        write_trials_csv(data.with_values(filtered), out)
    finally:
        if close:
            out.close()
    return 0


def _trial_record(td, band):
    r = td.result
    return {"trial": td.trial, "label": td.label, "band": band.name, "kappa": r.kappa,
            "best_lag": r.best_lag, "a": r.a.tolist(), "b": r.b.tolist(),
            "u": r.u.tolist(), "v": r.v.tolist(), "degenerate_flag": r.degenerate}


def _group_summary(trials):
    out = {}
    for label in sorted({t.label for t in trials}):
        sub = [t for t in trials if t.label == label]
        B = np.stack([t.result.directions for t in sub])
        out[str(label)] = {"trials": len(sub),
                           "mean_directions": B.mean(axis=0).tolist(),
                           "mean_abs_directions": np.abs(B).mean(axis=0).tolist(),
                           "mean_kappa": float(np.mean([t.result.kappa for t in sub]))}
    return out


def _failure_report(err: TrialFailure):
    return {"error": "trial failures",
            "failures": [{"trial": n, "error": type(e).__name__, "message": str(e)}
                         for n, e in err.failures]}


def _pipeline_kwargs(args):
    return dict(order=args.order, trim=args.trim, lenient=args.lenient, seed=_seed(args),
                sign_mode=args.sign_mode, workers=_threads(args.threads))


def _plot_rows(data, band, trials, lags, order):
    """Per-trial coherence of the four group summaries."""
    filtered = filter_recording(data, band, order)
    P = data.group_split
    rows = []
    for td in trials:
        block = filtered.trial(td.trial)
        X, Y = block[:, :P], block[:, P:]
        rows.append([band.name, td.trial, td.label, _fmt(td.result.kappa),
                     _fmt(pairwise_band_coherence(aggregate_equal_weights(X),
                                                  aggregate_equal_weights(Y), lags).value),
                     _fmt(pairwise_band_coherence(aggregate_pca(X), aggregate_pca(Y), lags).value),
                     _fmt(mean_pairwise_coherence(X, Y, lags))])
    return rows


def _write_plot_data(directory, data, per_band, lags, order):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "coherence.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["band", "trial", "label", "canonical", "equal_weights", "pca", "mean_pairwise"])
        for band, trials in per_band:
            w.writerows(_plot_rows(data, band, trials, lags, order))
    with open(directory / "directions.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["band", "label", "channel", "group", "mean_abs_direction"])
        for band, trials in per_band:
            for label, summary in _group_summary(trials).items():
                for j, val in enumerate(summary["mean_abs_directions"]):
                    group = "X" if j < data.group_split else "Y"
                    w.writerow([band.name, label, data.channel_names[j], group, _fmt(val)])


def cmd_estimate(args):
    data = read_trials_csv(args.input, args.groups, args.split, args.sampling_rate)
    lags = LagGrid(args.max_lag)
    kwargs = _pipeline_kwargs(args)
    records, summaries, per_band = [], {}, []
    for band in _bands(args.band, args.sampling_rate):
        try:
            trials = per_trial_directions(data, band, args.estimator, lags, **kwargs)
        except TrialFailure as err:
            print(json.dumps(_failure_report(err)), file=sys.stderr)
            return err.exit_code
        records.extend(_trial_record(t, band) for t in trials)
        summaries[band.name] = _group_summary(trials)
        per_band.append((band, trials))
    _emit_json({"command": "estimate", "estimator": args.estimator, "max_lag": args.max_lag,
                "seed": args.seed, "channels": list(data.channel_names), "split": data.group_split,
                "trials": records, "groups": summaries}, args.output)
    if args.emit_plot_data:
        _write_plot_data(args.emit_plot_data, data, per_band, lags, args.order)
    return 0


def cmd_test(args):
    data = read_trials_csv(args.input, args.groups, args.split, args.sampling_rate)
    if len(set(data.labels.tolist())) < 2:
        raise InvalidConfigurationError("the test needs trials from both states")
    lags = LagGrid(args.max_lag)
    kwargs = _pipeline_kwargs(args)
    bands = _bands(args.band, args.sampling_rate)
    results, per_band = [], []
    for i, band in enumerate(bands):
        try:
            trials = per_trial_directions(data, band, args.estimator, lags, **kwargs)
        except TrialFailure as err:
            print(json.dumps(_failure_report(err)), file=sys.stderr)
            return err.exit_code
        B, labels = direction_matrix(trials)
        perm_seed = int(np.random.SeedSequence(args.seed, spawn_key=(i,)).generate_state(1)[0])
        results.append(permutation_test(B, labels, args.permutations, perm_seed, band))
        per_band.append((band, trials))
    adjusted = fdr_adjust([r.p_value for r in results])
    report = []
    for res, adj in zip(results, adjusted):
        entry = res.to_dict()
        del entry["group_means"]
        entry.update(p_adjusted=float(adj), stars=significance_stars(float(adj)))
        report.append(entry)
    _emit_json({"command": "test", "estimator": args.estimator, "max_lag": args.max_lag,
                "permutations": args.permutations, "seed": args.seed, "bands": report}, args.output)
    if args.emit_plot_data:
        _write_plot_data(args.emit_plot_data, data, per_band, lags, args.order)
    return 0


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as err:
        raise ParseError(err.lineno, f"invalid JSON config: {err.msg}") from None
    if not isinstance(cfg, dict):
        raise InvalidConfigurationError("config file must hold a JSON object")
    return cfg


_DESIGN_KEYS = {f for f in PowerDesign.__dataclass_fields__}


def _design(cfg, args):
    fields = dict(cfg.get("design", {}))
    unknown = set(fields) - _DESIGN_KEYS
    if unknown:
        raise InvalidConfigurationError(f"unknown design keys {sorted(unknown)}")
    for key in ("num_trials", "trial_length", "max_lag"):
        val = getattr(args, key, None)
        if val is not None:
            fields[key] = val
    return PowerDesign(**fields)


def cmd_simulate(args):
    cfg = _load_config(args.config)
    design = _design(cfg, args)
    seed = _seed(args)
    link = Link(cfg.get("link", args.link))
    case = NoiseCase.parse(cfg.get("case", args.case))
    delta = float(cfg.get("delta1", args.delta1))
    base = random_base_mixing(design.D, design.mixing_seed)
    E0, E1 = calibrate_mixing(delta, base, design.band_index, design.split, design.sigma_w,
                              design.sampling_rate)
    scn = SimulationScenario(E0, E1, design.split, link, case, design.trial_length,
                             design.num_trials, design.sampling_rate, seed)
    out, close = _open_out(args.output)
    try:
        write_trials_csv(gen_scenario(scn), out)
    finally:
        if close:
            out.close()
    return 0


def cmd_power(args):
    cfg = _load_config(args.config)
    design = _design(cfg, args)
    links = [Link(x) for x in cfg.get("links", ["linear"])]
    cases = [NoiseCase.parse(x) for x in cfg.get("cases", [c.value for c in NoiseCase])]
    deltas = [float(x) for x in cfg.get("deltas", [0.0, 0.4, 1.1, 1.3])]
    estimators = [EstimatorKind.parse(x) for x in cfg.get("estimators", ESTIMATORS)]
    replicates = int(cfg.get("replicates", args.replicates))
    permutations = int(cfg.get("permutations", args.permutations))
    seed = _seed(args)
    cells = [PowerCell(c, l, d) for l in links for c in cases for d in deltas]
    rows = power_study(cells, replicates, permutations, seed, estimators, design,
                       workers=_threads(args.threads))
    for row in rows:
        for msg in row.errors:
            print(f"{row.case}/{row.link}/{row.delta1:g}/{row.estimator}: {msg}", file=sys.stderr)
    out, close = _open_out(args.output)
    try:
        write_power_csv(rows, out)
    finally:
        if close:
            out.close()
    if args.emit_plot_data:
        directory = Path(args.emit_plot_data)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "p_values.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["case", "link", "delta1", "estimator", "replicate", "p_value"])
            for row in rows:
                for r, p in enumerate(row.p_values):
                    w.writerow([row.case, row.link, _fmt(row.delta1), row.estimator, r, _fmt(p)])
    return 0


# --- argument parsing -----------------------------------------------------------

def _add_io(p, output_help="output path (default: stdout)"):
    p.add_argument("input", help="long-format CSV recording")
    p.add_argument("-o", "--output", help=output_help)
    p.add_argument("--sampling-rate", type=float, default=128.0, help="samples per second")
    p.add_argument("--groups", nargs=2, metavar="GROUP=CHANNELS",
                   help="channel groups, e.g. X=Fp1,F3 Y=P3,O1")
    p.add_argument("--split", type=int, help="number of X channels when --groups is not given "
                   "(default: first half)")
    p.add_argument("--order", type=int, default=DEFAULT_ORDER, help="Butterworth order")


def _add_pipeline(p):
    p.add_argument("--band", action="append", default=[],
                   help="band name(s), repeatable or comma separated (default: delta)")
    p.add_argument("--estimator", type=str.lower, choices=ESTIMATORS, default="kendall")
    p.add_argument("--max-lag", type=int, default=3, help="largest lead-lag L")
    p.add_argument("--trim", type=int, default=0, help="samples dropped from each trial edge")
    p.add_argument("--lenient", action="store_true", help="drop failing trials instead of aborting")
    p.add_argument("--sign-mode", choices=("rule", "group-mean"), default="rule")
    p.add_argument("--seed", type=int, help="root seed (printed when generated)")
    p.add_argument("--threads", type=int, help="worker processes (default: KENCOH_THREADS or all CPUs)")
    p.add_argument("--emit-plot-data", metavar="DIR", help="write tidy CSV files for plotting")


def _add_sim(p):
    p.add_argument("--config", help="JSON scenario configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--num-trials", dest="num_trials", type=int)
    p.add_argument("--trial-length", dest="trial_length", type=int)
    p.add_argument("--max-lag", dest="max_lag", type=int)
    p.add_argument("-o", "--output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kencoh", description="Canonical band-coherence between channel groups")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bands", help="print the standard frequency bands")
    p.add_argument("--sampling-rate", type=float, default=128.0)
    p.set_defaults(func=cmd_bands)

    p = sub.add_parser("filter", help="band-filter every channel")
    _add_io(p)
    p.add_argument("--band", required=True)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("estimate", help="per-trial canonical coherence and directions (JSON)")
    _add_io(p)
    _add_pipeline(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("test", help="permutation test for a change in directions between states")
    _add_io(p)
    _add_pipeline(p)
    p.add_argument("--permutations", type=int, default=DEFAULT_PERMUTATIONS)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("simulate", help="write a simulated two-state recording")
    _add_sim(p)
    p.add_argument("--case", default="gaussian", help="noise case: gaussian, t3 or cauchy")
    p.add_argument("--link", choices=[l.value for l in Link], default="linear")
    p.add_argument("--delta1", type=float, default=0.0, help="planted Delta-band distance")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("power", help="replicated power study (CSV)")
    _add_sim(p)
    p.add_argument("--replicates", type=int, default=20)
    p.add_argument("--permutations", type=int, default=500)
    p.add_argument("--threads", type=int)
    p.add_argument("--emit-plot-data", metavar="DIR")
    p.set_defaults(func=cmd_power)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except KencohError as err:
        print(f"kencoh: error: {err}", file=sys.stderr)
        return getattr(err, "exit_code", 1)
    except ValueError as err:
        print(f"kencoh: error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"kencoh: error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
