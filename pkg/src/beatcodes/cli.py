"""Command-line pipeline: validate, calibrate, synth, sample, dist, net, report.

Every stage echoes the analysis configuration and its fingerprint into its
outputs; a stage that reads another stage's artifacts hard-errors on a
fingerprint mismatch. Execution details (output directory, worker count) are
deliberately outside the fingerprint so reruns and different worker counts
can be compared byte for byte. All randomness flows from --seed; outputs are
written atomically (temp file + rename).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import distfit, netkit, synthkit, trends
from .corpus import Corpus, CorpusFormatError, parse_corpus, write_corpus, years_available
from .encode import (EncoderConfig, FACETS, TimbreCalibration, calibrate_timbre,
                     load_calibration, save_calibration)
from .sampler import Sample, draw_sample, load_sample, sample_loudness_values, save_sample

ENV_OUT = "BEATCODES_OUT"
ENV_WORKERS = "BEATCODES_WORKERS"

__all__ = ["RunConfig", "run_report", "main"]


@dataclass(frozen=True)
class RunConfig:
    """Analysis parameters shared by every stage; hashed into the fingerprint."""

    facets: tuple[str, ...] = FACETS
    window: int = 5
    replicates: int = 10
    target_beats: int = 1_000_000
    seed: int = 0
    pitch_threshold: float = 0.5
    loudness_bin_width: float = 1.0
    loudness_floor_db: float = -60.0
    exclude_top_hubs: int = 10
    null_realizations: int = 10
    swaps_per_edge: int = 10
    bootstrap_samples: int = 0
    strict: bool = True

    def __post_init__(self):
        bad = [f for f in self.facets if f not in FACETS]
        if bad or not self.facets:
            raise ValueError(f"facets must be a non-empty subset of {FACETS}, got {self.facets}")

    @property
    def encoder(self) -> EncoderConfig:
        return EncoderConfig(pitch_threshold=self.pitch_threshold,
                             loudness_bin_width=self.loudness_bin_width,
                             loudness_floor_db=self.loudness_floor_db)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["facets"] = list(self.facets)
        return d

    def fingerprint(self) -> str:
        payload = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class StageMismatchError(ValueError):
    """An upstream artifact was produced under a different configuration."""


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# per-replicate analysis
# ---------------------------------------------------------------------------

def _distribution_row(sample: Sample, corpus: Corpus, config: RunConfig) -> dict:
    rc = distfit.rank_frequency(sample)
    row: dict = {
        "facet": sample.facet,
        "center_year": sample.center_year,
        "replicate": sample.replicate_index,
        "total_beats": sample.total_beats,
        "shortfall": sample.shortfall,
        "ids": rc.ids,
        "counts": rc.counts,
        "powerlaw": None,
        "powerlaw_error": None,
        "gof_p": None,
        "lognormal": None,
        "lognormal_error": None,
        "zero_loudness_dropped": 0,
    }
    if sample.facet in ("pitch", "timbre"):
        try:
            fit = distfit.fit_shifted_powerlaw(rc)
            row["powerlaw"] = fit
            if config.bootstrap_samples > 0:
                row["gof_p"] = distfit.bootstrap_gof(rc, fit, config.bootstrap_samples,
                                                     seed=config.seed)
        except (ValueError, RuntimeError) as exc:
            row["powerlaw_error"] = str(exc)
    if sample.facet == "loudness":
        values = sample_loudness_values(corpus, sample)
        negative = values[values < 0.0]
        row["zero_loudness_dropped"] = int(values.size - negative.size)
        try:
            row["lognormal"] = distfit.fit_reversed_lognormal(negative)
        except (ValueError, RuntimeError) as exc:
            row["lognormal_error"] = str(exc)
    return row


def _network_row(sample: Sample, config: RunConfig) -> dict:
    row: dict = {
        "facet": sample.facet,
        "center_year": sample.center_year,
        "replicate": sample.replicate_index,
        "metrics": None,
        "metrics_error": None,
        "null": None,
        "null_error": None,
        "S": None,
        "network": None,
    }
    net = netkit.build_network(sample)
    row["network"] = net
    try:
        metrics = netkit.network_metrics(net, exclude_top_hubs=config.exclude_top_hubs)
        row["metrics"] = metrics
    except (ValueError, RuntimeError) as exc:
        row["metrics_error"] = str(exc)
        return row
    try:
        null = netkit.rewire_null(net, swaps_per_edge=config.swaps_per_edge,
                                  realizations=config.null_realizations,
                                  seed=config.seed, exclude_top_hubs=config.exclude_top_hubs)
        row["null"] = null
        row["S"] = netkit.small_worldness(metrics, null)
    except (ValueError, RuntimeError) as exc:
        row["null_error"] = str(exc)
    return row


def _replicate_result(corpus: Corpus, config: RunConfig,
                      calibration: TimbreCalibration | None,
                      facet: str, year: int, rep: int) -> dict:
    sample = draw_sample(corpus, facet, year, rep, target_beats=config.target_beats,
                         window=config.window, seed=config.seed,
                         config=config.encoder, calibration=calibration)
    drow = _distribution_row(sample, corpus, config)
    nrow = _network_row(sample, config)
    metrics: dict[str, float | None] = {}
    fit = drow["powerlaw"]
    metrics["beta"] = fit.beta if fit is not None else None
    nm = nrow["metrics"]
    if nm is not None:
        metrics["median_degree"] = nm.median_degree
        metrics["l"] = nm.l
        metrics["C"] = nm.C
        metrics["Gamma"] = nm.Gamma
        metrics["gamma"] = nm.degree_fit.beta if nm.degree_fit is not None else None
    metrics["S"] = nrow["S"]
    ln = drow["lognormal"]
    if ln is not None:
        metrics["loudness_median_db"] = ln.empirical_median_db
        metrics["loudness_spread_db"] = ln.spread_db
    return {
        "facet": facet,
        "center_year": year,
        "replicate": rep,
        "total_beats": sample.total_beats,
        "shortfall": sample.shortfall,
        "ids": drow["ids"],
        "counts": drow["counts"],
        "metrics": metrics,
    }


_WORKER_STATE: dict = {}


def _init_worker(corpus: Corpus, config: RunConfig, calibration) -> None:
    _WORKER_STATE["corpus"] = corpus
    _WORKER_STATE["config"] = config
    _WORKER_STATE["calibration"] = calibration


def _pool_job(key: tuple[str, int, int]) -> dict:
    return _replicate_result(_WORKER_STATE["corpus"], _WORKER_STATE["config"],
                             _WORKER_STATE["calibration"], *key)


# ---------------------------------------------------------------------------
# report pipeline
# ---------------------------------------------------------------------------

def run_report(corpus: Corpus, config: RunConfig, out_dir, workers: int = 1) -> dict[str, trends.EvolutionReport]:
    """Full pipeline into out_dir: trends.json, series_*.csv, corr_*.csv.

    Output bytes are independent of the worker count: every job's RNG stream
    is keyed by (seed, facet, year, replicate) and results are assembled in
    plan order.
    """
    out = Path(out_dir)
    fp = config.fingerprint()
    calibration = calibrate_timbre(corpus) if "timbre" in config.facets else None
    years = years_available(corpus, config.window)
    if not years:
        raise ValueError("corpus has no populated years")
    keys = [(facet, year, rep)
            for facet in config.facets
            for year in years
            for rep in range(config.replicates)]
    if workers <= 1:
        results = [_replicate_result(corpus, config, calibration, *k) for k in keys]
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(corpus, config, calibration)) as pool:
            results = list(pool.map(_pool_job, keys, chunksize=1))

    facet_results = [
        trends.FacetYearResult(facet=r["facet"], center_year=r["center_year"],
                               replicate_index=r["replicate"], fingerprint=fp,
                               metrics=r["metrics"])
        for r in results
    ]
    correlations: dict[str, distfit.CorrelationMatrix] = {}
    for facet in config.facets:
        per_year: dict[int, list[distfit.RankedCounts]] = {}
        for r in results:
            if r["facet"] == facet:
                rc = distfit.RankedCounts.from_mapping(
                    dict(zip(r["ids"].tolist(), r["counts"].tolist())))
                per_year.setdefault(r["center_year"], []).append(rc)
        if len(per_year) >= 2:
            try:
                correlations[facet] = distfit.correlation_matrix(per_year)
            except ValueError:
                pass

    reports = trends.assemble_report(facet_results, correlations, fingerprint=fp)

    payload = {
        "config": config.as_dict(),
        "fingerprint": fp,
        "facets": {facet: rep.as_dict() for facet, rep in reports.items()},
    }
    _atomic_write(out / "trends.json", _json_text(payload))
    for facet, rep in reports.items():
        for metric, series in rep.series.items():
            lines = [f"# fingerprint={fp}", "year,mean,sd"]
            for y, m, s in zip(series.years, series.means, series.sds):
                lines.append(f"{y},{m!r},{s!r}")
            _atomic_write(out / f"series_{facet}_{metric}.csv", "\n".join(lines) + "\n")
        if rep.correlation is not None:
            text = f"# fingerprint={fp}\n" + distfit.correlation_csv(rep.correlation)
            _atomic_write(out / f"corr_{facet}.csv", text)
    return reports


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _parse_input_corpus(args) -> Corpus:
    strict = not args.lenient
    corpus = parse_corpus(args.corpus, strict=strict)
    if corpus.issues:
        for issue in corpus.issues:
            print(f"warning: {issue}", file=sys.stderr)
    if not corpus.tracks:
        raise ValueError("corpus is empty after validation")
    return corpus


def _config_from_args(args) -> RunConfig:
    facets = args.facet or ["all"]
    if "all" in facets:
        facets = list(FACETS)
    seen: list[str] = []
    for f in facets:
        if f not in seen:
            seen.append(f)
    return RunConfig(
        facets=tuple(seen),
        window=args.window,
        replicates=args.replicates,
        target_beats=args.beats,
        seed=args.seed,
        pitch_threshold=args.pitch_threshold,
        loudness_bin_width=args.loudness_bin_width,
        loudness_floor_db=args.loudness_floor,
        exclude_top_hubs=args.exclude_top_hubs,
        null_realizations=args.null_realizations,
        swaps_per_edge=args.swaps_per_edge,
        bootstrap_samples=args.bootstrap,
        strict=not args.lenient,
    )


def _workers(args) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    return max(1, int(os.environ.get(ENV_WORKERS, "1")))


def _out_dir(args) -> Path:
    if args.out is not None:
        return Path(args.out)
    return Path(os.environ.get(ENV_OUT, "."))


def _calibration_for(args, corpus: Corpus, config: RunConfig) -> TimbreCalibration | None:
    if "timbre" not in config.facets:
        return None
    if getattr(args, "calibration", None):
        from .corpus import corpus_hash
        return load_calibration(args.calibration, expected_hash=corpus_hash(corpus),
                                force=args.force)
    return calibrate_timbre(corpus)


def cmd_validate(args) -> int:
    try:
        corpus = parse_corpus(args.corpus, strict=not args.lenient)
    except CorpusFormatError as exc:
        for issue in exc.issues:
            print(f"error: {issue}", file=sys.stderr)
        print(f"invalid corpus: {len(exc.issues)} issue(s)")
        return 1
    for issue in corpus.issues:
        print(f"warning: {issue}", file=sys.stderr)
    years = corpus.years()
    span = f"{years[0]}..{years[-1]}" if years else "none"
    print(f"tracks={corpus.n_tracks} beats={corpus.total_beats} years={span} "
          f"issues={len(corpus.issues)}")
    return 0


def cmd_calibrate(args) -> int:
    corpus = _parse_input_corpus(args)
    cal = calibrate_timbre(corpus)
    out = Path(args.out or "calibration.json")
    tmp = out.with_name(out.name + f".tmp{os.getpid()}")
    save_calibration(cal, tmp)
    os.replace(tmp, out)
    print(f"calibration written to {out} (corpus {cal.corpus_hash[:12]})")
    return 0


def cmd_synth(args) -> int:
    years = tuple(range(args.years_start, args.years_start + args.years_count))
    transitions = None
    if args.transitions:
        raw = json.loads(Path(args.transitions).read_text(encoding="utf-8"))
        transitions = {int(k): tuple(int(v) for v in vs) for k, vs in raw.items()}
    spec = synthkit.GeneratorSpec(
        kind=args.kind,
        years=years,
        tracks_per_year=args.tracks_per_year,
        beats_per_track=args.beats_per_track,
        seed=args.seed,
        vocabulary=args.vocabulary,
        exponent=args.exponent,
        offset=args.offset,
        transitions=transitions,
        mu0=args.mu0,
        drift_db_per_year=args.drift,
        sigma0=args.sigma0,
    )
    corpus = synthkit.synth_corpus(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = out.with_name(out.name + f".tmp{os.getpid()}")
    write_corpus(corpus, tmp)
    os.replace(tmp, out)
    print(f"wrote {corpus.n_tracks} tracks / {corpus.total_beats} beats to {out}")
    return 0


def _sample_path(out: Path, facet: str, year: int, rep: int) -> Path:
    return out / "samples" / f"{facet}_y{year}_r{rep}.codes"


def cmd_sample(args) -> int:
    corpus = _parse_input_corpus(args)
    config = _config_from_args(args)
    fp = config.fingerprint()
    out = _out_dir(args)
    calibration = _calibration_for(args, corpus, config)
    entries = []
    for facet in config.facets:
        for year in years_available(corpus, config.window):
            for rep in range(config.replicates):
                sample = draw_sample(corpus, facet, year, rep,
                                     target_beats=config.target_beats,
                                     window=config.window, seed=config.seed,
                                     config=config.encoder, calibration=calibration)
                path = _sample_path(out, facet, year, rep)
                path.parent.mkdir(parents=True, exist_ok=True)
                tmp = path.with_name(path.name + f".tmp{os.getpid()}")
                save_sample(sample, tmp, fingerprint=fp)
                os.replace(tmp, path)
                entries.append({
                    "facet": facet, "center_year": year, "replicate": rep,
                    "path": str(path.relative_to(out)),
                    "total_beats": sample.total_beats,
                    "shortfall": sample.shortfall,
                })
    manifest = {"config": config.as_dict(), "fingerprint": fp, "entries": entries}
    _atomic_write(out / "samples_manifest.json", _json_text(manifest))
    print(f"wrote {len(entries)} samples to {out / 'samples'}")
    return 0


def _load_manifest(out: Path, config: RunConfig) -> dict:
    path = out / "samples_manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"no samples manifest at {path}; run `sample` first")
    manifest = json.loads(path.read_text(encoding="utf-8"))
    if manifest.get("fingerprint") != config.fingerprint():
        raise StageMismatchError(
            f"samples at {out} were drawn under fingerprint {manifest.get('fingerprint')!r}, "
            f"current flags give {config.fingerprint()!r}")
    return manifest


def _iter_manifest_samples(out: Path, manifest: dict):
    for entry in manifest["entries"]:
        sample, fp = load_sample(out / entry["path"])
        if fp is not None and fp != manifest["fingerprint"]:
            raise StageMismatchError(f"sample {entry['path']} carries fingerprint {fp!r}")
        yield sample


def cmd_dist(args) -> int:
    corpus = _parse_input_corpus(args)
    config = _config_from_args(args)
    out = _out_dir(args)
    manifest = _load_manifest(out, config)
    fp = manifest["fingerprint"]
    rows = []
    merged: dict[tuple[str, int], list[distfit.RankedCounts]] = {}
    for sample in _iter_manifest_samples(out, manifest):
        row = _distribution_row(sample, corpus, config)
        merged.setdefault((sample.facet, sample.center_year), []).append(
            distfit.RankedCounts.from_mapping(dict(zip(row["ids"].tolist(),
                                                       row["counts"].tolist()))))
        rows.append({
            "facet": row["facet"],
            "center_year": row["center_year"],
            "replicate": row["replicate"],
            "total_beats": row["total_beats"],
            "shortfall": row["shortfall"],
            "powerlaw": row["powerlaw"].as_dict() if row["powerlaw"] else None,
            "powerlaw_error": row["powerlaw_error"],
            "gof_p": row["gof_p"],
            "lognormal": row["lognormal"].as_dict() if row["lognormal"] else None,
            "lognormal_error": row["lognormal_error"],
            "zero_loudness_dropped": row["zero_loudness_dropped"],
        })
    payload = {"config": config.as_dict(), "fingerprint": fp, "fits": rows}
    _atomic_write(out / "dist.json", _json_text(payload))
    per_facet_years: dict[str, dict[int, distfit.RankedCounts]] = {}
    for (facet, year), parts in sorted(merged.items()):
        rc = distfit.RankedCounts.merged(parts)
        per_facet_years.setdefault(facet, {})[year] = rc
        text = f"# fingerprint={fp}\n" + distfit.rank_frequency_csv(rc)
        _atomic_write(out / f"rankfreq_{facet}_{year}.csv", text)
    for facet, by_year in per_facet_years.items():
        if len(by_year) >= 2:
            matrix = distfit.correlation_matrix(by_year)
            text = f"# fingerprint={fp}\n" + distfit.correlation_csv(matrix)
            _atomic_write(out / f"corr_{facet}.csv", text)
    print(f"wrote {len(rows)} fits to {out / 'dist.json'}")
    return 0


def cmd_net(args) -> int:
    config = _config_from_args(args)
    out = _out_dir(args)
    manifest = _load_manifest(out, config)
    fp = manifest["fingerprint"]
    rows = []
    for sample in _iter_manifest_samples(out, manifest):
        row = _network_row(sample, config)
        net = row["network"]
        edge_path = out / f"edges_{sample.facet}_{sample.center_year}_{sample.replicate_index}.csv"
        _atomic_write(edge_path, f"# fingerprint={fp}\n" + netkit.edge_list_csv(net))
        rows.append({
            "facet": sample.facet,
            "center_year": sample.center_year,
            "replicate": sample.replicate_index,
            "hub_excluded": config.exclude_top_hubs > 0,
            "n_nodes": net.n_nodes,
            "n_edges": net.n_edges,
            "metrics": row["metrics"].as_dict() if row["metrics"] else None,
            "metrics_error": row["metrics_error"],
            "null": row["null"].as_dict() if row["null"] else None,
            "null_error": row["null_error"],
            "S": row["S"],
        })
    payload = {"config": config.as_dict(), "fingerprint": fp, "rows": rows}
    _atomic_write(out / "metrics.json", _json_text(payload))
    print(f"wrote {len(rows)} network rows to {out / 'metrics.json'}")
    return 0


def cmd_report(args) -> int:
    corpus = _parse_input_corpus(args)
    config = _config_from_args(args)
    out = _out_dir(args)
    reports = run_report(corpus, config, out, workers=_workers(args))
    years = years_available(corpus, config.window)
    print(f"report for facets {','.join(config.facets)} over {len(years)} central years "
          f"written to {out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_analysis_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--facet", action="append",
                   choices=[*FACETS, "all"], help="facet to analyze (repeatable; default all)")
    p.add_argument("--window", type=int, default=5, help="year window width (odd)")
    p.add_argument("--replicates", type=int, default=10)
    p.add_argument("--beats", type=int, default=1_000_000, help="target beats per sample")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pitch-threshold", type=float, default=0.5)
    p.add_argument("--loudness-bin-width", type=float, default=1.0)
    p.add_argument("--loudness-floor", type=float, default=-60.0)
    p.add_argument("--exclude-top-hubs", type=int, default=10)
    p.add_argument("--null-realizations", type=int, default=10)
    p.add_argument("--swaps-per-edge", type=int, default=10)
    p.add_argument("--bootstrap", type=int, default=0,
                   help="bootstrap samples for power-law goodness of fit (0 = skip)")
    p.add_argument("--lenient", action="store_true",
                   help="skip invalid tracks instead of aborting")


def _add_io_flags(p: argparse.ArgumentParser, corpus_required: bool = True) -> None:
    if corpus_required:
        p.add_argument("--corpus", required=True, help="path to the corpus file")
    p.add_argument("--out", default=None, help=f"output directory (env {ENV_OUT})")
    p.add_argument("--workers", type=int, default=None,
                   help=f"worker processes (env {ENV_WORKERS}, default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beatcodes",
                                     description="Beat-level codeword statistics pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate a corpus file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--lenient", action="store_true")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("calibrate", help="compute and persist the timbre calibration")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--lenient", action="store_true")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--kind", required=True, choices=synthkit.KINDS)
    p.add_argument("--out", required=True, help="corpus file to write")
    p.add_argument("--years-start", type=int, default=1955)
    p.add_argument("--years-count", type=int, default=20)
    p.add_argument("--tracks-per-year", type=int, default=50)
    p.add_argument("--beats-per-track", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vocabulary", type=int, default=64)
    p.add_argument("--exponent", type=float, default=1.0)
    p.add_argument("--offset", type=float, default=1.0)
    p.add_argument("--transitions", default=None,
                   help="JSON file {node: [neighbors]} for the markov kind")
    p.add_argument("--mu0", type=float, default=math.log(22.0))
    p.add_argument("--drift", type=float, default=0.0, help="median drift in dB/year")
    p.add_argument("--sigma0", type=float, default=0.25)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sample", help="draw and persist codeword samples")
    _add_io_flags(p)
    _add_analysis_flags(p)
    p.add_argument("--calibration", default=None, help="persisted timbre calibration")
    p.add_argument("--force", action="store_true",
                   help="use a calibration despite a corpus-hash mismatch")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("dist", help="distribution fits over persisted samples")
    _add_io_flags(p)
    _add_analysis_flags(p)
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("net", help="transition-network metrics over persisted samples")
    _add_io_flags(p, corpus_required=False)
    _add_analysis_flags(p)
    p.set_defaults(func=cmd_net)

    p = sub.add_parser("report", help="full pipeline: samples, fits, networks, trends")
    _add_io_flags(p)
    _add_analysis_flags(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # structured error contract: nonzero + machine-readable
        payload = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(payload), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
