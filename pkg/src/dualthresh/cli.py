"""Command-line pipeline: generate, calibrate, evaluate, sweep.

Exit codes: 0 success, 2 usage or input error, 3 degenerate-statistics
error (a threshold could not be placed because the calibration flags
collapsed to one class). Errors print a single line prefixed ``error:``
on standard error.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .calibration import (
    THRESHOLDS_FORMAT_VERSION,
    CalibratedThresholds,
    calibrate,
)
from .core import DegenerateLabelsError, LabeledSample, SEVERITY_MAX, SEVERITY_MIN
from .datagen import (
    DEFAULT_NOISE_SIGMA_PER_LEVEL,
    DEFAULT_TEMPERATURE_PER_LEVEL,
    GeneratorConfig,
    derive_seed,
    generate_dataset,
)
from .io import (
    MANIFEST_FORMAT_VERSION,
    ArtifactError,
    DatasetManifest,
    ManifestEntry,
    ParseError,
    read_logits_csv,
    read_manifest,
    read_thresholds,
    write_manifest,
    write_records_csv,
    write_roc_csv,
    write_samples_csv,
    write_summary,
    write_thresholds,
)
from .metrics import EvaluationSummary, detection_auc, summarize
from .prediction import evaluate_samples

HEATMAP_METRICS = (
    "coverage",
    "avg_set_size",
    "avg_entropy",
    "avg_confidence",
    "avg_margin",
    "abstention_rate",
    "auc",
)

DEFAULT_CONDITIONS = ("rain", "fog", "snow", "motion_blur")
DEFAULT_SEVERITIES = (0, 1, 2, 3, 4, 5)


@dataclass(frozen=True)
class SweepConfig:
    """Parsed sweep/generation configuration file."""

    alpha: float = 0.1
    conditions: tuple[str, ...] = DEFAULT_CONDITIONS
    severities: tuple[int, ...] = DEFAULT_SEVERITIES
    seed: int = 2024
    n_calibration: int = 500
    k_classes: int = 10
    n_samples: int = 1000
    base_accuracy: float = 0.9
    temperature_per_level: float = DEFAULT_TEMPERATURE_PER_LEVEL
    noise_sigma_per_level: float = DEFAULT_NOISE_SIGMA_PER_LEVEL
    manifest: Optional[str] = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if len(self.conditions) == 0:
            raise ValueError("conditions must be non-empty")
        if len(self.severities) == 0:
            raise ValueError("severities must be non-empty")
        for sev in self.severities:
            if not SEVERITY_MIN <= sev <= SEVERITY_MAX:
                raise ValueError(
                    f"severities must be in [{SEVERITY_MIN}, {SEVERITY_MAX}], got {sev}"
                )
        if len(set(self.conditions)) != len(self.conditions):
            raise ValueError("conditions contain duplicates")
        if len(set(self.severities)) != len(self.severities):
            raise ValueError("severities contain duplicates")
        if self.n_calibration < 1:
            raise ValueError("n_calibration must be >= 1")
        # Delegate generator field validation.
        self.generator_config("", 0, 1)

    @classmethod
    def from_file(cls, path) -> "SweepConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: not valid JSON ({exc})") from None
        if not isinstance(doc, dict):
            raise ValueError(f"{path}: config must be a JSON object")
        gen = doc.pop("generator", {})
        if not isinstance(gen, dict):
            raise ValueError(f"{path}: 'generator' must be an object")
        known_top = {"alpha", "conditions", "severities", "seed", "n_calibration", "manifest"}
        known_gen = {
            "k_classes", "n_samples", "base_accuracy",
            "temperature_per_level", "noise_sigma_per_level",
        }
        unknown = (doc.keys() - known_top) | (gen.keys() - known_gen)
        if unknown:
            raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
        kwargs = {}
        for key in known_top & doc.keys():
            kwargs[key] = doc[key]
        for key in known_gen & gen.keys():
            kwargs[key] = gen[key]
        if "conditions" in kwargs:
            kwargs["conditions"] = tuple(str(c) for c in kwargs["conditions"])
        if "severities" in kwargs:
            kwargs["severities"] = tuple(int(s) for s in kwargs["severities"])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ValueError(f"{path}: {exc}") from None

    def generator_config(self, condition: str, severity: int, n: int, *seed_parts) -> GeneratorConfig:
        return GeneratorConfig(
            k_classes=self.k_classes,
            n_samples=n,
            base_accuracy=self.base_accuracy,
            severity=severity,
            seed=derive_seed(self.seed, condition, *seed_parts),
            condition=condition,
            temperature_per_level=self.temperature_per_level,
            noise_sigma_per_level=self.noise_sigma_per_level,
        )

    def calibration_config(self, condition: str) -> GeneratorConfig:
        return self.generator_config(condition, 0, self.n_calibration, "cal")

    def test_config(self, condition: str, severity: int) -> GeneratorConfig:
        return self.generator_config(condition, severity, self.n_samples, "test", severity)


def _slug(condition: str) -> str:
    s = re.sub(r"[^A-Za-z0-9._-]+", "_", condition)
    return s or "unnamed"


def _print_thresholds(thresholds: CalibratedThresholds, prefix: str = "") -> None:
    q_conf = "inf" if thresholds.q_conf == float("inf") else f"{thresholds.q_conf:.6f}"
    print(f"{prefix}q_conf={q_conf}")
    print(f"{prefix}q_abs={thresholds.q_abs:.6f}")
    print(f"{prefix}youden_j={thresholds.youden_j:.6f}")
    print(f"{prefix}n={thresholds.n_calibration}")


def _warn_sentinel(thresholds: CalibratedThresholds) -> None:
    if thresholds.q_conf == float("inf"):
        print(
            "warning: q_conf=inf (alpha below 1/(n+1)); prediction sets will "
            "contain every label and coverage holds vacuously",
            file=sys.stderr,
        )


# ---------------------------------------------------------------------------
# gen


def _generate_tree(cfg: SweepConfig, out: Path, quiet: bool = False) -> Path:
    """Write all per-(condition, severity) CSVs plus a manifest; return the
    manifest path."""
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for cond in cfg.conditions:
        slug = _slug(cond)
        cal_name = f"{slug}_cal.csv"
        cal = generate_dataset(cfg.calibration_config(cond))
        write_samples_csv(cal, out / cal_name)
        if not quiet:
            print(f"wrote {out / cal_name} ({len(cal)} samples)")
        entries.append(ManifestEntry(cal_name, cond, 0, "calibration"))
        for sev in cfg.severities:
            name = f"{slug}_s{sev}.csv"
            samples = generate_dataset(cfg.test_config(cond, sev))
            write_samples_csv(samples, out / name)
            if not quiet:
                print(f"wrote {out / name} ({len(samples)} samples)")
            entries.append(ManifestEntry(name, cond, sev, "test"))

    manifest = DatasetManifest(k_classes=cfg.k_classes, files=tuple(entries))
    manifest_path = out / "manifest.json"
    write_manifest(manifest, manifest_path)
    if not quiet:
        print(f"wrote {manifest_path} ({len(entries)} files)")
    return manifest_path


def cmd_gen(args) -> int:
    cfg = SweepConfig.from_file(args.config)
    _generate_tree(cfg, Path(args.out))
    return 0


# ---------------------------------------------------------------------------
# calibrate


def cmd_calibrate(args) -> int:
    samples = read_logits_csv(args.cal)
    thresholds = calibrate(samples, args.alpha)
    _warn_sentinel(thresholds)
    write_thresholds(thresholds, args.out)
    _print_thresholds(thresholds)
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# evaluate


def cmd_evaluate(args) -> int:
    samples = read_logits_csv(args.test, condition=args.condition, severity=args.severity)
    thresholds = read_thresholds(args.thresholds)
    records = evaluate_samples(samples, thresholds)
    write_records_csv(records, args.records_out)
    summaries = summarize(records)
    fmt = "json" if str(args.summary_out).endswith(".json") else "csv"
    write_summary(summaries, args.summary_out, format=fmt)
    print(f"evaluated {len(records)} samples")
    print(f"wrote {args.records_out}")
    print(f"wrote {args.summary_out}")
    return 0


# ---------------------------------------------------------------------------
# sweep


@dataclass
class _ConditionResult:
    condition: str
    summaries: list[EvaluationSummary] = field(default_factory=list)
    log_lines: list[str] = field(default_factory=list)
    written: list[Path] = field(default_factory=list)
    error: Optional[Exception] = None


def _load_manifest_groups(manifest_path: Path):
    """Resolve (condition -> calibration samples, [(severity, samples)])
    from a dataset manifest."""
    manifest = read_manifest(manifest_path)

    by_condition: dict[str, dict] = {}
    for entry in manifest.files:
        slot = by_condition.setdefault(entry.condition, {"cal": None, "tests": []})
        if entry.role == "calibration":
            if entry.severity != 0:
                raise ArtifactError(
                    f"calibration file {entry.path!r} must have severity 0"
                )
            if slot["cal"] is not None:
                raise ArtifactError(
                    f"condition {entry.condition!r} has multiple calibration files"
                )
            slot["cal"] = entry
        else:
            slot["tests"].append(entry)

    groups = {}
    for cond in sorted(by_condition):
        slot = by_condition[cond]
        if slot["cal"] is None:
            raise ArtifactError(
                f"condition {cond!r} has no calibration file in the manifest"
            )
        if not slot["tests"]:
            raise ArtifactError(f"condition {cond!r} has no test files in the manifest")

        def load(entry: ManifestEntry) -> list[LabeledSample]:
            samples = read_logits_csv(entry.path, entry.condition, entry.severity)
            if samples[0].k_classes != manifest.k_classes:
                raise ArtifactError(
                    f"{entry.path}: {samples[0].k_classes} classes, manifest "
                    f"declares {manifest.k_classes}"
                )
            return samples

        groups[cond] = (
            load(slot["cal"]),
            [(e.severity, load(e)) for e in sorted(slot["tests"], key=lambda e: e.severity)],
        )
    return groups


def _run_condition(
    cfg: SweepConfig,
    cond: str,
    out: Path,
    preloaded,
) -> _ConditionResult:
    res = _ConditionResult(condition=cond)
    slug = _slug(cond)
    try:
        cal_samples, groups = preloaded
        thresholds = calibrate(cal_samples, cfg.alpha)
        res.log_lines.append(
            f"[{cond}] q_conf="
            + ("inf" if thresholds.q_conf == float("inf") else f"{thresholds.q_conf:.6f}")
            + f" q_abs={thresholds.q_abs:.6f} youden_j={thresholds.youden_j:.6f}"
            f" n={thresholds.n_calibration}"
        )

        for sev, samples in groups:
            records = evaluate_samples(samples, thresholds)
            rec_path = out / f"records_{slug}_s{sev}.csv"
            write_records_csv(records, rec_path)
            res.written.append(rec_path)

            summary = summarize(records)[0]
            if summary.auc is not None:
                roc_path = out / f"roc_{slug}_s{sev}.csv"
                write_roc_csv(detection_auc(records)[0], roc_path)
                res.written.append(roc_path)
            res.summaries.append(summary)
            res.log_lines.append(
                f"[{cond}] severity {sev}: n={summary.n} "
                f"coverage={summary.coverage:.4f} "
                f"abstention={summary.abstention_rate:.4f}"
            )
    except Exception as exc:  # reported per condition; sweep continues
        res.error = exc
        for path in res.written:
            if path.exists():
                path.rename(path.with_name(path.name + ".partial"))
    return res


def _write_heatmap(summaries: Sequence[EvaluationSummary], path) -> None:
    severities = sorted({s.severity for s in summaries})
    conditions = sorted({s.condition for s in summaries})
    cells = {(s.condition, s.severity): s for s in summaries}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("metric,condition," + ",".join(f"severity_{v}" for v in severities) + "\n")
        for metric in HEATMAP_METRICS:
            for cond in conditions:
                row = [metric, cond]
                for sev in severities:
                    s = cells.get((cond, sev))
                    value = getattr(s, metric) if s is not None else None
                    row.append("" if value is None else f"{value:.6f}")
                fh.write(",".join(row) + "\n")


def cmd_sweep(args) -> int:
    cfg = SweepConfig.from_file(args.config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    # Data always flows through the CSV ingestion path, whether freshly
    # generated or supplied via a manifest; a one-group sweep is then
    # byte-for-byte the calibrate + evaluate pipeline.
    if cfg.manifest is not None:
        manifest_path = Path(cfg.manifest)
        if not manifest_path.is_absolute():
            manifest_path = Path(args.config).resolve().parent / manifest_path
    else:
        manifest_path = _generate_tree(cfg, out / "data", quiet=True)
        print(f"generated dataset under {out / 'data'}")
    preloaded = _load_manifest_groups(manifest_path)
    conditions = sorted(preloaded)

    jobs = max(1, args.jobs)
    if jobs == 1:
        results = [
            _run_condition(cfg, cond, out, preloaded[cond]) for cond in conditions
        ]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_run_condition, cfg, cond, out, preloaded[cond])
                for cond in conditions
            ]
            results = [f.result() for f in futures]

    for res in results:
        for line in res.log_lines:
            print(line)

    failures = [res for res in results if res.error is not None]
    all_summaries = sorted(
        (s for res in results for s in res.summaries),
        key=lambda s: (s.condition, s.severity),
    )
    suffix = ".partial" if failures else ""
    if all_summaries:
        write_summary(all_summaries, out / f"summary.csv{suffix}", format="csv")
        write_summary(all_summaries, out / f"summary.json{suffix}", format="json")
        _write_heatmap(all_summaries, out / f"heatmap.csv{suffix}")
        print(f"wrote {out / ('summary.csv' + suffix)}")
        print(f"wrote {out / ('summary.json' + suffix)}")
        print(f"wrote {out / ('heatmap.csv' + suffix)}")

    if failures:
        for res in failures:
            print(f"error: condition {res.condition!r} failed: {res.error}", file=sys.stderr)
        if all(isinstance(res.error, DegenerateLabelsError) for res in failures):
            return 3
        return 2
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualthresh",
        description=(
            "Dual-threshold conformal prediction: calibrate a coverage-"
            "guaranteed conformal threshold and a ROC-optimized abstention "
            "threshold, then evaluate prediction sets and abstention "
            "decisions over severity-stratified data."
        ),
    )
    parser.add_argument(
        "--version",
        action="version",
        version=(
            f"dualthresh {__version__} "
            f"(thresholds format {THRESHOLDS_FORMAT_VERSION}, "
            f"manifest format {MANIFEST_FORMAT_VERSION})"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate synthetic datasets plus a manifest")
    p_gen.add_argument("config", help="JSON config file")
    p_gen.add_argument("--out", required=True, help="output directory")
    p_gen.set_defaults(func=cmd_gen)

    p_cal = sub.add_parser("calibrate", help="calibrate thresholds from a labeled CSV")
    p_cal.add_argument("--cal", required=True, help="calibration CSV (logits or probs)")
    p_cal.add_argument("--alpha", type=float, default=0.1, help="miscoverage level (default 0.1)")
    p_cal.add_argument("--out", required=True, help="thresholds JSON to write")
    p_cal.set_defaults(func=cmd_calibrate)

    p_eval = sub.add_parser("evaluate", help="evaluate a test CSV under saved thresholds")
    p_eval.add_argument("--test", required=True, help="test CSV (logits or probs)")
    p_eval.add_argument("--thresholds", required=True, help="thresholds JSON")
    p_eval.add_argument("--records-out", required=True, help="per-sample records CSV to write")
    p_eval.add_argument("--summary-out", required=True, help="summary file to write (.csv or .json)")
    p_eval.add_argument("--condition", default="", help="condition tag for the samples")
    p_eval.add_argument("--severity", type=int, default=0, help="severity tag for the samples")
    p_eval.set_defaults(func=cmd_evaluate)

    p_sweep = sub.add_parser(
        "sweep", help="run the full condition x severity evaluation grid"
    )
    p_sweep.add_argument("config", help="JSON config file")
    p_sweep.add_argument("--out-dir", required=True, help="output directory")
    p_sweep.add_argument("--jobs", type=int, default=1, help="parallel conditions (default 1)")
    p_sweep.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DegenerateLabelsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ParseError, ArtifactError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
