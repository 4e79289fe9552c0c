"""Command line interface for the adversarial PPM benchmark."""

import argparse
import datetime
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional

from .config import RunConfig, Settings, parse_label_map
from .errors import PipelineError
from .eventlog import (ColumnMapping, SyntheticLogSpec, generate_synthetic_log, parse_log,
                       write_log)
from .pipeline import STAGES, BenchmarkRunner
from .tools import FileHandler

LOG_FORMAT = "# %(name)s - %(levelname)s - %(message)s"


def configure_logging(level: str = "INFO", log_file: Optional[Path] = None):
    """Log to the console and, when given, to ``log_file`` (appending)."""
    logging.root.handlers = []
    handlers = [logging.StreamHandler()]
    if log_file is not None:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(filename=log_file, mode="a"))
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO), format=LOG_FORMAT,
                        handlers=handlers)
    logging.info("# " + "#" * 20 + " Run started on " +
                 datetime.datetime.now().strftime("%Y-%m-%d %H:%M:%S") + " " + "#" * 20)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Benchmark adversarial attacks on outcome-oriented process monitoring models"
    )
    parser.add_argument("--log-level", default=None, help="Logging level (default: ADVPPM_LOG_LEVEL or INFO)")
    parser.add_argument("--no-progress", action="store_true", help="Hide progress bars")

    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    setup_parser = subparsers.add_parser("setup", help="Write a default run configuration")
    setup_parser.add_argument("--path", help="Where to write the config (default: ./run_config.ini)",
                              default="run_config.ini")

    ingest_parser = subparsers.add_parser("ingest", help="Validate a CSV event log and write it in canonical form")
    ingest_parser.add_argument("source", help="CSV event log")
    ingest_parser.add_argument("--case-column", default="case")
    ingest_parser.add_argument("--activity-column", default="activity")
    ingest_parser.add_argument("--timestamp-column", default="timestamp")
    ingest_parser.add_argument("--label-column", default="label")
    ingest_parser.add_argument("--label-map", help="e.g. 'Rejected:0, Accepted:1'")
    ingest_parser.add_argument("--timestamp-format", choices=["iso", "ticks"], default="iso")
    ingest_parser.add_argument("--output", "-o", help="Canonical CSV path")

    synth_parser = subparsers.add_parser("synth", help="Generate a synthetic labeled event log")
    synth_parser.add_argument("--activities", type=int, default=5)
    synth_parser.add_argument("--traces", type=int, default=200)
    synth_parser.add_argument("--min-length", type=int, default=2)
    synth_parser.add_argument("--max-length", type=int, default=10)
    synth_parser.add_argument("--lead-start", type=float, default=1.0,
                              help="Share of traces opening with their class-defining activity")
    synth_parser.add_argument("--seed", type=int, default=0)
    synth_parser.add_argument("--output", "-o", default="synthetic_log.csv")

    for stage in ("train", "attack", "evaluate", "profile", "report", "run"):
        helps = {"run": "Run the full pipeline",
                 "train": "Run the pipeline up to classifier and manifold training"}
        stage_parser = subparsers.add_parser(stage, help=helps.get(stage, f"Run the pipeline up to the {stage} stage"))
        stage_parser.add_argument("--config", "-c", help="Run configuration INI (default: ADVPPM_CONFIG)")
        stage_parser.add_argument("--source", help="CSV event log (overrides the config)")
        stage_parser.add_argument("--classifier",
                                  help="Comma list of linear, bagged-trees, boosted-trees, recurrent")
        stage_parser.add_argument("--methods", help="'all' or a comma list of attack methods")
        stage_parser.add_argument("--seed", type=int)
        stage_parser.add_argument("--output-dir", help="Output root (overrides ADVPPM_OUTPUT_DIR)")
        stage_parser.add_argument("--attack-limit", type=int)
        stage_parser.add_argument("--workers", type=int)
        stage_parser.add_argument("--fresh", action="store_true", help="Ignore outputs of earlier runs")
    return parser


def main(argv=None):
    """Main CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return

    try:
        if args.command == "setup":
            setup_config(Path(args.path))
        elif args.command == "ingest":
            ingest_log(args)
        elif args.command == "synth":
            synthesize_log(args)
        else:
            run_stages(args)

    except PipelineError as e:
        print(f"❌ Error: {str(e)}")
        sys.exit(2)
    except Exception as e:
        print(f"❌ Error: {str(e)}")
        sys.exit(1)


def setup_config(path: Path):
    """Write the default run configuration and create the output root."""
    print("🔧 Setting up the adversarial PPM benchmark...")
    if path.exists():
        print(f"⚠️  {path} already exists; leaving it untouched")
    else:
        FileHandler.create_default_config(path)
        print(f"✅ Created default configuration at {path}")
    output_dir = Settings.ensure_output_dir()
    print(f"✅ Output directory: {output_dir}")
    print("\n🎉 Setup complete! Edit the configuration, then run: advppm run -c " + str(path))


def ingest_log(args):
    configure_logging(args.log_level or Settings.LOG_LEVEL)
    mapping = ColumnMapping(args.case_column, args.activity_column, args.timestamp_column,
                            args.label_column)
    print(f"🔍 Reading event log from: {args.source}")
    log = parse_log(args.source, mapping, parse_label_map(args.label_map), args.timestamp_format)
    events = sum(len(trace) for trace in log)
    print(f"✅ {len(log)} traces, {events} events, {len(log.vocabulary)} activities, "
          f"positive ratio {log.positive_class_ratio:.2f}")
    output = Path(args.output) if args.output else \
        Path(f"{FileHandler.clean_filename(Path(args.source).stem)}_canonical.csv")
    write_log(log, output)
    print(f"💾 Canonical log saved to: {output}")


def synthesize_log(args):
    configure_logging(args.log_level or Settings.LOG_LEVEL)
    spec = SyntheticLogSpec.precedence(args.activities, args.traces, args.min_length, args.max_length,
                                       lead_start=args.lead_start)
    log = generate_synthetic_log(spec, args.seed)
    for warning in log.metadata.get("warnings", []):
        print(f"⚠️  {warning}")
    write_log(log, Path(args.output))
    print(f"💾 Synthetic log with {len(log)} traces saved to: {args.output}")


def load_run_config(args) -> RunConfig:
    """Read the INI file (if any) and apply command-line overrides."""
    if args.config:
        config = RunConfig.from_ini(args.config)
    elif Settings.CONFIG_PATH.exists():
        config = RunConfig.from_ini(Settings.CONFIG_PATH)
    else:
        config = RunConfig()

    overrides: Dict[str, Any] = {}
    if args.source:
        overrides["data"] = {"source": args.source}
    if args.classifier:
        overrides["classifier"] = {"kinds": args.classifier}
    attack = {key: value for key, value in (("methods", args.methods),
                                            ("attack_limit", args.attack_limit),
                                            ("workers", args.workers)) if value is not None}
    if attack:
        overrides["attack"] = attack
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.output_dir:
        overrides["output_dir"] = args.output_dir
    return config.with_overrides(**overrides) if overrides else config


def run_stages(args):
    config = load_run_config(args)
    runner = BenchmarkRunner(config, progress=False if args.no_progress else None)
    configure_logging(args.log_level or Settings.LOG_LEVEL, runner.run_dir / "run.log")
    until = "report" if args.command == "run" else args.command
    print(f"🚀 Run {config.config_hash()[:12]}: stages {', '.join(STAGES[:STAGES.index(until) + 1])}")
    manifest = runner.run(until=until, resume=not args.fresh)
    print(f"✅ Done. Manifest: {runner.manifest_path}")
    return manifest


if __name__ == "__main__":
    main()
