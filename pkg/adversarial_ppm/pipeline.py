"""Benchmark runner: ingest, split, encode, train, attack, evaluate, profile, report."""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from . import __version__
from .attacks import (AdversarialResult, applicable_attacks, build_position_activity_table,
                      generate_adversarials)
from .classifiers import (Classifier, ClassifierKind, DecisionThreshold, evaluate_auc,
                          select_hyperparameters, select_threshold)
from .config import RunConfig, Settings
from .encoding import ActivityVocabulary, build_vocabulary, encode_dataset
from .errors import EvaluationError, PipelineError, ProfilingError, ReportError, SplitError
from .eventlog import (ColumnMapping, EventLog, PrefixLog, SyntheticLogSpec,
                       deduplicate, extract_prefixes, generate_synthetic_log, parse_log,
                       temporal_split, write_log)
from .manifold import ClassManifold, train_class_vae
from .metrics import distance_panel, success_rate, summarize
from .profiling import (ClusterProfile, NormalizedAttackMetrics, profile_counts,
                        profile_population)
from .tools import FileHandler

logger = logging.getLogger(__name__)

STAGES = ("ingest", "split", "encode", "train", "attack", "evaluate", "profile", "report")

RESULT_COLUMNS = ["case_id", "prefix_length", "original", "adversarial", "original_label",
                  "classifier", "strategy", "attack", "original_prob", "adversarial_prob",
                  "flipped", "latent_distance", "candidate_count", "status"]
METRIC_COLUMNS = ["l1", "l2", "emd", "dl_edit", "lcp", "adv_length"]
SUMMARY_COLUMNS = ["classifier", "attack", "strategy", "success_rate", "mean_latent_euclidean",
                   "mean_l1", "mean_l2", "mean_emd", "mean_dl_edit", "mean_lcp",
                   "mean_adv_length"]
PROFILE_COLUMNS = ["case_id", "prefix_length", "classifier", "strategy", "attack",
                   "dl_norm", "emd_norm", "flipped", "profile"]
POOLING = "log+classifier"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    config_hash: str
    run_dir: str
    version: str = __version__
    stages: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    failed_stage: Optional[str] = None

    def start(self, stage: str) -> None:
        self.stages[stage] = {"started": _now(), "finished": None, "artifacts": {}, "info": {}}

    def finish(self, stage: str, artifacts: Dict[str, Path], info: Optional[Dict] = None) -> None:
        entry = self.stages.setdefault(stage, {"started": _now()})
        entry["finished"] = _now()
        entry["artifacts"] = {name: str(Path(p).relative_to(self.run_dir))
                              for name, p in artifacts.items()}
        entry["info"] = info or {}

    def artifact(self, stage: str, name: str) -> Path:
        return Path(self.run_dir) / self.stages[stage]["artifacts"][name]

    def completed(self, stage: str) -> bool:
        entry = self.stages.get(stage)
        if not entry or not entry.get("finished"):
            return False
        return all((Path(self.run_dir) / p).exists() for p in entry["artifacts"].values())

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "RunManifest":
        return cls(**payload)


def method_name(strategy: str, attack: str) -> str:
    return strategy if strategy == attack else f"{strategy}:{attack}"


def _sequence_text(sequence: Optional[Sequence[str]]) -> Optional[str]:
    return None if sequence is None else json.dumps(list(sequence))


def _sequence_from_text(text: Any) -> Optional[tuple]:
    if text is None or (isinstance(text, float) and math.isnan(text)) or text == "":
        return None
    return tuple(json.loads(text))


def result_rows(results: Sequence[AdversarialResult], classifier: str) -> List[Dict[str, Any]]:
    return [{"case_id": r.case_id, "prefix_length": r.prefix_length,
             "original": _sequence_text(r.original), "adversarial": _sequence_text(r.adversarial),
             "original_label": r.original_label, "classifier": classifier,
             "strategy": r.strategy, "attack": r.attack, "original_prob": r.original_prob,
             "adversarial_prob": r.adversarial_prob, "flipped": int(r.flipped),
             "latent_distance": r.latent_distance, "candidate_count": r.candidate_count,
             "status": r.status} for r in results]


def _optional_float(value: Any) -> Optional[float]:
    if value is None or value == "" or (isinstance(value, float) and math.isnan(value)):
        return None
    return float(value)


def results_from_frame(frame: pd.DataFrame) -> List[AdversarialResult]:
    """Rebuild AdversarialResult rows from a stored result table."""
    results = []
    for row in frame.to_dict("records"):
        results.append(AdversarialResult(
            case_id=str(row["case_id"]), original=_sequence_from_text(row["original"]),
            original_label=int(row["original_label"]),
            adversarial=_sequence_from_text(row["adversarial"]),
            strategy=row["strategy"], attack=row["attack"],
            original_prob=float(row["original_prob"]),
            adversarial_prob=_optional_float(row["adversarial_prob"]),
            flipped=bool(int(row["flipped"])),
            latent_distance=_optional_float(row["latent_distance"]),
            candidate_count=int(row["candidate_count"]), status=row["status"]))
    return results


def emit_report(results: pd.DataFrame, profiles: Optional[pd.DataFrame],
                output_dir: Path) -> Dict[str, Path]:
    """Write the summary, success-by-length and profile-count tables.

    Args:
        results: Result table with distance columns
        profiles: Profile table aligned with the profiled rows, or None
        output_dir: Destination directory

    Returns:
        Paths keyed by report name
    """
    if results is None or len(results) == 0:
        raise ReportError("no attack results to report")
    output_dir = Path(output_dir)

    summary = []
    keys = ["classifier", "strategy", "attack"]
    for (classifier, strategy, attack), group in results.groupby(keys, sort=False):
        with_adv = group[group["adversarial"].notna() & (group["adversarial"] != "")]
        summary.append({
            "classifier": classifier, "attack": attack, "strategy": strategy,
            "success_rate": float(group["flipped"].astype(int).mean()),
            "mean_latent_euclidean": pd.to_numeric(with_adv["latent_distance"]).mean(),
            **{f"mean_{name}": pd.to_numeric(with_adv[name]).mean() for name in METRIC_COLUMNS},
        })
    paths = {"summary": FileHandler.save_table(summary, output_dir / "summary.csv",
                                               SUMMARY_COLUMNS)}

    by_length = []
    for (classifier, strategy, attack), group in results.groupby(keys, sort=False):
        flips = group.groupby("prefix_length")["flipped"].agg(["count", "sum"])
        total_flips = int(flips["sum"].sum())
        for length, row in flips.sort_index().iterrows():
            by_length.append({"classifier": classifier, "strategy": strategy, "attack": attack,
                              "prefix_length": int(length), "attacked": int(row["count"]),
                              "flipped": int(row["sum"]),
                              "success_rate": row["sum"] / row["count"],
                              "normalized_frequency": row["sum"] / total_flips if total_flips else 0.0})
    paths["success_by_length"] = FileHandler.save_table(
        by_length, output_dir / "success_by_length.csv",
        ["classifier", "strategy", "attack", "prefix_length", "attacked", "flipped",
         "success_rate", "normalized_frequency"])

    counts = []
    if profiles is not None and len(profiles):
        for classifier, group in profiles.groupby("classifier", sort=False):
            names = [method_name(s, a) for s, a in zip(group["strategy"], group["attack"])]
            for row in profile_counts([ClusterProfile(p) for p in group["profile"]], names,
                                      group["flipped"].astype(bool).tolist()):
                counts.append({"classifier": classifier, **row, "pooling": POOLING})
    paths["profile_counts"] = FileHandler.save_table(
        counts, output_dir / "profile_counts.csv",
        ["classifier", "profile", "attack", "count", "success_rate", "pooling"])
    return paths


class BenchmarkRunner:
    """Runs the benchmark stages for one RunConfig and records a RunManifest."""

    def __init__(self, config: RunConfig, run_dir: Optional[Path] = None,
                 progress: Optional[bool] = None):
        """Initialize the runner.

        Args:
            config: Validated run configuration
            run_dir: Output folder. If None, uses run_<hash12> under the output root.
            progress: Show tqdm bars. If None, uses Settings.PROGRESS.
        """
        self.config = config
        root = Settings.ensure_output_dir(config.resolved_output_dir())
        self.run_dir = Path(run_dir) if run_dir else root / f"run_{config.config_hash()[:12]}"
        self.progress = Settings.PROGRESS if progress is None else progress
        self.manifest_path = self.run_dir / "manifest.json"
        self.manifest = RunManifest(config.config_hash(), str(self.run_dir))
        self.state: Dict[str, Any] = {}

    def _save_manifest(self) -> None:
        FileHandler.save_json(self.manifest.to_dict(), self.manifest_path)

    def _load_manifest(self) -> bool:
        if not self.manifest_path.exists():
            return False
        manifest = RunManifest.from_dict(FileHandler.load_json(self.manifest_path))
        if manifest.config_hash != self.manifest.config_hash:
            print("⚠️  Existing manifest belongs to another configuration; starting over")
            return False
        manifest.run_dir = str(self.run_dir)
        self.manifest = manifest
        return True

    def run(self, until: str = "report", resume: bool = False) -> RunManifest:
        """Execute stages in order up to and including ``until``.

        Args:
            until: Last stage to run
            resume: Reuse stages already recorded in the manifest whose artifacts exist

        Returns:
            The run manifest
        """
        if until not in STAGES:
            raise ValueError(f"unknown stage '{until}'; expected one of {STAGES}")
        self.run_dir.mkdir(parents=True, exist_ok=True)
        FileHandler.save_json(json.loads(self.config.canonical_json()), self.run_dir / "config.json")
        if resume:
            self._load_manifest()
        self.manifest.failed_stage = None

        reusable = resume
        for stage in STAGES[:STAGES.index(until) + 1]:
            execute: Callable[[], None] = getattr(self, f"_stage_{stage}")
            load: Callable[[], None] = getattr(self, f"_load_{stage}")
            if reusable and self.manifest.completed(stage):
                print(f"♻️  Reusing {stage} outputs")
                load()
                continue
            # once a stage reruns, everything downstream reruns too
            reusable = False
            self.manifest.start(stage)
            try:
                execute()
            except Exception as exc:
                self.manifest.failed_stage = stage
                self._save_manifest()
                raise PipelineError(stage, str(exc), self.manifest) from exc
            self._save_manifest()
        return self.manifest

    # ingest ---------------------------------------------------------------

    def _stage_ingest(self) -> None:
        data = self.config.data
        if data.source is not None:
            print(f"🔍 Reading event log from: {data.source}")
            mapping = ColumnMapping(data.case_column, data.activity_column,
                                    data.timestamp_column, data.label_column)
            log = parse_log(data.source, mapping, data.labels, data.timestamp_format)
        else:
            synthetic = self.config.synthetic
            print(f"🔍 Generating synthetic log with {synthetic.n_traces} traces")
            spec = SyntheticLogSpec.precedence(synthetic.n_activities, synthetic.n_traces,
                                               synthetic.min_length, synthetic.max_length,
                                               lead_start=synthetic.lead_start)
            log = generate_synthetic_log(spec, self.config.stream_seed("synth"))

        vocab = build_vocabulary(log)
        log_path = self.run_dir / "log.csv"
        write_log(log, log_path)
        vocab_path = FileHandler.save_json(
            {"activities": list(vocab.activities), "hash": vocab.content_hash()},
            self.run_dir / "vocabulary.json")
        self.state.update(log=log, vocab=vocab)
        print(f"✅ {len(log)} traces, {vocab.n_activities} activities, "
              f"positive ratio {log.positive_class_ratio:.2f}")
        self.manifest.finish("ingest", {"log": log_path, "vocabulary": vocab_path},
                             {"timestamp_format": log.metadata.get("timestamp_format", "iso")})

    def _load_ingest(self) -> None:
        fmt = self.manifest.stages["ingest"]["info"].get("timestamp_format", "iso")
        log = parse_log(self.manifest.artifact("ingest", "log"), timestamp_format=fmt)
        stored = FileHandler.load_json(self.manifest.artifact("ingest", "vocabulary"))
        self.state.update(log=log, vocab=ActivityVocabulary(tuple(stored["activities"])))

    # split ----------------------------------------------------------------

    def _stage_split(self) -> None:
        train, test = temporal_split(self.state["log"], self.config.data.train_fraction)
        fmt = self.state["log"].metadata.get("timestamp_format", "iso")
        train_path, test_path = self.run_dir / "train.csv", self.run_dir / "test.csv"
        write_log(train, train_path)
        write_log(test, test_path)
        self.state.update(train=train, test=test)
        print(f"✅ Temporal split: {len(train)} train / {len(test)} test traces")
        self.manifest.finish("split", {"train": train_path, "test": test_path},
                             {"timestamp_format": fmt})

    def _load_split(self) -> None:
        fmt = self.manifest.stages["split"]["info"].get("timestamp_format", "iso")
        self.state.update(train=parse_log(self.manifest.artifact("split", "train"), timestamp_format=fmt),
                          test=parse_log(self.manifest.artifact("split", "test"), timestamp_format=fmt))

    # encode ---------------------------------------------------------------

    def _prefixes(self, log: EventLog, dedup: bool) -> PrefixLog:
        data = self.config.data
        prefixes = extract_prefixes(log, data.min_prefix, data.max_prefix)
        if dedup and data.deduplicate:
            prefixes = deduplicate(prefixes, data.remove_ambiguous)
        return prefixes

    def _derive_prefixes(self) -> Dict[str, PrefixLog]:
        train = self.state["train"]
        try:
            fit, validation = temporal_split(train, 0.8)
        except SplitError as exc:
            logger.warning("no validation slice (%s); validating on the training log", exc)
            fit, validation = train, train
        return {"train": self._prefixes(train, True), "fit": self._prefixes(fit, True),
                "validation": self._prefixes(validation, True),
                "test": self._prefixes(self.state["test"], False)}

    def _stage_encode(self) -> None:
        prefixes = self._derive_prefixes()
        rows = [{"split": name, "case_id": p.case_id, "prefix_length": len(p),
                 "label": p.label, "activities": _sequence_text(p.activities)}
                for name in ("fit", "validation", "test") for p in prefixes[name]]
        path = FileHandler.save_table(rows, self.run_dir / "prefixes.csv")
        self.state["prefixes"] = prefixes
        print("✅ Prefixes: " + ", ".join(f"{k} {len(v)}" for k, v in prefixes.items()))
        self.manifest.finish("encode", {"prefixes": path},
                             {name: len(p) for name, p in prefixes.items()})

    def _load_encode(self) -> None:
        # prefixes are a pure function of the split logs
        self.state["prefixes"] = self._derive_prefixes()

    # train ----------------------------------------------------------------

    def _encode(self, prefixes: PrefixLog, input_mode: str) -> np.ndarray:
        return encode_dataset(prefixes, self.state["vocab"], input_mode, self.config.data.max_prefix)

    def _train_classifier(self, kind: ClassifierKind) -> Tuple[Classifier, Dict[str, Any]]:
        cfg = self.config
        prefixes = self.state["prefixes"]
        mode = kind.input_mode

        print(f"🤖 Training {kind.value} classifier...")
        X_fit, y_fit = self._encode(prefixes["fit"], mode), prefixes["fit"].labels
        X_val, y_val = self._encode(prefixes["validation"], mode), prefixes["validation"].labels
        classifier, params, grid_scores = select_hyperparameters(
            kind, cfg.classifier.grid_for(kind), X_fit, y_fit, X_val, y_val,
            cfg.stream_seed(f"train:{kind.value}"), self.state["vocab"].content_hash(), self.progress)
        try:
            threshold = select_threshold(classifier, X_val, y_val)
        except EvaluationError as exc:
            print(f"⚠️  {exc}; keeping threshold 0.5")
            threshold = DecisionThreshold(0.5, "default", "none")
        classifier = classifier.with_threshold(threshold)

        X_test, y_test = self._encode(prefixes["test"], mode), prefixes["test"].labels
        try:
            auc = evaluate_auc(classifier, X_test, y_test)
        except EvaluationError as exc:
            print(f"⚠️  {exc}")
            auc = float("nan")
        print(f"✅ {kind.value}: test AUC {auc:.4f}, threshold {threshold.tau:.4f}")
        return classifier, {"hyperparams": params, "grid_scores": grid_scores, "tau": threshold.tau,
                            "test_auc": auc, "loss_curve": classifier.loss_curve}

    def _stage_train(self) -> None:
        cfg = self.config
        vocab: ActivityVocabulary = self.state["vocab"]
        prefixes = self.state["prefixes"]

        classifiers: Dict[ClassifierKind, Classifier] = {}
        training: Dict[str, Any] = {}
        for kind in cfg.classifier.kinds:
            classifiers[kind], training[kind.value] = self._train_classifier(kind)

        print("🤖 Training class manifolds...")
        vae_config = cfg.manifold.vae_config(cfg.stream_seed("vae"), cfg.data.max_prefix)
        manifolds = {label: train_class_vae(prefixes["train"].with_label(label), vocab,
                                            vae_config, self.progress)
                     for label in (0, 1)}
        reconstruction = {label: m.reconstruction_rate(prefixes["train"].with_label(label).prefixes)
                          for label, m in manifolds.items()}
        print("✅ Manifold reconstruction rate: " +
              ", ".join(f"class {k} {v:.2f}" for k, v in reconstruction.items()))

        artifacts = {}
        for kind, classifier in classifiers.items():
            artifacts[f"classifier_{kind.value}"] = FileHandler.save_artifact(
                classifier, self.run_dir / f"classifier_{kind.value}.pkl", classifier.header())
        for label, manifold in manifolds.items():
            artifacts[f"manifold_{label}"] = FileHandler.save_artifact(
                manifold, self.run_dir / f"manifold_{label}.pkl", manifold.header())
        artifacts["training"] = FileHandler.save_json(
            {"classifiers": training,
             "manifold_curves": {str(k): m.training_curve for k, m in manifolds.items()},
             "reconstruction_rate": {str(k): v for k, v in reconstruction.items()}},
            self.run_dir / "training.json")
        self.state.update(classifiers=classifiers, manifolds=manifolds)
        print(f"💾 Models saved to: {self.run_dir}")
        self.manifest.finish("train", artifacts,
                             {"test_auc": {k: v["test_auc"] for k, v in training.items()},
                              "tau": {k: v["tau"] for k, v in training.items()}})

    def _load_train(self) -> None:
        vocab_hash = self.state["vocab"].content_hash()
        classifiers = {kind: FileHandler.load_artifact(
            self.manifest.artifact("train", f"classifier_{kind.value}"), vocab_hash)[0]
            for kind in self.config.classifier.kinds}
        manifolds = {label: FileHandler.load_artifact(
            self.manifest.artifact("train", f"manifold_{label}"), vocab_hash)[0]
            for label in (0, 1)}
        self.state.update(classifiers=classifiers, manifolds=manifolds)

    # attack ---------------------------------------------------------------

    def _stage_attack(self) -> None:
        cfg = self.config
        classifiers: Dict[ClassifierKind, Classifier] = self.state["classifiers"]
        manifolds: Dict[int, ClassManifold] = self.state["manifolds"]
        prefixes = self.state["prefixes"]
        pool = prefixes["test"].head(cfg.attack.attack_limit)
        table = build_position_activity_table(prefixes["train"])

        rows: List[Dict[str, Any]] = []
        methods: Dict[str, List[str]] = {}
        for kind, classifier in classifiers.items():
            configs = applicable_attacks(kind, cfg.attack.method_list(),
                                         seed=cfg.stream_seed("attack"), **cfg.attack.budget())
            methods[kind.value] = [c.name for c in configs]
            for attack_config in configs:
                print(f"🔍 Running {attack_config.name} against {kind.value} "
                      f"on {len(pool)} test prefixes")
                results = generate_adversarials(pool, classifier, manifolds, attack_config,
                                                self.state["vocab"], table, cfg.attack.workers,
                                                self.progress)
                rows.extend(result_rows(results, kind.value))
                print(f"✅ {kind.value} {attack_config.name}: {len(results)} attacked, "
                      f"success rate {success_rate(results):.3f}")

        path = FileHandler.save_table(rows, self.run_dir / "attacks.csv", RESULT_COLUMNS)
        self.state["attacks"] = FileHandler.load_table(path)
        self.manifest.finish("attack", {"attacks": path}, {"methods": methods, "rows": len(rows)})

    def _load_attack(self) -> None:
        self.state["attacks"] = FileHandler.load_table(self.manifest.artifact("attack", "attacks"))

    # evaluate -------------------------------------------------------------

    def _stage_evaluate(self) -> None:
        vocab = self.state["vocab"]
        frame = self.state["attacks"].copy()
        results = results_from_frame(frame)
        metric_rows = []
        for result in results:
            if result.adversarial is None:
                metric_rows.append({name: None for name in METRIC_COLUMNS})
            else:
                metric_rows.append(distance_panel(result.original, result.adversarial, vocab))
        for name in METRIC_COLUMNS:
            frame[name] = [row[name] for row in metric_rows]

        panels: Dict[str, Dict[str, Any]] = {}
        keys = ["classifier", "strategy", "attack"]
        for (classifier, strategy, attack), group in frame.groupby(keys, sort=False):
            panel = summarize(results_from_frame(group), vocab)
            name = method_name(strategy, attack)
            panels.setdefault(classifier, {})[name] = asdict(panel)
            print(f"   {classifier} {name}  success {panel.success_rate:.3f}  "
                  f"dl {panel.dl_edit:.2f}  emd {panel.emd:.2f}  lcp {panel.lcp:.2f}")

        path = FileHandler.save_table(frame.to_dict("records"), self.run_dir / "results.csv",
                                      RESULT_COLUMNS + METRIC_COLUMNS)
        panel_path = FileHandler.save_json(panels, self.run_dir / "panels.json")
        self.state["results"] = FileHandler.load_table(path)
        self.manifest.finish("evaluate", {"results": path, "panels": panel_path})

    def _load_evaluate(self) -> None:
        self.state["results"] = FileHandler.load_table(self.manifest.artifact("evaluate", "results"))

    # profile --------------------------------------------------------------

    def _stage_profile(self) -> None:
        frame = self.state["results"]
        attacked = frame[frame["adversarial"].notna() & (frame["adversarial"] != "")]
        rows: List[Dict[str, Any]] = []
        info: Dict[str, Any] = {"pooling": POOLING, "population": {}, "quartiles": {}, "skipped": {}}
        # quartiles pool every attack on the log, separately per classifier
        for classifier, group in attacked.groupby("classifier", sort=False):
            records = group.to_dict("records")
            population = [NormalizedAttackMetrics.from_distances(row["dl_edit"], row["emd"],
                                                                 int(row["prefix_length"]),
                                                                 bool(int(row["flipped"])))
                          for row in records]
            info["population"][classifier] = len(population)
            try:
                thresholds, profiles = profile_population(population)
            except ProfilingError as exc:
                print(f"⚠️  Skipping cluster profiles for {classifier}: {exc}")
                info["skipped"][classifier] = str(exc)
                continue
            info["quartiles"][classifier] = asdict(thresholds)
            for row, metrics, profile in zip(records, population, profiles):
                rows.append({"case_id": row["case_id"], "prefix_length": row["prefix_length"],
                             "classifier": classifier, "strategy": row["strategy"],
                             "attack": row["attack"], "dl_norm": metrics.dl_norm,
                             "emd_norm": metrics.emd_norm, "flipped": int(metrics.success),
                             "profile": profile.value})
        path = FileHandler.save_table(rows, self.run_dir / "profiles.csv", PROFILE_COLUMNS)
        self.state["profiles"] = FileHandler.load_table(path)
        self.manifest.finish("profile", {"profiles": path}, info)

    def _load_profile(self) -> None:
        self.state["profiles"] = FileHandler.load_table(self.manifest.artifact("profile", "profiles"))

    # report ---------------------------------------------------------------

    def _stage_report(self) -> None:
        paths = emit_report(self.state["results"], self.state.get("profiles"),
                            self.run_dir / "report")
        print("💾 Reports saved to:")
        for name, path in paths.items():
            print(f"   📄 {name}: {path}")
        self.manifest.finish("report", paths)

    def _load_report(self) -> None:
        pass


def run_pipeline(config: RunConfig, run_dir: Optional[Path] = None, resume: bool = False,
                 until: str = "report", progress: Optional[bool] = None) -> RunManifest:
    return BenchmarkRunner(config, run_dir, progress).run(until=until, resume=resume)
