import configparser
import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from dotenv import load_dotenv
from pydantic import BaseModel, Field, Json, ValidationError, field_validator, model_validator

from .attacks import Strategy, parse_attack_methods
from .classifiers import ClassifierKind
from .errors import ConfigError
from .manifold import VAEConfig

PACKAGE_ROOT = Path(__file__).parent
PROJECT_ROOT = PACKAGE_ROOT.parent

env_path = PROJECT_ROOT / ".env"
if env_path.exists():
    load_dotenv(env_path)
else:
    load_dotenv()


class Settings:
    """Environment-level settings for the benchmark."""

    OUTPUT_DIR = Path(os.getenv("ADVPPM_OUTPUT_DIR", str(PROJECT_ROOT / "output")))
    CONFIG_PATH = Path(os.getenv("ADVPPM_CONFIG", str(PROJECT_ROOT / "templates" / "run_config.ini")))
    LOG_LEVEL = os.getenv("ADVPPM_LOG_LEVEL", "INFO").upper()
    PROGRESS = os.getenv("ADVPPM_PROGRESS", "1").lower() not in ("0", "false", "no")

    TEMPLATE_PATH = PROJECT_ROOT / "templates" / "run_config.ini"

    @classmethod
    def output_root(cls) -> Path:
        """Output root; ADVPPM_OUTPUT_DIR set after import still wins."""
        return Path(os.getenv("ADVPPM_OUTPUT_DIR", str(cls.OUTPUT_DIR)))

    @classmethod
    def ensure_output_dir(cls, path: Optional[Path] = None) -> Path:
        """Ensure the output directory exists."""
        directory = Path(path) if path else cls.output_root()
        directory.mkdir(parents=True, exist_ok=True)
        return directory

    @classmethod
    def validate_config(cls):
        """Validate the environment-level settings."""
        if cls.LOG_LEVEL not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ConfigError(f"ADVPPM_LOG_LEVEL must be a logging level name, got '{cls.LOG_LEVEL}'")


def parse_label_map(text: Optional[str]) -> Optional[Dict[str, int]]:
    """'Rejected:0, Accepted:1' -> {'Rejected': 0, 'Accepted': 1}."""
    if not text:
        return None
    mapping = {}
    for item in filter(None, (part.strip() for part in text.split(","))):
        raw, sep, value = item.rpartition(":")
        if not sep or value.strip() not in ("0", "1"):
            raise ValueError(f"label map entries look like 'Raw:0' or 'Raw:1', got '{item}'")
        mapping[raw.strip()] = int(value)
    return mapping


class DataSettings(BaseModel):
    source: Optional[Path] = None
    case_column: str = "case"
    activity_column: str = "activity"
    timestamp_column: str = "timestamp"
    label_column: str = "label"
    label_map: Optional[str] = None
    timestamp_format: str = "iso"
    train_fraction: float = Field(0.8, gt=0.0, lt=1.0)
    min_prefix: int = Field(1, ge=1)
    max_prefix: int = Field(40, ge=1)
    deduplicate: bool = True
    remove_ambiguous: bool = False

    @field_validator("label_map")
    @classmethod
    def _check_label_map(cls, value):
        parse_label_map(value)
        return value

    @field_validator("timestamp_format")
    @classmethod
    def _check_timestamp_format(cls, value):
        if value not in ("iso", "ticks"):
            raise ValueError("timestamp_format must be 'iso' or 'ticks'")
        return value

    @model_validator(mode="after")
    def _check_bounds(self):
        if self.min_prefix > self.max_prefix:
            raise ValueError(f"min_prefix {self.min_prefix} exceeds max_prefix {self.max_prefix}")
        if self.source is not None and not Path(self.source).exists():
            raise ValueError(f"event log not found: {self.source}")
        return self

    @property
    def labels(self) -> Optional[Dict[str, int]]:
        return parse_label_map(self.label_map)


class SyntheticSettings(BaseModel):
    n_activities: int = Field(5, ge=2)
    n_traces: int = Field(200, ge=2)
    min_length: int = Field(2, ge=1)
    max_length: int = Field(10, ge=1)
    lead_start: float = Field(1.0, gt=0.0, le=1.0)


GridSpec = Union[List[Dict[str, Any]], Dict[str, List[Dict[str, Any]]]]


class ClassifierSettings(BaseModel):
    """Classifier kinds trained and attacked in one run, in order.

    ``grid`` is a JSON list of hyperparameter dicts (single kind only) or a
    JSON object mapping kind names to such lists.
    """

    kinds: List[ClassifierKind] = Field(default_factory=lambda: [ClassifierKind.RECURRENT],
                                        min_length=1)
    grid: Optional[Json[GridSpec]] = None

    @model_validator(mode="before")
    @classmethod
    def _accept_single_kind(cls, values):
        if isinstance(values, dict) and "kind" in values:
            values = dict(values)
            values["kinds"] = values.pop("kind")
        return values

    @field_validator("kinds", mode="before")
    @classmethod
    def _split_kinds(cls, value):
        if isinstance(value, (str, ClassifierKind)):
            value = [value]
        kinds = []
        for item in value:
            if isinstance(item, str) and "," in item:
                kinds.extend(part.strip() for part in item.split(",") if part.strip())
            else:
                kinds.append(item)
        return kinds

    @model_validator(mode="after")
    def _check_grid(self):
        if len(set(self.kinds)) != len(self.kinds):
            raise ValueError("classifier kinds must not repeat")
        if isinstance(self.grid, list) and len(self.kinds) > 1:
            raise ValueError("a plain grid list needs a single classifier kind; "
                             "map kind names to grids instead")
        if isinstance(self.grid, dict):
            unknown = set(self.grid) - {kind.value for kind in self.kinds}
            if unknown:
                raise ValueError(f"grid names kinds that are not configured: {sorted(unknown)}")
        return self

    def grid_for(self, kind: ClassifierKind) -> Optional[List[Dict[str, Any]]]:
        if isinstance(self.grid, dict):
            return self.grid.get(kind.value)
        return self.grid

    @property
    def has_recurrent(self) -> bool:
        return ClassifierKind.RECURRENT in self.kinds


class ManifoldSettings(BaseModel):
    latent_dim: int = Field(8, ge=1)
    hidden_size: int = Field(64, ge=1)
    epochs: int = Field(300, ge=1)
    learning_rate: float = Field(3e-3, gt=0.0)
    kl_weight: float = Field(1.0, ge=0.0)
    batch_size: int = Field(32, ge=1)
    kl_anneal_epochs: int = Field(20, ge=0)
    free_bits: float = Field(0.75, ge=0.0)
    word_dropout: float = Field(0.25, ge=0.0, lt=1.0)

    def vae_config(self, seed: int, max_len: int) -> VAEConfig:
        return VAEConfig(seed=seed, max_len=max_len, **self.model_dump())


class AttackSettings(BaseModel):
    methods: str = "all"
    nr_adv: int = Field(16, ge=1)
    k_events: int = Field(3, ge=1)
    max_iters: int = Field(1500, ge=1)
    step_size: float = Field(0.05, ge=0.0)
    lambda_dist: float = Field(0.1, ge=0.0)
    attack_limit: Optional[int] = Field(None, ge=1)
    workers: int = Field(1, ge=1)

    @field_validator("methods")
    @classmethod
    def _check_methods(cls, value):
        parse_attack_methods(value)
        return value

    def method_list(self):
        return parse_attack_methods(self.methods)

    def budget(self) -> Dict[str, Any]:
        return {"nr_adv": self.nr_adv, "k_events": self.k_events, "max_iters": self.max_iters,
                "step_size": self.step_size, "lambda_dist": self.lambda_dist}


SECTIONS = ("data", "synthetic", "classifier", "manifold", "attack")


class RunConfig(BaseModel):
    """Full benchmark configuration, usually read from a sectioned INI file."""

    seed: int = 42
    output_dir: Optional[Path] = None
    data: DataSettings = Field(default_factory=DataSettings)
    synthetic: SyntheticSettings = Field(default_factory=SyntheticSettings)
    classifier: ClassifierSettings = Field(default_factory=ClassifierSettings)
    manifold: ManifoldSettings = Field(default_factory=ManifoldSettings)
    attack: AttackSettings = Field(default_factory=AttackSettings)

    @model_validator(mode="after")
    def _check_gradient_target(self):
        explicit = self.attack.methods.strip().lower() != "all"
        wants_gradient = any(s is Strategy.GRADIENT_BASED for s, _ in self.attack.method_list())
        if explicit and wants_gradient and not self.classifier.has_recurrent:
            names = ", ".join(kind.value for kind in self.classifier.kinds)
            raise ValueError(f"gradient_based attacks need the recurrent classifier; "
                             f"none of {names} is inherently differentiable")
        return self

    @classmethod
    def from_ini(cls, path: Union[str, Path]) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser()
        parser.read(path, encoding="utf-8")

        values: Dict[str, Any] = {}
        if parser.has_section("run"):
            values.update({k: v for k, v in parser.items("run") if v.strip()})
        for section in SECTIONS:
            if parser.has_section(section):
                values[section] = {k: v for k, v in parser.items(section) if v.strip()}
        return cls.build(values)

    @classmethod
    def build(cls, values: Dict[str, Any]) -> "RunConfig":
        """Validate raw values, turning pydantic errors into ConfigError."""
        try:
            return cls.model_validate(values)
        except ValidationError as exc:
            raise ConfigError(f"invalid run configuration: {exc}") from exc

    def with_overrides(self, **sections: Dict[str, Any]) -> "RunConfig":
        """Copy with section-level overrides, e.g. with_overrides(data={'source': path})."""
        values = self.model_dump(mode="json")
        values["classifier"]["grid"] = json.dumps(values["classifier"]["grid"]) \
            if values["classifier"]["grid"] is not None else None
        for key, override in sections.items():
            if isinstance(override, dict):
                values[key] = {**values[key], **override}
            else:
                values[key] = override
        return self.build(values)

    def canonical_json(self) -> str:
        payload = self.model_dump(mode="json", exclude={"output_dir": True, "attack": {"workers"}})
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def stream_seed(self, name: str) -> int:
        """Named sub-seed (split, train, vae, attack) derived from the global seed."""
        digest = hashlib.sha256(f"{self.seed}:{name}".encode("utf-8")).hexdigest()
        return int(digest[:8], 16)

    def resolved_output_dir(self) -> Path:
        return Path(self.output_dir) if self.output_dir else Settings.output_root()
