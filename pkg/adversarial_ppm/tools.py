"""Tools for artifact persistence and report files."""

import json
import pickle
import re
import shutil
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd

from .config import Settings
from .errors import ArtifactError

FLOAT_FORMAT = "%.10g"
TEXT_COLUMNS = ("case_id", "original", "adversarial", "status", "activities")


class FileHandler:
    """Tool for handling file operations."""

    @staticmethod
    def save_artifact(obj: Any, path: Path, header: Dict[str, Any]) -> Path:
        """Write a JSON header line followed by the pickled object.

        Args:
            obj: Model, manifold or any picklable object
            path: Destination file
            header: Metadata such as kind, vocab_hash, input_mode, tau, seed

        Returns:
            The written path
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        line = json.dumps(header, sort_keys=True).encode("utf-8")
        with open(path, "wb") as handle:
            handle.write(line + b"\n")
            pickle.dump(obj, handle, protocol=pickle.HIGHEST_PROTOCOL)
        return path

    @staticmethod
    def read_artifact_header(path: Path) -> Dict[str, Any]:
        path = Path(path)
        if not path.exists():
            raise ArtifactError(f"artifact not found: {path}")
        with open(path, "rb") as handle:
            line = handle.readline()
        try:
            return json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise ArtifactError(f"artifact {path} has no readable header")

    @staticmethod
    def load_artifact(path: Path, expected_vocab_hash: Optional[str] = None) -> Tuple[Any, Dict[str, Any]]:
        """Load an artifact, refusing one built on another vocabulary.

        Returns:
            (object, header)
        """
        header = FileHandler.read_artifact_header(path)
        stored = header.get("vocab_hash")
        if expected_vocab_hash is not None and stored is not None and stored != expected_vocab_hash:
            raise ArtifactError(f"artifact {path} was built on vocabulary {stored[:12]}, "
                                f"expected {expected_vocab_hash[:12]}")
        with open(path, "rb") as handle:
            handle.readline()
            try:
                obj = pickle.load(handle)
            except (pickle.UnpicklingError, EOFError) as exc:
                raise ArtifactError(f"artifact {path} is corrupt: {exc}")
        return obj, header

    @staticmethod
    def save_table(rows: Sequence[Dict[str, Any]], path: Path,
                   columns: Optional[List[str]] = None) -> Path:
        """Write rows as CSV with a stable column order and float format."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame(list(rows), columns=columns)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        return path

    @staticmethod
    def load_table(path: Path) -> pd.DataFrame:
        path = Path(path)
        if not path.exists():
            raise ArtifactError(f"table not found: {path}")
        header = pd.read_csv(path, nrows=0).columns
        text_columns = {c: str for c in TEXT_COLUMNS if c in header}
        return pd.read_csv(path, keep_default_na=False, na_values=[""], dtype=text_columns)

    @staticmethod
    def save_json(payload: Dict[str, Any], path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
        return path

    @staticmethod
    def load_json(path: Path) -> Dict[str, Any]:
        path = Path(path)
        if not path.exists():
            raise ArtifactError(f"file not found: {path}")
        return json.loads(path.read_text(encoding="utf-8"))

    @staticmethod
    def create_default_config(config_path: Path) -> Path:
        """Copy the bundled run configuration to ``config_path``."""
        config_path = Path(config_path)
        config_path.parent.mkdir(parents=True, exist_ok=True)
        if Settings.TEMPLATE_PATH.exists():
            shutil.copyfile(Settings.TEMPLATE_PATH, config_path)
        else:
            config_path.write_text(DEFAULT_CONFIG, encoding="utf-8")
        return config_path

    @staticmethod
    def clean_filename(text: str) -> str:
        """Clean text for use as filename.

        Args:
            text: Text to clean

        Returns:
            Cleaned filename-safe string
        """
        cleaned = re.sub(r'[<>:"/\\|?*]', '', text)
        cleaned = re.sub(r'[\s\-\.\,\(\)]+', '_', cleaned)
        cleaned = re.sub(r'_+', '_', cleaned)
        cleaned = cleaned.strip('_')[:50]
        return cleaned if cleaned else 'unnamed'


DEFAULT_CONFIG = """[run]
seed = 42

[data]
# leave empty to generate a synthetic log
source =
train_fraction = 0.8
min_prefix = 1
max_prefix = 40

[classifier]
kinds = recurrent

[attack]
methods = all
"""
