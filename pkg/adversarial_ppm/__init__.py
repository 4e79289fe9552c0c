"""Adversarial PPM - adversarial attack benchmark for outcome-oriented predictive process monitoring."""

__version__ = "0.1.0"

from .attacks import AttackConfig, AttackType, Strategy, generate_adversarials
from .classifiers import Classifier, ClassifierKind, DecisionThreshold, train_classifier
from .config import RunConfig, Settings
from .encoding import ActivityVocabulary, build_vocabulary
from .errors import AdversarialPPMError, PipelineError
from .eventlog import EventLog, PrefixLog, SyntheticLogSpec, generate_synthetic_log, parse_log
from .manifold import ClassManifold, VAEConfig, train_class_vae
from .pipeline import BenchmarkRunner, RunManifest, emit_report, run_pipeline
from .tools import FileHandler

__all__ = [
    'AttackConfig',
    'AttackType',
    'Strategy',
    'generate_adversarials',
    'Classifier',
    'ClassifierKind',
    'DecisionThreshold',
    'train_classifier',
    'RunConfig',
    'Settings',
    'ActivityVocabulary',
    'build_vocabulary',
    'AdversarialPPMError',
    'PipelineError',
    'EventLog',
    'PrefixLog',
    'SyntheticLogSpec',
    'generate_synthetic_log',
    'parse_log',
    'ClassManifold',
    'VAEConfig',
    'train_class_vae',
    'BenchmarkRunner',
    'RunManifest',
    'emit_report',
    'run_pipeline',
    'FileHandler',
]
