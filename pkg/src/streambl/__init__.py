"""Online bug localization over streaming changeset and bug-report topic models."""

from .corpus import BugReport, Changeset, Document, PreprocessConfig, parse_diff
from .engine import Engine, EngineConfig
from .evaluation import FixLink, replay
from .locator import LocatorConfig, locate
from .topicmodel import LdaConfig, TopicModel
from .translation import PairStore, ReadinessPolicy, TranslationMatrix

__all__ = [
    "BugReport", "Changeset", "Document", "Engine", "EngineConfig", "FixLink", "LdaConfig",
    "LocatorConfig", "PairStore", "PreprocessConfig", "ReadinessPolicy", "TopicModel",
    "TranslationMatrix", "locate", "parse_diff", "replay",
]
__version__ = "0.1.0"
