"""Settings of the pipeline stages.

Each class reads its values from a chain of storages: command-line flags,
``GAUSSNET_*`` environment variables, an optional settings file, then the
defaults below. A class built with ``alias="tailor"`` also finds values in
a ``[tailor]`` section of the settings file.
"""
from enum import Enum
from pathlib import Path

from gaussnet.settings import (
    Choice,
    Config,
    EnumField,
    FloatList,
    IntList,
    LogLevel,
    NonNegativeFloat,
    NonNegativeInt,
    PathField,
    PositiveFloat,
    PositiveInt,
    UnitInterval,
)


class RefreshPolicy(Enum):
    ONCE = "once"
    EVERY_EPOCH = "epoch"


class SearchStrategy(Enum):
    EXHAUSTIVE = "exhaustive"
    EVOLUTION = "evolution"


class HeadKind(Enum):
    SOFTMAX = "softmax"
    GAUSS = "gauss"


class AttackMethod(Enum):
    FGSM = "fgsm"
    ONE_PIXEL = "onepixel"


HEAD_CHOICES = ("softmax", "gauss", "both")
FGSM_GRID = [0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3]


class Momentum(NonNegativeFloat):
    def validate(self, value: float) -> None:
        super().validate(value)
        if value >= 1.0:
            raise ValueError("must be smaller than 1")


class AppConfig(Config):
    log_level = LogLevel("INFO")
    data_dir = PathField(Path("data"), missing_ok=True)
    split_seed: int = 0
    split_fraction = UnitInterval(0.8)


class TrainConfig(Config):
    arch = IntList(None)
    epochs = NonNegativeInt(10)
    batch_size = PositiveInt(64)
    learning_rate = PositiveFloat(0.05)
    momentum = Momentum(0.9)
    seed: int = 0


class TailorConfig(Config):
    """Alternating centroid refresh and gradient refinement"""

    epochs = PositiveInt(5)
    batch_size = PositiveInt(64)
    learning_rate = PositiveFloat(0.01)
    centroid_refresh = EnumField(RefreshPolicy, RefreshPolicy.EVERY_EPOCH)
    seed: int = 0
    max_backtracks = NonNegativeInt(8)


class CampaignConfig(Config):
    """Attack campaign: sample, method, search strategy and its budget"""

    sample_size = PositiveInt(200)
    seed: int = 0
    strategy = EnumField(SearchStrategy, SearchStrategy.EXHAUSTIVE)
    values = PositiveInt(16)
    population = PositiveInt(32)
    iterations = PositiveInt(30)
    method = EnumField(AttackMethod, AttackMethod.ONE_PIXEL)
    heads = Choice(HEAD_CHOICES, str.lower, "both")
    epsilons = FloatList(FGSM_GRID)
    bin_width = UnitInterval(0.1)
    runs = PositiveInt(1)


class RankConfig(Config):
    k = PositiveInt(10)
    per_class: bool = False
