from gaussnet.settings.base import (
    BaseConfig,
    BaseStorage,
    ConfigError,
    ConfigTypeError,
    ConfigValueNotFoundError,
    Field,
    MetaConfig,
    Storage,
    TypeMapper,
)
from gaussnet.settings.config import Config, DefaultMapper
from gaussnet.settings.fields import (
    Bool,
    Choice,
    EnumField,
    Float,
    FloatList,
    Int,
    IntList,
    LogLevel,
    NonNegativeFloat,
    NonNegativeInt,
    PathField,
    PositiveFloat,
    PositiveInt,
    UnitInterval,
)
from gaussnet.settings.storage import Env, FileStorage, Json, Toml, Yaml, from_file
