import logging
import math
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Generic, List, Optional, Sequence, Type, TypeVar

from gaussnet.settings.base import NOT_SET, ConfigTypeError, Field


class Bool(Field):
    def cast(self, value) -> bool:
        if isinstance(value, str):
            return value.strip().lower() in ("1", "true", "yes", "on")
        return bool(value)


class Int(Field):
    def cast(self, value) -> int:
        if isinstance(value, float) and not value.is_integer():
            raise ValueError(f"{value} is not integral")
        return int(value)


class Float(Field):
    def cast(self, value) -> float:
        return float(value)

    def validate(self, value: float) -> None:
        if not math.isfinite(value):
            raise ValueError("must be finite")


class PositiveInt(Int):
    def validate(self, value: int) -> None:
        if value <= 0:
            raise ValueError("must be positive")


class NonNegativeInt(Int):
    def validate(self, value: int) -> None:
        if value < 0:
            raise ValueError("must not be negative")


class PositiveFloat(Float):
    def validate(self, value: float) -> None:
        super().validate(value)
        if value <= 0:
            raise ValueError("must be positive")


class NonNegativeFloat(Float):
    def validate(self, value: float) -> None:
        super().validate(value)
        if value < 0:
            raise ValueError("must not be negative")


class UnitInterval(Float):
    """Float in the open interval (0, 1)"""

    def validate(self, value: float) -> None:
        if not 0.0 < value < 1.0:
            raise ValueError("must lie strictly between 0 and 1")


class IntList(Field):
    """Comma separated integers, e.g. ``784,128,10``"""

    def cast(self, value) -> List[int]:
        if isinstance(value, str):
            value = [part for part in value.split(",") if part.strip()]
        return [int(item) for item in value]

    def validate(self, value: List[int]) -> None:
        if not value:
            raise ValueError("must not be empty")


class FloatList(Field):
    """Comma separated floats, e.g. ``0,0.05,0.1``"""

    def cast(self, value) -> List[float]:
        if isinstance(value, (int, float)):
            value = [value]
        if isinstance(value, str):
            value = [part for part in value.split(",") if part.strip()]
        return [float(item) for item in value]

    def validate(self, value: List[float]) -> None:
        if not value:
            raise ValueError("must not be empty")


class PathField(Field):
    missing_ok: bool

    def __init__(self, default=NOT_SET, missing_ok=False, nullable=False):
        self.missing_ok = missing_ok
        super().__init__(default, nullable=nullable)

    def cast(self, value) -> Path:
        return Path(value).expanduser()

    def validate(self, value: Path) -> None:
        if not value.exists() and not self.missing_ok:
            raise FileNotFoundError(f"File {value.absolute()} not found")


class EnumField(Field):
    """Enum member looked up by value or by case-insensitive name"""

    def __init__(self, enum_cls: Type[Enum], default=NOT_SET):
        self.enum_cls = enum_cls
        super().__init__(default)

    def cast(self, value: Any) -> Enum:
        if isinstance(value, self.enum_cls):
            return value
        for member in self.enum_cls:
            if member.value == value:
                return member
        return self.enum_cls[str(value).upper()]


class LogLevel(Field):
    class Levels(Enum):
        NOTSET = logging.NOTSET
        DEBUG = logging.DEBUG
        INFO = logging.INFO
        WARNING = logging.WARNING
        ERROR = logging.ERROR
        CRITICAL = logging.CRITICAL

    def cast(self, value) -> int:
        if isinstance(value, int):
            return self.Levels(value).value
        return self.Levels[value.upper()].value  # type: ignore


T = TypeVar("T")


class Choice(Field, Generic[T]):
    def __init__(
        self,
        choices: Sequence[T],
        cast_function: Optional[Callable[[Any], T]] = None,
        default=NOT_SET,
    ):
        self.choices = choices
        self.cast_function = cast_function
        super().__init__(default)

    def cast(self, value: T) -> T:
        if self.cast_function is not None:
            value = self.cast_function(value)
        return value

    def validate(self, value):
        if value not in self.choices:
            raise ConfigTypeError(f"'{value}' is not in {self.choices}")
