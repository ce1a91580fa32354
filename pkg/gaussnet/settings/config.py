from typing import Any, Dict, Type

from gaussnet.settings.base import NOT_SET, BaseConfig, Field, TypeMapper
from gaussnet.settings.fields import Bool, Int


class DefaultMapper(TypeMapper):
    """Plain ``bool`` and ``int`` annotations become fields"""

    type_mapping: Dict[Type, Type[Field]] = {
        bool: Bool,
        int: Int,
    }

    def descriptor(self, type_, value: Any = NOT_SET) -> Any:
        try:
            cls = self.type_mapping[type_]
        except KeyError:
            return value
        return cls(value)


class Config(BaseConfig):
    _mapper = DefaultMapper()
