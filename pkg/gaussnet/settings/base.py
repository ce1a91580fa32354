from abc import ABC, ABCMeta, abstractmethod
from collections import ChainMap
from inspect import isclass, isdatadescriptor
from typing import (
    Any,
    Dict,
    Generic,
    Iterator,
    List,
    Mapping,
    Optional,
    Reversible,
    Tuple,
    Type,
    TypeVar,
    Union,
    get_type_hints,
)

InternalKey = Tuple[str, ...]
NOT_SET = object()
T = TypeVar("T")


class ConfigError(Exception):
    """Configuration error"""


class ConfigValueNotFoundError(ConfigError):
    """Failed to find value in given storage(s)"""


class ConfigTypeError(ConfigError):
    """Value has wrong type or is out of range"""


class Field(Generic[T]):
    """Settings attribute descriptor.

    Values are looked up in the owner's storage chain under the owner's
    root path plus the field alias, cast, validated and cached on the owner
    instance.
    """

    def __init__(self, default: Any = NOT_SET, alias: str = "", nullable: bool = False):
        self.default = default
        self.alias = alias
        self.nullable = default is None or nullable

    def __set_name__(self, _, name: str) -> None:
        self.alias = self.alias or name

    def __set__(self, instance: "BaseConfig", value: Any) -> None:
        value = self._cast(value)
        self._validate(value)
        instance._values[self.alias] = value

    def __get__(self, instance: Optional["BaseConfig"], _=None) -> Any:
        if instance is None:
            return self
        if self.alias in instance._values:
            return instance._values[self.alias]
        value = self.get_from_storage(instance)
        if value is None:
            if not self.nullable:
                raise ConfigTypeError(f"{self.dotted(instance)} value is None")
        else:
            value = self._cast(value)
            self._validate(value)
        instance._values[self.alias] = value
        return value

    def path(self, instance: "BaseConfig") -> InternalKey:
        return (*instance.root_path, self.alias)

    def dotted(self, instance: "BaseConfig") -> str:
        return ".".join(self.path(instance))

    def get_from_storage(self, instance: "BaseConfig") -> Any:
        path = self.path(instance)
        storage = instance.storage
        if path in storage:
            return storage[path]
        if self.default is not NOT_SET:
            return self.default
        raise ConfigValueNotFoundError(self.dotted(instance))

    def _cast(self, value: Any) -> T:
        try:
            return self.cast(value)
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigTypeError(f"{value!r} casting error") from exc

    @abstractmethod
    def cast(self, value: Any) -> T:
        pass

    def _validate(self, value: Any) -> None:
        try:
            self.validate(value)
        except (ValueError, TypeError) as exc:
            raise ConfigTypeError(f"{value!r} validation error: {exc}") from exc

    def validate(self, value: Any) -> None:
        pass


TypeMapping = Dict[Type, Type[Field]]


class TypeMapper(ABC):
    """Replaces annotated class attributes with typed descriptors"""

    type_mapping: TypeMapping = {}

    def replace_fields_with_descriptors(
        self, attributes: Dict[str, Any], type_hints: Dict[str, Type]
    ) -> None:
        names = []
        for name in filter(self.public_attribute, type_hints):
            attribute = attributes.get(name, NOT_SET)
            if self.replace(attribute):
                descriptor = self.descriptor(type_hints[name], attribute)
                if isinstance(descriptor, Field):
                    attributes[name] = descriptor
            if isinstance(attributes.get(name), Field):
                names.append(name)
        attributes["_field_names"] = names

    @staticmethod
    def public_attribute(attr_name: str) -> bool:
        return not attr_name.startswith("_")

    @staticmethod
    def replace(attribute: Any) -> bool:
        return not (
            isdatadescriptor(attribute) or isclass(attribute) or callable(attribute)
        )

    @abstractmethod
    def descriptor(self, type_: Type, value: Any = NOT_SET) -> Any:
        pass


class MetaConfig(ABCMeta):
    """Replaces class-level attributes with Field descriptors"""

    def __new__(mcs, name, parents, attributes):  # pylint: disable=arguments-differ
        MetaConfig.extend_annotations(attributes)
        mapper = MetaConfig.get_mapper(attributes, parents)
        if mapper:
            mapper.replace_fields_with_descriptors(
                attributes, attributes["__annotations__"]
            )
        cls = super().__new__(mcs, name, parents, attributes)
        inherited = [n for p in parents for n in getattr(p, "_field_names", [])]
        own = attributes.get("_field_names", [])
        cls._field_names = list(dict.fromkeys(inherited + own))
        return cls

    @staticmethod
    def extend_annotations(attributes: Dict[str, Any]) -> None:
        """Annotates bare attributes by default value type or field cast return type"""

        annotations = attributes.get("__annotations__", {})
        for name, attr in attributes.items():
            if name.startswith("_") or name in annotations:
                continue
            if isinstance(attr, Field):
                annotations[name] = get_type_hints(attr.cast).get("return", Any)
            elif not (
                callable(attr)
                or isdatadescriptor(attr)
                or isinstance(attr, staticmethod)
            ):
                annotations[name] = type(attr)
        attributes["__annotations__"] = annotations

    @staticmethod
    def get_mapper(
        attributes: Dict[str, Any], parents: Reversible[Type]
    ) -> Optional[TypeMapper]:
        """Get mapper from class attribute or take it from parent"""

        mapper = attributes.get("_mapper")
        if isinstance(mapper, TypeMapper):
            return mapper
        for cls in reversed(parents):
            mapper = getattr(cls, "_mapper", None)
            if isinstance(mapper, TypeMapper):
                return mapper
        return None


class BaseStorage(Mapping, ABC):
    """Read-only view keyed by settings paths"""

    @abstractmethod
    def __getitem__(self, key: InternalKey) -> Any:
        ...

    def __iter__(self) -> Iterator[Any]:
        return iter(())


class Storage(BaseStorage):
    """Lookup of path keys in (possibly nested) plain mappings"""

    def __init__(self, *multilevel_mappings: Mapping) -> None:
        self._multilevel_mappings = multilevel_mappings

    def __getitem__(self, key: InternalKey) -> Any:
        for mapping in self._multilevel_mappings:
            node: Any = mapping
            for partial_key in key[:-1]:
                if isinstance(node, Mapping) and partial_key in node:
                    node = node[partial_key]
            if isinstance(node, Mapping) and key[-1] in node:
                value = node[key[-1]]
                if value is not None:
                    return value
        raise KeyError(key)

    def __contains__(self, key: object) -> bool:
        try:
            self[key]  # type: ignore[index]
        except KeyError:
            return False
        return True

    def __len__(self) -> int:
        return len(self._multilevel_mappings)


class BaseConfig(metaclass=MetaConfig):
    _field_names: List[str]

    def __init__(
        self,
        *storages: Union[Mapping, BaseStorage],
        alias: str = "",
        fail_fast: bool = True,
    ) -> None:
        self._values: Dict[str, Any] = {}
        self._storage = ChainMap(
            *(s if isinstance(s, BaseStorage) else Storage(s) for s in storages)
        )
        self._root_path: InternalKey = (alias,) if alias else tuple()
        if fail_fast:
            self.check()

    @property
    def root_path(self) -> InternalKey:
        return self._root_path

    @property
    def storage(self) -> ChainMap:
        return self._storage

    def check(self) -> None:
        for name in self._field_names:
            getattr(self, name)
