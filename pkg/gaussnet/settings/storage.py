import json
import os
import sys
from abc import abstractmethod
from pathlib import Path
from typing import IO, Any, Dict, Mapping, Union

from gaussnet.settings.base import BaseStorage, ConfigError, InternalKey, Storage

DEFAULT_PREFIX = "GAUSSNET"
DEFAULT_DELIMITER = "_"


class Env(BaseStorage):
    """Environment variables named ``<PREFIX>_<PATH>``, matched upper-case first"""

    def __init__(self, delimiter=DEFAULT_DELIMITER, prefix=DEFAULT_PREFIX) -> None:
        self.prefix = prefix
        self.delimiter = delimiter

    def to_key(self, internal_key: InternalKey) -> str:
        if self.prefix:
            return self.delimiter.join((self.prefix, *internal_key))
        return self.delimiter.join(internal_key)

    def __getitem__(self, key: InternalKey) -> Any:
        str_key = self.to_key(key)
        for candidate in (str_key.upper(), str_key):
            if candidate in os.environ:
                return os.environ[candidate]
        raise KeyError(key)

    def __len__(self) -> int:
        return len(os.environ)


class FileStorage(BaseStorage):
    mode = "r"

    def __init__(self, file: Union[Path, str], missing_ok: bool = False) -> None:
        self.file = Path(file)
        self.missing_ok = missing_ok
        self.internal_storage = Storage(self.load())

    def load(self) -> Mapping:
        try:
            with open(  # pylint: disable=unspecified-encoding
                self.file, self.mode
            ) as fh:
                return self.load_file_content(fh) or {}
        except FileNotFoundError:
            if self.missing_ok:
                return {}
            raise

    @abstractmethod
    def load_file_content(self, handler: IO) -> Mapping:
        pass

    def __getitem__(self, key: InternalKey) -> Any:
        return self.internal_storage[key]

    def __len__(self) -> int:
        return len(self.internal_storage)


class Json(FileStorage):
    def load_file_content(self, handler: IO) -> Dict[str, Any]:
        return json.load(handler)


class Toml(FileStorage):
    mode = "rb"

    def load_file_content(self, handler: IO) -> Dict[str, Any]:
        if sys.version_info >= (3, 11):
            import tomllib  # pylint: disable=import-outside-toplevel
        else:
            import tomli as tomllib  # pylint: disable=import-outside-toplevel

        return tomllib.load(handler)


class Yaml(FileStorage):
    def load_file_content(self, handler: IO) -> Dict[str, Any]:
        import yaml  # pylint: disable=import-outside-toplevel

        return yaml.safe_load(handler)


SUFFIXES = {".json": Json, ".toml": Toml, ".yaml": Yaml, ".yml": Yaml}


def from_file(file: Union[Path, str]) -> FileStorage:
    """File storage chosen by suffix"""
    path = Path(file)
    try:
        storage_cls = SUFFIXES[path.suffix.lower()]
    except KeyError:
        raise ConfigError(f"unsupported settings file type '{path.suffix}'") from None
    return storage_cls(path)
