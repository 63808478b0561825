from typing import Type, TypeVar

from pydantic import BaseModel

T = TypeVar("T", bound=BaseModel)


def parse_json(json_str: str | bytes, model: Type[T]) -> T:
    """Deserialize JSON string into a BaseModel."""
    return model.model_validate_json(json_str)


def stringify_basemodel(obj: BaseModel, indent: int | None = None) -> str:
    """Serialize BaseModel into a JSON string."""
    return obj.model_dump_json(indent=indent)


def parse_float_list(text: str) -> list[float]:
    """'4, 8,16' -> [4.0, 8.0, 16.0]. Entries may be written as 2^-3."""
    values = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "^" in item:
            base, exponent = item.split("^", 1)
            values.append(float(base) ** float(exponent))
        else:
            values.append(float(item))
    return values


def parse_assignment(text: str) -> tuple[str, str]:
    """'KEY=VALUE' -> ('key', 'VALUE')."""
    if "=" not in text:
        raise ValueError(f"expected KEY=VALUE, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip().lower(), value.strip()
