"""Emulated Philips Hue bridge: data resource, state updates and reply envelopes."""

from __future__ import annotations

import copy
import json
import random
import string
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

DATA_DIR = Path(__file__).with_name("data")

TOKEN_ALPHABET = string.ascii_lowercase + string.digits
TOKEN_LENGTH = 32

ALERT_VALUES = ("none", "select", "lselect")
EFFECT_VALUES = ("none", "colorloop")

# name -> (kind, lo, hi) for ints, (kind, choices) for enums
STATE_FIELDS: dict[str, tuple] = {
    "on": ("bool",),
    "bri": ("int", 0, 254),
    "hue": ("int", 0, 65535),
    "sat": ("int", 0, 254),
    "reachable": ("bool",),
    "alert": ("enum", ALERT_VALUES),
    "effect": ("enum", EFFECT_VALUES),
}

ERR_UNAUTHORIZED = 1
ERR_INVALID_JSON = 2
ERR_RESOURCE = 3
ERR_METHOD = 4
ERR_PARAMETER = 6
ERR_VALUE = 7
ERR_LINK_BUTTON = 101


class TemplateError(ValueError):
    """Raised when a data resource file is missing or violates the schema."""

    def __init__(self, message: str, path: str | None = None):
        super().__init__(message)
        self.path = path


@dataclass(frozen=True)
class PhueError:
    type: int
    address: str
    description: str

    def to_dict(self) -> dict:
        return {"error": {"type": self.type, "address": self.address, "description": self.description}}

    def envelope(self) -> list[dict]:
        return [self.to_dict()]


def unauthorized(address: str = "/") -> PhueError:
    return PhueError(ERR_UNAUTHORIZED, address, "unauthorized user")


def invalid_json(address: str = "/") -> PhueError:
    return PhueError(ERR_INVALID_JSON, address, "body contains invalid json")


def resource_unavailable(address: str) -> PhueError:
    return PhueError(ERR_RESOURCE, address, f"resource, {address}, not available")


def method_unavailable(method: str, address: str) -> PhueError:
    return PhueError(ERR_METHOD, address, f"method, {method}, not available for resource, {address}")


def parameter_unavailable(name: str, address: str) -> PhueError:
    return PhueError(ERR_PARAMETER, address, f"parameter, {name}, not available")


def invalid_value(value: Any, name: str, address: str) -> PhueError:
    return PhueError(ERR_VALUE, address, f"invalid value, {json.dumps(value)}, for parameter, {name}")


def success(address: str, value: Any) -> dict:
    return {"success": {address: value}}


@dataclass(frozen=True)
class BridgeTemplate:
    """The three-document data resource behind the emulated bridge.

    ``tempfile_raw`` keeps the honeytoken bytes exactly as read so it can be
    served verbatim; nothing in the state logic looks at it.
    """

    lights: dict[str, dict]
    config: dict
    tempfile: Any
    tempfile_raw: bytes = field(repr=False, default=b"{}")


def _check_value(name: str, value: Any) -> bool:
    spec = STATE_FIELDS[name]
    kind = spec[0]
    if kind == "bool":
        return isinstance(value, bool)
    if kind == "int":
        return isinstance(value, int) and not isinstance(value, bool) and spec[1] <= value <= spec[2]
    return isinstance(value, str) and value in spec[1]


def validate_light_state(state: Any, where: str) -> None:
    if not isinstance(state, dict):
        raise TemplateError(f"{where}: expected an object", where)
    for name, value in state.items():
        if name not in STATE_FIELDS:
            raise TemplateError(f"{where}.{name}: unknown state field", f"{where}.{name}")
        if not _check_value(name, value):
            raise TemplateError(f"{where}.{name}: invalid value {value!r}", f"{where}.{name}")
    missing = [name for name in STATE_FIELDS if name not in state]
    if missing:
        raise TemplateError(f"{where}.{missing[0]}: missing state field", f"{where}.{missing[0]}")


def validate_template(lights: Any, config: Any) -> None:
    if not isinstance(lights, dict) or not lights:
        raise TemplateError("lights: expected a non-empty object", "lights")
    for light_id, light in lights.items():
        where = f"lights.{light_id}"
        if not isinstance(light, dict):
            raise TemplateError(f"{where}: expected an object", where)
        for key in ("name", "type", "modelid"):
            if not isinstance(light.get(key), str):
                raise TemplateError(f"{where}.{key}: expected a string", f"{where}.{key}")
        validate_light_state(light.get("state"), f"{where}.state")
    if not isinstance(config, dict):
        raise TemplateError("config: expected an object", "config")
    for key in ("name", "mac", "swversion"):
        if not isinstance(config.get(key), str):
            raise TemplateError(f"config.{key}: expected a string", f"config.{key}")
    whitelist = config.get("whitelist", {})
    if not isinstance(whitelist, dict):
        raise TemplateError("config.whitelist: expected an object", "config.whitelist")


def _read(path: Path) -> tuple[bytes, Any]:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise TemplateError(f"cannot read data resource {path}: {exc.strerror}", str(path)) from exc
    try:
        return raw, json.loads(raw)
    except ValueError as exc:
        raise TemplateError(f"{path}: not well-formed JSON ({exc})", str(path)) from exc


def load_data_resource(template_path, config_path, tempfile_path) -> BridgeTemplate:
    _, template_doc = _read(Path(template_path))
    _, config = _read(Path(config_path))
    tempfile_raw, tempfile = _read(Path(tempfile_path))
    if not isinstance(template_doc, dict):
        raise TemplateError("template: expected an object", "lights")
    lights = template_doc.get("lights")
    validate_template(lights, config)
    config.setdefault("whitelist", {})
    return BridgeTemplate(lights=lights, config=config, tempfile=tempfile, tempfile_raw=tempfile_raw)


def load_data_dir(data_dir=None) -> BridgeTemplate:
    d = Path(data_dir) if data_dir is not None else DATA_DIR
    return load_data_resource(d / "template.json", d / "config.json", d / "tempfile.json")


def is_valid_username(token: str) -> bool:
    # old bridges accepted 10-40 char usernames; generated ones are 32 [a-z0-9]
    return 10 <= len(token) <= 40 and all(c.isascii() and (c.isalnum() or c == "-") for c in token)


def render_full_state(template: BridgeTemplate, username: str) -> dict:
    # Every syntactically valid username gets the full datastore: the bait.
    return {"lights": copy.deepcopy(template.lights), "config": copy.deepcopy(template.config)}


def apply_state_update(template: BridgeTemplate, light_id: str, update_doc: dict) -> tuple[BridgeTemplate, list[dict]]:
    if light_id not in template.lights:
        return template, resource_unavailable(f"/lights/{light_id}").envelope()
    base = f"/lights/{light_id}/state"
    results: list[dict] = []
    changes: dict[str, Any] = {}
    for name, value in update_doc.items():
        address = f"{base}/{name}"
        if name not in STATE_FIELDS:
            results.append(parameter_unavailable(name, address).to_dict())
        elif not _check_value(name, value):
            results.append(invalid_value(value, name, address).to_dict())
        else:
            changes[name] = value
            results.append(success(address, value))
    if not changes:
        return template, results
    lights = dict(template.lights)
    light = dict(lights[light_id])
    light["state"] = {**light["state"], **changes}
    lights[light_id] = light
    return replace(template, lights=lights), results


def generate_username(rng: random.Random) -> str:
    return "".join(rng.choice(TOKEN_ALPHABET) for _ in range(TOKEN_LENGTH))


class BridgeState:
    """Live, mutable bridge shared by all connection handlers."""

    def __init__(self, template: BridgeTemplate):
        self._template = template
        self._lock = threading.Lock()

    @property
    def template(self) -> BridgeTemplate:
        return self._template

    def update_light(self, light_id: str, update_doc: dict) -> list[dict]:
        with self._lock:
            self._template, results = apply_state_update(self._template, light_id, update_doc)
        return results
