from __future__ import annotations

import argparse
import logging
from pathlib import Path
from typing import TYPE_CHECKING, Any, Type

from ..errors import ValidationError
from ..model import ModelParams
from ..snapshots import LEVELS, ClassLevel, parse_level

if TYPE_CHECKING:
    from ..app import App

log = logging.getLogger(__name__)

COMMANDS: list[Type["Command"]] = []


def register(c: Type["Command"]) -> Type["Command"]:
    COMMANDS.append(c)
    return c


def year_range(value: str) -> tuple[int, int]:
    """
    Parse a START:END year range, both ends included
    """
    try:
        start, end = (int(part) for part in value.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"{value!r} is not a START:END year range") from None
    if end < start:
        raise argparse.ArgumentTypeError(f"range {value!r} ends before it starts")
    return start, end


def cohort(value: str) -> tuple[int, float]:
    """
    Parse a TAU:COUNT initial cohort
    """
    try:
        tau, count = value.split(":")
        return int(tau), float(count)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{value!r} is not a TAU:COUNT cohort") from None


def level(value: str) -> ClassLevel:
    try:
        return parse_level(value)
    except ValidationError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


class Command:
    """
    One subcommand of the command line
    """
    NAME: str
    HELP: str

    def __init__(self, app: App):
        self.app = app
        self.args = app.args

    @classmethod
    def add_arguments(cls, parser: argparse.ArgumentParser):
        pass

    @classmethod
    def add_model_arguments(cls, parser: argparse.ArgumentParser):
        parser.add_argument("--alpha", type=float, help="triggering rate per year")
        parser.add_argument("--beta", type=float, help="reclassification rate per year")

    @classmethod
    def add_level_argument(cls, parser: argparse.ArgumentParser):
        parser.add_argument("--level", type=level, default="subclass",
                            help=f"classification level: {', '.join(LEVELS)} (default: subclass)")

    def require(self, *names: str):
        """
        Check that options were given on the command line or in the
        configuration
        """
        if missing := [name for name in names if getattr(self.args, name, None) is None]:
            raise ValidationError(
                f"{self.NAME}: missing {', '.join('--' + name.replace('_', '-') for name in missing)}")

    def model_params(self, strict: bool = True) -> ModelParams:
        self.require("alpha", "beta")
        return ModelParams(self.args.alpha, self.args.beta).validate(strict=strict)

    def input_path(self, name: str) -> Path:
        """
        Path of a required input file, recorded in the manifest
        """
        self.require(name)
        path = Path(getattr(self.args, name))
        self.app.add_input(name, path)
        return path

    def parameters(self) -> dict[str, Any]:
        """
        Option values recorded in the manifest
        """
        res: dict[str, Any] = {}
        for key, value in vars(self.args).items():
            if key in ("verbose", "debug", "config", "command", "command_class"):
                continue
            if isinstance(value, Path):
                value = str(value)
            elif isinstance(value, list):
                value = [str(v) if isinstance(v, Path) else v for v in value]
            res[key] = value
        return res

    def run(self) -> int | None:
        raise NotImplementedError(f"{self.__class__.__name__}.run not implemented")
