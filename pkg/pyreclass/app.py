from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import IO, Any, Callable

import pandas
import yaml

from . import __version__
from .errors import DataError, Error, NumericalError, ValidationError
from .jsonable import Jsonable, to_jsonable

try:
    import coloredlogs
    HAVE_COLOREDLOGS = True
except ModuleNotFoundError:
    HAVE_COLOREDLOGS = False

log = logging.getLogger(__name__)

DEFAULT_CONFIG = Path(".pyreclass.yaml")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3


def exit_code(exc: BaseException) -> int:
    """
    Process exit code for an exception raised by a command
    """
    match exc:
        case ValidationError():
            return EXIT_VALIDATION
        case NumericalError():
            return EXIT_NUMERICAL
        case DataError() | OSError():
            return EXIT_IO
        case Error():
            return EXIT_VALIDATION
        case _:
            raise exc


def load_config(path: Path | None) -> dict[str, Any]:
    """
    Read the YAML configuration.

    A missing default configuration file gives an empty configuration; a
    missing explicitly requested one is an error.
    """
    explicit = path is not None
    if path is None:
        path = DEFAULT_CONFIG
    try:
        with path.open("rt") as fd:
            config = yaml.load(fd, Loader=yaml.SafeLoader)
    except FileNotFoundError:
        if explicit:
            raise DataError(f"{path}: configuration file not found") from None
        return {}
    except yaml.YAMLError as e:
        raise DataError(f"{path}: cannot parse configuration: {e}") from e
    if config is None:
        return {}
    if not isinstance(config, dict):
        raise DataError(f"{path}: configuration must be a mapping")
    return config


def command_defaults(config: dict[str, Any], command: str) -> dict[str, Any]:
    """
    Option values for a command: the shared defaults overridden by the
    command's own section
    """
    res: dict[str, Any] = {}
    if (defaults := config.get("defaults")):
        res.update(defaults)
    if (commands := config.get("commands")) and (own := commands.get(command)):
        res.update(own)
    return {key.replace("-", "_"): value for key, value in res.items()}


class RunManifest(Jsonable):
    """
    Record of the invocation that produced a set of outputs
    """
    def __init__(
            self, *,
            command: str,
            inputs: dict[str, str] | None = None,
            parameters: dict[str, Any] | None = None,
            seed: int | None = None,
            outputs: list[str] | None = None,
            version: str = __version__):
        self.command = command
        self.inputs = inputs or {}
        self.parameters = parameters or {}
        self.seed = seed
        self.outputs = outputs or []
        self.version = version

    def as_jsonable(self) -> dict[str, Any]:
        res = super().as_jsonable()
        res["command"] = self.command
        res["inputs"] = dict(sorted(self.inputs.items()))
        res["parameters"] = to_jsonable(dict(sorted(self.parameters.items())))
        res["seed"] = self.seed
        res["outputs"] = sorted(self.outputs)
        res["version"] = self.version
        return res


class ArgumentParser(argparse.ArgumentParser):
    """
    Argument parser that reports bad flags as validation errors
    """
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise ValidationError(message)


class App(contextlib.ExitStack):
    """
    Base application: logging, configuration, manifests and atomic outputs
    """
    NAME = "pyreclass"

    def __init__(self, args: argparse.Namespace, **kw):
        super().__init__()
        self.args = args
        self.command_name: str = getattr(args, "command", None) or self.NAME
        # Files written so far, removed if the command fails
        self.outputs: list[Path] = []
        self.inputs: dict[str, str] = {}
        self.parameters: dict[str, Any] = {}
        self.seed: int | None = None

    @classmethod
    def argparser(cls, description: str) -> argparse.ArgumentParser:
        parser = ArgumentParser(prog=cls.NAME, description=description)
        parser.add_argument("-v", "--verbose", action="store_true",
                            help="verbose output")
        parser.add_argument("--debug", action="store_true",
                            help="debug output")
        parser.add_argument("--config", action="store", type=Path, metavar="file",
                            help=f"YAML configuration file (default: {DEFAULT_CONFIG} if present)")
        return parser

    def setup_logging(self):
        """
        Set up the logging module for this application
        """
        FORMAT = "%(levelname)s %(name)s %(message)s"
        if self.args.debug:
            log_level = logging.DEBUG
        elif self.args.verbose:
            log_level = logging.INFO
        else:
            log_level = logging.WARN

        if HAVE_COLOREDLOGS:
            coloredlogs.install(level=log_level, fmt=FORMAT, stream=sys.stderr)
        else:
            logging.basicConfig(level=log_level, stream=sys.stderr, format=FORMAT)

    def add_input(self, name: str, path: Path):
        self.inputs[name] = str(path)

    def manifest(self) -> RunManifest:
        return RunManifest(
            command=self.command_name,
            inputs=self.inputs,
            parameters=self.parameters,
            seed=self.seed,
            outputs=[str(p) for p in self.outputs])

    def _atomic_write(self, path: Path, write: Callable[[IO[str]], Any]):
        """
        Write a file through a temporary file in the same directory
        """
        path = Path(path)
        fd, tmpname = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wt", newline="") as out:
                write(out)
            os.replace(tmpname, path)
        except BaseException:
            with contextlib.suppress(FileNotFoundError):
                os.unlink(tmpname)
            raise
        self.outputs.append(path)

    def _write_sidecar(self, path: Path):
        manifest = self.manifest().as_jsonable()
        sidecar = path.with_name(path.name + ".manifest.json")
        self._atomic_write(sidecar, lambda out: self.dump_json(manifest, out))

    def write_frame(self, frame: pandas.DataFrame, path: Path | str):
        """
        Write a table as CSV, with its manifest alongside
        """
        path = Path(path)
        self._atomic_write(path, lambda out: frame.to_csv(out, index=False, lineterminator="\n"))
        self._write_sidecar(path)
        log.info("%s: wrote %d rows", path, len(frame))

    def write_json(self, data: Any, path: Path | str):
        """
        Write a JSON bundle, with its manifest alongside
        """
        path = Path(path)
        self._atomic_write(path, lambda out: self.dump_json(data, out))
        self._write_sidecar(path)

    def dump_json(self, data: Any, out: IO[str]):
        json.dump(to_jsonable(data), out, indent=2, ensure_ascii=False, allow_nan=False)
        out.write("\n")

    def print_json(self, data: dict[str, Any]):
        """
        Print a result bundle on stdout, with the manifest embedded
        """
        data = dict(data)
        data["manifest"] = self.manifest()
        self.dump_json(data, sys.stdout)

    def remove_outputs(self):
        """
        Remove the files written so far
        """
        for path in self.outputs:
            with contextlib.suppress(FileNotFoundError):
                path.unlink()
                log.info("%s: removed partial output", path)
        self.outputs = []

    def run(self) -> int | None:
        raise NotImplementedError(f"{self.__class__.__name__}.run not implemented")

    def main(self) -> int:
        """
        Run the command, mapping errors to exit codes and removing partial
        outputs on failure
        """
        self.setup_logging()
        try:
            return self.run() or EXIT_OK
        except (Error, OSError) as e:
            self.remove_outputs()
            code = exit_code(e)
            log.debug("%s failed", self.command_name, exc_info=True)
            print(f"{self.command_name}: {e}", file=sys.stderr)
            return code
        except BaseException:
            self.remove_outputs()
            raise
