"""Resolved configuration of one command-line experiment."""
import dataclasses
import json
import pathlib
from typing import Any, Dict, Mapping, Optional, Union

from gmml.experiments import default_threads
from gmml.quadrature import QuadratureSpec

CONFIG_FILE = 'config.json'
GLOBAL_FIELDS = ('seed', 'quad_order', 'quad_validate', 'threads', 'out')


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """Command, master seed, quadrature settings, output directory and command parameters."""
    command: str
    seed: int = 0
    quad_order: int = 200
    quad_validate: bool = False
    threads: int = dataclasses.field(default_factory=default_threads)
    out: str = '.'
    params: Dict[str, Any] = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        validate_config(self)
        object.__setattr__(self, 'params', dict(self.params))

    @property
    def quadrature(self) -> QuadratureSpec:
        return QuadratureSpec(order=self.quad_order)

    @property
    def out_dir(self) -> pathlib.Path:
        return pathlib.Path(self.out)

    def to_json_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json_dict(cls, payload: Mapping[str, Any]) -> 'ExperimentConfig':
        unknown = set(payload) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f'Unknown config keys: {sorted(unknown)}.')
        return cls(**payload)

    @classmethod
    def from_json(cls, text: str) -> 'ExperimentConfig':
        return cls.from_json_dict(json.loads(text))

    def write(self) -> pathlib.Path:
        """Write the resolved config into the output directory."""
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / CONFIG_FILE
        path.write_text(self.to_json() + '\n', encoding='UTF-8')
        return path


def validate_config(config: ExperimentConfig) -> None:
    if not config.command:
        raise ValueError('A config needs a command.')
    if config.seed < 0:
        raise ValueError(f'seed must be non-negative, got {config.seed}.')
    if config.threads < 1:
        raise ValueError(f'threads must be positive, got {config.threads}.')
    QuadratureSpec(order=config.quad_order)


def load_config_file(path: Union[str, pathlib.Path]) -> Dict[str, Any]:
    """Read a JSON config file as a plain mapping.

    Raises:
        ValueError: if the file does not hold a JSON object.
    """
    payload = json.loads(pathlib.Path(path).read_text(encoding='UTF-8'))
    if not isinstance(payload, dict):
        raise ValueError(f'Config file {path} must hold a JSON object.')
    return payload


def resolve_config(command: str,
                   defaults: Mapping[str, Any],
                   file_payload: Optional[Mapping[str, Any]] = None,
                   flags: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    """Merge command defaults, a config file and explicit flags, later ones winning.

    Args:
        command: Subcommand name.
        defaults: Default command parameters.
        file_payload: Contents of --config, global fields and a `params` mapping.
        flags: Flags given on the command line, global and command-specific mixed.

    Raises:
        ValueError: if the file names a different command or carries unknown keys.
    """
    file_payload = dict(file_payload or {})
    flags = dict(flags or {})
    if file_payload.get('command', command) != command:
        raise ValueError(f"Config file is for {file_payload['command']!r}, not {command!r}.")
    file_params = dict(file_payload.pop('params', {}))
    file_payload.pop('command', None)
    unknown = set(file_payload) - set(GLOBAL_FIELDS)
    if unknown:
        raise ValueError(f'Unknown config keys: {sorted(unknown)}.')
    unknown_params = set(file_params) - set(defaults)
    if unknown_params:
        raise ValueError(f'Unknown parameters for {command}: {sorted(unknown_params)}.')
    global_values = {**file_payload, **{k: v for k, v in flags.items() if k in GLOBAL_FIELDS}}
    params = {**defaults, **file_params, **{k: v for k, v in flags.items() if k not in GLOBAL_FIELDS}}
    return ExperimentConfig(command=command, params=params, **global_values)
