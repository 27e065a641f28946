"""Run configuration loaded from a TOML file.

All keys are optional; missing keys fall back to the library defaults so a
config file only needs to state what it overrides.  Documented keys:

    [general]
    seed = 0                  # master RNG seed, also used for model init
    filters = ["Exposure", ...]   # filter names (defines J)

    [prompts]                 # one entry per filter name, overriding the
    "Exposure" = ["Overexposed photo.", "Underexposed photo."]

    [lut]
    n = 33                    # lattice size per axis for LUT bypassing

    [guidance]
    delta = 0.05              # finite-difference step for the score Jacobian
    lambda_off = 1.0          # weight on off-diagonal Jacobian entries
    lambda_per_filter = [1.0, 1.0, 1.0, 1.0, 1.0]
    sample_count = 2          # images sampled per guidance-loss evaluation
    w_sample_range = [-1.0, 1.0]

    [training]
    resolution = 64           # working resolution for stage losses
    momentum = 0.9
    stage1_steps = 150
    stage1_lr = 1e-3
    stage2_steps = 150
    stage2_lr = 1e-3
    stage2_lr_w = 1e-2
    stage2_batch = 8
    stage3_steps = 300
    stage3_lr = 1e-3
    stage3_batch = 8
    checkpoint_every = 0      # 0 disables periodic checkpoints

    [data]
    count = 256               # synthetic pairs to generate
    size = [64, 64]           # generated image height, width

    [service]
    host = "127.0.0.1"
    port = 8000
    max_upload_bytes = 16777216
    preview_max_width = 512
    session_limit = 32
    scorer_endpoint = ""      # external scorer URL; empty = analytic only
    cors_origins = ["*"]
"""

import dataclasses
import hashlib
import json

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .losses import PgConfig
from .scores import DEFAULT_PROMPTS, PromptPair
from .train import TrainConfig
from .transform import DEFAULT_FILTER_NAMES


class ConfigError(ValueError):
    """Raised when a config file is malformed or has invalid values."""


@dataclasses.dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    max_upload_bytes: int = 16 * 1024 * 1024
    preview_max_width: int = 512
    session_limit: int = 32
    scorer_endpoint: str = ""
    cors_origins: tuple = ("*",)


@dataclasses.dataclass
class RunConfig:
    """Everything a training or serving run needs, with defaults."""

    seed: int = 0
    filter_names: tuple = DEFAULT_FILTER_NAMES
    prompts: tuple = DEFAULT_PROMPTS
    lut_n: int = 33
    train: TrainConfig = dataclasses.field(default_factory=TrainConfig)
    data_count: int = 256
    data_size: tuple = (64, 64)
    service: ServiceConfig = dataclasses.field(default_factory=ServiceConfig)

    def __post_init__(self):
        if len(self.filter_names) == 0:
            raise ConfigError("at least one filter is required")
        if len(self.prompts) != len(self.filter_names):
            raise ConfigError("need one prompt pair per filter")
        if self.lut_n < 2:
            raise ConfigError("lut.n must be at least 2")

    def fingerprint(self):
        """Short stable hash of the config, stored in checkpoints."""
        blob = json.dumps(_as_jsonable(self), sort_keys=True)
        return hashlib.sha256(blob.encode("ascii")).hexdigest()[:16]


def _as_jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return _as_jsonable(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {k: _as_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_as_jsonable(v) for v in obj]
    if hasattr(obj, "tolist"):  # numpy arrays and scalars
        return obj.tolist()
    return obj


def _take(table, key, kind, default):
    if key not in table:
        return default
    value = table.pop(key)
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool):
        raise ConfigError("key %r must be %s" % (key, kind.__name__))
    return value


def _reject_unknown(table, section):
    if table:
        raise ConfigError(
            "unknown key(s) in [%s]: %s" % (section, ", ".join(sorted(table)))
        )


def loads(text):
    """Parse TOML text into a RunConfig; unknown keys are errors."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("invalid TOML: %s" % exc) from exc

    general = doc.pop("general", {})
    seed = _take(general, "seed", int, 0)
    names = _take(general, "filters", list, list(DEFAULT_FILTER_NAMES))
    if not all(isinstance(n, str) and n for n in names):
        raise ConfigError("general.filters must be non-empty strings")
    _reject_unknown(general, "general")

    prompt_table = doc.pop("prompts", {})
    defaults = {p.name: p for p in DEFAULT_PROMPTS}
    prompts = []
    for name in names:
        if name in prompt_table:
            pair = prompt_table.pop(name)
            if not (isinstance(pair, list) and len(pair) == 2):
                raise ConfigError("prompts.%r must be [positive, negative]" % name)
            prompts.append(PromptPair(name, pair[0], pair[1]))
        elif name in defaults:
            prompts.append(defaults[name])
        else:
            raise ConfigError("no prompt pair for filter %r" % name)
    _reject_unknown(prompt_table, "prompts")

    lut = doc.pop("lut", {})
    lut_n = _take(lut, "n", int, 33)
    _reject_unknown(lut, "lut")

    guidance = doc.pop("guidance", {})
    lam = _take(guidance, "lambda_per_filter", list, None)
    if lam is not None:
        lam = [float(v) for v in lam]
        if len(lam) != len(names):
            raise ConfigError("guidance.lambda_per_filter needs one value per filter")
    w_range = _take(guidance, "w_sample_range", list, [-1.0, 1.0])
    pg = PgConfig(
        lambda_per_filter=lam,
        lambda_off=_take(guidance, "lambda_off", float, 1.0),
        fd_step=_take(guidance, "delta", float, 0.05),
        sample_count=_take(guidance, "sample_count", int, 2),
        w_sample_range=(float(w_range[0]), float(w_range[1])),
    )
    _reject_unknown(guidance, "guidance")

    training = doc.pop("training", {})
    base = TrainConfig()
    train = TrainConfig(
        seed=seed,
        momentum=_take(training, "momentum", float, base.momentum),
        resolution=_take(training, "resolution", int, base.resolution),
        stage1_steps=_take(training, "stage1_steps", int, base.stage1_steps),
        stage1_lr=_take(training, "stage1_lr", float, base.stage1_lr),
        stage2_steps=_take(training, "stage2_steps", int, base.stage2_steps),
        stage2_lr=_take(training, "stage2_lr", float, base.stage2_lr),
        stage2_lr_w=_take(training, "stage2_lr_w", float, base.stage2_lr_w),
        stage2_batch=_take(training, "stage2_batch", int, base.stage2_batch),
        stage3_steps=_take(training, "stage3_steps", int, base.stage3_steps),
        stage3_lr=_take(training, "stage3_lr", float, base.stage3_lr),
        stage3_batch=_take(training, "stage3_batch", int, base.stage3_batch),
        checkpoint_every=_take(training, "checkpoint_every", int, base.checkpoint_every),
        pg=pg,
    )
    _reject_unknown(training, "training")

    data = doc.pop("data", {})
    count = _take(data, "count", int, 256)
    size = _take(data, "size", list, [64, 64])
    if len(size) != 2 or not all(isinstance(v, int) and v > 0 for v in size):
        raise ConfigError("data.size must be [height, width] of positive ints")
    _reject_unknown(data, "data")

    svc_table = doc.pop("service", {})
    origins = _take(svc_table, "cors_origins", list, ["*"])
    service = ServiceConfig(
        host=_take(svc_table, "host", str, "127.0.0.1"),
        port=_take(svc_table, "port", int, 8000),
        max_upload_bytes=_take(svc_table, "max_upload_bytes", int, 16 * 1024 * 1024),
        preview_max_width=_take(svc_table, "preview_max_width", int, 512),
        session_limit=_take(svc_table, "session_limit", int, 32),
        scorer_endpoint=_take(svc_table, "scorer_endpoint", str, ""),
        cors_origins=tuple(origins),
    )
    _reject_unknown(svc_table, "service")

    _reject_unknown(doc, "top level")
    return RunConfig(
        seed=seed,
        filter_names=tuple(names),
        prompts=tuple(prompts),
        lut_n=lut_n,
        train=train,
        data_count=count,
        data_size=(size[0], size[1]),
        service=service,
    )


def load(path):
    """Read and parse a TOML config file."""
    with open(path, "rb") as fh:
        text = fh.read().decode("utf-8")
    return loads(text)
