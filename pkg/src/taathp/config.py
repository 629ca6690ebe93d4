"""Model and training configuration, plus the named architecture presets."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

VARIANTS = ("taa", "biased")
RNN_CELLS = ("lstm", "gru")
EVENT_TERMS = ("total", "typed")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    ``event_term`` picks the intensity scored at each event in the
    log-likelihood: the total intensity (default) or that of the observed type.
    """

    num_types: int = 2
    d_model: int = 16
    d_hidden: int = 32
    d_k: int = 16
    n_heads: int = 2
    n_layers: int = 2
    d_rnn: int = 0
    rnn_cell: str = "lstm"
    dropout: float = 0.1
    beta: float = 1.0
    variant: str = "taa"
    freeze_w_tem: bool = False
    include_first_event: bool = True
    event_term: str = "total"

    @property
    def d_v(self) -> int:
        return self.d_k

    def __post_init__(self):
        problems = validate_model_config(self)
        if problems:
            raise ConfigError("; ".join(problems))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config fields: {sorted(unknown)}")
        return cls(**d)


def validate_model_config(cfg: ModelConfig) -> list[str]:
    problems = []
    if cfg.num_types < 1:
        problems.append("num_types must be >= 1")
    if cfg.d_model < 2 or cfg.d_model % 2:
        problems.append(f"d_model must be even and >= 2, got {cfg.d_model}")
    if cfg.d_hidden < 3:
        problems.append(f"d_hidden must be >= 3 (conv kernel size), got {cfg.d_hidden}")
    elif ((cfg.d_hidden - 3) // 2 + 1) // 2 < 1:
        problems.append(f"d_hidden={cfg.d_hidden} leaves no max-pool output")
    if cfg.d_k < 1:
        problems.append("d_k must be >= 1")
    if cfg.n_heads < 1:
        problems.append("n_heads must be >= 1")
    if cfg.n_layers < 0:
        problems.append("n_layers must be >= 0")
    if cfg.d_rnn < 0:
        problems.append("d_rnn must be >= 0")
    if cfg.rnn_cell not in RNN_CELLS:
        problems.append(f"rnn_cell must be one of {RNN_CELLS}, got {cfg.rnn_cell!r}")
    if not 0.0 <= cfg.dropout < 1.0:
        problems.append(f"dropout must be in [0, 1), got {cfg.dropout}")
    if not cfg.beta > 0:
        problems.append(f"beta must be positive, got {cfg.beta}")
    if cfg.variant not in VARIANTS:
        problems.append(f"variant must be one of {VARIANTS}, got {cfg.variant!r}")
    if cfg.event_term not in EVENT_TERMS:
        problems.append(f"event_term must be one of {EVENT_TERMS}, got {cfg.event_term!r}")
    return problems


@dataclass(frozen=True)
class Integrator:
    """Compensator estimator: Monte Carlo with ``samples`` per interval, or trapezoid."""

    kind: str = "mc"
    samples: int = 100

    def __post_init__(self):
        if self.kind not in ("mc", "trapezoid"):
            raise ConfigError(f"integrator kind must be 'mc' or 'trapezoid', got {self.kind!r}")
        if self.kind == "mc" and self.samples < 1:
            raise ConfigError(f"Monte Carlo integrator needs samples >= 1, got {self.samples}")

    @classmethod
    def parse(cls, text: str) -> "Integrator":
        """Parse ``mc:M`` or ``trapezoid``."""
        text = text.strip().lower()
        if text == "trapezoid":
            return cls("trapezoid", 0)
        if text.startswith("mc"):
            _, _, m = text.partition(":")
            try:
                return cls("mc", int(m) if m else 100)
            except ValueError as err:
                raise ConfigError(f"bad Monte Carlo sample count in {text!r}") from err
        raise ConfigError(f"integrator must be 'mc:M' or 'trapezoid', got {text!r}")

    def __str__(self) -> str:
        return "trapezoid" if self.kind == "trapezoid" else f"mc:{self.samples}"


@dataclass(frozen=True)
class TrainConfig:
    alpha_time: float = 0.01
    alpha_type: float = 1.0
    integrator: Integrator = field(default_factory=Integrator)
    epochs: int = 10
    batch_size: int = 4
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    clip_norm: float | None = 5.0
    seed: int = 0

    def __post_init__(self):
        problems = []
        if self.alpha_time < 0 or self.alpha_type < 0:
            problems.append("loss weights must be nonnegative")
        if self.epochs < 0:
            problems.append("epochs must be >= 0")
        if self.batch_size < 1:
            problems.append("batch_size must be >= 1")
        if self.lr < 0:
            problems.append("lr must be >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            problems.append("ADAM betas must lie in [0, 1)")
        if self.eps <= 0:
            problems.append("eps must be positive")
        if self.clip_norm is not None and self.clip_norm <= 0:
            problems.append("clip_norm must be positive or null")
        if problems:
            raise ConfigError("; ".join(problems))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["integrator"] = str(self.integrator)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown train config fields: {sorted(unknown)}")
        if isinstance(d.get("integrator"), str):
            d["integrator"] = Integrator.parse(d["integrator"])
        return cls(**d)


# Per-dataset hyper-parameter presets; ``desk`` is the small preset used for tests and local runs.
PRESETS: dict[str, dict] = {
    "synthetic": dict(batch_size=16, d_model=64, d_hidden=256, d_k=64, n_heads=3, n_layers=3, d_rnn=64, dropout=0.1),
    "neuralhawkes": dict(batch_size=16, d_model=64, d_hidden=256, d_k=64, n_heads=3, n_layers=3, d_rnn=64, dropout=0.1),
    "retweets": dict(batch_size=16, d_model=64, d_hidden=256, d_k=64, n_heads=3, n_layers=3, d_rnn=64, dropout=0.1),
    "mimic-ii": dict(batch_size=1, d_model=128, d_hidden=256, d_k=256, n_heads=5, n_layers=5, d_rnn=0, dropout=0.1),
    "stackoverflow": dict(batch_size=4, d_model=128, d_hidden=512, d_k=256, n_heads=4, n_layers=4, d_rnn=64, dropout=0.1),
    "financial": dict(batch_size=1, d_model=128, d_hidden=512, d_k=512, n_heads=4, n_layers=4, d_rnn=64, dropout=0.1),
    "desk": dict(batch_size=4, d_model=16, d_hidden=32, d_k=16, n_heads=2, n_layers=2, d_rnn=0, dropout=0.1),
}


def resolve_preset(name: str, **overrides) -> tuple[ModelConfig, int]:
    """Return ``(ModelConfig, batch_size)`` for a named preset."""
    key = name.lower()
    if key not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; valid presets: {', '.join(sorted(PRESETS))}")
    row = dict(PRESETS[key])
    batch = row.pop("batch_size")
    row.update(overrides)
    return ModelConfig(**row), batch


def with_variant(cfg: ModelConfig, variant: str) -> ModelConfig:
    return replace(cfg, variant=variant)
