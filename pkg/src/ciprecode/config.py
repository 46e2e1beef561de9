"""Experiment configuration: JSON file plus command-line overrides."""

from dataclasses import asdict, dataclass, field, fields
import json

from .constellation import check_order
from .errors import ConfigError

PRECODERS = ("ci", "rzf", "oracle")


def parse_int_list(text):
    """Parse ``"9"``, ``"8-12"`` or ``"4,6,8-10"`` into a sorted list of ints."""
    if isinstance(text, int):
        return [text]
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        try:
            if sep:
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
        except ValueError:
            raise ConfigError(f"cannot parse integer list {text!r}") from None
    return out


def parse_float_list(text):
    if isinstance(text, (int, float)):
        return [float(text)]
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError:
        raise ConfigError(f"cannot parse number list {text!r}") from None


@dataclass
class ExperimentConfig:
    nt: int = 8
    k: list = field(default_factory=lambda: [9])
    mod: int = 4
    snr_db: list = field(default_factory=lambda: [0.0, 10.0, 20.0, 30.0, 40.0])
    trials: int = 1000
    symbol_slots: int = 1
    p0: float = 1.0
    seed: int = 0
    precoder: str = "ci"
    fallback_rzf: bool = True
    strict_ci: bool = False
    rank_tol: float = None
    qp_tol: float = 1e-10
    alpha_rzf: float = None  # None: K * sigma^2 per SNR point
    min_bits: int = 1_000_000
    min_errors: int = 100
    max_trials: int = None  # None: 10x the trials min_bits needs
    time_budget: float = None  # seconds per K value; None = unlimited
    workers: int = 1
    out: str = None

    def __post_init__(self):
        self.k = parse_int_list(self.k)
        self.snr_db = parse_float_list(self.snr_db)

    def validate(self, need_snr=False):
        check_order(self.mod)
        if self.nt < 1:
            raise ConfigError(f"nt must be >= 1, got {self.nt}")
        if not self.k or min(self.k) < 1:
            raise ConfigError(f"k values must be >= 1, got {self.k}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.symbol_slots < 1:
            raise ConfigError(f"symbol_slots must be >= 1, got {self.symbol_slots}")
        if not self.p0 > 0:
            raise ConfigError(f"p0 must be positive, got {self.p0}")
        if self.precoder not in PRECODERS:
            raise ConfigError(f"precoder must be one of {PRECODERS}, got {self.precoder!r}")
        if need_snr and not self.snr_db:
            raise ConfigError("BER runs need a non-empty SNR grid")
        if self.alpha_rzf is not None and self.alpha_rzf < 0:
            raise ConfigError(f"alpha_rzf must be >= 0, got {self.alpha_rzf}")
        if self.max_trials is not None and self.max_trials < 1:
            raise ConfigError(f"max_trials must be >= 1, got {self.max_trials}")
        if self.min_bits < 0 or self.min_errors < 0:
            raise ConfigError("min_bits and min_errors must be >= 0")
        if self.time_budget is not None and not self.time_budget > 0:
            raise ConfigError(f"time_budget must be positive, got {self.time_budget}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path, overrides=None):
        """Load a JSON config; non-None entries of ``overrides`` win."""
        data = {}
        if path:
            try:
                with open(path) as fh:
                    data = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from None
            if not isinstance(data, dict):
                raise ConfigError(f"config {path} must hold a JSON object")
        data.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_dict(data)
