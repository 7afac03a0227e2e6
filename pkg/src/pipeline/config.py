"""
Experiment configuration: YAML file -> nested dataclasses.

A `profile` key (toy | paper) selects the default bundle; keys given in
the file or through `--set a.b=value` override it. Unknown keys are
rejected with their dotted path.
"""

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from analysis.metrics import EvalProtocol
from model.losses import LossConfig
from model.network import NetworkConfig
from utils.augment import AugmentConfig
from utils.errors import ConfigError
from utils.toy_world import ToyConfig

PROFILES = ("toy", "paper")
STAGES = ("seg_pretrain", "teacher_finetune", "student_mlb")
OUTPUT_ROOT_ENV = "BLENDMAT_OUTPUT_ROOT"

# (learning rate, iterations) at full scale; the toy profile runs 1/100
PAPER_SCHEDULE = {
    "seg_pretrain": (1e-4, 200_000),
    "teacher_finetune": (5e-5, 10_000),
    "student_mlb": (5e-5, 20_000),
}


@dataclass
class StageConfig:
    stage: str = "seg_pretrain"
    lr: float = 1e-4
    iterations: int = 2000
    batch_size: int = 16
    ema_momentum: float = 0.999
    use_ema: bool = True
    use_weak_strong: bool = True
    checkpoint_every: int = 0  # 0: only the final checkpoint


@dataclass
class StagesConfig:
    seg_pretrain: StageConfig = field(default_factory=lambda: StageConfig("seg_pretrain", 1e-4, 2000))
    teacher_finetune: StageConfig = field(default_factory=lambda: StageConfig("teacher_finetune", 5e-5, 100))
    student_mlb: StageConfig = field(default_factory=lambda: StageConfig("student_mlb", 5e-5, 200))

    def get(self, stage):
        return getattr(self, stage)


@dataclass
class DataConfig:
    toy_root: str = "data/toy_world"
    seg_dir: str = ""
    matte_dir: str = ""
    backgrounds_dir: str = ""
    eval_sets: dict = field(default_factory=dict)
    recompose_each_iter: bool = True
    num_workers: int = 0

    def resolved(self):
        """Empty paths fall back to the toy world layout under toy_root"""
        root = Path(self.toy_root)
        eval_sets = self.eval_sets or {"eval_matte": str(root / "eval_matte"),
                                       "eval_natural": str(root / "eval_natural")}
        return dataclasses.replace(
            self,
            seg_dir=self.seg_dir or str(root / "natural"),
            matte_dir=self.matte_dir or str(root / "matte"),
            backgrounds_dir=self.backgrounds_dir or str(root / "matte" / "backgrounds"),
            eval_sets=dict(eval_sets),
        )


@dataclass
class ExperimentConfig:
    profile: str = "toy"
    seed: int = 0
    output_dir: str = ""
    device: str = "cpu"
    seg_n: int = -1  # -1: every available sample
    mat_n: int = -1
    subset_seed: int = -1  # -1: same as seed
    toy: ToyConfig = field(default_factory=ToyConfig)
    data: DataConfig = field(default_factory=DataConfig)
    teacher_network: NetworkConfig = field(default_factory=NetworkConfig)
    student_network: NetworkConfig = field(default_factory=NetworkConfig)
    stages: StagesConfig = field(default_factory=StagesConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    eval: EvalProtocol = field(default_factory=EvalProtocol)

    def to_dict(self):
        return _to_plain(self)

    @classmethod
    def from_dict(cls, data):
        return _from_plain(cls, data, "")

    def validate(self):
        if self.profile not in PROFILES:
            raise ConfigError(f"must be one of {PROFILES}", "profile")
        if self.seg_n < -1 or self.mat_n < -1:
            raise ConfigError("subset counts must be >= 0 (or -1 for all)", "seg_n")
        if self.seg_n == 0 and self.mat_n == 0:
            raise ConfigError("no training data: seg_n and mat_n are both 0", "seg_n")
        for name in STAGES:
            st = self.stages.get(name)
            key = f"stages.{name}"
            if st.stage != name:
                raise ConfigError(f"stage field must be '{name}'", f"{key}.stage")
            if st.iterations < 0:
                raise ConfigError("must be >= 0", f"{key}.iterations")
            if st.checkpoint_every < 0:
                raise ConfigError("must be >= 0", f"{key}.checkpoint_every")
            if st.batch_size <= 0:
                raise ConfigError("must be positive", f"{key}.batch_size")
            if st.lr <= 0:
                raise ConfigError("must be positive", f"{key}.lr")
            if not 0.0 <= st.ema_momentum < 1.0:
                raise ConfigError("must lie in [0, 1)", f"{key}.ema_momentum")
        for key in ("teacher_network", "student_network"):
            try:
                getattr(self, key).validate()
            except ConfigError as e:
                raise ConfigError(str(e), key)
        if self.stages.student_mlb.use_ema and self.mat_n != 0 and self.seg_n != 0 \
                and self.teacher_network != self.student_network:
            raise ConfigError("EMA needs identical teacher and student networks; "
                              "set use_ema: false for a different student", "stages.student_mlb.use_ema")
        if self.augment.crop_min > self.augment.crop_max:
            raise ConfigError("crop_min exceeds crop_max", "augment.crop_min")
        self.loss.validate()
        return self


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    return obj


def _from_plain(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError("expected a mapping", path or "<root>")
    known = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError("unknown key", f"{path}.{key}" if path else key)

    kwargs = {}
    defaults = cls()
    for name, f in known.items():
        if name not in data:
            continue
        key = f"{path}.{name}" if path else name
        value = data[name]
        default = getattr(defaults, name)
        if dataclasses.is_dataclass(default):
            value = _from_plain(type(default), value, key)
        elif isinstance(default, tuple):
            if not isinstance(value, (list, tuple)):
                raise ConfigError("expected a list", key)
            value = tuple(value)
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError("expected true/false", key)
        elif isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        elif isinstance(default, dict) and not isinstance(value, dict):
            raise ConfigError("expected a mapping", key)
        kwargs[name] = value
    return cls(**kwargs)


def profile_defaults(profile):
    """Default config tree for a profile, as plain dicts"""
    if profile not in PROFILES:
        raise ConfigError(f"must be one of {PROFILES}", "profile")

    cfg = ExperimentConfig(profile=profile)
    if profile == "paper":
        for name, (lr, iters) in PAPER_SCHEDULE.items():
            setattr(cfg.stages, name, StageConfig(name, lr, iters))
        net = NetworkConfig(encoder_depth="large", width_multiplier=1.0, base_width=64,
                            aspp_channels=256, decoder_channels=(256, 128, 64, 32))
        cfg.teacher_network = net
        cfg.student_network = net
        cfg.augment = AugmentConfig(crop_min=512, crop_max=768, out_size=512)
        cfg.eval = EvalProtocol(edge=512)
    else:
        for name, (lr, iters) in PAPER_SCHEDULE.items():
            setattr(cfg.stages, name, StageConfig(name, lr, iters // 100))
    return cfg.to_dict()


def _deep_merge(base, override):
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "eval_sets":
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def apply_override(tree, assignment):
    """Apply one `a.b.c=value` assignment (value parsed as YAML) in place"""
    if "=" not in assignment:
        raise ConfigError(f"override must look like key=value, got '{assignment}'")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = tree
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError("cannot descend into a scalar", key)
    node[parts[-1]] = yaml.safe_load(raw)
    return tree


def load_config(path=None, overrides=(), seed=None):
    """Read a YAML config (optional), apply overrides and profile defaults"""
    raw = {}
    if path:
        try:
            with open(path) as f:
                raw = yaml.safe_load(f) or {}
        except OSError as e:
            raise ConfigError(f"cannot read config file: {e}")
        except yaml.YAMLError as e:
            raise ConfigError(f"invalid YAML: {e}")
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a mapping")

    for assignment in overrides:
        apply_override(raw, assignment)
    if seed is not None:
        raw["seed"] = int(seed)

    tree = _deep_merge(profile_defaults(raw.get("profile", "toy")), raw)
    cfg = ExperimentConfig.from_dict(tree)
    if not cfg.output_dir:
        cfg.output_dir = str(Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / "experiment")
    return cfg.validate()


def save_config(cfg, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        yaml.safe_dump(cfg.to_dict(), f, sort_keys=False)
