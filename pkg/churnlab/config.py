# -*- encoding: utf-8 -*-
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from .causal import BinarizeRule, TreatmentQuery
from .dataset import WindowSpec
from .nnet import AnnPreset
from .preprocess import MATCH_MAJORITY, SmoteConfig
from .synth import CORPUS_RECIPE, ChurnCorpusConfig, ScmConfig
from .utils import ChurnLabError, load_json

SUBCOMMANDS = ("synth", "prepare", "train", "evaluate", "explain", "causal")
MODEL_KINDS = ("linear", "logistic", "gaussian_nb", "ann", "ensemble_ann", "hard_vote", "soft_vote")
ANN_PRESETS = ("deep_ann_1", "deep_ann_2")


@dataclass
class SynthSection:
    n_members: int = 5000
    months: int = 24
    open_window: int = 12
    base_hazard: float = -4.0
    coefficients: Optional[Dict[str, float]] = None
    scm: Optional[Dict[str, Any]] = None
    scm_samples: int = 50000

    def corpus_config(self, seed: int) -> ChurnCorpusConfig:
        kwargs = dict(
            n_members=self.n_members,
            months=self.months,
            seed=seed,
            open_window=self.open_window,
            base_hazard=self.base_hazard,
        )
        if self.coefficients is not None:
            kwargs["coefficients"] = dict(self.coefficients)
        return ChurnCorpusConfig(**kwargs)

    def scm_config(self) -> Optional[ScmConfig]:
        return None if self.scm is None else ScmConfig.from_json(self.scm)


@dataclass
class DataSection:
    monthly_path: Optional[str] = None
    static_path: Optional[str] = None
    corpus_dir: Optional[str] = None


@dataclass
class WindowSection:
    anchor_month: int = 17
    observation_len: int = 12
    outcome_len: int = 6
    step_months: int = 6
    count: int = 1

    def spec(self) -> WindowSpec:
        return WindowSpec(self.anchor_month, self.observation_len, self.outcome_len)


@dataclass
class FilterSection:
    min_tenure_months: int = 6
    min_balance: float = 1500.0
    balance_attr: str = "balance"
    correlation_threshold: float = 0.9


@dataclass
class SplitSection:
    train_fraction: float = 0.8
    standardize: bool = True


@dataclass
class SmoteSection:
    enabled: bool = True
    k_neighbors: int = 5
    target_minority_count: Union[int, str] = MATCH_MAJORITY

    def smote_config(self, seed: int) -> SmoteConfig:
        return SmoteConfig(self.k_neighbors, self.target_minority_count, seed)


@dataclass
class RfeSection:
    enabled: bool = True
    n_keep: int = 10
    step: int = 1
    hessian: str = "unit"


@dataclass
class ModelsSection:
    roster: List[Dict[str, Any]] = field(
        default_factory=lambda: [
            {"name": "logistic", "type": "logistic"},
            {"name": "linear", "type": "linear"},
            {"name": "naive_bayes", "type": "gaussian_nb"},
            {"name": "ensemble_ann", "type": "ensemble_ann"},
            {"name": "hard_vote", "type": "hard_vote", "members": ["logistic", "naive_bayes", "ensemble_ann"]},
        ]
    )
    presets: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    verbose: bool = False

    def preset(self, name: str, base: AnnPreset) -> AnnPreset:
        overrides = self.presets.get(name)
        if not overrides:
            return base
        try:
            return AnnPreset.from_json({**dataclasses.asdict(base), **overrides})
        except (TypeError, ChurnLabError) as exc:
            raise ConfigError(f"models.presets.{name}: {exc}") from exc


@dataclass
class MetricsSection:
    threshold: float = 0.5
    roc: bool = True


@dataclass
class ExplainSection:
    model: str = "ensemble_ann"
    metric: str = "auc"
    n_repeats: int = 5
    grid_size: int = 20
    top_k: int = 5
    features: Optional[List[str]] = None


@dataclass
class CausalSection:
    graph_path: Optional[str] = None
    data_path: Optional[str] = None
    outcome: str = "label"
    queries: List[Dict[str, Any]] = field(default_factory=list)
    method: str = "ipw"
    clip: float = 0.01
    stabilized: bool = False
    refuter_fraction: float = 0.8
    refuter_trials: int = 10
    stability_tol: float = 0.01

    def treatment_queries(self) -> List[TreatmentQuery]:
        out = []
        for i, q in enumerate(self.queries):
            unknown = set(q) - {"treatment", "rule"}
            if unknown or "treatment" not in q:
                raise ConfigError(f"causal.queries[{i}]: expected keys treatment, rule")
            try:
                rule = BinarizeRule(**q.get("rule", {}))
            except (TypeError, ChurnLabError) as exc:
                raise ConfigError(f"causal.queries[{i}].rule: {exc}") from exc
            out.append(TreatmentQuery(q["treatment"], rule))
        return out


SECTIONS = {
    "synth": SynthSection,
    "data": DataSection,
    "window": WindowSection,
    "filters": FilterSection,
    "recipe": dict,
    "split": SplitSection,
    "smote": SmoteSection,
    "rfe": RfeSection,
    "models": ModelsSection,
    "metrics": MetricsSection,
    "explain": ExplainSection,
    "causal": CausalSection,
}


@dataclass
class PipelineConfig:
    seed: int
    output_dir: str = "outputs"
    verbose: bool = False
    synth: SynthSection = field(default_factory=SynthSection)
    data: DataSection = field(default_factory=DataSection)
    window: WindowSection = field(default_factory=WindowSection)
    filters: FilterSection = field(default_factory=FilterSection)
    recipe: Dict[str, List[str]] = field(default_factory=lambda: {k: list(v) for k, v in CORPUS_RECIPE.items()})
    split: SplitSection = field(default_factory=SplitSection)
    smote: SmoteSection = field(default_factory=SmoteSection)
    rfe: RfeSection = field(default_factory=RfeSection)
    models: ModelsSection = field(default_factory=ModelsSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)
    explain: ExplainSection = field(default_factory=ExplainSection)
    causal: CausalSection = field(default_factory=CausalSection)

    @property
    def out(self) -> Path:
        return Path(self.output_dir)

    @property
    def corpus_dir(self) -> Path:
        return Path(self.data.corpus_dir) if self.data.corpus_dir else self.out / "corpus"

    @property
    def monthly_path(self) -> Path:
        return Path(self.data.monthly_path) if self.data.monthly_path else self.corpus_dir / "monthly.csv"

    @property
    def static_path(self) -> Path:
        return Path(self.data.static_path) if self.data.static_path else self.corpus_dir / "static.csv"

    @property
    def prepared_dir(self) -> Path:
        return self.out / "prepared"

    @property
    def models_dir(self) -> Path:
        return self.out / "models"

    @property
    def reports_dir(self) -> Path:
        return self.out / "reports"

    @property
    def explain_dir(self) -> Path:
        return self.out / "explain"

    @property
    def causal_data_path(self) -> Path:
        if self.causal.data_path:
            return Path(self.causal.data_path)
        return self.prepared_dir / "snapshot.csv"

    def to_json(self) -> Dict:
        return dataclasses.asdict(self)

    def validate(self, subcommand: str) -> None:
        """Range checks plus existence of every input ``subcommand`` reads."""
        if subcommand not in SUBCOMMANDS:
            raise ConfigError(f"Unknown subcommand {subcommand!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

        if subcommand == "synth":
            if self.synth.n_members < 1:
                raise ConfigError(f"synth.n_members must be >= 1, got {self.synth.n_members}")
            if self.synth.scm is not None and self.synth.scm_samples < 1:
                raise ConfigError("synth.scm_samples must be >= 1")
            try:
                self.synth.corpus_config(self.seed)
                self.synth.scm_config()
            except ChurnLabError as exc:
                raise ConfigError(f"synth: {exc}") from exc
            return

        required = {
            "prepare": [self.monthly_path, self.static_path],
            "train": [self.prepared_dir / "train.csv"],
            "evaluate": [self.prepared_dir / "test.csv", self.models_dir],
            "explain": [self.prepared_dir / "test.csv", self.models_dir / f"{self.explain.model}.json"],
            "causal": [self.causal_data_path],
        }[subcommand]

        if subcommand == "prepare":
            if not 0 < self.split.train_fraction < 1:
                raise ConfigError("split.train_fraction must be in (0, 1)")
            if self.rfe.enabled and self.rfe.n_keep < 1:
                raise ConfigError(f"rfe.n_keep must be >= 1, got {self.rfe.n_keep}")
        if subcommand == "train":
            self._check_roster()
        if subcommand == "causal":
            if not self.causal.graph_path:
                raise ConfigError("causal.graph_path is required")
            if self.causal.method not in ("ipw", "regression"):
                raise ConfigError("causal.method must be ipw or regression")
            if not 0 < self.causal.refuter_fraction <= 1:
                raise ConfigError(
                    f"causal.refuter_fraction must be in (0, 1], got {self.causal.refuter_fraction}"
                )
            if self.causal.refuter_trials < 1:
                raise ConfigError(f"causal.refuter_trials must be >= 1, got {self.causal.refuter_trials}")
            if not 0 <= self.causal.clip < 0.5:
                raise ConfigError(f"causal.clip must be in [0, 0.5), got {self.causal.clip}")
            if not self.causal.queries:
                raise ConfigError("causal.queries is empty")
            self.causal.treatment_queries()
            required.append(Path(self.causal.graph_path))

        missing = [str(p) for p in required if not Path(p).exists()]
        if missing:
            raise ConfigError(f"{subcommand}: missing inputs {missing}")

    def _check_roster(self) -> None:
        names = []
        for entry in self.models.roster:
            name, kind = entry.get("name"), entry.get("type")
            if not name or kind not in MODEL_KINDS:
                raise ConfigError(f"models.roster entry {entry} needs a name and a type in {MODEL_KINDS}")
            if kind == "ann" and entry.get("preset", "deep_ann_1") not in ANN_PRESETS:
                raise ConfigError(f"{name}: preset must be one of {ANN_PRESETS}")
            if kind in ("hard_vote", "soft_vote"):
                members = entry.get("members") or []
                unknown = [m for m in members if m not in names]
                if not members or unknown:
                    raise ConfigError(f"{name}: members {unknown or members} must name earlier roster models")
            names.append(name)
        if len(set(names)) != len(names):
            raise ConfigError("models.roster names must be unique")
        unknown = set(self.models.presets) - set(ANN_PRESETS)
        if unknown:
            raise ConfigError(f"models.presets: unknown presets {sorted(unknown)}")


def _build_section(cls, data: Any, where: str):
    if cls is dict:
        if not isinstance(data, Mapping):
            raise ConfigError(f"section {where!r} must be an object")
        return {k: list(v) for k, v in data.items()}

    if not isinstance(data, Mapping):
        raise ConfigError(f"section {where!r} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r} in section {where!r}")
    return cls(**data)


def config_from_dict(data: Mapping[str, Any]) -> PipelineConfig:
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r} at top level")
    if "seed" not in data:
        raise ConfigError("seed is mandatory")

    kwargs = {}
    for key, value in data.items():
        if key in SECTIONS:
            kwargs[key] = _build_section(SECTIONS[key], value, key)
        else:
            kwargs[key] = value
    if not isinstance(kwargs["seed"], int) or isinstance(kwargs["seed"], bool):
        raise ConfigError(f"seed must be an integer, got {kwargs['seed']!r}")
    return PipelineConfig(**kwargs)


def load_config(
    config_path: Union[str, Path],
    output_dir: Optional[str] = None,
    seed: Optional[int] = None,
) -> PipelineConfig:
    """Read the JSON pipeline config; ``output_dir`` and ``seed`` override the file."""
    config_path = Path(config_path)
    if not config_path.exists():
        raise ConfigError(f"{config_path} does not exist.")

    try:
        data = dict(load_json(config_path))
    except ValueError as exc:
        raise ConfigError(f"{config_path} is not valid JSON: {exc}") from exc

    if seed is not None:
        data["seed"] = seed
    if output_dir is not None:
        data["output_dir"] = output_dir
    return config_from_dict(data)


class ConfigError(ChurnLabError):
    pass
