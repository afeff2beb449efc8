# -*- encoding: utf-8 -*-
import copy
import itertools
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .causal import BinarizeRule, binarize_treatment
from .dataset import ID_COLUMN, MemberRecord, WindowSpec, write_member_records
from .logger import logger
from .utils import ChurnLabError, load_json, mkdir, save_json, sigmoid

INTERCEPT = "intercept"
MC_DRAWS = 10**7
MC_CHUNK = 10**6

GROWTH_LOOKBACK = 11
GROWTH_CENTER = 0.1
RECENCY_CAP = 12
NEIGHBOR_CHUNK = 500
SG_STOP_PROB = 0.06
SG_RESTART_PROB = 0.15
PROMOTION_PREFS = ("email", "none", "sms")

# snapshot columns that carry each planted driver
DRIVER_FEATURES = {
    "sg_recency": "sg_recency",
    "account_growth": "balance_change_ratio",
    "balance": "balance_last",
    "tenure": "account_tenure",
}
# causes that donors are matched on, and drivers that move with each driver under do()
DRIVER_PARENTS = {
    "sg_recency": (),
    "account_growth": ("sg_recency", "balance"),
    "balance": ("tenure",),
    "tenure": (),
}
DRIVER_CARRIES = {
    "sg_recency": ("account_growth",),
    "account_growth": (),
    "balance": (),
    "tenure": ("balance",),
}
CORPUS_RECIPE = {
    "balance": ["last", "mean", "change_amount", "change_ratio"],
    "sg": ["recency", "sum", "last"],
    "login": ["sum", "recency", "mean"],
}


@dataclass(frozen=True)
class Confounder:
    name: str
    kind: str = "bernoulli"
    p: float = 0.5
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("bernoulli", "gaussian"):
            raise SynthError(f"{self.name}: unknown distribution {self.kind!r}")
        if self.kind == "bernoulli" and not 0 <= self.p <= 1:
            raise SynthError(f"{self.name}: p must be in [0, 1], got {self.p}")
        if self.kind == "gaussian" and self.sigma < 0:
            raise SynthError(f"{self.name}: sigma must be >= 0, got {self.sigma}")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "bernoulli":
            return (rng.random(n) < self.p).astype(np.int64)
        return self.mu + self.sigma * rng.standard_normal(n)

    def moment(self, k: int) -> Optional[float]:
        """E[z**k] where it has a simple closed form, else None."""
        if k == 0:
            return 1.0
        if self.kind == "bernoulli":
            return self.p
        if k == 1:
            return self.mu
        if k == 2:
            return self.mu**2 + self.sigma**2
        return None


@dataclass(frozen=True)
class OutcomeModel:
    """Outcome equation; keys are ``intercept``, a variable name or ``a:b`` products."""

    coefficients: Mapping[str, float]
    link: str = "logistic"
    noise_std: float = 1.0

    def __post_init__(self):
        if self.link not in ("linear", "logistic"):
            raise SynthError(f"Unknown outcome link {self.link!r}")
        if self.noise_std < 0:
            raise SynthError(f"noise_std must be >= 0, got {self.noise_std}")


@dataclass(frozen=True)
class ScmConfig:
    confounders: Tuple[Confounder, ...]
    treatment_assignment: Mapping[str, float]
    outcome_model: OutcomeModel
    noise_seed: int = 0
    treatment_name: str = "treatment"
    outcome_name: str = "outcome"

    def __post_init__(self):
        object.__setattr__(self, "confounders", tuple(self.confounders))
        names = [c.name for c in self.confounders]
        if len(set(names)) != len(names):
            raise SynthError(f"duplicate confounder names in {names}")
        reserved = {INTERCEPT, self.treatment_name, self.outcome_name}
        if reserved & set(names):
            raise SynthError(f"confounder names must avoid {sorted(reserved)}")

        _check_terms(self.treatment_assignment, set(names), "treatment_assignment")
        _check_terms(
            self.outcome_model.coefficients, set(names) | {self.treatment_name}, "outcome_model"
        )

    @property
    def confounder_names(self) -> List[str]:
        return [c.name for c in self.confounders]

    @property
    def is_discrete(self) -> bool:
        return all(c.kind == "bernoulli" for c in self.confounders)

    def to_json(self) -> Dict:
        return {
            "confounders": [asdict(c) for c in self.confounders],
            "treatment_assignment": dict(self.treatment_assignment),
            "outcome_model": {
                "coefficients": dict(self.outcome_model.coefficients),
                "link": self.outcome_model.link,
                "noise_std": self.outcome_model.noise_std,
            },
            "noise_seed": self.noise_seed,
            "treatment_name": self.treatment_name,
            "outcome_name": self.outcome_name,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "ScmConfig":
        data = dict(data)
        try:
            confounders = tuple(Confounder(**c) for c in data.pop("confounders", ()))
            outcome = OutcomeModel(**data.pop("outcome_model"))
            return cls(confounders=confounders, outcome_model=outcome, **data)
        except (TypeError, KeyError) as exc:
            raise SynthError(f"invalid scm section: {exc}") from exc


def _check_terms(coefficients: Mapping[str, float], allowed: set, where: str) -> None:
    for key in coefficients:
        if key == INTERCEPT:
            continue
        for factor in key.split(":"):
            if factor not in allowed:
                raise SynthError(f"{where}: coefficient name {key!r} does not resolve")


def _linear_predictor(
    coefficients: Mapping[str, float], values: Mapping[str, np.ndarray], n: int
) -> np.ndarray:
    out = np.zeros(n)
    for key, coef in coefficients.items():
        if key == INTERCEPT:
            out += coef
            continue
        term = np.ones(n)
        for factor in key.split(":"):
            term = term * values[factor]
        out += coef * term
    return out


def _outcome_mean(config: ScmConfig, values: Mapping[str, np.ndarray], n: int) -> np.ndarray:
    lin = _linear_predictor(config.outcome_model.coefficients, values, n)
    return sigmoid(lin) if config.outcome_model.link == "logistic" else lin


def generate_scm(config: ScmConfig, n: int, seed: Optional[int] = None) -> pd.DataFrame:
    """Ancestral sample: confounders, then the binary treatment, then the outcome.

    ``seed`` defaults to ``config.noise_seed``.
    """
    if n < 1:
        raise SynthError(f"sample count must be >= 1, got {n}")

    rng = np.random.default_rng(config.noise_seed if seed is None else seed)
    values: Dict[str, np.ndarray] = {}
    for confounder in config.confounders:
        values[confounder.name] = confounder.sample(rng, n)

    p_treat = sigmoid(_linear_predictor(config.treatment_assignment, values, n))
    values[config.treatment_name] = (rng.random(n) < p_treat).astype(np.int64)

    mean = _outcome_mean(config, values, n)
    if config.outcome_model.link == "logistic":
        outcome = (rng.random(n) < mean).astype(np.int64)
    else:
        outcome = mean + config.outcome_model.noise_std * rng.standard_normal(n)
    values[config.outcome_name] = outcome

    return pd.DataFrame(values)


def _enumerated_ate(config: ScmConfig) -> float:
    names = config.confounder_names
    terms = []
    for assignment in itertools.product((0, 1), repeat=len(names)):
        weight = 1.0
        for c, z in zip(config.confounders, assignment):
            weight *= c.p if z else 1.0 - c.p
        if weight == 0:
            continue

        values = {name: np.array([float(z)]) for name, z in zip(names, assignment)}
        effect = []
        for t in (1.0, 0.0):
            values[config.treatment_name] = np.array([t])
            effect.append(float(_outcome_mean(config, values, 1)[0]))
        terms.append(weight * (effect[0] - effect[1]))
    return math.fsum(terms)


def _linear_closed_form(config: ScmConfig) -> Optional[float]:
    by_name = {c.name: c for c in config.confounders}
    total = []
    for key, coef in config.outcome_model.coefficients.items():
        factors = [] if key == INTERCEPT else key.split(":")
        if config.treatment_name not in factors:
            continue

        # T is binary so T**k == T; independent confounders factorize
        rest = [f for f in factors if f != config.treatment_name]
        expectation = 1.0
        for name in set(rest):
            m = by_name[name].moment(rest.count(name))
            if m is None:
                return None
            expectation *= m
        total.append(coef * expectation)
    return math.fsum(total)


def _monte_carlo_ate(config: ScmConfig, draws: int = MC_DRAWS) -> float:
    rng = np.random.default_rng([config.noise_seed, 7])
    sums, sq_sums, done = 0.0, 0.0, 0
    while done < draws:
        n = min(MC_CHUNK, draws - done)
        values = {c.name: c.sample(rng, n) for c in config.confounders}
        values[config.treatment_name] = np.ones(n)
        y1 = _outcome_mean(config, values, n)
        values[config.treatment_name] = np.zeros(n)
        diff = y1 - _outcome_mean(config, values, n)
        sums += float(diff.sum())
        sq_sums += float(np.square(diff).sum())
        done += n

    mean = sums / draws
    se = math.sqrt(max(sq_sums / draws - mean**2, 0.0) / draws)
    logger.info(f"[Synth] Monte Carlo true ATE {mean:.6f} (se {se:.2e}, {draws} draws)")
    return mean


def true_ate(config: ScmConfig) -> float:
    """E[Y | do(T=1)] - E[Y | do(T=0)] for ``config``.

    Exact enumeration when every confounder is Bernoulli, the closed-form
    treatment effect for a linear outcome, Monte Carlo otherwise.
    """
    if config.is_discrete:
        return _enumerated_ate(config)
    if config.outcome_model.link == "linear":
        closed = _linear_closed_form(config)
        if closed is not None:
            return closed
    return _monte_carlo_ate(config)


def save_scm(
    frame: pd.DataFrame, config: ScmConfig, save_dir: Union[str, Path], n: int, seed: int
) -> None:
    save_dir = Path(save_dir)
    mkdir(save_dir)
    frame.to_csv(save_dir / "scm.csv", index=False, float_format="%.17g")
    truth = {
        "n": n,
        "seed": seed,
        "true_ate": true_ate(config),
        "naive_difference": naive_difference(frame, config.treatment_name, config.outcome_name),
        "config": config.to_json(),
    }
    save_json(save_dir / "scm_truth.json", truth)
    logger.info(f"[Synth] SCM sample of {n} rows -> {save_dir}")


def naive_difference(frame: pd.DataFrame, treatment: str, outcome: str) -> float:
    treated = frame[treatment] == 1
    return float(frame.loc[treated, outcome].mean() - frame.loc[~treated, outcome].mean())


@dataclass(frozen=True)
class ChurnCorpusConfig:
    n_members: int = 5000
    months: int = 24
    seed: int = 0
    open_window: int = 12
    base_hazard: float = -4.0
    coefficients: Mapping[str, float] = field(
        default_factory=lambda: {
            "sg_recency": 1.2,
            "account_growth": -1.0,
            "balance": -1.5,
            "tenure": -0.3,
        }
    )

    def __post_init__(self):
        if self.n_members < 1:
            raise SynthError(f"n_members must be >= 1, got {self.n_members}")
        if self.months < 2:
            raise SynthError(f"months must be >= 2, got {self.months}")
        if not 1 <= self.open_window <= self.months:
            raise SynthError(f"open_window must be in [1, months], got {self.open_window}")
        unknown = set(self.coefficients) - set(DRIVER_FEATURES)
        if unknown:
            raise SynthError(f"unknown driver coefficients {sorted(unknown)}")

    def coefficient(self, driver: str) -> float:
        return float(self.coefficients.get(driver, 0.0))


@dataclass
class ChurnCorpus:
    records: List[MemberRecord]
    hazards: pd.DataFrame
    ground_truth: Dict


def _hazard_logit(config: ChurnCorpusConfig, recency, growth, balance, tenure) -> np.ndarray:
    return (
        config.base_hazard
        + config.coefficient("sg_recency") * recency / 6.0
        + config.coefficient("account_growth") * (growth - GROWTH_CENTER) * 10.0
        + config.coefficient("balance") * (np.log10(np.maximum(balance, 1.0)) - 4.5)
        + config.coefficient("tenure") * tenure / 12.0
    )


class _CorpusSimulator:
    """Month-by-month member state; ``update`` then ``close`` advances one month."""

    ARRAYS = (
        "open_month",
        "female",
        "promotion",
        "balance",
        "contribution",
        "active",
        "history",
        "sg",
        "logins",
        "hazards",
        "last_sg",
        "close_month",
        "growth_shift",
        "tenure_shift",
    )

    def __init__(self, config: ChurnCorpusConfig, rng: np.random.Generator):
        n, months = config.n_members, config.months
        self.config = config
        self.open_month = rng.integers(0, config.open_window, size=n)
        self.female = rng.random(n) < 0.5
        self.promotion = rng.integers(0, len(PROMOTION_PREFS), size=n)
        self.balance = 10 ** (4.5 + 0.4 * rng.standard_normal(n)) * np.where(self.female, 0.9, 1.0)
        self.contribution = self.balance * rng.uniform(0.005, 0.02, size=n)
        self.active = rng.random(n) < 0.8

        self.history = np.full((n, months), np.nan)
        self.sg = np.zeros((n, months))
        self.logins = np.zeros((n, months))
        self.hazards = np.full((n, months), np.nan)
        self.last_sg = np.full(n, -1)
        self.close_month = np.full(n, -1)
        # offsets added to the hazard inputs of intervened members
        self.growth_shift = np.zeros(n)
        self.tenure_shift = np.zeros(n)

    @property
    def n(self) -> int:
        return len(self.open_month)

    def take(self, rows: np.ndarray) -> "_CorpusSimulator":
        out = copy.copy(self)
        for name in self.ARRAYS:
            setattr(out, name, getattr(self, name)[rows])
        return out

    def alive(self, m: int) -> np.ndarray:
        return (self.open_month <= m) & (self.close_month < 0)

    def update(self, m: int, rng: np.random.Generator) -> None:
        """Contributions, returns and logins of month ``m``."""
        n = self.n
        stop = rng.random(n) < SG_STOP_PROB
        restart = rng.random(n) < SG_RESTART_PROB
        ret = rng.normal(0.004, 0.02, size=n)
        login_draw = rng.poisson(2.0 + 2.0 * self.active)

        alive = self.alive(m)
        opening = self.open_month == m
        self.active = np.where(alive & ~opening, np.where(self.active, ~stop, restart), self.active)

        paid = np.where(alive & self.active, self.contribution, 0.0)
        self.balance = np.where(alive & ~opening, self.balance * (1.0 + ret), self.balance) + paid
        self.history[alive, m] = self.balance[alive]
        self.sg[alive, m] = paid[alive]
        self.logins[alive, m] = login_draw[alive]
        self.last_sg = np.where(paid > 0, m, self.last_sg)

    def drivers(self, m: int) -> Dict[str, np.ndarray]:
        """Hazard inputs at month ``m``, keyed like ``DRIVER_FEATURES``."""
        n = self.n
        alive = self.alive(m)
        recency = np.where(
            self.last_sg >= 0, np.minimum(m - self.last_sg, RECENCY_CAP), RECENCY_CAP
        )
        base_month = np.maximum(self.open_month, m - GROWTH_LOOKBACK)
        base_balance = self.history[np.arange(n), np.minimum(base_month, m)]
        growth = np.where(
            alive, (self.balance - base_balance) / np.maximum(np.abs(base_balance), 1e-9), 0.0
        )
        return {
            "sg_recency": recency,
            "account_growth": growth + self.growth_shift,
            "balance": self.balance,
            "tenure": m - self.open_month + self.tenure_shift,
        }

    def close(self, m: int, close_draw: np.ndarray) -> None:
        """Record month ``m`` hazards; members whose draw falls below theirs close at ``m + 1``."""
        alive = self.alive(m)
        d = self.drivers(m)
        h = sigmoid(
            _hazard_logit(self.config, d["sg_recency"], d["account_growth"], d["balance"], d["tenure"])
        )
        self.hazards[alive, m] = h[alive]

        if m + 1 < self.config.months:
            closing = alive & (close_draw < h)
            self.close_month[closing] = m + 1


def generate_churn_corpus(config: ChurnCorpusConfig) -> ChurnCorpus:
    """Simulate members month by month with a logistic monthly closure hazard.

    Every month draws the same random arrays for all members, so the corpus
    depends only on the seed.
    """
    n, months = config.n_members, config.months
    rng = np.random.default_rng(config.seed)
    width = len(str(n))
    member_ids = [f"m{i:0{width}d}" for i in range(n)]

    sim = _CorpusSimulator(config, rng)
    for m in range(months):
        sim.update(m, rng)
        sim.close(m, rng.random(n))

    records = []
    for i in range(n):
        alive_months = np.flatnonzero(~np.isnan(sim.history[i]))
        monthly = {
            int(m): {
                "balance": float(sim.history[i, m]),
                "sg": float(sim.sg[i, m]),
                "login": float(sim.logins[i, m]),
            }
            for m in alive_months
        }
        close = sim.close_month[i]
        records.append(
            MemberRecord(
                member_id=member_ids[i],
                account_open_month=int(sim.open_month[i]),
                account_close_month=int(close) if close >= 0 else None,
                monthly_attributes=monthly,
                static_attributes={
                    "gender": "F" if sim.female[i] else "M",
                    "promotion_pref": PROMOTION_PREFS[sim.promotion[i]],
                },
            )
        )

    hazards = sim.hazards
    hazard_frame = _hazard_frame(member_ids, hazards)
    churn_rate = float(np.mean(sim.close_month >= 0))
    p_close = 1.0 - np.nanprod(1.0 - hazards, axis=1)
    if np.nansum(hazards) < 1.0:
        logger.warning("[Synth] degenerate hazard: fewer than one closure expected")
    elif np.all(p_close > 0.99):
        logger.warning("[Synth] degenerate hazard: every member is expected to close")

    ground_truth = {
        "n_members": n,
        "months": months,
        "seed": config.seed,
        "open_window": config.open_window,
        "base_hazard": config.base_hazard,
        "coefficients": {k: config.coefficient(k) for k in DRIVER_FEATURES},
        "driver_features": dict(DRIVER_FEATURES),
        "churn_rate": churn_rate,
    }
    logger.info(f"[Synth] {n} members over {months} months, churn rate {churn_rate:.4f}")
    return ChurnCorpus(records, hazard_frame, ground_truth)


def corpus_config_from_truth(truth: Mapping) -> ChurnCorpusConfig:
    try:
        return ChurnCorpusConfig(
            n_members=truth["n_members"],
            months=truth["months"],
            seed=truth["seed"],
            open_window=truth["open_window"],
            base_hazard=truth["base_hazard"],
            coefficients=dict(truth["coefficients"]),
        )
    except KeyError as exc:
        raise SynthError(f"ground truth lacks {exc}") from exc


def resolve_driver(name: str) -> str:
    """Driver key for a driver key or the snapshot column that carries it."""
    if name in DRIVER_FEATURES:
        return name
    for driver, column in DRIVER_FEATURES.items():
        if column == name:
            return driver
    raise SynthError(f"{name!r} is not a planted driver")


def _nearest_donors(
    parents: Optional[np.ndarray],
    pool: np.ndarray,
    n: int,
    n_neighbors: int,
    n_draws: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """(n_draws, n_members) donor positions drawn from ``pool``.

    Without parents any pool member may donate; otherwise each member draws
    among its ``n_neighbors`` nearest pool members in parent space.
    """
    if parents is None:
        return pool[rng.integers(0, len(pool), size=(n_draws, n))]

    k = min(n_neighbors, len(pool))
    nearest = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, NEIGHBOR_CHUNK):
        block = parents[start : start + NEIGHBOR_CHUNK]
        dist = ((block[:, None, :] - parents[None, pool, :]) ** 2).sum(axis=2)
        nearest[start : start + len(block)] = np.argpartition(dist, k - 1, axis=1)[:, :k]

    pick = rng.integers(0, k, size=(n_draws, n))
    return pool[nearest[np.arange(n)[None, :], pick]]


def _transplant(
    sim: "_CorpusSimulator",
    driver: str,
    base: "_CorpusSimulator",
    rows: np.ndarray,
    src: np.ndarray,
    own: Dict[str, np.ndarray],
    donor: Dict[str, np.ndarray],
) -> None:
    """Move one driver of replay rows ``rows`` to the value it has for ``src``."""
    if driver == "sg_recency":
        sim.last_sg = base.last_sg[src].copy()
        sim.active = base.active[src].copy()
    elif driver == "account_growth":
        sim.growth_shift = donor["account_growth"] - own["account_growth"]
    elif driver == "balance":
        scale = base.balance[src] / base.balance[rows]
        sim.balance = sim.balance * scale
        sim.history = sim.history * scale[:, None]
        sim.contribution = sim.contribution * scale
    else:
        sim.tenure_shift = donor["tenure"] - own["tenure"]


def _outcome_rate(sim: "_CorpusSimulator", window: WindowSpec, seed: int) -> float:
    dynamics = np.random.default_rng([seed, 0])
    closures = np.random.default_rng([seed, 1])
    anchor = window.anchor_month
    sim.close(anchor, closures.random(sim.n))
    for m in range(anchor + 1, anchor + window.outcome_len):
        sim.update(m, dynamics)
        sim.close(m, closures.random(sim.n))

    churned = (sim.close_month > anchor) & (sim.close_month <= anchor + window.outcome_len)
    return float(churned.mean())


def true_driver_effect(
    config: ChurnCorpusConfig,
    driver: str,
    window: WindowSpec,
    direction: str = "high",
    min_tenure_months: int = 6,
    min_balance: float = 1500.0,
    n_replicates: int = 20,
    n_neighbors: int = 25,
    seed: int = 0,
) -> float:
    """Interventional churn-probability difference for a median-split driver.

    The corpus is replayed up to the anchor month and the members passing the
    inclusion filters are split at the driver's median. do(T=t) gives every
    member the driver value of a donor from half ``t``, drawn among the
    member's nearest neighbours on the driver's causes; the drivers it moves
    in the simulation (``DRIVER_CARRIES``) come from the same donor. The
    outcome window is then simulated ``n_replicates`` times per arm with the
    same closure draws, and the result is P(churn | do(T=1)) - P(churn | do(T=0)).
    """
    key = resolve_driver(driver)
    anchor = window.anchor_month
    if anchor < 0 or anchor + window.outcome_len >= config.months:
        raise SynthError(
            f"outcome window after anchor {anchor} does not fit in {config.months} months"
        )
    if n_replicates < 1:
        raise SynthError(f"n_replicates must be >= 1, got {n_replicates}")

    rng = np.random.default_rng(config.seed)
    base = _CorpusSimulator(config, rng)
    for m in range(anchor):
        base.update(m, rng)
        base.close(m, rng.random(base.n))
    base.update(anchor, rng)

    tenure = anchor - base.open_month
    rows = np.flatnonzero(
        base.alive(anchor) & (tenure > min_tenure_months) & (base.balance >= min_balance)
    )
    if len(rows) < 2:
        raise SynthError(f"only {len(rows)} members pass the filters at anchor {anchor}")

    drivers = {k: v[rows] for k, v in base.drivers(anchor).items()}
    treated, cut = binarize_treatment(drivers[key], BinarizeRule("median", direction=direction))

    parents = None
    if DRIVER_PARENTS[key]:
        parents = np.column_stack([drivers[p] for p in DRIVER_PARENTS[key]])
        spread = parents.std(axis=0)
        parents = (parents - parents.mean(axis=0)) / np.where(spread > 0, spread, 1.0)

    tiled = np.tile(np.arange(len(rows)), n_replicates)
    own = {k: v[tiled] for k, v in drivers.items()}
    donor_rng = np.random.default_rng([seed, 2])

    rates = {}
    for arm in (0, 1):
        pool = np.flatnonzero(treated == arm)
        if not len(pool):
            raise SynthError(f"median split of {key} leaves half {arm} empty")
        donors = _nearest_donors(parents, pool, len(rows), n_neighbors, n_replicates, donor_rng).ravel()
        donor = {k: v[donors] for k, v in drivers.items()}
        sim = base.take(rows[tiled])
        for moved in (key,) + DRIVER_CARRIES[key]:
            _transplant(sim, moved, base, rows[tiled], rows[donors], own, donor)
        rates[arm] = _outcome_rate(sim, window, seed)

    effect = rates[1] - rates[0]
    logger.info(
        f"[Synth] do({key} {direction} of {cut:.4g}): "
        f"{rates[1]:.4f} vs {rates[0]:.4f}, effect {effect:+.4f}"
    )
    return effect


def _hazard_frame(member_ids: Sequence[str], hazards: np.ndarray) -> pd.DataFrame:
    rows, cols = np.nonzero(~np.isnan(hazards))
    return pd.DataFrame(
        {
            ID_COLUMN: [member_ids[r] for r in rows],
            "month": cols,
            "hazard": hazards[rows, cols],
        }
    )


def oracle_churn_probability(
    hazards: pd.DataFrame, member_ids: Sequence[str], anchor_month: int, outcome_len: int
) -> np.ndarray:
    """P(close within the outcome window) projected from each member's anchor-month hazard.

    Members without a hazard at the anchor (SMOTE rows, closed accounts) get NaN.
    """
    at_anchor = hazards[hazards["month"] == anchor_month].set_index(ID_COLUMN)["hazard"]
    h = at_anchor.reindex([str(m) for m in member_ids]).to_numpy(dtype=np.float64)
    return 1.0 - (1.0 - h) ** outcome_len


def write_corpus(corpus: ChurnCorpus, save_dir: Union[str, Path]) -> Dict[str, Path]:
    save_dir = Path(save_dir)
    paths = {
        "monthly": save_dir / "monthly.csv",
        "static": save_dir / "static.csv",
        "hazards": save_dir / "hazards.csv",
        "ground_truth": save_dir / "ground_truth.json",
    }
    write_member_records(corpus.records, paths["monthly"], paths["static"])
    corpus.hazards.to_csv(paths["hazards"], index=False, float_format="%.17g")
    save_json(paths["ground_truth"], corpus.ground_truth)
    return paths


def read_corpus_truth(corpus_dir: Union[str, Path]) -> Tuple[pd.DataFrame, Dict]:
    corpus_dir = Path(corpus_dir)
    hazards_path = corpus_dir / "hazards.csv"
    truth_path = corpus_dir / "ground_truth.json"
    if not hazards_path.exists() or not truth_path.exists():
        raise SynthError(f"no ground truth under {corpus_dir}")

    hazards = pd.read_csv(hazards_path, dtype={ID_COLUMN: str})
    return hazards, load_json(truth_path)


class SynthError(ChurnLabError):
    pass
