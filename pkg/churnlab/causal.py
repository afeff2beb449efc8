# -*- encoding: utf-8 -*-
import functools
import math
import re
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import pandas as pd
from tqdm import tqdm

from .dataset import FeatureSpec, LabeledDataset
from .logger import logger
from .models import fit_logistic, least_squares
from .preprocess import standardize_apply, standardize_fit
from .utils import ChurnLabError, derive_seed

EDGE_PATTERN = re.compile(r"^(?P<cause>[^\s#]+)\s*->\s*(?P<effect>[^\s#]+)$")
NODE_PATTERN = re.compile(r"^[^\s#>-][^\s#]*$")
DEFAULT_CLIP = 0.01
RIDGE_EPS = 1e-8
COLLINEAR_COND = 1e12
NOT_IDENTIFIED = "not identified"
REPORT_KEYS = ("causal_variable", "estimate_effect", "data_subset_refuter", "probability_of_churn")


@dataclass(frozen=True)
class CausalGraph:
    nodes: Tuple[str, ...]
    edges: Tuple[Tuple[str, str], ...]

    def __post_init__(self):
        node_set = set(self.nodes)
        seen = set()
        for cause, effect in self.edges:
            if cause == effect:
                raise CausalError(f"self-loop on {cause!r}")
            if (cause, effect) in seen:
                raise CausalError(f"duplicate edge {cause} -> {effect}")
            if cause not in node_set or effect not in node_set:
                raise CausalError(f"edge {cause} -> {effect} uses an undeclared node")
            seen.add((cause, effect))

    @functools.cached_property
    def digraph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from(self.edges)
        return g

    def parents(self, node: str) -> List[str]:
        return sorted(self.digraph.predecessors(node))

    def descendants(self, node: str) -> set:
        return nx.descendants(self.digraph, node)

    def without_outgoing(self, node: str) -> "CausalGraph":
        return CausalGraph(self.nodes, tuple(e for e in self.edges if e[0] != node))

    def to_text(self) -> str:
        linked = {n for e in self.edges for n in e}
        lines = [f"{a} -> {b}" for a, b in self.edges]
        lines.extend(n for n in self.nodes if n not in linked)
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class CausalQuery:
    treatment: str
    outcome: str
    graph: CausalGraph

    def __post_init__(self):
        if self.treatment == self.outcome:
            raise CausalError("treatment and outcome must differ")
        for role, node in (("treatment", self.treatment), ("outcome", self.outcome)):
            if node not in self.graph.nodes:
                raise CausalError(f"{role} {node!r} is not in the graph")


@dataclass(frozen=True)
class BinarizeRule:
    kind: str = "median"
    value: Optional[float] = None
    direction: str = "high"

    def __post_init__(self):
        if self.kind not in ("median", "threshold", "top_fraction"):
            raise CausalError(f"Unknown binarize rule {self.kind!r}")
        if self.kind != "median" and self.value is None:
            raise CausalError(f"rule {self.kind!r} needs a value")
        if self.kind == "top_fraction" and not 0 < self.value < 1:
            raise CausalError(f"top_fraction must be in (0, 1), got {self.value}")
        if self.direction not in ("high", "low"):
            raise CausalError(f"direction must be 'high' or 'low', got {self.direction!r}")

    def to_json(self) -> Dict:
        out = {"kind": self.kind, "direction": self.direction}
        if self.value is not None:
            out["value"] = self.value
        return out


@dataclass(frozen=True)
class TreatmentQuery:
    treatment: str
    rule: BinarizeRule = BinarizeRule()

    @property
    def name(self) -> str:
        return f"{self.rule.direction}_{self.treatment}"


@dataclass(frozen=True)
class RefutationResult:
    ate: float
    trials: Tuple[float, ...]
    skipped: Tuple[int, ...]
    full_ate: Optional[float]
    stable: Optional[bool]


@dataclass(frozen=True)
class CausalEstimate:
    treatment: str
    feature: str
    method: str
    ate: Optional[float]
    refuter_ate: Optional[float]
    interpretation: str
    status: str = "identified"
    adjustment_set: Tuple[str, ...] = ()
    cutpoint: Optional[float] = None
    refuter_trials: Tuple[float, ...] = ()
    stable: Optional[bool] = None
    settings: Dict = field(default_factory=dict)

    def report_row(self) -> Dict:
        return {
            "causal_variable": self.treatment,
            "estimate_effect": self.ate,
            "data_subset_refuter": self.refuter_ate,
            "probability_of_churn": self.interpretation,
        }

    def audit(self) -> Dict:
        return {
            "causal_variable": self.treatment,
            "feature": self.feature,
            "status": self.status,
            "method": self.method,
            "adjustment_set": list(self.adjustment_set),
            "cutpoint": self.cutpoint,
            "estimate_effect": self.ate,
            "data_subset_refuter": self.refuter_ate,
            "refuter_trials": list(self.refuter_trials),
            "stable": self.stable,
            "settings": dict(self.settings),
        }


def parse_graph(text: str) -> CausalGraph:
    """Read ``A -> B`` lines (``#`` starts a comment, a bare name declares a node)."""
    nodes: Dict[str, None] = {}
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue

        match = EDGE_PATTERN.match(line)
        if match:
            cause, effect = match.group("cause"), match.group("effect")
            if cause == effect:
                raise CausalError(f"line {lineno}: self-loop on {cause!r}")
            nodes.setdefault(cause)
            nodes.setdefault(effect)
            edges.append((cause, effect))
        elif NODE_PATTERN.match(line):
            nodes.setdefault(line)
        else:
            raise CausalError(f"line {lineno}: unknown token {line!r}")

    graph = CausalGraph(tuple(nodes), tuple(edges))
    witness = validate_dag(graph)
    if witness is not None:
        raise CausalError(f"cycle {' -> '.join(witness)}")
    return graph


def validate_dag(graph: CausalGraph) -> Optional[List[str]]:
    """None for a DAG, otherwise a closed node sequence along one cycle."""
    try:
        cycle = nx.find_cycle(graph.digraph)
    except nx.NetworkXNoCycle:
        return None
    return [u for u, _ in cycle] + [cycle[0][0]]


def d_separated(
    graph: CausalGraph, xs: Iterable[str], ys: Iterable[str], zs: Iterable[str] = ()
) -> bool:
    """Whether ``zs`` d-separates ``xs`` from ``ys``, via the moralized ancestral graph."""
    xs, ys, zs = set(xs), set(ys), set(zs)
    if xs & ys:
        return False
    if (xs | ys) & zs:
        raise CausalError("conditioning set must not contain the tested nodes")

    g = graph.digraph
    relevant = set(xs | ys | zs)
    for node in list(relevant):
        relevant |= nx.ancestors(g, node)

    sub = g.subgraph(relevant)
    moral = nx.Graph()
    moral.add_nodes_from(sub.nodes)
    moral.add_edges_from(sub.edges)
    for node in sub.nodes:
        moral.add_edges_from(combinations(sorted(sub.predecessors(node)), 2))
    moral.remove_nodes_from(zs)

    for x in xs:
        if nx.node_connected_component(moral, x) & ys:
            return False
    return True


def is_backdoor_admissible(graph: CausalGraph, treatment: str, outcome: str, zs) -> bool:
    zs = set(zs)
    if zs & (graph.descendants(treatment) | {treatment}):
        return False
    return d_separated(graph.without_outgoing(treatment), {treatment}, {outcome}, zs)


def backdoor_sets(query: CausalQuery) -> List[FrozenSet[str]]:
    """Minimal backdoor adjustment sets, smallest first then lexicographic.

    An empty list means no admissible set exists.
    """
    graph, t, y = query.graph, query.treatment, query.outcome
    candidates = sorted(set(graph.nodes) - {t, y} - graph.descendants(t))
    bd_graph = graph.without_outgoing(t)
    found: List[FrozenSet[str]] = []
    for size in range(len(candidates) + 1):
        for combo in combinations(candidates, size):
            zs = frozenset(combo)
            if any(f <= zs for f in found):
                continue
            if d_separated(bd_graph, {t}, {y}, zs):
                found.append(zs)
    return sorted(found, key=lambda s: (len(s), sorted(s)))


def choose_adjustment_set(query: CausalQuery, observed: Iterable[str]) -> Tuple[str, ...]:
    """First minimal backdoor set whose nodes are all observed columns."""
    observed = set(observed)
    sets = backdoor_sets(query)
    for zs in sets:
        if zs <= observed:
            return tuple(sorted(zs))
    if not sets:
        raise NotIdentifiedError(f"no backdoor set for {query.treatment} -> {query.outcome}")
    raise NotIdentifiedError(
        f"no observable backdoor set among {[sorted(s) for s in sets]}"
    )


def binarize_treatment(values: Sequence[float], rule: BinarizeRule) -> Tuple[np.ndarray, float]:
    """1 above the cutpoint (below it for ``direction='low'``); ties go to 0."""
    values = np.asarray(values, dtype=np.float64)
    if rule.kind == "median":
        if np.all(values == values[0]):
            raise CausalError("median rule on a constant vector")
        cut = float(np.median(values))
    elif rule.kind == "threshold":
        cut = float(rule.value)
    else:
        cut = float(np.quantile(values, 1.0 - rule.value))

    binary = values < cut if rule.direction == "low" else values > cut
    return binary.astype(np.int64), cut


def _treatment_vector(frame: pd.DataFrame, treatment: str) -> np.ndarray:
    t = frame[treatment].to_numpy(dtype=np.float64)
    if not np.isin(t, (0, 1)).all():
        raise CausalError(f"treatment {treatment!r} must be binary")
    if t.min() == t.max():
        raise DegenerateTreatmentError(f"degenerate treatment {treatment!r}: single group")
    return t


def _adjustment_matrix(frame: pd.DataFrame, adjustment: Sequence[str]) -> np.ndarray:
    missing = [c for c in adjustment if c not in frame.columns]
    if missing:
        raise CausalError(f"adjustment columns {missing} are not in the data")
    if not adjustment:
        return np.zeros((len(frame), 0))
    return frame[list(adjustment)].to_numpy(dtype=np.float64)


def fit_propensity(
    frame: pd.DataFrame,
    treatment: str,
    adjustment: Sequence[str],
    clip: float = DEFAULT_CLIP,
) -> np.ndarray:
    """Logistic P(T=1 | adjustment), clipped to [clip, 1 - clip]."""
    t = _treatment_vector(frame, treatment)
    x = _adjustment_matrix(frame, adjustment)
    if x.shape[1]:
        x = standardize_apply(x, standardize_fit(x))

    design = LabeledDataset(
        x, t.astype(np.int64), [FeatureSpec(c) for c in adjustment], range(len(frame))
    )
    model = fit_logistic(design)
    return np.clip(model.predict_proba(x), clip, 1.0 - clip)


def ipw_ate(
    frame: pd.DataFrame,
    treatment: str,
    outcome: str,
    propensities: np.ndarray,
    stabilized: bool = False,
) -> float:
    """Horvitz-Thompson IPW effect, or the Hajek ratio form when ``stabilized``."""
    t = _treatment_vector(frame, treatment)
    y = frame[outcome].to_numpy(dtype=np.float64)
    e = np.asarray(propensities, dtype=np.float64)
    if np.any((e <= 0) | (e >= 1)):
        raise CausalError("propensities must lie strictly inside (0, 1)")

    w1 = t / e
    w0 = (1 - t) / (1 - e)
    if stabilized:
        return float(np.sum(w1 * y) / np.sum(w1) - np.sum(w0 * y) / np.sum(w0))
    return float(np.mean(w1 * y) - np.mean(w0 * y))


def regression_ate(
    frame: pd.DataFrame, treatment: str, outcome: str, adjustment: Sequence[str]
) -> float:
    """Treatment coefficient of outcome ~ treatment + adjustment + intercept."""
    t = _treatment_vector(frame, treatment)
    y = frame[outcome].to_numpy(dtype=np.float64)
    x = _adjustment_matrix(frame, adjustment)
    design = np.column_stack([t, x, np.ones(len(frame))])
    if np.linalg.cond(design) > COLLINEAR_COND:
        logger.warning(f"[Causal] collinear design for {treatment}, ridge {RIDGE_EPS} applied")
    return float(least_squares(design, y, RIDGE_EPS)[0])


def estimate_effect(
    frame: pd.DataFrame,
    treatment: str,
    outcome: str,
    adjustment: Sequence[str],
    method: str = "ipw",
    clip: float = DEFAULT_CLIP,
    stabilized: bool = False,
) -> float:
    if method == "ipw":
        e = fit_propensity(frame, treatment, adjustment, clip)
        return ipw_ate(frame, treatment, outcome, e, stabilized)
    if method == "regression":
        return regression_ate(frame, treatment, outcome, adjustment)
    raise CausalError(f"Unknown estimation method {method!r}")


def data_subset_refuter(
    estimator: Callable[[pd.DataFrame], float],
    frame: pd.DataFrame,
    fraction: float = 0.8,
    n_trials: int = 10,
    seed: int = 0,
    stability_tol: float = 0.01,
    full_ate: Optional[float] = None,
    verbose: bool = False,
) -> RefutationResult:
    """Re-run ``estimator`` on random row subsets of size floor(fraction * n).

    Subset rows keep their original order, so a subset covering every row
    reproduces the full-data estimate exactly.
    """
    if not 0 < fraction <= 1:
        raise CausalError(f"fraction must be in (0, 1], got {fraction}")
    if n_trials < 1:
        raise CausalError(f"n_trials must be >= 1, got {n_trials}")

    n = len(frame)
    size = int(math.floor(fraction * n))
    if size < 2:
        raise CausalError(f"refuter subsets would hold {size} of {n} rows, need at least 2")
    trials, skipped = [], []
    for trial in tqdm(range(n_trials), desc="[Refuter]", disable=not verbose):
        rng = np.random.default_rng([seed, trial])
        idx = np.sort(rng.choice(n, size=size, replace=False))
        try:
            trials.append(estimator(frame.iloc[idx].reset_index(drop=True)))
        except DegenerateTreatmentError as exc:
            logger.warning(f"[Refuter] trial {trial} skipped: {exc}")
            skipped.append(trial)

    if not trials:
        raise CausalError(f"all {n_trials} refuter trials were skipped")

    mean = float(np.mean(trials))
    stable = None if full_ate is None else abs(mean - full_ate) <= stability_tol
    return RefutationResult(mean, tuple(trials), tuple(skipped), full_ate, stable)


def interpret_effect(ate: float) -> str:
    """Churn-probability wording; the sign of the estimate decides the direction."""
    pct = int(math.floor(abs(ate) * 100 + 0.5))
    if pct == 0:
        return "unchanged (~0%)"
    return f"{'increased' if ate > 0 else 'decreased'} by ~{pct}%"


def run_causal_analysis(
    frame: pd.DataFrame,
    graph: CausalGraph,
    queries: Sequence[TreatmentQuery],
    outcome: str,
    method: str = "ipw",
    clip: float = DEFAULT_CLIP,
    stabilized: bool = False,
    fraction: float = 0.8,
    n_trials: int = 10,
    stability_tol: float = 0.01,
    seed: int = 0,
) -> List[CausalEstimate]:
    """Binarize, adjust, estimate, refute and word each treatment query."""
    if outcome not in frame.columns:
        raise CausalError(f"outcome {outcome!r} is not in the data")

    settings = {
        "method": method,
        "clip": clip if method == "ipw" else None,
        "stabilized": stabilized,
        "refuter_fraction": fraction,
        "refuter_trials": n_trials,
        "stability_tol": stability_tol,
    }

    estimates = []
    for qi, query in enumerate(queries):
        try:
            adjustment = choose_adjustment_set(
                CausalQuery(query.treatment, outcome, graph), frame.columns
            )
        except NotIdentifiedError as exc:
            logger.warning(f"[Causal] {query.name}: {exc}")
            estimates.append(
                CausalEstimate(
                    treatment=query.name,
                    feature=query.treatment,
                    method=method,
                    ate=None,
                    refuter_ate=None,
                    interpretation=NOT_IDENTIFIED,
                    status=NOT_IDENTIFIED,
                    settings=settings,
                )
            )
            continue

        if query.treatment not in frame.columns:
            raise CausalError(f"treatment {query.treatment!r} is not in the data")

        binary, cut = binarize_treatment(frame[query.treatment], query.rule)
        work = frame[list(adjustment) + [outcome]].copy()
        work[query.name] = binary

        estimator = functools.partial(
            estimate_effect,
            treatment=query.name,
            outcome=outcome,
            adjustment=adjustment,
            method=method,
            clip=clip,
            stabilized=stabilized,
        )
        ate = estimator(work)
        refutation = data_subset_refuter(
            estimator, work, fraction, n_trials, derive_seed(seed, qi), stability_tol, ate
        )
        logger.info(
            f"[Causal] {query.name}: adjust {list(adjustment)}, ate {ate:.6f}, "
            f"refuter {refutation.ate:.6f}, stable={refutation.stable}"
        )
        estimates.append(
            CausalEstimate(
                treatment=query.name,
                feature=query.treatment,
                method=method,
                ate=ate,
                refuter_ate=refutation.ate,
                interpretation=interpret_effect(ate),
                adjustment_set=adjustment,
                cutpoint=cut,
                refuter_trials=refutation.trials,
                stable=refutation.stable,
                settings=settings,
            )
        )
    return estimates


def causal_report(estimates: Sequence[CausalEstimate]) -> Dict:
    return {
        "rows": [e.report_row() for e in estimates],
        "audit": [e.audit() for e in estimates],
    }


class CausalError(ChurnLabError):
    pass


class DegenerateTreatmentError(CausalError):
    pass


class NotIdentifiedError(CausalError):
    pass
