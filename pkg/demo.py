# -*- encoding: utf-8 -*-
import pandas as pd

from churnlab import (
    BinarizeRule,
    ScmConfig,
    TreatmentQuery,
    generate_scm,
    parse_graph,
    run_causal_analysis,
    true_ate,
)
from churnlab.synth import Confounder, OutcomeModel

# Z confounds a binary treatment and a binary outcome
config = ScmConfig(
    confounders=[Confounder("Z", "bernoulli", p=0.5)],
    treatment_assignment={"intercept": -1.386, "Z": 2.773},
    outcome_model=OutcomeModel(
        {"intercept": -1.386, "Z": 1.386, "treatment": 1.792, "treatment:Z": 0.405}
    ),
)
frame: pd.DataFrame = generate_scm(config, 50000, seed=0)
graph = parse_graph("Z -> treatment\nZ -> outcome\ntreatment -> outcome\n")

queries = [TreatmentQuery("treatment", BinarizeRule("threshold", 0.5))]
estimate = run_causal_analysis(frame, graph, queries, "outcome", seed=0)[0]

print(f"true effect: {true_ate(config):.4f}")
print(f"ipw estimate: {estimate.ate:.4f}, refuter: {estimate.refuter_ate:.4f}")
print(f"adjusted for {list(estimate.adjustment_set)}: {estimate.interpretation}")
