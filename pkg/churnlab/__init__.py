# -*- encoding: utf-8 -*-
from .causal import (
    BinarizeRule,
    CausalError,
    CausalGraph,
    CausalQuery,
    TreatmentQuery,
    backdoor_sets,
    binarize_treatment,
    d_separated,
    data_subset_refuter,
    fit_propensity,
    ipw_ate,
    parse_graph,
    regression_ate,
    run_causal_analysis,
    validate_dag,
)
from .config import PipelineConfig, load_config
from .dataset import (
    FeatureSpec,
    LabeledDataset,
    MemberRecord,
    WindowSpec,
    apply_inclusion_filters,
    build_snapshot,
    label_outcome,
    slide_windows,
    train_test_split,
)
from .featsel import FeatureRanking, criterion, rfe
from .interpret import partial_dependence, permutation_importance, shortlist_candidates
from .logger import logger
from .main import ChurnPipeline
from .metrics import auc, cohen_kappa, confusion, evaluate_predictions, mcc, roc_points
from .models import ensemble_ann, hard_vote, load_model, save_model, soft_vote
from .nnet import DEEP_ANN_1, DEEP_ANN_2, AnnPreset, LayerSpec, TrainConfig, train
from .preprocess import SmoteConfig, one_hot, pearson, smote, standardize_apply, standardize_fit
from .synth import (
    ChurnCorpusConfig,
    ScmConfig,
    generate_churn_corpus,
    generate_scm,
    true_ate,
    true_driver_effect,
)
from .utils import ChurnLabError
