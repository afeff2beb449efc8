# -*- encoding: utf-8 -*-
import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

try:
    from .causal import causal_report, parse_graph, run_causal_analysis
    from .config import ConfigError, PipelineConfig, SUBCOMMANDS, load_config
    from .dataset import (
        read_labeled_csv,
        pool_windows,
        read_member_records,
        slide_windows,
        train_test_split,
    )
    from .featsel import apply_ranking, rfe
    from .interpret import (
        partial_dependence,
        permutation_importance,
        save_pdp_csv,
        shortlist_candidates,
        shortlist_to_queries,
    )
    from .logger import add_file_sink, logger
    from .metrics import (
        MetricsError,
        auc,
        confusion,
        evaluate_predictions,
        recall,
        roc_points,
        save_roc_csv,
    )
    from .models import (
        Classifier,
        ensemble_ann,
        fit_gaussian_nb,
        fit_linear_discriminant,
        fit_logistic,
        hard_vote,
        list_models,
        load_metadata,
        load_model,
        save_model,
        soft_vote,
    )
    from .nnet import DEEP_ANN_1, DEEP_ANN_2, NeuralNetwork, train
    from .preprocess import (
        correlation_pairs,
        encode_dataset,
        fit_scaler,
        numeric_columns,
        one_hot_fit,
        scale_dataset,
        smote,
    )
    from .synth import (
        DRIVER_FEATURES,
        SynthError,
        corpus_config_from_truth,
        generate_churn_corpus,
        generate_scm,
        oracle_churn_probability,
        read_corpus_truth,
        save_scm,
        true_driver_effect,
        write_corpus,
    )
    from .utils import ChurnLabError, derive_seed, float_range, non_negative_int, save_json
except ImportError:
    from causal import causal_report, parse_graph, run_causal_analysis
    from config import ConfigError, PipelineConfig, SUBCOMMANDS, load_config
    from dataset import (
        read_labeled_csv,
        pool_windows,
        read_member_records,
        slide_windows,
        train_test_split,
    )
    from featsel import apply_ranking, rfe
    from interpret import (
        partial_dependence,
        permutation_importance,
        save_pdp_csv,
        shortlist_candidates,
        shortlist_to_queries,
    )
    from logger import add_file_sink, logger
    from metrics import (
        MetricsError,
        auc,
        confusion,
        evaluate_predictions,
        recall,
        roc_points,
        save_roc_csv,
    )
    from models import (
        Classifier,
        ensemble_ann,
        fit_gaussian_nb,
        fit_linear_discriminant,
        fit_logistic,
        hard_vote,
        list_models,
        load_metadata,
        load_model,
        save_model,
        soft_vote,
    )
    from nnet import DEEP_ANN_1, DEEP_ANN_2, NeuralNetwork, train
    from preprocess import (
        correlation_pairs,
        encode_dataset,
        fit_scaler,
        numeric_columns,
        one_hot_fit,
        scale_dataset,
        smote,
    )
    from synth import (
        DRIVER_FEATURES,
        SynthError,
        corpus_config_from_truth,
        generate_churn_corpus,
        generate_scm,
        oracle_churn_probability,
        read_corpus_truth,
        save_scm,
        true_driver_effect,
        write_corpus,
    )
    from utils import ChurnLabError, derive_seed, float_range, non_negative_int, save_json

PRESETS = {"deep_ann_1": DEEP_ANN_1, "deep_ann_2": DEEP_ANN_2}
METRIC_COLUMNS = ["test_acc", "auc", "cohen_kappa", "mcc"]


class ChurnPipeline:
    """Runs one workflow stage at a time; stages hand off through files under ``output_dir``."""

    def __init__(self, config: PipelineConfig) -> None:
        self.config = config
        self.out = config.out

    def __call__(self, subcommand: str) -> None:
        try:
            add_file_sink(str(self.out / "logs"))
            save_json(self.out / "audit" / f"{subcommand}_config.json", self.config.to_json())
            getattr(self, subcommand)()
        except (ChurnLabError, OSError) as exc:
            raise PipelineStageError(f"[{subcommand}] failed: {exc}") from exc

    def synth(self) -> None:
        cfg = self.config
        corpus = generate_churn_corpus(cfg.synth.corpus_config(cfg.seed))
        write_corpus(corpus, cfg.corpus_dir)

        scm_config = cfg.synth.scm_config()
        if scm_config is not None:
            n = cfg.synth.scm_samples
            scm_seed = derive_seed(cfg.seed, 6)
            frame = generate_scm(scm_config, n, scm_seed)
            save_scm(frame, scm_config, self.out / "scm", n, scm_seed)

        truth = corpus.ground_truth
        print(f"members: {truth['n_members']}, churn rate: {truth['churn_rate']:.4f}")

    def prepare(self) -> None:
        cfg = self.config
        stage_log: List[Dict] = []

        def record(stage: str, dataset, **extra) -> None:
            entry = {
                "stage": stage,
                "rows": len(dataset),
                "columns": dataset.n_features,
                "class_counts": dataset.class_counts(),
            }
            entry.update(extra)
            stage_log.append(entry)
            logger.info(f"[Prepare] {stage}: {entry['rows']} rows x {entry['columns']} cols")

        records = read_member_records(cfg.monthly_path, cfg.static_path)
        window = cfg.window.spec()
        snapshots = slide_windows(
            records,
            window,
            cfg.window.step_months,
            cfg.window.count,
            cfg.recipe,
            cfg.filters.min_tenure_months,
            cfg.filters.min_balance,
            cfg.filters.balance_attr,
        )
        anchors = [window.anchor_month + i * cfg.window.step_months for i in range(cfg.window.count)]
        snapshot = pool_windows(snapshots, anchors)
        record("snapshot", snapshot, members_read=len(records))

        encoded_snapshot = encode_dataset(snapshot, one_hot_fit(snapshot.features, snapshot.specs))
        encoded_snapshot.to_csv(cfg.prepared_dir / "snapshot.csv")

        train_set, test_set = train_test_split(
            snapshot, cfg.split.train_fraction, derive_seed(cfg.seed, 1)
        )
        record("split_train", train_set)
        record("split_test", test_set)

        if cfg.split.standardize:
            scaler = fit_scaler(train_set)
            train_set = scale_dataset(train_set, scaler)
            test_set = scale_dataset(test_set, scaler)
            save_json(cfg.prepared_dir / "scaler.json", scaler.to_json())
            record("standardize", train_set, constant=scaler.to_json()["constant"])

        vocab = one_hot_fit(train_set.features, train_set.specs)
        train_set = encode_dataset(train_set, vocab)
        test_set = encode_dataset(test_set, vocab)
        save_json(cfg.prepared_dir / "encoder.json", vocab)
        record("one_hot", train_set)

        cols = numeric_columns(train_set)
        pairs, constant = correlation_pairs(
            train_set.features[:, cols],
            [train_set.specs[j].name for j in cols],
            cfg.filters.correlation_threshold,
        )
        stage_log.append(
            {
                "stage": "correlation",
                "threshold": cfg.filters.correlation_threshold,
                "pairs": [{"a": a, "b": b, "r": r} for a, b, r in pairs],
                "constant": constant,
            }
        )

        if cfg.smote.enabled:
            train_set = smote(train_set, cfg.smote.smote_config(derive_seed(cfg.seed, 2)))
            record("smote_train", train_set)

        if cfg.rfe.enabled:
            ranking, train_set = rfe(
                train_set,
                cfg.rfe.n_keep,
                cfg.rfe.step,
                hessian=cfg.rfe.hessian,
                verbose=cfg.verbose,
            )
            test_set = apply_ranking(test_set, ranking)
            save_json(cfg.prepared_dir / "ranking.json", ranking.to_json())
            record("rfe_train", train_set, kept=list(ranking.kept))

        record("final_test", test_set)
        train_set.to_csv(cfg.prepared_dir / "train.csv")
        test_set.to_csv(cfg.prepared_dir / "test.csv")
        save_json(cfg.prepared_dir / "stage_log.json", stage_log)

    def _fit_one(self, entry: Dict, dataset, seed: int, fitted: Dict[str, Classifier]):
        kind = entry["type"]
        models_cfg = self.config.models
        if kind == "linear":
            return fit_linear_discriminant(dataset)
        if kind == "logistic":
            return fit_logistic(dataset)
        if kind == "gaussian_nb":
            return fit_gaussian_nb(dataset)
        if kind == "ann":
            key = entry.get("preset", "deep_ann_1")
            preset = models_cfg.preset(key, PRESETS[key])
            return train(dataset, preset.layers(), preset.train_config(seed), models_cfg.verbose)
        if kind == "ensemble_ann":
            return ensemble_ann(
                dataset,
                models_cfg.preset("deep_ann_1", DEEP_ANN_1),
                models_cfg.preset("deep_ann_2", DEEP_ANN_2),
                seed,
                models_cfg.verbose,
            )

        missing = [m for m in entry["members"] if m not in fitted]
        if missing:
            raise PipelineStageError(f"members {missing} failed to train")
        members = [fitted[m] for m in entry["members"]]
        if kind == "hard_vote":
            return hard_vote(members)
        return soft_vote(members, entry.get("weights"))

    def train(self) -> None:
        cfg = self.config
        dataset = read_labeled_csv(cfg.prepared_dir / "train.csv")
        fitted: Dict[str, Classifier] = {}
        status: Dict[str, Dict] = {}

        for i, entry in enumerate(cfg.models.roster):
            name = entry["name"]
            seed = derive_seed(cfg.seed, 3, i)
            try:
                model = self._fit_one(entry, dataset, seed, fitted)
            except ChurnLabError as exc:
                logger.error(f"[Train] {name} failed: {exc}")
                status[name] = {"type": entry["type"], "status": "failed", "error": str(exc)}
                continue

            fitted[name] = model
            metadata = {
                "name": name,
                "type": entry["type"],
                "seed": seed,
                "feature_names": dataset.feature_names,
            }
            save_model(model, cfg.models_dir / f"{name}.json", metadata)
            self._save_loss_traces(name, model)
            status[name] = {"type": entry["type"], "status": "ok"}

        save_json(cfg.reports_dir / "train_log.json", status)
        if not fitted:
            raise PipelineStageError("every roster model failed")

    def _save_loss_traces(self, name: str, model: Classifier) -> None:
        if isinstance(model, NeuralNetwork):
            model.save_loss_trace(self.config.models_dir / "loss" / f"{name}.csv")
        for j, member in enumerate(getattr(model, "members", []), start=1):
            if isinstance(member, NeuralNetwork):
                member.save_loss_trace(self.config.models_dir / "loss" / f"{name}_member{j}.csv")

    def _oracle_auc(self, dataset) -> Optional[float]:
        cfg = self.config
        if cfg.window.count != 1:
            return None
        try:
            hazards, _ = read_corpus_truth(cfg.corpus_dir)
        except SynthError:
            return None

        p = oracle_churn_probability(
            hazards, dataset.member_ids, cfg.window.anchor_month, cfg.window.outcome_len
        )
        mask = np.isfinite(p)
        try:
            return auc(p[mask], dataset.labels[mask])
        except MetricsError as exc:
            logger.warning(f"[Evaluate] oracle AUC unavailable: {exc}")
            return None

    def evaluate(self) -> None:
        cfg = self.config
        dataset = read_labeled_csv(cfg.prepared_dir / "test.csv")
        threshold = cfg.metrics.threshold

        results = {}
        for model_path in list_models(cfg.models_dir):
            name = model_path.stem
            expected = load_metadata(model_path).get("feature_names")
            if expected is not None and expected != dataset.feature_names:
                raise PipelineStageError(f"{name} was trained on other columns than test.csv")

            probas = load_model(model_path).predict_proba(dataset.features)
            scores = evaluate_predictions(dataset.labels, probas, threshold)
            scores["recall"] = recall(confusion(dataset.labels, probas, threshold))
            results[name] = scores
            if cfg.metrics.roc:
                save_roc_csv(roc_points(probas, dataset.labels), cfg.reports_dir / f"roc_{name}.csv")
            logger.info(f"[Evaluate] {name}: acc {scores['test_acc']:.4f}, auc {scores['auc']:.4f}")

        if not results:
            raise PipelineStageError(f"no models under {cfg.models_dir}")

        report = {"threshold": threshold, "models": results, "oracle_auc": self._oracle_auc(dataset)}
        save_json(cfg.reports_dir / "metrics.json", report)

        table = pd.DataFrame(
            [{"model": name, **{k: results[name][k] for k in METRIC_COLUMNS}} for name in results]
        )
        table = table.sort_values(["test_acc", "model"], ascending=[False, True], kind="mergesort")
        table.to_csv(cfg.reports_dir / "comparison.csv", index=False, float_format="%.17g")

    def explain(self) -> None:
        cfg = self.config
        ex = cfg.explain
        dataset = read_labeled_csv(cfg.prepared_dir / "test.csv")
        model = load_model(cfg.models_dir / f"{ex.model}.json")

        features = ex.features or dataset.feature_names
        curves = {f: partial_dependence(model, dataset, f, ex.grid_size) for f in features}
        importances = permutation_importance(
            model, dataset, ex.metric, ex.n_repeats, derive_seed(cfg.seed, 4), cfg.verbose
        )
        candidates = shortlist_candidates(importances, curves, ex.top_k)

        save_pdp_csv(curves, cfg.explain_dir / "pdp.csv")
        save_json(
            cfg.explain_dir / "importances.json",
            [{"name": f.name, "mean_drop": f.mean_drop, "std": f.std} for f in importances],
        )
        save_json(
            cfg.explain_dir / "shortlist.json",
            {
                "model": ex.model,
                "candidates": [
                    {"name": c.name, "importance": c.importance, "direction": c.direction}
                    for c in candidates
                ],
                "queries": shortlist_to_queries(candidates),
            },
        )
        logger.info(f"[Explain] shortlist: {[c.name for c in candidates]}")

    def _attach_true_effects(self, report: Dict) -> None:
        """Add the simulated interventional effect to audit entries of planted-driver queries."""
        cfg = self.config
        if cfg.causal.data_path or cfg.window.count != 1:
            return
        try:
            _, truth = read_corpus_truth(cfg.corpus_dir)
            corpus_config = corpus_config_from_truth(truth)
        except SynthError as exc:
            logger.info(f"[Causal] no driver ground truth: {exc}")
            return

        for query, entry in zip(cfg.causal.treatment_queries(), report["audit"]):
            if query.rule.kind != "median" or query.treatment not in DRIVER_FEATURES.values():
                continue
            entry["true_effect"] = true_driver_effect(
                corpus_config,
                query.treatment,
                cfg.window.spec(),
                query.rule.direction,
                cfg.filters.min_tenure_months,
                cfg.filters.min_balance,
                seed=derive_seed(cfg.seed, 7),
            )

    def causal(self) -> None:
        cfg = self.config
        cc = cfg.causal
        frame = pd.read_csv(cfg.causal_data_path)
        graph = parse_graph(Path(cc.graph_path).read_text(encoding="utf-8"))

        estimates = run_causal_analysis(
            frame,
            graph,
            cc.treatment_queries(),
            cc.outcome,
            method=cc.method,
            clip=cc.clip,
            stabilized=cc.stabilized,
            fraction=cc.refuter_fraction,
            n_trials=cc.refuter_trials,
            stability_tol=cc.stability_tol,
            seed=derive_seed(cfg.seed, 5),
        )
        report = causal_report(estimates)
        self._attach_true_effects(report)
        save_json(cfg.reports_dir / "causal_report.json", report)
        for e in estimates:
            print(f"{e.treatment}: {e.ate} / {e.refuter_ate} -> {e.interpretation}")


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="churnlab")
    parser.add_argument("subcommand", choices=SUBCOMMANDS, help="Workflow stage to run.")
    parser.add_argument(
        "-c", "--config", type=str, required=True, help="The path of the JSON pipeline config."
    )
    parser.add_argument(
        "-o", "--out", type=str, default=None, help="Output directory, overrides output_dir."
    )
    parser.add_argument(
        "-s", "--seed", type=non_negative_int, default=None, help="Master seed, overrides seed."
    )
    parser.add_argument(
        "-t",
        "--threshold",
        type=float_range(0.0, 1.0),
        default=None,
        help="Decision threshold for evaluate, overrides metrics.threshold.",
    )
    parser.add_argument(
        "-v", "--verbose", action="store_true", default=False, help="Show progress bars."
    )
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config, args.out, args.seed)
        if args.verbose:
            config.verbose = True
            config.models.verbose = True
        if args.threshold is not None:
            if not 0 < args.threshold < 1:
                raise ConfigError(f"threshold must be in (0, 1), got {args.threshold}")
            config.metrics.threshold = args.threshold
        config.validate(args.subcommand)
    except ChurnLabError as exc:
        logger.error(f"[config] failed: {exc}")
        return 1

    try:
        ChurnPipeline(config)(args.subcommand)
    except PipelineStageError as exc:
        logger.error(str(exc))
        return 1
    return 0


class PipelineStageError(ChurnLabError):
    pass


if __name__ == "__main__":
    sys.exit(main())
