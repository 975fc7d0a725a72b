"""Command-line pipeline: split, augment, validate, evaluate, vote, search, report.

Exit codes: 0 success, 1 usage error, 2 data validation failure, 3 I/O
failure.  Failures emit one machine-readable JSON line on stderr.  Output
files are byte-identical across reruns with the same flags and inputs.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import augment, ensemble, manifest, metrics, predictions, report
from .errors import StorageError, ValidationError

MODES = ("soft", "hard", "abs", "rel", "bayes")


class UsageError(Exception):
    """Bad flags or flag combinations; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _comma_floats(text: str, flag: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",")]
    except ValueError:
        raise UsageError(f"{flag} expects comma-separated numbers, got '{text}'") from None


def _positive_class(classes, requested):
    if requested is None:
        return classes[0]
    if requested not in classes:
        raise ValidationError(f"unknown positive class '{requested}'; classes are {list(classes)}")
    return requested


def _model_accuracy(block) -> float:
    return block["accuracy"]


def _split_table_counts(mani: manifest.Manifest) -> list[list]:
    rows = []
    for split in manifest.SPLITS:
        counts = mani.class_counts(split)
        rows.append([split] + counts + [sum(counts)])
    return rows


# ---------------------------------------------------------------- commands


def cmd_split(args) -> int:
    mani = manifest.load_manifest(args.manifest)
    ratios = manifest.SplitRatios.parse(args.ratios)
    out = manifest.stratified_split(mani, ratios, args.seed)
    manifest.save_manifest(out, args.out)
    print(report.render_table(["split"] + list(out.classes) + ["total"], _split_table_counts(out)))
    print(f"wrote {args.out}")
    return 0


def cmd_plan_augment(args) -> int:
    mani = manifest.load_manifest(args.manifest)
    plan = augment.plan_balance(mani, args.seed)
    augment.save_plan(plan, args.out)
    counts = plan.counts()
    rows = [
        [split, counts.get((split, "hflip"), 0), counts.get((split, "vflip"), 0)]
        for split in manifest.SPLITS
    ]
    print(report.render_table(["split", "hflip", "vflip"], rows))
    print(f"wrote {args.out} ({len(plan.entries)} entries)")
    return 0


def cmd_apply_augment(args) -> int:
    mani = manifest.load_manifest(args.manifest)
    plan = augment.load_plan(args.plan)
    out = augment.execute_plan(plan, mani, args.src_dir, args.dst_dir)
    manifest.save_manifest(out, args.out)
    print(report.render_table(["split"] + list(out.classes) + ["total"], _split_table_counts(out)))
    print(f"wrote {len(plan.entries)} image(s) under {args.dst_dir}; manifest {args.out}")
    return 0


def cmd_validate_preds(args) -> int:
    mani = manifest.load_manifest(args.manifest)
    tables = []
    for path in args.preds:
        tables.append(predictions.load_predictions(path, mani, args.split))
    predictions.align(tables, mani, args.split)
    for path, table in zip(args.preds, tables):
        print(f"{path}: ok (model_id={table.model_id}, {len(table.rows)} rows)")
    return 0


def _metric_block(aligned, scores_2d, outputs, beta):
    cm = metrics.confusion_matrix(outputs, aligned.truth, aligned.classes)
    return report.model_metrics(
        cm,
        score_matrix=scores_2d,
        truth=aligned.truth,
        sample_ids=aligned.sample_ids,
        beta=beta,
    )


def _per_model_blocks(aligned, beta) -> dict:
    blocks = {}
    for i, mid in enumerate(aligned.model_ids):
        scores = aligned.scores[i]
        blocks[mid] = _metric_block(aligned, scores, np.argmax(scores, axis=1), beta)
    return blocks


def cmd_evaluate(args) -> int:
    mani = manifest.load_manifest(args.manifest)
    table = predictions.load_predictions(args.preds[0], mani, args.split)
    aligned = predictions.align([table], mani, args.split)
    positive = _positive_class(aligned.classes, args.positive_class)
    block = _per_model_blocks(aligned, args.beta)[table.model_id]
    doc = {
        "schema": report.SCHEMA,
        "command": "evaluate",
        "classes": list(aligned.classes),
        "models": [table.model_id],
        "per_model_metrics": {table.model_id: {args.split: block}},
        "ensemble_metrics": None,
        "weights": None,
        "search": None,
        "seeds": {},
        "beta": args.beta,
        "positive_class": positive,
        "inputs": {args.preds[0]: report.sha256_file(args.preds[0]),
                   args.manifest: report.sha256_file(args.manifest)},
    }
    if len(aligned.classes) == 2:
        cm = metrics.ConfusionMatrix(aligned.classes, np.array(block["confusion"]["counts"]))
        doc["binary"] = report.binary_summary(cm, positive)
    report.write(doc, args.out)
    print(_render_rows(doc, positive))
    print(f"wrote {args.out}")
    return 0


def _vote_once(aligned, mode, weights, accuracies, priors):
    """Run one combination strategy; returns (labels, row-stochastic scores or None, extras)."""
    n_models = aligned.n_models
    extras = {}
    if mode in ("soft", "hard"):
        if weights is None:
            raise UsageError(f"--weights is required with --mode {mode}")
        if len(weights) != n_models:
            raise ValidationError(f"got {len(weights)} weights for {n_models} tables")
        w = np.asarray(weights, dtype=np.float64)
        tensor = aligned.scores if mode == "soft" else ensemble.one_hot_outputs(aligned.scores)
        combined = ensemble.combined_scores(tensor, w)
        labels = np.argmax(combined, axis=1)
        # report the normalized form; the argmax is scale invariant
        norm = w / w.sum()
        extras["weights"] = {mid: float(norm[i]) for i, mid in enumerate(aligned.model_ids)}
        return labels, combined / combined.sum(axis=1, keepdims=True), extras
    if mode == "abs":
        labels = ensemble.hard_vote_absolute(aligned.scores)
        extras["reject"] = {
            "count": int((labels == ensemble.REJECT).sum()),
            "decided": int((labels != ensemble.REJECT).sum()),
        }
        return labels, None, extras
    if mode == "rel":
        labels = ensemble.hard_vote_relative(aligned.scores)
        counts = ensemble.combined_scores(ensemble.one_hot_outputs(aligned.scores), np.ones(n_models))
        return labels, counts / n_models, extras
    if mode == "bayes":
        if accuracies is None or priors is None:
            raise UsageError("--accuracies and --priors are required with --mode bayes")
        if len(accuracies) != n_models:
            raise ValidationError(f"got {len(accuracies)} accuracies for {n_models} tables")
        combined = ensemble.bayes_combined_scores(
            ensemble.one_hot_outputs(aligned.scores), accuracies, priors
        )
        labels = np.argmax(combined, axis=1)
        # softmax turns the log-space scores back into the modelled posterior
        shifted = np.exp(combined - combined.max(axis=1, keepdims=True))
        extras["accuracies"] = list(map(float, accuracies))
        extras["priors"] = list(map(float, priors))
        return labels, shifted / shifted.sum(axis=1, keepdims=True), extras
    raise UsageError(f"unknown mode '{mode}'; choose from {', '.join(MODES)}")


def cmd_vote(args) -> int:
    mani = manifest.load_manifest(args.manifest)
    tables = [predictions.load_predictions(p, mani, args.split) for p in args.preds]
    aligned = predictions.align(tables, mani, args.split)
    positive = _positive_class(aligned.classes, args.positive_class)
    weights = _comma_floats(args.weights, "--weights") if args.weights else None
    accuracies = _comma_floats(args.accuracies, "--accuracies") if args.accuracies else None
    priors = _comma_floats(args.priors, "--priors") if args.priors else None
    if args.out_preds and args.mode == "abs":
        raise UsageError("--out-preds is not available with --mode abs (rejected samples have no scores)")

    labels, combined, extras = _vote_once(aligned, args.mode, weights, accuracies, priors)
    ens_block = _metric_block(aligned, combined, labels, args.beta)
    if "reject" in extras:
        # rejected forecasts are never counted as correct
        correct = int((labels == aligned.truth).sum())
        extras["reject"]["overall_accuracy"] = correct / aligned.n_samples
        extras["reject"]["overall_accuracy_display"] = report.display(correct / aligned.n_samples)
    doc = {
        "schema": report.SCHEMA,
        "command": "vote",
        "mode": args.mode,
        "classes": list(aligned.classes),
        "models": aligned.model_ids,
        "per_model_metrics": {
            mid: {args.split: block} for mid, block in _per_model_blocks(aligned, args.beta).items()
        },
        "ensemble_metrics": {args.split: ens_block},
        "weights": extras.get("weights"),
        "search": None,
        "seeds": {},
        "beta": args.beta,
        "positive_class": positive,
        "inputs": {p: report.sha256_file(p) for p in [args.manifest] + list(args.preds)},
    }
    for key in ("reject", "accuracies", "priors"):
        if key in extras:
            doc[key] = extras[key]
    report.write(doc, args.out)
    if args.out_preds:
        out_table = predictions.PredictionTable(
            model_id=f"ensemble-{args.mode}",
            classes=aligned.classes,
            rows={sid: combined[i] for i, sid in enumerate(aligned.sample_ids)},
        )
        predictions.save_predictions(out_table, args.out_preds)
    print(_render_rows(doc, positive))
    print(f"wrote {args.out}")
    return 0


def cmd_search(args) -> int:
    mani = manifest.load_manifest(args.manifest)
    val_tables = [predictions.load_predictions(p, mani, "val") for p in args.preds]
    aligned_val = predictions.align(val_tables, mani, "val")
    positive = _positive_class(aligned_val.classes, args.positive_class)

    per_model_val = _per_model_blocks(aligned_val, args.beta)
    kept_ids = aligned_val.model_ids
    if args.keep is not None:
        values = {mid: _model_accuracy(per_model_val[mid]) for mid in aligned_val.model_ids}
        kept_ids = ensemble.prune(values, args.keep)
    kept_tables = [t for t in val_tables if t.model_id in set(kept_ids)]
    aligned_kept = predictions.align(kept_tables, mani, "val")

    result = ensemble.search_weights(
        aligned_kept.scores, aligned_kept.truth, step=args.step, workers=args.workers
    )
    w = result.best_weights
    val_combined = ensemble.combined_scores(aligned_kept.scores, w)
    val_labels = np.argmax(val_combined, axis=1)
    ens_metrics = {
        "val": _metric_block(
            aligned_kept, val_combined / val_combined.sum(axis=1, keepdims=True), val_labels, args.beta
        )
    }

    per_model = {mid: {"val": block} for mid, block in per_model_val.items()}
    inputs = {p: report.sha256_file(p) for p in [args.manifest] + list(args.preds)}
    if args.test_preds:
        test_tables = [predictions.load_predictions(p, mani, "test") for p in args.test_preds]
        aligned_test = predictions.align(test_tables, mani, "test")
        by_id = {t.model_id: t for t in test_tables}
        missing = [mid for mid in kept_ids if mid not in by_id]
        if missing:
            raise ValidationError(f"--test-preds missing kept model(s): {', '.join(missing)}")
        for mid, block in _per_model_blocks(aligned_test, args.beta).items():
            per_model.setdefault(mid, {})["test"] = block
        aligned_test_kept = predictions.align([by_id[mid] for mid in kept_ids], mani, "test")
        test_combined = ensemble.combined_scores(aligned_test_kept.scores, w)
        test_labels = np.argmax(test_combined, axis=1)
        ens_metrics["test"] = _metric_block(
            aligned_test_kept,
            test_combined / test_combined.sum(axis=1, keepdims=True),
            test_labels,
            args.beta,
        )
        inputs.update({p: report.sha256_file(p) for p in args.test_preds})

    doc = {
        "schema": report.SCHEMA,
        "command": "search",
        "classes": list(aligned_val.classes),
        "models": aligned_val.model_ids,
        "kept_models": kept_ids,
        "per_model_metrics": per_model,
        "ensemble_metrics": ens_metrics,
        "weights": {mid: float(w[i]) for i, mid in enumerate(kept_ids)},
        "search": {
            "objective": "accuracy",
            "step": f"1/{result.denominator}",
            "numerators": list(result.numerators),
            "denominator": result.denominator,
            "weight_fractions": result.weight_fractions(),
            "evaluated_count": result.evaluated_count,
            "tie_count": result.tie_count,
            "correct": result.correct,
            "n_samples": result.n_samples,
            "best_objective": result.best_objective,
            "best_objective_display": report.display(result.best_objective),
        },
        "seeds": {"search": args.seed},
        "beta": args.beta,
        "positive_class": positive,
        "inputs": inputs,
    }
    report.write(doc, args.out)
    print(_render_rows(doc, positive))
    print(
        f"best weights {result.weight_fractions()} "
        f"(accuracy {report.display(result.best_objective)} on val, "
        f"{result.tie_count} tie(s), {result.evaluated_count} grid points)"
    )
    print(f"wrote {args.out}")
    return 0


def _rows_from_doc(doc) -> list[dict]:
    rows = []
    source = doc.get("command", "?")
    for mid, by_split in (doc.get("per_model_metrics") or {}).items():
        for split, block in by_split.items():
            rows.append({"label": mid, "source": source, "split": split, "block": block})
    ens = doc.get("ensemble_metrics") or {}
    label = "ensemble" if source != "vote" else f"ensemble[{doc.get('mode')}]"
    for split, block in ens.items():
        rows.append({"label": label, "source": source, "split": split, "block": block})
    return rows


def _render_rows(doc, positive) -> str:
    headers = ["model", "split", "accuracy", "precision", "recall", "f1", "mAP"]
    out = []
    for row in _rows_from_doc(doc):
        block = row["block"]
        per_class = block["per_class"].get(positive, {})
        out.append(
            [
                row["label"],
                row["split"],
                block.get("accuracy_display"),
                per_class.get("precision_display"),
                per_class.get("recall_display"),
                per_class.get("f1_display"),
                block.get("map_display"),
            ]
        )
    return report.render_table(headers, out)


def cmd_report(args) -> int:
    docs = [report.load(p) for p in args.inputs]
    positive = args.positive_class
    rows = []
    for path, doc in zip(args.inputs, docs):
        pos = positive or doc.get("positive_class") or doc["classes"][0]
        for row in _rows_from_doc(doc):
            block = row["block"]
            per_class = block["per_class"].get(pos, {})
            rows.append(
                {
                    "source": path,
                    "command": row["source"],
                    "label": row["label"],
                    "split": row["split"],
                    "positive_class": pos,
                    "accuracy": block.get("accuracy"),
                    "precision": per_class.get("precision"),
                    "recall": per_class.get("recall"),
                    "f1": per_class.get("f1"),
                    "map": block.get("map"),
                }
            )
    doc = {
        "schema": report.SCHEMA,
        "command": "report",
        "rows": rows,
        "inputs": {p: report.sha256_file(p) for p in args.inputs},
    }
    report.write(doc, args.out)
    headers = ["model", "command", "split", "accuracy", "precision", "recall", "f1", "mAP"]
    table = [
        [
            r["label"],
            r["command"],
            r["split"],
            report.display(r["accuracy"]),
            report.display(r["precision"]),
            report.display(r["recall"]),
            report.display(r["f1"]),
            report.display(r["map"]),
        ]
        for r in rows
    ]
    print(report.render_table(headers, table))
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------- wiring


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ensemblekit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("split", help="assign train/val/test splits stratified by class")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ratios", required=True, help="train:val:test, e.g. 7:1:2")
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("plan-augment", help="plan flip augmentations that balance both classes")
    p.add_argument("--manifest", required=True)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plan_augment)

    p = sub.add_parser("apply-augment", help="execute a flip plan and extend the manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--src-dir", required=True)
    p.add_argument("--dst-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_apply_augment)

    p = sub.add_parser("validate-preds", help="check prediction files against a manifest split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", required=True, choices=manifest.SPLITS)
    p.add_argument("--preds", required=True, nargs="+")
    p.set_defaults(func=cmd_validate_preds)

    p = sub.add_parser("evaluate", help="score one prediction table against the manifest truth")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", required=True, choices=manifest.SPLITS)
    p.add_argument("--preds", required=True, nargs=1)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--positive-class")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("vote", help="combine tables with a voting strategy")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", required=True, choices=manifest.SPLITS)
    p.add_argument("--preds", required=True, nargs="+")
    p.add_argument("--mode", required=True, choices=MODES)
    p.add_argument("--weights", help="comma-separated, one per table (soft/hard modes)")
    p.add_argument("--accuracies", help="comma-separated p_i in (0,1) (bayes mode)")
    p.add_argument("--priors", help="comma-separated class priors summing to 1 (bayes mode)")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--positive-class")
    p.add_argument("--out", required=True)
    p.add_argument("--out-preds", help="also write the combined scores as a prediction table")
    p.set_defaults(func=cmd_vote)

    p = sub.add_parser("search", help="exhaustive quantized weight search on the val split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--preds", required=True, nargs="+", help="validation-split tables")
    p.add_argument("--test-preds", nargs="+", help="test-split tables for the final report")
    p.add_argument("--step", default="0.01")
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--keep", type=int, help="prune to the best N tables by val accuracy first")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--positive-class")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("report", help="merge report documents into one comparison table")
    p.add_argument("--inputs", required=True, nargs="+")
    p.add_argument("--positive-class")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def _fail(code: int, kind: str, message: str) -> int:
    print(json.dumps({"code": code, "error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        return _fail(1, "usage", str(exc))
    except ValidationError as exc:
        return _fail(2, "validation", str(exc))
    except StorageError as exc:
        return _fail(3, "io", str(exc))


if __name__ == "__main__":
    sys.exit(main())
