"""Command-line pipeline: synth, ingest, features, split, train, score,
eval, permtest, shap, report.

Configuration precedence is flags > config file > defaults; the config file
is plain ``key = value`` text (PURISK_CONFIG names a default path). Exit
codes: 0 success, 2 usage, 3 data error, 4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__
from .attribution import dependence_export, global_importance, treeshap
from .domain import (
    CONTRACT_COLUMNS,
    CsvSchema,
    LabeledDataset,
    SchemaError,
    apply_labels,
    apply_labels_with_cutoff,
    parse_contracts,
    parse_sanctions,
)
from .features import load_feature_matrix, save_feature_matrix
from .manifest import RunManifest, config_hash, sha256_file
from .modelio import ModelFormatError, load_model
from .pipeline import FeatureConfig, build_features
from .pulearn import (
    CalibratedScorer,
    HdsrfConfig,
    PuBaggingConfig,
    calibrate,
    hdsrf_predict,
    hdsrf_train,
    pubag_score,
    pubag_train,
)
from .pulearn.bagging import PuBaggingModel
from .pulearn.forest import HdsrfModel
from .ranking import evaluate_ranking, permutation_test
from .sampling import plan_company_split, temporal_split
from .svgplot import render_curves, render_scatter
from .synth import SynthConfig, concentration_report, generate

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4


class DataError(ValueError):
    pass


# ------------------------------------------------------------ config file


def read_config_file(path) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"config line without '=': {raw.strip()!r}")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip().strip('"')
    return values


def resolve(args, key: str, default, cast=str):
    """flags > config file > default."""
    flag = getattr(args, key.replace("-", "_"), None)
    if flag is not None:
        return flag
    if key in args._config_file_values:
        return cast(args._config_file_values[key])
    return default


# ------------------------------------------------------------ shared io


def record_to_row(c, label=None) -> list[str]:
    def d(x):
        return x.isoformat() if x is not None else ""

    row = [
        c.contract_id,
        c.buyer_id,
        c.supplier_id,
        c.sign_date.isoformat(),
        repr(float(c.price)),
        c.procedure_type,
        c.direct_origin,
        c.supply_type or "",
        c.legal_framework or "",
        d(c.tender_publication_date),
        d(c.submission_deadline),
        d(c.decision_date),
        "" if c.n_bidders is None else str(c.n_bidders),
        c.supplier_size or "",
        c.venue or "",
    ]
    if label is not None:
        row.append(str(int(label)))
    return row


def load_labeled_dataset(path) -> LabeledDataset:
    with open(path) as fh:
        dataset, report = parse_contracts(fh)
    if report.n_rejected:
        raise DataError(f"{path}: {report.n_rejected} rows no longer parse; re-run ingest")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if "label" not in (reader.fieldnames or []):
            raise DataError(f"{path} lacks the label column; run ingest first")
        labels = np.array([int(r["label"]) for r in reader], dtype=np.int8)
    return dataset.with_labels(labels)


def load_split(path) -> dict:
    with open(path) as fh:
        payload = json.load(fh)
    for key in ("train_indices", "test_indices", "calibration_indices"):
        payload[key] = np.array(payload.get(key, []), dtype=np.int64)
    for key in ("train_labels", "test_labels"):
        if key in payload:
            payload[key] = np.array(payload[key], dtype=np.int8)
    return payload


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def manifest_for(args, command, config) -> RunManifest:
    return RunManifest(command=command, config=config, tool_version=__version__)


# ------------------------------------------------------------ commands


def cmd_synth(args):
    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)
    years = tuple(int(y) for y in parse_year_range(resolve(args, "years", "2015-2019")))
    config = SynthConfig(
        n_buyers=int(resolve(args, "buyers", 200)),
        n_suppliers=int(resolve(args, "suppliers", 2000)),
        years=years,
        contracts_per_year=int(resolve(args, "contracts-per-year", 10_000)),
        fraud_fraction=float(resolve(args, "fraud-fraction", 0.10)),
        sanction_rate=float(resolve(args, "sanction-rate", 0.5)),
        n_core_buyers=int(resolve(args, "core-buyers", 20)),
        seed=int(resolve(args, "seed", 0)),
    )
    out = generate(config)
    manifest = manifest_for(args, "synth", config.__dict__ | {"years": list(years)})
    paths = {}
    for name, text in [
        ("contracts.csv", out.contracts_csv),
        ("sanctions.csv", out.sanctions_csv),
        ("ground_truth.csv", out.ground_truth_csv),
    ]:
        path = os.path.join(out_dir, name)
        with open(path, "w") as fh:
            fh.write(text)
        manifest.add_output(path)
        paths[name] = path
    manifest.stage_done("generate")
    manifest.write(os.path.join(out_dir, "synth.manifest.json"))
    dataset, _ = parse_contracts(out.contracts_csv)
    print(f"synth: {len(dataset)} contracts, {out.notes['n_sanctioned']} sanctioned suppliers")
    print(f"synth: concentration {concentration_report(dataset.supplier_ids)}")
    return EXIT_OK


def cmd_ingest(args):
    os.makedirs(args.out_dir, exist_ok=True)
    schema = CsvSchema(
        year_min=int(resolve(args, "year-min", 2000)),
        year_max=int(resolve(args, "year-max", 2100)),
    )
    manifest = manifest_for(args, "ingest", {"schema": schema.__dict__})
    manifest.add_input(args.contracts)
    manifest.add_input(args.sanctions)
    with open(args.contracts) as fh:
        dataset, report = parse_contracts(fh, schema)
    with open(args.sanctions) as fh:
        sanctions, sanction_report = parse_sanctions(fh)
    cutoff = resolve(args, "sanction-cutoff", None)
    if cutoff is not None:
        labeled = apply_labels_with_cutoff(dataset, sanctions, int(cutoff))
    else:
        labeled = apply_labels(dataset, sanctions)
    manifest.stage_done("parse")

    out_csv = os.path.join(args.out_dir, "labeled.csv")
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(CONTRACT_COLUMNS) + ["label"])
        for c, label in zip(labeled.contracts, labeled.labels):
            writer.writerow(record_to_row(c, label))
    report_path = os.path.join(args.out_dir, "ingest_report.json")
    write_json(
        report_path,
        {
            "schema_version": 1,
            "n_accepted": report.n_accepted,
            "n_rejected": report.n_rejected,
            "rejections": [{"row": r, "reason": m} for r, m in report.rejections[:1000]],
            "sanction_rows_rejected": sanction_report.n_rejected,
            "n_positive": int(labeled.labels.sum()),
            "prevalence_by_year": {str(k): v for k, v in labeled.prevalence_by_year().items()},
            "notes": labeled.report.notes,
        },
    )
    manifest.add_output(out_csv)
    manifest.add_output(report_path)
    manifest.stage_done("write")
    manifest.write(os.path.join(args.out_dir, "ingest.manifest.json"))
    print(
        f"ingest: accepted {report.n_accepted}, rejected {report.n_rejected}, "
        f"positives {int(labeled.labels.sum())}"
    )
    return EXIT_OK


def cmd_features(args):
    os.makedirs(args.out_dir, exist_ok=True)
    dataset = load_labeled_dataset(args.dataset)
    config = FeatureConfig(
        exact_threshold=int(resolve(args, "exact-threshold", 2000)),
        n_pivots=int(resolve(args, "pivots", 256)),
        seed=int(resolve(args, "seed", 0)),
    )
    manifest = manifest_for(args, "features", config.__dict__)
    manifest.add_input(args.dataset)
    build = build_features(dataset, config)
    manifest.stage_done("build")
    csv_path = os.path.join(args.out_dir, "features.csv")
    man_path = os.path.join(args.out_dir, "features.manifest.json")
    save_feature_matrix(
        build.matrix,
        csv_path,
        man_path,
        {
            "dataset_hash": sha256_file(args.dataset),
            "config": config.__dict__,
            "config_hash": config_hash(config.__dict__),
        },
    )
    manifest.add_output(csv_path)
    manifest.add_output(man_path)

    if args.edge_list:
        edge_path = os.path.join(args.out_dir, "edges.csv")
        with open(edge_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["year", "buyer_id", "supplier_id", "weight", "spend"])
            for year in sorted(build.networks):
                g = build.networks[year].graph
                for i in range(g.n_edges):
                    writer.writerow(
                        [
                            year,
                            g.buyer_ids[g.edge_buyer[i]],
                            g.supplier_ids[g.edge_supplier[i]],
                            int(g.edge_weight[i]),
                            repr(float(g.edge_spend[i])),
                        ]
                    )
        manifest.add_output(edge_path)

    if dataset.labels.any():
        from .domain import label_similarity_diagnostic

        diag = label_similarity_diagnostic(
            dataset, build.matrix.values, build.matrix.column_kinds()
        )
        sim_path = os.path.join(args.out_dir, "label_similarity.json")
        write_json(
            sim_path,
            {
                "schema_version": 1,
                "summary": diag.summary(),
                "n_excluded_single_contract": diag.n_excluded_single_contract,
                "per_supplier": {
                    s: {"n_contracts": n, "mean_distance": m, "median_distance": md}
                    for s, (n, m, md) in sorted(diag.per_supplier.items())
                },
            },
        )
        manifest.add_output(sim_path)

    manifest.stage_done("write")
    manifest.write(os.path.join(args.out_dir, "features.run.json"))
    print(f"features: {build.matrix.n_rows} rows x {len(build.matrix.columns)} columns")
    return EXIT_OK


def cmd_split(args):
    dataset = load_labeled_dataset(args.dataset)
    mode = resolve(args, "mode", "company")
    seed = int(resolve(args, "seed", 0))
    if mode == "company":
        plan = plan_company_split(
            dataset,
            test_fraction=float(resolve(args, "test-fraction", 0.30)),
            k=int(resolve(args, "folds", 4)),
            top_fraction=float(resolve(args, "top-fraction", 0.05)),
            cap_quantile=float(resolve(args, "cap-quantile", 0.95)),
            seed=seed,
        )
        payload = {
            "schema_version": 1,
            "mode": "company",
            "train_indices": plan.train_indices.tolist(),
            "test_indices": plan.test_indices.tolist(),
            "calibration_indices": plan.calibration_indices.tolist(),
            "fold_assignment": plan.fold_assignment,
            "undersample_cap": plan.undersample_cap,
            "seed": plan.seed,
            "params": plan.params,
        }
    elif mode == "temporal":
        if args.sanctions is None:
            raise DataError("temporal mode needs --sanctions")
        with open(args.sanctions) as fh:
            sanctions, _ = parse_sanctions(fh)
        train_years = parse_year_range(resolve(args, "train-years", None))
        if not train_years:
            raise DataError("temporal mode needs --train-years")
        split = temporal_split(
            dataset,
            sanctions,
            train_years,
            int(resolve(args, "test-year", 0)),
            int(resolve(args, "sanction-cutoff", max(train_years))),
        )
        payload = {
            "schema_version": 1,
            "mode": "temporal",
            "train_indices": split.train_indices.tolist(),
            "test_indices": split.test_indices.tolist(),
            "calibration_indices": [],
            "train_labels": split.train_labels.tolist(),
            "test_labels": split.test_labels.tolist(),
            "params": {
                "train_years": list(split.train_years),
                "test_year": split.test_year,
                "sanction_cutoff": split.sanction_cutoff,
            },
            "seed": seed,
        }
    else:
        raise DataError(f"unknown split mode {mode!r}")
    write_json(args.out, payload)
    manifest = manifest_for(args, "split", {"mode": mode, "seed": seed})
    manifest.add_input(args.dataset)
    manifest.add_output(args.out)
    manifest.write(args.out + ".manifest.json")
    print(f"split: mode={mode} train={len(payload['train_indices'])} test={len(payload['test_indices'])}")
    return EXIT_OK


def _load_features_checked(args):
    man_path = args.features_manifest or default_manifest_path(args.features)
    fm = load_feature_matrix(args.features, man_path)
    return fm, man_path


def default_manifest_path(features_path: str) -> str:
    base = features_path[:-4] if features_path.endswith(".csv") else features_path
    return base + ".manifest.json"


def cmd_train(args):
    dataset = load_labeled_dataset(args.dataset)
    fm, man_path = _load_features_checked(args)
    if fm.contract_ids != [c.contract_id for c in dataset.contracts]:
        raise DataError("features.csv rows are not aligned with the dataset")
    split = load_split(args.split)
    train_rows = split["train_indices"]
    if len(train_rows) == 0:
        raise DataError("split has an empty training set")
    labels = dataset.labels.copy()
    if split["mode"] == "temporal":
        labels = np.zeros(len(dataset), dtype=np.int8)
        labels[train_rows] = split["train_labels"]
    manifest_hash = sha256_file(man_path)
    workers = int(resolve(args, "workers", 1))
    seed = int(resolve(args, "seed", 0))

    model_kind = args.model
    if model_kind == "hdsrf":
        config = HdsrfConfig(
            class_prior=float(resolve(args, "class-prior", 0.05)),
            n_estimators=int(resolve(args, "trees", 1000)),
            max_depth=int(resolve(args, "max-depth", 8)),
            max_features=parse_max_features(resolve(args, "max-features", "sqrt")),
            min_samples_split=int(resolve(args, "min-samples-split", 2)),
            seed=seed,
        )
        model = hdsrf_train(
            fm.values[train_rows],
            labels[train_rows],
            config,
            feature_columns=fm.columns,
            feature_manifest_hash=manifest_hash,
            n_workers=workers,
        )
        config_echo = config.__dict__
    elif model_kind == "pubag":
        config = PuBaggingConfig(
            n_estimators=int(resolve(args, "estimators", 500)),
            rff_gamma=float(resolve(args, "gamma", 0.01)),
            rff_components=int(resolve(args, "components", 200)),
            sgd_max_iter=int(resolve(args, "sgd-max-iter", 1000)),
            sgd_lambda=float(resolve(args, "sgd-lambda", 1e-4)),
            aggregation=resolve(args, "aggregation", "vote_fraction"),
            seed=seed,
        )
        model = pubag_train(
            fm.values[train_rows],
            labels[train_rows],
            config,
            feature_columns=fm.columns,
            feature_manifest_hash=manifest_hash,
            n_workers=workers,
        )
        config_echo = config.__dict__
    else:
        raise DataError(f"unknown model {model_kind!r}")

    manifest = manifest_for(
        args, "train", {"model": model_kind, "workers": workers} | dict(config_echo)
    )
    manifest.add_input(args.features)
    manifest.add_input(args.dataset)
    manifest.add_input(args.split)
    model.save(args.out)
    manifest.stage_done("train")
    manifest.add_output(args.out)

    calib_rows = split.get("calibration_indices", np.empty(0, dtype=np.int64))
    if len(calib_rows) and args.calibration_out:
        raw = _model_scores(model_kind, model, fm.values[calib_rows], None, None)
        scorer = calibrate(raw, dataset.labels[calib_rows])
        write_json(
            args.calibration_out,
            {
                "schema_version": 1,
                "identity": scorer.identity,
                "warning": scorer.warning,
                "block_starts": scorer.block_starts.tolist(),
                "values": scorer.values.tolist(),
            },
        )
        manifest.add_output(args.calibration_out)
        manifest.stage_done("calibrate")
    manifest.write(args.out + ".manifest.json")
    print(f"train: {model_kind} on {len(train_rows)} rows -> {args.out}")
    return EXIT_OK


def parse_max_features(raw):
    return raw if raw == "sqrt" else int(raw)


def parse_year_range(raw) -> list[int]:
    if raw is None:
        return []
    raw = str(raw)
    if "-" in raw:
        a, b = raw.split("-", 1)
        return list(range(int(a), int(b) + 1))
    return [int(x) for x in raw.split(",") if x]


def _load_any_model(path):
    header, _ = load_model(path)
    if header["kind"] == "hdsrf":
        return "hdsrf", HdsrfModel.load(path)
    if header["kind"] == "pubag":
        return "pubag", PuBaggingModel.load(path)
    raise DataError(f"unknown model kind {header['kind']!r}")


def _model_scores(kind, model, values, mode, row_ids):
    if kind == "hdsrf":
        return hdsrf_predict(model, values)
    scores, _ = pubag_score(model, values, mode=mode or "test", row_ids=row_ids)
    return scores


def cmd_score(args):
    kind, model = _load_any_model(args.model)
    fm, man_path = _load_features_checked(args)
    if model.feature_manifest_hash and model.feature_manifest_hash != sha256_file(man_path):
        raise DataError(
            "feature manifest hash does not match the one the model was trained with"
        )
    rows = np.arange(fm.n_rows)
    if args.split:
        split = load_split(args.split)
        subset = resolve(args, "subset", "test")
        key = {"train": "train_indices", "test": "test_indices", "calibration": "calibration_indices"}
        if subset != "all":
            rows = split[key[subset]]
    mode = resolve(args, "mode", "test")
    row_ids = rows if mode == "transductive" else None
    scores = _model_scores(kind, model, fm.values[rows], mode, row_ids)

    calibrated = None
    if args.calibration:
        with open(args.calibration) as fh:
            payload = json.load(fh)
        scorer = CalibratedScorer(
            block_starts=np.array(payload["block_starts"]),
            values=np.array(payload["values"]),
            identity=payload["identity"],
            warning=payload.get("warning"),
        )
        calibrated = scorer.apply(scores)

    manifest = manifest_for(args, "score", {"mode": mode, "subset": args.subset or "all"})
    manifest.add_input(args.model)
    manifest.add_input(args.features)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["contract_id", "score"] + (["calibrated"] if calibrated is not None else [])
        writer.writerow(header)
        for i, r in enumerate(rows):
            line = [fm.contract_ids[r], repr(float(scores[i]))]
            if calibrated is not None:
                line.append(repr(float(calibrated[i])))
            writer.writerow(line)
    manifest.add_output(args.out)
    manifest.stage_done("score")
    manifest.write(args.out + ".manifest.json")
    print(f"score: {kind} scored {len(rows)} rows -> {args.out}")
    return EXIT_OK


def cmd_eval(args):
    dataset = load_labeled_dataset(args.dataset)
    label_of = dict(zip((c.contract_id for c in dataset.contracts), dataset.labels))
    ids, scores = [], []
    with open(args.scores, newline="") as fh:
        reader = csv.DictReader(fh)
        column = resolve(args, "column", "score")
        if column not in (reader.fieldnames or []):
            raise DataError(f"score file lacks column {column!r}")
        for row in reader:
            ids.append(row["contract_id"])
            scores.append(float(row[column]))
    try:
        labels = np.array([label_of[i] for i in ids], dtype=np.int8)
    except KeyError as exc:
        raise DataError(f"score row references unknown contract {exc}")
    if labels.sum() == 0:
        raise DataError("no known positives among scored rows")
    ev = evaluate_ranking(labels, np.array(scores))

    sample = ev.curve_points(n_uniform=1000)
    curves_path = args.curves or (args.out[:-5] + ".curves.csv" if args.out.endswith(".json") else args.out + ".curves.csv")
    with open(curves_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "fraction", "robust_cumsum", "null_cumsum", "gain", "lift"])
        for k in sample:
            i = int(k) - 1
            writer.writerow(
                [
                    int(k),
                    repr(float(k / ev.n)),
                    int(ev.robust_cumsum[i]),
                    repr(float(ev.null_cumsum[i])),
                    repr(float(ev.gain[i])),
                    repr(float(ev.lift[i])),
                ]
            )
    write_json(
        args.out,
        {
            "schema_version": 1,
            "n": ev.n,
            "n_positive": ev.n_positive,
            "avg_gain": ev.avg_gain,
            "avg_lift": ev.avg_lift,
            "n_tie_groups": int(len(ev.group_bounds)),
            "largest_tie_block": int(np.diff(np.r_[0, ev.group_bounds]).max()),
            "curves_csv": os.path.basename(curves_path),
        },
    )
    manifest = manifest_for(args, "eval", {"column": resolve(args, "column", "score")})
    manifest.add_input(args.scores)
    manifest.add_input(args.dataset)
    manifest.add_output(args.out)
    manifest.add_output(curves_path)
    manifest.write(args.out + ".manifest.json")
    print(f"eval: n={ev.n} P={ev.n_positive} avg_gain={ev.avg_gain:.4f} avg_lift={ev.avg_lift:.4f}")
    return EXIT_OK


def cmd_permtest(args):
    dataset = load_labeled_dataset(args.dataset)
    fm, man_path = _load_features_checked(args)
    split = load_split(args.split)
    train_rows = split["train_indices"]
    test_rows = split["test_indices"]
    eval_mask = np.zeros(len(dataset), dtype=bool)
    eval_mask[test_rows] = True
    workers = int(resolve(args, "workers", 1))
    seed = int(resolve(args, "seed", 0))
    model_kind = args.model
    n_perm = int(resolve(args, "permutations", 99))

    if model_kind == "hdsrf":
        config = HdsrfConfig(
            class_prior=float(resolve(args, "class-prior", 0.05)),
            n_estimators=int(resolve(args, "trees", 100)),
            max_depth=int(resolve(args, "max-depth", 8)),
            seed=seed,
        )

        def train_predict(labels):
            model = hdsrf_train(
                fm.values[train_rows], labels[train_rows], config, n_workers=workers
            )
            return hdsrf_predict(model, fm.values[test_rows])

    elif model_kind == "pubag":
        config = PuBaggingConfig(
            n_estimators=int(resolve(args, "estimators", 100)),
            rff_gamma=float(resolve(args, "gamma", 0.01)),
            rff_components=int(resolve(args, "components", 200)),
            seed=seed,
        )

        def train_predict(labels):
            model = pubag_train(
                fm.values[train_rows], labels[train_rows], config, n_workers=workers
            )
            scores, _ = pubag_score(model, fm.values[test_rows])
            return scores

    else:
        raise DataError(f"unknown model {model_kind!r}")

    positive_suppliers = set(dataset.supplier_ids[dataset.labels == 1].tolist())
    result = permutation_test(
        train_predict,
        dataset.supplier_ids,
        positive_suppliers,
        eval_mask,
        n_permutations=n_perm,
        seed=seed,
    )
    write_json(
        args.out,
        {
            "schema_version": 1,
            "model": model_kind,
            "n_permutations": result.n_permutations,
            "observed_avg_gain": result.observed_avg_gain,
            "observed_avg_lift": result.observed_avg_lift,
            "p_value_gain": result.p_value_gain,
            "p_value_lift": result.p_value_lift,
            "permuted_avg_gain": result.permuted_avg_gain.tolist(),
            "permuted_avg_lift": result.permuted_avg_lift.tolist(),
            "warnings": result.warnings,
        },
    )
    manifest = manifest_for(
        args, "permtest", {"model": model_kind, "permutations": n_perm, "seed": seed}
    )
    manifest.add_input(args.features)
    manifest.add_input(args.dataset)
    manifest.add_input(args.split)
    manifest.add_output(args.out)
    manifest.write(args.out + ".manifest.json")
    print(
        f"permtest: p_gain={result.p_value_gain:.4f} p_lift={result.p_value_lift:.4f} "
        f"observed gain={result.observed_avg_gain:.4f}"
    )
    return EXIT_OK


def cmd_shap(args):
    kind, model = _load_any_model(args.model)
    if kind != "hdsrf":
        raise DataError("attribution is only defined for the hdsrf model")
    fm, man_path = _load_features_checked(args)
    if model.feature_manifest_hash and model.feature_manifest_hash != sha256_file(man_path):
        raise DataError(
            "feature manifest hash does not match the one the model was trained with"
        )
    rows = np.arange(fm.n_rows)
    if args.split:
        split = load_split(args.split)
        subset = resolve(args, "subset", "test")
        if subset != "all":
            rows = split[
                {"train": "train_indices", "test": "test_indices", "calibration": "calibration_indices"}[subset]
            ]
    max_rows = int(resolve(args, "max-rows", 1000))
    if len(rows) > max_rows:
        rng = np.random.default_rng(int(resolve(args, "seed", 0)))
        rows = np.sort(rng.choice(rows, size=max_rows, replace=False))

    os.makedirs(args.out_dir, exist_ok=True)
    shap = treeshap(model, fm.values[rows])
    shap_path = os.path.join(args.out_dir, "shap.csv")
    with open(shap_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["contract_id"] + fm.columns)
        for i, r in enumerate(rows):
            writer.writerow([fm.contract_ids[r]] + [repr(float(v)) for v in shap.values[i]])
    report = global_importance(shap, fm)
    importance_path = os.path.join(args.out_dir, "importance.json")
    write_json(
        importance_path,
        {
            "schema_version": 1,
            "base_value": shap.base_value,
            "n_rows": int(len(rows)),
            "group_sums": report.group_sums,
            "top_30": [
                {"feature": f, "mean_abs_shap": v, "group": g} for f, v, g in report.top(30)
            ],
            "mean_abs_shap": dict(zip(fm.columns, report.mean_abs_shap.tolist())),
        },
    )
    manifest = manifest_for(args, "shap", {"max_rows": max_rows})
    manifest.add_input(args.model)
    manifest.add_input(args.features)
    manifest.add_output(shap_path)
    manifest.add_output(importance_path)
    manifest.stage_done("attribute")
    manifest.write(os.path.join(args.out_dir, "shap.manifest.json"))
    print(f"shap: {len(rows)} rows, base={shap.base_value:.4f} -> {shap_path}")
    return EXIT_OK


def cmd_report(args):
    os.makedirs(args.out_dir, exist_ok=True)
    outputs = []
    if args.curves:
        ks, gain, lift, cr, null = [], [], [], [], []
        with open(args.curves, newline="") as fh:
            for row in csv.DictReader(fh):
                ks.append(float(row["fraction"]))
                gain.append(float(row["gain"]))
                lift.append(float(row["lift"]))
                cr.append(float(row["robust_cumsum"]))
                null.append(float(row["null_cumsum"]))
        gain_svg = os.path.join(args.out_dir, "gain.svg")
        render_curves(
            {
                "robust cumulative positives": (np.array(ks), np.array(cr)),
                "random baseline": (np.array(ks), np.array(null)),
            },
            "Cumulative known positives by rank",
            "fraction of ranked contracts",
            "known positives",
            gain_svg,
        )
        lift_svg = os.path.join(args.out_dir, "lift.svg")
        render_curves(
            {"lift": (np.array(ks), np.array(lift)), "random = 1": (np.array(ks), np.ones(len(ks)))},
            "Lift over random guessing",
            "fraction of ranked contracts",
            "lift",
            lift_svg,
        )
        outputs += [gain_svg, lift_svg]

    if args.shap and args.features and args.feature:
        fm, _ = _load_features_checked(args)
        ids, values = [], []
        with open(args.shap, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[1:] != fm.columns:
                raise DataError("shap.csv columns do not match the feature matrix")
            for parts in reader:
                ids.append(parts[0])
                values.append([float(x) for x in parts[1:]])
        from .attribution import ShapMatrix

        row_of = {cid: i for i, cid in enumerate(fm.contract_ids)}
        rows = np.array([row_of[i] for i in ids])
        shap = ShapMatrix(values=np.array(values), base_value=0.0, feature_columns=fm.columns)
        sub = fm
        sub_values = fm.values[rows]
        from .features import FeatureMatrix

        sub = FeatureMatrix(values=sub_values, meta=fm.meta, contract_ids=ids)
        color = args.color_feature or args.feature
        exp = dependence_export(shap, sub, args.feature, color)
        dep_csv = os.path.join(args.out_dir, f"dependence_{args.feature}.csv")
        with open(dep_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["contract_id", "feature_value", "shap_value", "color_value", "is_sentinel"])
            for i, cid in enumerate(ids):
                writer.writerow(
                    [
                        cid,
                        repr(float(exp.feature_values[i])),
                        repr(float(exp.shap_values[i])),
                        repr(float(exp.color_values[i])),
                        int(exp.sentinel_mask[i]),
                    ]
                )
        dep_svg = os.path.join(args.out_dir, f"dependence_{args.feature}.svg")
        rho = "undefined" if exp.pearson_rho is None else f"{exp.pearson_rho:.3f}"
        render_scatter(
            exp.feature_values,
            exp.shap_values,
            f"{args.feature} (rho={rho})",
            args.feature,
            "attribution",
            dep_svg,
            band=(exp.band_low, exp.band_high),
            flags=exp.sentinel_mask,
        )
        outputs += [dep_csv, dep_svg]

    if not outputs:
        raise DataError("report: nothing to do (pass --curves and/or --shap with --feature)")
    manifest = manifest_for(args, "report", {})
    for path in outputs:
        manifest.add_output(path)
    manifest.write(os.path.join(args.out_dir, "report.manifest.json"))
    print(f"report: wrote {', '.join(outputs)}")
    return EXIT_OK


# ------------------------------------------------------------ argparse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="purisk",
        description="PU-learning risk scoring and ranking for procurement contracts",
    )
    parser.add_argument("--version", action="version", version=f"purisk {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **flags):
        p = sub.add_parser(name)
        p.set_defaults(fn=fn)
        p.add_argument("--config", default=None, help="key = value config file")
        for flag, kw in flags.items():
            p.add_argument(flag, **kw)
        return p

    add(
        "synth",
        cmd_synth,
        **{
            "--out-dir": dict(required=True),
            "--seed": dict(type=int, default=None),
            "--buyers": dict(type=int, default=None),
            "--suppliers": dict(type=int, default=None),
            "--years": dict(default=None, help="e.g. 2015-2019"),
            "--contracts-per-year": dict(type=int, default=None),
            "--fraud-fraction": dict(type=float, default=None),
            "--sanction-rate": dict(type=float, default=None),
            "--core-buyers": dict(type=int, default=None),
        },
    )
    add(
        "ingest",
        cmd_ingest,
        **{
            "--contracts": dict(required=True),
            "--sanctions": dict(required=True),
            "--out-dir": dict(required=True),
            "--year-min": dict(type=int, default=None),
            "--year-max": dict(type=int, default=None),
            "--sanction-cutoff": dict(type=int, default=None),
        },
    )
    add(
        "features",
        cmd_features,
        **{
            "--dataset": dict(required=True),
            "--out-dir": dict(required=True),
            "--exact-threshold": dict(type=int, default=None),
            "--pivots": dict(type=int, default=None),
            "--seed": dict(type=int, default=None),
            "--edge-list": dict(action="store_true"),
        },
    )
    add(
        "split",
        cmd_split,
        **{
            "--dataset": dict(required=True),
            "--out": dict(required=True),
            "--mode": dict(default=None, choices=["company", "temporal"]),
            "--seed": dict(type=int, default=None),
            "--test-fraction": dict(type=float, default=None),
            "--folds": dict(type=int, default=None),
            "--top-fraction": dict(type=float, default=None),
            "--cap-quantile": dict(type=float, default=None),
            "--sanctions": dict(default=None),
            "--train-years": dict(default=None),
            "--test-year": dict(type=int, default=None),
            "--sanction-cutoff": dict(type=int, default=None),
        },
    )
    add(
        "train",
        cmd_train,
        **{
            "--features": dict(required=True),
            "--features-manifest": dict(default=None),
            "--dataset": dict(required=True),
            "--split": dict(required=True),
            "--model": dict(required=True, choices=["hdsrf", "pubag"]),
            "--out": dict(required=True),
            "--calibration-out": dict(default=None),
            "--workers": dict(type=int, default=None),
            "--seed": dict(type=int, default=None),
            "--class-prior": dict(type=float, default=None),
            "--trees": dict(type=int, default=None),
            "--max-depth": dict(type=int, default=None),
            "--max-features": dict(default=None),
            "--min-samples-split": dict(type=int, default=None),
            "--estimators": dict(type=int, default=None),
            "--gamma": dict(type=float, default=None),
            "--components": dict(type=int, default=None),
            "--sgd-max-iter": dict(type=int, default=None),
            "--sgd-lambda": dict(type=float, default=None),
            "--aggregation": dict(default=None, choices=["vote_fraction", "mean_margin"]),
        },
    )
    add(
        "score",
        cmd_score,
        **{
            "--model": dict(required=True),
            "--features": dict(required=True),
            "--features-manifest": dict(default=None),
            "--split": dict(default=None),
            "--subset": dict(default=None, choices=["train", "test", "calibration", "all"]),
            "--mode": dict(default=None, choices=["test", "transductive"]),
            "--calibration": dict(default=None),
            "--out": dict(required=True),
        },
    )
    add(
        "eval",
        cmd_eval,
        **{
            "--scores": dict(required=True),
            "--dataset": dict(required=True),
            "--out": dict(required=True),
            "--curves": dict(default=None),
            "--column": dict(default=None),
        },
    )
    add(
        "permtest",
        cmd_permtest,
        **{
            "--features": dict(required=True),
            "--features-manifest": dict(default=None),
            "--dataset": dict(required=True),
            "--split": dict(required=True),
            "--model": dict(required=True, choices=["hdsrf", "pubag"]),
            "--out": dict(required=True),
            "--permutations": dict(type=int, default=None),
            "--trees": dict(type=int, default=None),
            "--estimators": dict(type=int, default=None),
            "--class-prior": dict(type=float, default=None),
            "--max-depth": dict(type=int, default=None),
            "--gamma": dict(type=float, default=None),
            "--components": dict(type=int, default=None),
            "--seed": dict(type=int, default=None),
            "--workers": dict(type=int, default=None),
        },
    )
    add(
        "shap",
        cmd_shap,
        **{
            "--model": dict(required=True),
            "--features": dict(required=True),
            "--features-manifest": dict(default=None),
            "--split": dict(default=None),
            "--subset": dict(default=None, choices=["train", "test", "calibration", "all"]),
            "--max-rows": dict(type=int, default=None),
            "--seed": dict(type=int, default=None),
            "--out-dir": dict(required=True),
        },
    )
    add(
        "report",
        cmd_report,
        **{
            "--curves": dict(default=None),
            "--shap": dict(default=None),
            "--features": dict(default=None),
            "--features-manifest": dict(default=None),
            "--feature": dict(default=None),
            "--color-feature": dict(default=None),
            "--out-dir": dict(required=True),
        },
    )
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    config_path = args.config or os.environ.get("PURISK_CONFIG")
    try:
        args._config_file_values = read_config_file(config_path) if config_path else {}
        return args.fn(args)
    except (DataError, SchemaError, ModelFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AssertionError as exc:
        print(f"internal invariant violation: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
