"""Batch command-line interface.

Subcommands:
  synth    write a synthetic train/test CSV quadruple
  predict  fit (or load) one pipeline and emit a prediction CSV
  bench    fit pipelines, score public/private test halves, run k-fold CV,
           rank teams, and emit machine-readable results

Every run is reproducible under a fixed seed; CONNECTO_SEED overrides
--seed. Exit codes: 0 success, 1 partial pipeline failures, 2 usage or
input errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from ._stats import derive_seed
from .connectome import (
    FeatureTable,
    LongitudinalDataset,
    generate_synthetic,
    load_csv,
    write_csv,
)
from .errors import ConnectoError
from .evaluate import (
    TeamSummary,
    compute_rank_table,
    cross_validate,
    mae,
    mse,
    paired_ttest_matrix,
    pcc,
    per_subject_mae,
    per_subject_pcc,
    residual_matrix,
)
from .pipeline import FittedPipeline, all_team_ids, fit_pipeline, load_config, load_team_config


def _effective_seed(args) -> int:
    env = os.environ.get("CONNECTO_SEED")
    if env:
        return int(env)
    return args.seed


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _json_dump(obj, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _fmt(v: float) -> str:
    return repr(float(v))


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args) -> int:
    seed = _effective_seed(args)
    os.makedirs(args.out_dir, exist_ok=True)
    train = generate_synthetic(
        args.subjects, args.rois, args.drift, args.noise,
        seed=derive_seed(seed, 0), id_prefix="S",
    )
    test = generate_synthetic(
        args.test_subjects, args.rois, args.drift, args.noise,
        seed=derive_seed(seed, 1), id_prefix="T",
    )
    for name, table in (
        ("train_t0.csv", train.t0), ("train_t1.csv", train.t1),
        ("test_t0.csv", test.t0), ("test_t1.csv", test.t1),
    ):
        write_csv(table, os.path.join(args.out_dir, name))
    print(f"wrote 4 synthetic tables to {args.out_dir}")
    return 0


# ---------------------------------------------------------------------------
# predict


def cmd_predict(args) -> int:
    if bool(args.model) == bool(args.config):
        print("predict needs exactly one of --model / --config", file=sys.stderr)
        return 2
    test = load_csv(args.input)
    if args.model:
        fitted = FittedPipeline.load(args.model)
    else:
        if not (args.train_t0 and args.train_t1):
            print("--config requires --train-t0 and --train-t1", file=sys.stderr)
            return 2
        config = load_config(args.config)
        config = dataclasses.replace(config, seed=derive_seed(_effective_seed(args), config.seed))
        train = LongitudinalDataset(
            t0=load_csv(args.train_t0), t1=load_csv(args.train_t1)
        )
        fitted = fit_pipeline(config, train)
        if args.save_model:
            fitted.save(args.save_model)
    pred = fitted.predict(test)
    write_csv(pred, args.out)
    print(f"wrote predictions for {pred.n_subjects} subjects to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# bench


def _parse_pipelines(spec: str) -> list[int]:
    if spec.strip().lower() == "all":
        return all_team_ids()
    try:
        ids = [int(p) for p in spec.split(",") if p.strip()]
    except ValueError:
        raise ConnectoError(f"bad --pipelines value {spec!r}")
    if not ids or any(not 1 <= i <= 20 for i in ids):
        raise ConnectoError("pipeline ids must lie in 1..20")
    return ids


def _truth_alignment(test_t0: FeatureTable, truth: FeatureTable):
    """Indices into test rows matching the truth table's subject order."""
    pos = {sid: i for i, sid in enumerate(test_t0.subject_ids)}
    missing = [s for s in truth.subject_ids if s not in pos]
    if missing:
        raise ConnectoError(f"truth subjects missing from test t0: {missing[:3]}...")
    return np.array([pos[s] for s in truth.subject_ids])


def _run_team(team: int, config, train, test_t0, truths, folds, seed):
    """Fit on the full train set, score available test halves, run CV."""
    out = {"error": None, "public": None, "private": None, "cv": None}
    per_subject = {}
    config = dataclasses.replace(config, seed=derive_seed(seed, team))
    fitted = fit_pipeline(config, train)
    pred = fitted.predict_rows(test_t0.rows)
    for split, (truth, align) in truths.items():
        p = pred[align]
        t = truth.rows
        out[split] = {"mae": mae(p, t), "mse": mse(p, t), "pcc": pcc(p, t)}
        per_subject[split] = (
            per_subject_mae(p, t), per_subject_pcc(p, t), truth.subject_ids
        )
    cv = cross_validate(config, train, k=folds, seed=derive_seed(seed, team, 101))
    out["cv"] = {
        "folds": [
            {"mae": r.mae, "mse": r.mse, "pcc": r.pcc} for r in cv.folds
        ],
        "mae_mean": cv.mae_mean, "mae_std": cv.mae_std,
        "mse_mean": cv.mse_mean, "mse_std": cv.mse_std,
        "pcc_mean": cv.pcc_mean, "pcc_std": cv.pcc_std,
    }
    return out, per_subject, pred


def _write_table2(path, rank_table, summaries_by_name) -> None:
    cols = [
        "team",
        "mae_public", "mae_public_rank", "mae_private", "mae_private_rank",
        "mae_cv", "mae_cv_rank", "mae_rank",
        "pcc_public", "pcc_public_rank", "pcc_private", "pcc_private_rank",
        "pcc_cv", "pcc_cv_rank", "pcc_rank",
        "final_rank",
    ]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for name in rank_table.ordered_names():
            row = rank_table.row(name)
            s = summaries_by_name[name]
            cells = [
                name,
                _fmt(s.mae_public), str(row["mae_local"][0]),
                _fmt(s.mae_private), str(row["mae_local"][1]),
                _fmt(s.mae_cv), str(row["mae_local"][2]),
                str(row["mae_rank"]),
                _fmt(s.pcc_public), str(row["pcc_local"][0]),
                _fmt(s.pcc_private), str(row["pcc_local"][1]),
                _fmt(s.pcc_cv), str(row["pcc_local"][2]),
                str(row["pcc_rank"]),
                str(row["final_rank"]),
            ]
            fh.write(",".join(cells) + "\n")


def _write_pvalue_csv(path, names, matrix) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("team," + ",".join(names) + "\n")
        for i, name in enumerate(names):
            fh.write(name + "," + ",".join(_fmt(v) for v in matrix[i]) + "\n")


def cmd_bench(args) -> int:
    t_start = time.monotonic()
    seed = _effective_seed(args)
    try:
        teams = _parse_pipelines(args.pipelines)
        train = LongitudinalDataset(
            t0=load_csv(args.train_t0), t1=load_csv(args.train_t1)
        )
        test_t0 = load_csv(args.test_t0, expect_d=train.t0.d)
        truths = {}
        if args.test_t1_public:
            pub = load_csv(args.test_t1_public, expect_d=train.t0.d)
            truths["public"] = (pub, _truth_alignment(test_t0, pub))
        if args.test_t1_private:
            priv = load_csv(args.test_t1_private, expect_d=train.t0.d)
            truths["private"] = (priv, _truth_alignment(test_t0, priv))
    except (ConnectoError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)

    configs = {t: load_team_config(t) for t in teams}
    results = {}
    per_subject = {}
    predictions = {}

    def run(team: int):
        return _run_team(
            team, configs[team], train, test_t0, truths, args.folds, seed
        )

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            futures = {t: pool.submit(run, t) for t in teams}
            raw = {}
            for t in teams:
                try:
                    raw[t] = futures[t].result()
                except Exception as exc:  # noqa: BLE001 - per-team isolation
                    raw[t] = exc
    else:
        raw = {}
        for t in teams:
            try:
                raw[t] = run(t)
            except Exception as exc:  # noqa: BLE001 - per-team isolation
                raw[t] = exc

    failures = 0
    for t in teams:
        name = configs[t].name
        if isinstance(raw[t], Exception):
            failures += 1
            results[name] = {"error": str(raw[t]), "public": None,
                             "private": None, "cv": None}
        else:
            out, subj, pred = raw[t]
            results[name] = out
            per_subject[name] = subj
            predictions[name] = pred

    # rank table needs all six scores for every surviving team
    rank_payload = None
    rank_table = None
    summaries_by_name = {}
    complete = [
        n for n in results
        if results[n]["error"] is None
        and results[n]["public"] and results[n]["private"] and results[n]["cv"]
    ]
    if len(complete) >= 2:
        summaries = []
        for n in sorted(complete):
            r = results[n]
            summaries.append(TeamSummary(
                name=n,
                mae_public=r["public"]["mae"], mae_private=r["private"]["mae"],
                mae_cv=r["cv"]["mae_mean"],
                pcc_public=r["public"]["pcc"], pcc_private=r["private"]["pcc"],
                pcc_cv=r["cv"]["pcc_mean"],
            ))
        rank_table = compute_rank_table(summaries, aggregator=args.rank_aggregator)
        summaries_by_name = {s.name: s for s in summaries}
        rank_payload = {n: rank_table.row(n) for n in rank_table.names}

    # paired t-tests: per-subject scores on the combined truthed test set
    # (default) or per-fold CV scores behind --ttest-population folds
    pvalues_payload = None
    use_folds = args.ttest_population == "folds"
    comparable = sorted(
        n for n in results
        if results[n]["error"] is None and (use_folds or n in per_subject)
    )
    if len(comparable) >= 2 and (use_folds or truths):
        mae_vecs = {}
        pcc_vecs = {}
        for name in comparable:
            if use_folds:
                folds_out = results[name]["cv"]["folds"]
                mae_vecs[name] = np.array([f["mae"] for f in folds_out])
                pcc_vecs[name] = np.array([f["pcc"] for f in folds_out])
            else:
                parts_mae = []
                parts_pcc = []
                for split in ("public", "private"):
                    if split in per_subject[name]:
                        m, p, _ = per_subject[name][split]
                        parts_mae.append(m)
                        parts_pcc.append(p)
                mae_vecs[name] = np.concatenate(parts_mae)
                pcc_vecs[name] = np.concatenate(parts_pcc)
        names_m, pm = paired_ttest_matrix(mae_vecs)
        names_p, pp = paired_ttest_matrix(pcc_vecs)
        _write_pvalue_csv(os.path.join(args.out, "pvalues_mae.csv"), names_m, pm)
        _write_pvalue_csv(os.path.join(args.out, "pvalues_pcc.csv"), names_p, pp)
        pvalues_payload = {
            "teams": names_m,
            "mae": [[float(v) for v in row] for row in pm],
            "pcc": [[float(v) for v in row] for row in pp],
        }

    if rank_table is not None:
        _write_table2(os.path.join(args.out, "table2.csv"), rank_table, summaries_by_name)

    if args.residuals:
        for name, pred in predictions.items():
            team_dir = os.path.join(args.out, "residuals", name)
            os.makedirs(team_dir, exist_ok=True)
            for split, (truth, align) in truths.items():
                for row, sid in enumerate(truth.subject_ids):
                    res = residual_matrix(pred[align[row]], truth.rows[row])
                    np.savetxt(
                        os.path.join(team_dir, f"{sid}.csv"),
                        res.weights, delimiter=",",
                    )

    results_payload = {
        "protocol": {
            "folds": args.folds,
            "seed": seed,
            "pipelines": [configs[t].name for t in teams],
            "kernel_backend": _backend_name(),
            "rank_aggregator": args.rank_aggregator,
            "ttest_population": args.ttest_population,
        },
        "teams": results,
        "ranks": rank_payload,
        "pvalues": pvalues_payload,
    }
    _json_dump(results_payload, os.path.join(args.out, "results.json"))

    manifest = {
        "command": "bench",
        "argv": [
            args.train_t0, args.train_t1, args.test_t0,
            args.test_t1_public or "", args.test_t1_private or "",
        ],
        "pipelines": [configs[t].name for t in teams],
        "config_hashes": {
            configs[t].name: hashlib.sha256(
                _config_text(t).encode("utf-8")
            ).hexdigest()
            for t in teams
        },
        "dataset_hashes": {
            p: _sha256_file(p)
            for p in (args.train_t0, args.train_t1, args.test_t0,
                      args.test_t1_public, args.test_t1_private)
            if p
        },
        "seed": seed,
        "version": __version__,
        "wall_clock_s": round(time.monotonic() - t_start, 3),
        "outputs": sorted(os.listdir(args.out)),
    }
    _json_dump(manifest, os.path.join(args.out, "manifest.json"))

    print(f"bench finished: {len(teams) - failures}/{len(teams)} pipelines ok")
    return 1 if failures else 0


def _config_text(team: int) -> str:
    from .pipeline import team_config_path

    return team_config_path(team).read_text(encoding="utf-8")


def _backend_name() -> str:
    from ._kernels import BACKEND

    return BACKEND


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="connecto",
        description="Benchmark classical ML pipelines that predict follow-up "
                    "brain connectivity from a baseline connectome.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="write synthetic train/test CSVs")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--subjects", type=int, default=150)
    sp.add_argument("--test-subjects", type=int, default=40)
    sp.add_argument("--rois", type=int, default=35)
    sp.add_argument("--drift", type=float, default=0.1)
    sp.add_argument("--noise", type=float, default=0.02)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_synth)

    pp = sub.add_parser("predict", help="predict follow-up connectivity")
    pp.add_argument("--model")
    pp.add_argument("--config")
    pp.add_argument("--train-t0")
    pp.add_argument("--train-t1")
    pp.add_argument("--input", required=True)
    pp.add_argument("--out", required=True)
    pp.add_argument("--save-model")
    pp.add_argument("--seed", type=int, default=0)
    pp.set_defaults(func=cmd_predict)

    bp = sub.add_parser("bench", help="fit, score, and rank pipelines")
    bp.add_argument("--train-t0", required=True)
    bp.add_argument("--train-t1", required=True)
    bp.add_argument("--test-t0", required=True)
    bp.add_argument("--test-t1-public")
    bp.add_argument("--test-t1-private")
    bp.add_argument("--pipelines", default="all")
    bp.add_argument("--folds", type=int, default=5)
    bp.add_argument("--seed", type=int, default=0)
    bp.add_argument("--out", required=True)
    bp.add_argument("--jobs", type=int, default=1)
    bp.add_argument("--residuals", action="store_true")
    bp.add_argument("--rank-aggregator", choices=("mean", "product"), default="mean")
    bp.add_argument("--ttest-population", choices=("subjects", "folds"),
                    default="subjects")
    bp.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConnectoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
