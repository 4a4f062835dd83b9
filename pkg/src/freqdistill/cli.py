"""Command-line harness: train-teacher, distill, ablate, spectra, export-embeddings."""

from __future__ import annotations

import argparse
import json
import logging
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import spectral
from .config import ConfigError, RunConfig, replace, resolve
from .dataio import (PLANETOID_NAMES, SbmSpec, export_embeddings, generate_sbm, load_checkpoint,
                     load_graph_json, load_planetoid, save_checkpoint)
from .graph import Graph, graph_laplacian, stratified_split
from .losses import DistillMode
from .metrics import accuracy, curves_export
from .models import ModelConfig, forward
from .training import DistillConfig, OptimConfig, distill_student, teacher_logits, train_teacher

log = logging.getLogger("freqdistill")

ABLATION_ROWS = (("MLP", DistillMode.LABEL_ONLY), ("GLNN", DistillMode.GLNN),
                 ("LFD", DistillMode.LFD_ONLY), ("HFD", DistillMode.HFD_ONLY),
                 ("FF-G2M", DistillMode.FF_G2M))


# datasets -----------------------------------------------------------------------

def _planetoid_dir(root: Path, name: str) -> Path:
    for cand in (root, root / name, root / name.capitalize() / "raw", root / name / "raw",
                 root / name.capitalize()):
        if (cand / f"ind.{name}.x").exists():
            return cand
    raise FileNotFoundError(f"Planetoid files for {name!r} not found under {root} "
                            f"(set --data-dir or FREQDISTILL_DATA)")


def load_base_graph(cfg: RunConfig) -> Graph:
    name = cfg.dataset
    if name.lower() in PLANETOID_NAMES:
        root = _planetoid_dir(Path(cfg.data_dir), name.lower())
        return load_planetoid(root, name, normalize_features=cfg.normalize_features)
    if name.lower() == "sbm":
        return generate_sbm(SbmSpec(cfg.sbm_blocks, cfg.sbm_nodes_per_block, cfg.sbm_p_in, cfg.sbm_p_out,
                                    cfg.sbm_feature_dim, cfg.sbm_feature_noise, cfg.sbm_seed))
    path = Path(name)
    if path.suffix == ".json":
        return load_graph_json(path)
    raise ConfigError(f"unknown dataset {name!r}: use cora/citeseer/pubmed, sbm, or a .json path")


def graph_for_seed(base: Graph, cfg: RunConfig, seed: int) -> Graph:
    if base.split is not None and not cfg.random_split:
        return base
    return base.with_split(stratified_split(base, cfg.split_per_class, cfg.split_val, cfg.split_test, seed))


def teacher_config(cfg: RunConfig, g: Graph) -> ModelConfig:
    return ModelConfig(cfg.arch, g.num_features, g.num_classes, cfg.num_layers, cfg.hidden_dim,
                       cfg.dropout, cfg.gat_heads, 1, cfg.gat_slope)


def student_config(cfg: RunConfig, g: Graph) -> ModelConfig:
    return ModelConfig("mlp", g.num_features, g.num_classes, cfg.num_layers, cfg.hidden_dim, cfg.dropout)


def optim_config(cfg: RunConfig, seed: int) -> OptimConfig:
    return OptimConfig(cfg.lr, cfg.weight_decay, cfg.epochs, seed, cfg.patience or None)


def distill_config(cfg: RunConfig, mode, seed: int) -> DistillConfig:
    return DistillConfig(mode, cfg.lam, cfg.tau1, cfg.tau2, cfg.epochs, cfg.lr, cfg.weight_decay,
                         seed, cfg.patience or None, cfg.literal_denominator)


# per-seed jobs ------------------------------------------------------------------

def _teacher_ckpt_for(cfg: RunConfig, seed: int) -> Path:
    path = Path(cfg.teacher)
    if path.is_dir():
        cand = path / f"seed{seed}" / "teacher.ckpt"
        if not cand.exists():
            raise FileNotFoundError(f"no teacher checkpoint for seed {seed} at {cand}")
        return cand
    if not path.exists():
        raise FileNotFoundError(f"teacher checkpoint {path} does not exist")
    return path


def _train_teacher_job(args):
    cfg, seed, base, out_dir = args
    g = graph_for_seed(base, cfg, seed)
    tcfg = teacher_config(cfg, g)
    params, history = train_teacher(g, tcfg, optim_config(cfg, seed))
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(params, tcfg, out_dir / "teacher.ckpt", extra={"seed": seed, "dataset": cfg.dataset})
    curves_export(history, out_dir / "history.csv")
    return {"seed": seed, "best_epoch": history.best_epoch, "val_acc": history.best_val_accuracy,
            "test_acc": history.best_test_accuracy}


def _distill_job(args):
    cfg, seed, base, out_dir, mode, teacher_path = args
    g = graph_for_seed(base, cfg, seed)
    t_params, t_cfg, _ = load_checkpoint(teacher_path)
    if (t_cfg.in_dim, t_cfg.num_classes) != (g.num_features, g.num_classes):
        raise ValueError(f"teacher {teacher_path} was trained on a different dataset")
    s_cfg = student_config(cfg, g)
    h = teacher_logits(g, t_params, t_cfg)
    params, history = distill_student(g, t_params, t_cfg, s_cfg, distill_config(cfg, mode, seed), teacher_out=h)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(params, s_cfg, out_dir / "student.ckpt",
                    extra={"seed": seed, "mode": DistillMode(mode).value, "dataset": cfg.dataset})
    curves_export(history, out_dir / "history.csv")
    teacher_acc = accuracy(h, g.labels, g.split.test_ids)
    best = history.best
    return {"seed": seed, "mode": DistillMode(mode).value, "best_epoch": history.best_epoch,
            "val_acc": history.best_val_accuracy, "test_acc": best.acc_test,
            "teacher_test_acc": teacher_acc, "delta": best.acc_test - teacher_acc,
            "cos_sim": best.cos_sim, "pd_kl": best.pd_kl}


def _run_jobs(fn, jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def _aggregate(values: list[float]) -> dict:
    return {"mean": statistics.fmean(values),
            "std": statistics.pstdev(values) if len(values) > 1 else 0.0}


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _prepare_output(cfg: RunConfig) -> Path:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())
    return out


# commands -----------------------------------------------------------------------

def cmd_train_teacher(cfg: RunConfig) -> dict:
    base = load_base_graph(cfg)
    out = _prepare_output(cfg)
    jobs = [(cfg, s, base, out / f"seed{s}") for s in cfg.seeds]
    runs = _run_jobs(_train_teacher_job, jobs, cfg.jobs)
    summary = {"command": "train-teacher", "dataset": cfg.dataset, "arch": cfg.arch,
               "per_seed": runs, "test_acc": _aggregate([r["test_acc"] for r in runs])}
    _write_json(out / "summary.json", summary)
    return summary


def cmd_distill(cfg: RunConfig) -> dict:
    if not cfg.teacher:
        raise ConfigError("distill needs --teacher (checkpoint file or train-teacher output dir)")
    teachers = {s: _teacher_ckpt_for(cfg, s) for s in cfg.seeds}
    base = load_base_graph(cfg)
    out = _prepare_output(cfg)
    jobs = [(cfg, s, base, out / f"seed{s}", cfg.mode, teachers[s]) for s in cfg.seeds]
    runs = _run_jobs(_distill_job, jobs, cfg.jobs)
    summary = {
        "command": "distill", "dataset": cfg.dataset, "mode": cfg.mode, "per_seed": runs,
        "student_test_acc": _aggregate([r["test_acc"] for r in runs]),
        "teacher_test_acc": _aggregate([r["teacher_test_acc"] for r in runs]),
        "delta": _aggregate([r["delta"] for r in runs]),
        "cos_sim": _aggregate([r["cos_sim"] for r in runs]),
        "pd_kl": _aggregate([r["pd_kl"] for r in runs]),
    }
    _write_json(out / "summary.json", summary)
    return summary


def cmd_ablate(cfg: RunConfig) -> dict:
    if not cfg.teacher and not cfg.auto_train:
        raise ConfigError("ablate needs --teacher or --auto-train")
    base = load_base_graph(cfg)
    out = _prepare_output(cfg)
    teacher_runs = None
    if cfg.auto_train:
        jobs = [(cfg, s, base, out / "teacher" / f"seed{s}") for s in cfg.seeds]
        teacher_runs = _run_jobs(_train_teacher_job, jobs, cfg.jobs)
        cfg = replace(cfg, teacher=str(out / "teacher"))
    teachers = {s: _teacher_ckpt_for(cfg, s) for s in cfg.seeds}
    jobs = [(cfg, s, base, out / label.lower() / f"seed{s}", mode, teachers[s])
            for label, mode in ABLATION_ROWS for s in cfg.seeds]
    runs = _run_jobs(_distill_job, jobs, cfg.jobs)

    rows = []
    for label, mode in ABLATION_ROWS:
        accs = [r["test_acc"] for r in runs if r["mode"] == mode.value]
        rows.append({"mode": label, **_aggregate(accs), "per_seed": accs})
    with open(out / "table.csv", "w") as fh:
        fh.write("mode,mean,std," + ",".join(f"seed{s}" for s in cfg.seeds) + "\n")
        for row in rows:
            cells = [row["mode"], repr(row["mean"]), repr(row["std"])]
            cells += [repr(a) for a in row["per_seed"]]
            fh.write(",".join(cells) + "\n")
    teacher_accs = [r["teacher_test_acc"] for r in runs if r["mode"] == DistillMode.FF_G2M.value]
    summary = {"command": "ablate", "dataset": cfg.dataset, "arch": cfg.arch, "rows": rows,
               "teacher_test_acc": _aggregate(teacher_accs), "teacher_runs": teacher_runs}
    _write_json(out / "summary.json", summary)
    return summary


def cmd_spectra(cfg: RunConfig) -> dict:
    if cfg.synthetic:
        g = generate_sbm(SbmSpec(cfg.sbm_blocks, cfg.sbm_nodes_per_block, cfg.sbm_p_in, cfg.sbm_p_out,
                                 cfg.sbm_feature_dim, cfg.sbm_feature_noise, cfg.sbm_seed))
    else:
        g = load_base_graph(cfg)
        if g.num_nodes > cfg.eigen_cap:
            raise ConfigError(f"graph has {g.num_nodes} nodes, above the eigendecomposition cap "
                              f"{cfg.eigen_cap}; pass --synthetic or raise --eigen-cap")
    dec = spectral.eigendecompose(graph_laplacian(g, cap=cfg.eigen_cap), cap=cfg.eigen_cap)
    out = _prepare_output(cfg)
    spectral.write_columns_csv(out / "spectra.csv",
                               spectral.sweep_table(cfg.spectra_orders, cfg.spectra_points))
    spectral.write_columns_csv(out / "eigenvalues.csv", {"index": np.arange(dec.size),
                                                         "lambda": dec.eigenvalues})
    hist = spectral.eigenvalue_histogram(dec.eigenvalues, cfg.histogram_bins)
    spectral.write_columns_csv(out / "eigen_histogram.csv", hist)
    summary = {"command": "spectra", "dataset": "synthetic" if cfg.synthetic else cfg.dataset,
               "num_nodes": g.num_nodes, "lambda_min": float(dec.eigenvalues[0]),
               "lambda_max": float(dec.eigenvalues[-1])}
    _write_json(out / "summary.json", summary)
    return summary


def cmd_export_embeddings(cfg: RunConfig) -> dict:
    if not cfg.checkpoint:
        raise ConfigError("export-embeddings needs --checkpoint")
    params, mcfg, extra = load_checkpoint(cfg.checkpoint)
    base = load_base_graph(cfg)
    g = graph_for_seed(base, cfg, int(extra.get("seed", cfg.seeds[0])))
    out = _prepare_output(cfg)
    logits = forward(params, g, mcfg, training=False).data
    export_embeddings(logits, g.labels, out / "embeddings.csv")
    return {"command": "export-embeddings", "rows": g.num_nodes, "arch": mcfg.arch}


COMMANDS = {
    "train-teacher": cmd_train_teacher,
    "distill": cmd_distill,
    "ablate": cmd_ablate,
    "spectra": cmd_spectra,
    "export-embeddings": cmd_export_embeddings,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="freqdistill", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value file")
        for f in fields(RunConfig):
            flag = "--" + f.name.replace("_", "-")
            if f.type in ("bool", bool):
                p.add_argument(flag, dest=f.name, action="store_const", const="true", default=None)
                p.add_argument("--no-" + f.name.replace("_", "-"), dest=f.name, action="store_const",
                               const="false")
            else:
                p.add_argument(flag, dest=f.name, default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items()
                 if v is not None and k not in ("command", "config", "verbose")}
    try:
        cfg = resolve(overrides, args.config)
    except (ConfigError, OSError) as exc:
        parser.error(str(exc))
    try:
        summary = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"freqdistill: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, FloatingPointError) as exc:
        print(f"freqdistill: error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
