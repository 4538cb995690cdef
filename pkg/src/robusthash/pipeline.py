"""Experiment pipeline: synth -> pretrain -> attack -> defend -> eval.

Each stage persists its artifacts in the run directory and records the
config hash it completed under; rerunning a completed stage is a no-op
unless forced. A lock file makes run-directory ownership exclusive.
"""

from __future__ import annotations

import contextlib
import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import netcore
from .attack import NONTARGETED, TARGETED, pgd_attack, pick_target_label
from .config import ExperimentConfig, config_hash, dump_config
from .data import Dataset, generate_synthetic, load_dataset, save_dataset
from .defense import adversarial_train
from .evalkit import (EvalReport, build_index, default_top_k, map_at_k,
                      perceptibility, pr_curve, precision_at_topn, save_report,
                      theoretical_map)
from .hashmodel import HashModel, hash_code, pretrain, save_code_database
from .mainstay import MainstayCache

STAGES = ("synth", "pretrain", "attack", "defend", "eval", "oracle-check")

ADV_MAGIC = b"RHA1"


class PipelineError(RuntimeError):
    pass


@dataclass
class RunReport:
    config_text: str
    config_digest: str
    metrics: dict[str, float] = field(default_factory=dict)
    artifact_hashes: dict[str, str] = field(default_factory=dict)

    def render(self):
        lines = [f"config_hash {self.config_digest}"]
        for key in sorted(self.metrics):
            lines.append(f"{key} {self.metrics[key]:.12f}")
        for key in sorted(self.artifact_hashes):
            lines.append(f"hash.{key} {self.artifact_hashes[key]}")
        lines.append("-- config --")
        lines.append(self.config_text.rstrip("\n"))
        return "\n".join(lines) + "\n"


@contextlib.contextmanager
def _run_lock(out_dir: Path):
    lock = out_dir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise PipelineError(f"run directory {out_dir} is locked by another run")
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _file_hash(path: Path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _stamp(out_dir: Path, stage):
    return out_dir / f"{stage}.done"

def _is_done(out_dir, stage, digest, force):
    stamp = _stamp(out_dir, stage)
    return not force and stamp.exists() and stamp.read_text().strip() == digest


def _mark_done(out_dir, stage, digest):
    _stamp(out_dir, stage).write_text(digest + "\n")


def _require(path: Path, stage, needed_by):
    if not path.exists():
        raise PipelineError(
            f"stage '{needed_by}' needs {path.name}; run stage '{stage}' first"
        )


def save_adversarial_batch(path: Path, x_adv, query_indices):
    x_adv = np.asarray(x_adv, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(ADV_MAGIC)
        fh.write(np.array(x_adv.shape, dtype="<u4").tobytes())
        fh.write(np.ascontiguousarray(x_adv, dtype="<f8").tobytes())
    sidecar = path.with_suffix(".idx")
    sidecar.write_text("\n".join(str(int(i)) for i in query_indices) + "\n")


def load_adversarial_batch(path: Path):
    raw = path.read_bytes()
    if raw[:4] != ADV_MAGIC:
        raise PipelineError(f"bad adversarial batch magic in {path}")
    n, d = np.frombuffer(raw[4:12], dtype="<u4")
    x_adv = np.frombuffer(raw[12:], dtype="<f8").reshape(int(n), int(d)).copy()
    indices = np.array([int(v) for v in
                        path.with_suffix(".idx").read_text().split()])
    return x_adv, indices


def _build_model(cfg: ExperimentConfig, input_dim):
    sizes = [input_dim, *cfg.model.hidden, cfg.model.bits]
    return HashModel(netcore.init_network(sizes, seed=cfg.seed))


def _get_dataset(cfg: ExperimentConfig, out_dir: Path) -> Dataset:
    path = out_dir / "dataset.bin"
    if cfg.dataset_path:
        return load_dataset(cfg.dataset_path)
    _require(path, "synth", "this stage")
    return load_dataset(path)


def _attack_queries(cfg, model: HashModel, ds: Dataset):
    """Generate adversarial queries against `model`; returns (x_adv, guides,
    eval_labels) where eval_labels are true labels (non-targeted) or target
    labels (targeted)."""
    train_x, train_y = ds.split("train")
    query_x, query_y = ds.split("query")
    cache = MainstayCache(hash_code(model, train_x), train_y)
    rng = np.random.default_rng(cfg.seed + 1)
    if cfg.attack.mode == TARGETED:
        eval_labels = np.stack(
            [pick_target_label(y, train_y, rng) for y in query_y]
        )
    else:
        eval_labels = query_y
    guides = cache.for_labels(eval_labels)
    result = pgd_attack(model, query_x, guides, cfg.attack)
    return result.x_adv, guides, eval_labels


def _eval_model(cfg, model: HashModel, ds: Dataset, query_x, eval_labels):
    db_x, db_y = ds.split("database")
    index = build_index(hash_code(model, db_x), db_y)
    k = default_top_k(index, cfg.eval.top_k)
    codes = hash_code(model, query_x)
    report = EvalReport(
        map_score=map_at_k(codes, eval_labels, index, k),
        pr_points=pr_curve(codes, eval_labels, index),
        p_at_n=precision_at_topn(codes, eval_labels, index, cfg.eval.topn_grid),
        top_k=k,
        query_count=codes.shape[0],
    )
    return report, index, k


def run_oracle_checks(seed=0, instances=200, nets=25):
    """Exhaustive-argmin and finite-difference suites; raises on violation."""
    from .mainstay import (WeightedNeighborhood, brute_force_mainstay,
                           mainstay_code)

    rng = np.random.default_rng(seed)
    for _ in range(instances):
        k = int(rng.choice([4, 8, 12]))
        n_pos = int(rng.integers(1, 26))
        n_neg = int(rng.integers(0, 26))
        nbhd = WeightedNeighborhood(
            positive_codes=rng.choice([-1, 1], size=(n_pos, k)).astype(np.int8),
            positive_weights=rng.random(n_pos),
            negative_codes=rng.choice([-1, 1], size=(n_neg, k)).astype(np.int8),
            negative_weights=rng.random(n_neg),
        )
        closed = mainstay_code(nbhd)
        brute = brute_force_mainstay(nbhd)
        if closed.psi_value != brute.psi_value:
            raise PipelineError(
                f"closed-form objective {closed.psi_value} != exhaustive "
                f"minimum {brute.psi_value}"
            )
    for _ in range(nets):
        sizes = [int(rng.integers(2, 9)) for _ in range(int(rng.integers(2, 4)))]
        net = netcore.init_network(sizes, seed=int(rng.integers(1 << 31)))
        x = rng.random(sizes[0])
        upstream = rng.standard_normal(sizes[-1])
        trace = netcore.forward(net, x)
        gx = netcore.grad_input(net, trace, upstream)
        step = 1e-5
        for j in range(sizes[0]):
            xp, xm = x.copy(), x.copy()
            xp[j] += step
            xm[j] -= step
            fd = (upstream @ netcore.forward(net, xp).output
                  - upstream @ netcore.forward(net, xm).output) / (2 * step)
            if abs(fd - gx[j]) > 1e-4 * max(1.0, abs(fd)):
                raise PipelineError(
                    f"input gradient component {j} off: analytic {gx[j]}, "
                    f"finite difference {fd}"
                )
    return True


def run_pipeline(cfg: ExperimentConfig, stages, out_dir, force=False) -> RunReport:
    unknown = set(stages) - set(STAGES)
    if unknown:
        raise PipelineError(f"unknown stages: {sorted(unknown)}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    digest = config_hash(cfg)
    report = RunReport(config_text=dump_config(cfg), config_digest=digest)

    with _run_lock(out_dir):
        if "oracle-check" in stages:
            run_oracle_checks(seed=cfg.seed)
            report.metrics["oracle_checks_passed"] = 1.0

        if "synth" in stages and not cfg.dataset_path:
            if not _is_done(out_dir, "synth", digest, force):
                ds = generate_synthetic(cfg.synth, cfg.seed)
                save_dataset(ds, out_dir / "dataset.bin")
                _mark_done(out_dir, "synth", digest)

        model_path = out_dir / "model.bin"
        if "pretrain" in stages:
            if not _is_done(out_dir, "pretrain", digest, force):
                ds = _get_dataset(cfg, out_dir)
                train_x, train_y = ds.split("train")
                model = _build_model(cfg, ds.features.shape[1])
                model, _ = pretrain(
                    model, train_x, train_y,
                    epochs=cfg.pretrain.epochs,
                    batch_size=cfg.pretrain.batch_size,
                    learning_rate=cfg.pretrain.learning_rate,
                    momentum=cfg.pretrain.momentum,
                    quantization_weight=cfg.pretrain.quantization_weight,
                    seed=cfg.seed,
                )
                netcore.save_params(model.net, model_path)
                db_x, db_y = ds.split("database")
                save_code_database(out_dir / "database_codes.bin",
                                   hash_code(model, db_x), db_y)
                _mark_done(out_dir, "pretrain", digest)

        adv_path = out_dir / "adversarial.bin"
        if "attack" in stages:
            _require(model_path, "pretrain", "attack")
            if not _is_done(out_dir, "attack", digest, force):
                ds = _get_dataset(cfg, out_dir)
                model = HashModel(netcore.load_params(model_path))
                x_adv, guides, eval_labels = _attack_queries(cfg, model, ds)
                save_adversarial_batch(adv_path, x_adv, ds.splits["query"])
                save_code_database(out_dir / "attack_guides.bin", guides,
                                   eval_labels)
                _mark_done(out_dir, "attack", digest)

        defended_path = out_dir / "defended.bin"
        if "defend" in stages:
            _require(model_path, "pretrain", "defend")
            if not _is_done(out_dir, "defend", digest, force):
                ds = _get_dataset(cfg, out_dir)
                model = HashModel(netcore.load_params(model_path))
                train_x, train_y = ds.split("train")
                defended, log = adversarial_train(model, train_x, train_y,
                                                  cfg.defend)
                netcore.save_params(defended.net, defended_path)
                with open(out_dir / "defend_log.txt", "w") as fh:
                    for i, rec in enumerate(log.epochs):
                        fh.write(
                            f"epoch {i} clean {rec.clean_loss:.6f} "
                            f"adv {rec.adversarial_loss:.6f} "
                            f"qua {rec.quantization_loss:.6f} "
                            f"total {rec.total_loss:.6f}\n"
                        )
                _mark_done(out_dir, "defend", digest)

        if "eval" in stages:
            _require(model_path, "pretrain", "eval")
            ds = _get_dataset(cfg, out_dir)
            model = HashModel(netcore.load_params(model_path))
            query_x, query_y = ds.split("query")

            clean_report, index, k = _eval_model(cfg, model, ds, query_x, query_y)
            save_report(clean_report, out_dir / "report_clean.txt",
                        out_dir / "pr_clean.csv", out_dir / "topn_clean.csv")
            report.metrics["clean_map"] = clean_report.map_score

            if adv_path.exists():
                x_adv, _ = load_adversarial_batch(adv_path)
                from .hashmodel import load_code_database

                guides, eval_labels = load_code_database(
                    out_dir / "attack_guides.bin")
                adv_report = EvalReport(
                    map_score=map_at_k(hash_code(model, x_adv), eval_labels,
                                       index, k),
                    pr_points=pr_curve(hash_code(model, x_adv), eval_labels,
                                       index),
                    p_at_n=precision_at_topn(hash_code(model, x_adv),
                                             eval_labels, index,
                                             cfg.eval.topn_grid),
                    perceptibility=perceptibility(query_x, x_adv),
                    top_k=k,
                    query_count=x_adv.shape[0],
                )
                if cfg.attack.mode == TARGETED:
                    adv_report.t_map = adv_report.map_score
                save_report(adv_report, out_dir / "report_attacked.txt",
                            out_dir / "pr_attacked.csv",
                            out_dir / "topn_attacked.csv")
                key = ("attacked_t_map" if cfg.attack.mode == TARGETED
                       else "attacked_map")
                report.metrics[key] = adv_report.map_score
                report.metrics["theoretical_map"] = theoretical_map(
                    guides, eval_labels, index, k, mode=cfg.attack.mode)

            if defended_path.exists():
                defended = HashModel(netcore.load_params(defended_path))
                def_clean, def_index, _ = _eval_model(cfg, defended, ds,
                                                      query_x, query_y)
                save_report(def_clean, out_dir / "report_defended_clean.txt",
                            out_dir / "pr_defended_clean.csv",
                            out_dir / "topn_defended_clean.csv")
                report.metrics["defended_clean_map"] = def_clean.map_score
                # white-box adaptive attack against the defended model
                x_adv_d, _, eval_labels_d = _attack_queries(cfg, defended, ds)
                def_adv = EvalReport(
                    map_score=map_at_k(hash_code(defended, x_adv_d),
                                       eval_labels_d, def_index, k),
                    perceptibility=perceptibility(query_x, x_adv_d),
                    top_k=k,
                    query_count=x_adv_d.shape[0],
                )
                save_report(def_adv, out_dir / "report_defended_attacked.txt")
                report.metrics["defended_attacked_map"] = def_adv.map_score

            for name in ("dataset.bin", "model.bin", "database_codes.bin",
                         "defended.bin", "adversarial.bin"):
                path = out_dir / name
                if path.exists():
                    report.artifact_hashes[name] = _file_hash(path)
            (out_dir / "run_report.txt").write_text(report.render())

    return report
