#!/usr/bin/env python3
"""
Training pipeline: segmentation pretraining, teacher fine-tuning on
synthetic composites, and student training with matte label blending.

    seg_pretrain      MSE against coarse masks
    teacher_finetune  L_matte + lambda * L_boundary on freshly composited images
    student_mlb       L_matte against blended labels on natural images; the
                      teacher pseudo-labels the weak view, the student sees
                      the strong view, optional EMA of student into teacher
"""

import contextlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch.optim.lr_scheduler import LambdaLR
from torch.utils.data import DataLoader
from tqdm import tqdm

from analysis.metrics import append_summary_rows, evaluate_dataset, write_report
from model.checkpoint import load_checkpoint, read_header, save_checkpoint
from model.losses import breakdown_to_floats, loss_matte, loss_mse, loss_total
from model.network import build, clone_parameters, forward
from pipeline.config import STAGES, save_config
from utils.datasets import (MatteTrainingSet, SegTrainingSet, load_backgrounds,
                            load_manifest, sample_subset)
from utils.errors import (CheckpointError, ConfigError, EmptyDatasetError,
                          StageError, TrainingAbort)
from utils.labels import binarize_boundary, blend_matte, extract_boundary
from utils.run_log import RunLogger

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


def cosine_factor(step, total):
    """Cosine decay from 1 at step 0 to 0 at `total`"""
    if total <= 0:
        return 0.0
    step = min(max(step, 0), total)
    return 0.5 * (1.0 + math.cos(math.pi * step / total))


def stage_seed(seed, stage):
    return int(np.random.SeedSequence([seed, STAGES.index(stage) + 1]).generate_state(1)[0])


@dataclass
class TrainState:
    step: int
    net: torch.nn.Module
    optimizer: torch.optim.Optimizer
    scheduler: LambdaLR
    stage_cfg: object
    teacher: torch.nn.Module = None
    rng_seed: int = 0
    last_breakdown: dict = field(default_factory=dict)
    last_lr: float = 0.0


def new_train_state(net, stage_cfg, start_step=0, teacher=None, rng_seed=0):
    """Fresh Adam moments and a cosine schedule positioned at `start_step`"""
    optimizer = torch.optim.Adam(net.parameters(), lr=stage_cfg.lr, betas=ADAM_BETAS, eps=ADAM_EPS)
    total = stage_cfg.iterations
    scheduler = LambdaLR(optimizer, lambda s: cosine_factor(s + start_step, total))
    return TrainState(step=start_step, net=net, optimizer=optimizer, scheduler=scheduler,
                      stage_cfg=stage_cfg, teacher=teacher, rng_seed=rng_seed)


def freeze(net):
    net.eval()
    for p in net.parameters():
        p.requires_grad_(False)
    return net


@torch.no_grad()
def ema_update(teacher, student, momentum):
    """teacher <- m * teacher + (1 - m) * student for every floating tensor"""
    t_state = teacher.state_dict()
    for name, s in student.state_dict().items():
        t = t_state[name]
        if t.is_floating_point():
            t.mul_(momentum).add_(s.detach(), alpha=1.0 - momentum)


@torch.no_grad()
def generate_pseudo_labels(teacher, weak_batch):
    """Teacher matte and binarized boundary for a weakly augmented batch"""
    teacher.eval()
    matte, boundary = forward(teacher, weak_batch)
    return matte, binarize_boundary(boundary)


def _check_finite(loss, stage, step):
    if not torch.isfinite(loss):
        raise TrainingAbort(stage, step, f"non-finite loss {float(loss)}")


def _optimize(state, loss):
    state.last_lr = state.optimizer.param_groups[0]["lr"]
    state.optimizer.zero_grad(set_to_none=True)
    loss.backward()
    state.optimizer.step()
    state.scheduler.step()


def student_step(state, batch, loss_cfg=None, device="cpu"):
    """
    One student update.

    batch holds the weak view, the strong view (same geometry plus colour
    jitter) and the coarse mask after the shared geometric transform. With
    no teacher the coarse mask itself is the target.
    """
    cfg = state.stage_cfg
    weak = batch["weak"].to(device)
    strong = batch["strong"].to(device)
    seg = batch["seg"].to(device)

    if state.teacher is not None:
        pseudo_matte, pseudo_boundary = generate_pseudo_labels(state.teacher, weak)
        target = blend_matte(pseudo_matte, pseudo_boundary, seg)
    else:
        target = seg

    state.net.train()
    pred, _ = forward(state.net, strong)
    loss, breakdown = loss_matte(pred, target, loss_cfg)
    _check_finite(loss, "student_mlb", state.step)
    _optimize(state, loss)

    if cfg.use_ema and state.teacher is not None:
        ema_update(state.teacher, state.net, cfg.ema_momentum)

    state.step += 1
    state.last_breakdown = breakdown_to_floats(breakdown)
    return state


@dataclass
class PipelineResult:
    final_stage: str
    final_checkpoint: str
    reports: dict
    intermediate_reports: dict = field(default_factory=dict)


class MattingPipeline:
    def __init__(self, config, quiet=False):
        """Initialize training pipeline"""

        self.config = config
        self.quiet = quiet
        self.device = torch.device(config.device)

        self.output_dir = Path(config.output_dir)
        self.results_dir = self.output_dir / "results"
        self.logs_dir = self.output_dir / "logs"
        self.checkpoints_dir = self.output_dir / "checkpoints"
        for d in (self.results_dir, self.logs_dir, self.checkpoints_dir):
            d.mkdir(parents=True, exist_ok=True)

        self.logger = RunLogger(self.logs_dir, "train", quiet=quiet)
        self.log = self.logger.log
        self.start_time = time.time()
        self.stage_times = {}
        self.stage_steps = {}

        save_config(config, self.output_dir / "config.yaml")

    # ------------------------------------------------------------ plumbing

    @contextlib.contextmanager
    def _stage(self, stage):
        self.log(f"🚀 Stage {stage}")
        start = time.time()
        try:
            yield
        except StageError:
            raise
        except Exception as e:
            self.log(f"❌ Stage {stage} failed: {e}")
            raise StageError(stage, e) from e
        self.stage_times[stage] = round(time.time() - start, 2)
        self.log(f"✅ Stage {stage} done in {self.stage_times[stage]:.1f}s")

    def _loader(self, dataset, batch_size):
        return DataLoader(dataset, batch_size=batch_size, shuffle=False,
                          num_workers=self.config.data.num_workers, drop_last=False)

    def _progress(self, loader, stage, start_step, total):
        return tqdm(loader, desc=stage, initial=start_step, total=total, disable=self.quiet)

    def _record_step(self, stage, step, lr, breakdown):
        self.logger.record("train_log.jsonl", {
            "step": step, "stage": stage, "lr": lr,
            "l_mse": breakdown.get("l_mse"), "l_grad": breakdown.get("l_grad"),
            "l_boundary": breakdown.get("l_boundary"), "total": breakdown.get("total"),
        })

    def checkpoint_path(self, stage, step, suffix=""):
        return self.checkpoints_dir / f"{stage}{suffix}_{step}.ckpt"

    def _save(self, net, stage, step, final=False, suffix=""):
        path = self.checkpoint_path(stage, step, suffix)
        save_checkpoint(net, path, {"stage": stage + suffix, "step": step, "final": final,
                                    "seed": self.config.seed})
        return path

    def _maybe_save(self, state, stage, suffix=""):
        every = state.stage_cfg.checkpoint_every
        if every and state.step % every == 0 and state.step < state.stage_cfg.iterations:
            self._save(state.net, stage, state.step, suffix=suffix)
            if state.teacher is not None and state.stage_cfg.use_ema:
                self._save(state.teacher, "ema_teacher", state.step, suffix=suffix)

    def find_final_checkpoint(self, stage, suffix=""):
        iterations = self.config.stages.get(stage).iterations
        path = self.checkpoint_path(stage, iterations, suffix)
        if path.exists():
            meta = read_header(path).get("meta", {})
            if meta.get("final"):
                return path
        return None

    def _to_device(self, net):
        return net.to(self.device)

    # ------------------------------------------------------------ stages

    def pretrain_seg(self, net, seg_manifest, cfg, start_step=0, suffix=""):
        """MSE against coarse masks treated as {0, 1} mattes"""
        if len(seg_manifest) == 0:
            raise EmptyDatasetError("segmentation training set is empty")

        stage = "seg_pretrain"
        net = self._to_device(net)
        state = new_train_state(net, cfg, start_step)
        dataset = SegTrainingSet(seg_manifest, self.config.augment, cfg.iterations * cfg.batch_size,
                                 stage_seed(self.config.seed, stage), strong=False,
                                 offset=start_step * cfg.batch_size)

        net.train()
        for batch in self._progress(self._loader(dataset, cfg.batch_size), stage, start_step, cfg.iterations):
            pred, _ = forward(net, batch["weak"].to(self.device))
            loss = loss_mse(pred, batch["seg"].to(self.device))
            _check_finite(loss, stage, state.step)
            _optimize(state, loss)
            state.step += 1
            self._record_step(stage + suffix, state.step, state.last_lr,
                              {"l_mse": float(loss.detach()), "total": float(loss.detach())})
            self._maybe_save(state, stage, suffix)

        self.stage_steps[stage + suffix] = state.step
        self._save(net, stage, cfg.iterations, final=True, suffix=suffix)
        return net

    def train_teacher(self, net_init, matte_manifest, backgrounds, cfg, start_step=0):
        """Fine-tune on composites with the boundary-aware loss; skipped without matte data"""
        stage = "teacher_finetune"
        if len(matte_manifest) == 0:
            self.log("⏭️ No matte data: teacher stage skipped")
            return net_init

        teacher = self._to_device(clone_parameters(net_init))
        for p in teacher.parameters():
            p.requires_grad_(True)
        state = new_train_state(teacher, cfg, start_step)
        dataset = MatteTrainingSet(matte_manifest, backgrounds, self.config.augment,
                                   cfg.iterations * cfg.batch_size, stage_seed(self.config.seed, stage),
                                   recompose=self.config.data.recompose_each_iter,
                                   offset=start_step * cfg.batch_size)

        teacher.train()
        for batch in self._progress(self._loader(dataset, cfg.batch_size), stage, start_step, cfg.iterations):
            image = batch["image"].to(self.device)
            matte = batch["matte"].to(self.device)
            pred_matte, pred_boundary = forward(teacher, image)
            loss, breakdown = loss_total(pred_matte, matte, pred_boundary, extract_boundary(matte),
                                         self.config.loss)
            _check_finite(loss, stage, state.step)
            _optimize(state, loss)
            state.step += 1
            self._record_step(stage, state.step, state.last_lr, breakdown_to_floats(breakdown))
            self._maybe_save(state, stage)

        self.stage_steps[stage] = state.step
        self._save(teacher, stage, cfg.iterations, final=True)
        return teacher

    def train_student(self, student_init, teacher, seg_manifest, cfg, start_step=0):
        """Student on natural images; teacher None trains on the raw coarse masks"""
        stage = "student_mlb"
        if len(seg_manifest) == 0:
            raise EmptyDatasetError("segmentation training set is empty")

        student = self._to_device(clone_parameters(student_init))
        for p in student.parameters():
            p.requires_grad_(True)

        if teacher is not None:
            if cfg.use_ema and teacher.config != student.config:
                raise ConfigError("EMA needs identical teacher and student networks",
                                  "stages.student_mlb.use_ema")
            teacher = freeze(self._to_device(clone_parameters(teacher)))

        state = new_train_state(student, cfg, start_step, teacher=teacher,
                                rng_seed=stage_seed(self.config.seed, stage))
        dataset = SegTrainingSet(seg_manifest, self.config.augment, cfg.iterations * cfg.batch_size,
                                 state.rng_seed, strong=cfg.use_weak_strong,
                                 offset=start_step * cfg.batch_size)

        mode = "blended labels" if teacher is not None else "raw coarse masks"
        self.log(f"   student target: {mode}, weak-strong={cfg.use_weak_strong}, "
                 f"ema={cfg.use_ema and teacher is not None}")

        for batch in self._progress(self._loader(dataset, cfg.batch_size), stage, start_step, cfg.iterations):
            student_step(state, batch, self.config.loss, self.device)
            self._record_step(stage, state.step, state.last_lr, state.last_breakdown)
            self._maybe_save(state, stage)

        self.stage_steps[stage] = state.step
        self._save(student, stage, cfg.iterations, final=True)
        if teacher is not None and cfg.use_ema:
            self._save(teacher, "ema_teacher", cfg.iterations, final=True)
        return student, teacher

    # ------------------------------------------------------------ orchestration

    def _manifests(self):
        cfg = self.config
        data = cfg.data.resolved()
        seg = mat = None
        subset_seed = cfg.subset_seed if cfg.subset_seed >= 0 else cfg.seed
        backgrounds = []

        if cfg.seg_n != 0:
            seg = load_manifest(data.seg_dir, "seg", cfg.seed)
            if cfg.seg_n > 0:
                seg = sample_subset(seg, cfg.seg_n, subset_seed)
        if cfg.mat_n != 0:
            mat = load_manifest(data.matte_dir, "matte_fg", cfg.seed)
            if cfg.mat_n > 0:
                mat = sample_subset(mat, cfg.mat_n, subset_seed)
            backgrounds = load_backgrounds(data.backgrounds_dir)

        self.log(f"   data: seg={len(seg) if seg else 0} matte={len(mat) if mat else 0} "
                 f"backgrounds={len(backgrounds)}")
        return seg, mat, backgrounds, data

    def _resume_point(self, resume, stage):
        """(network, start step) when `resume` is a checkpoint of `stage`"""
        if resume is None:
            return None, 0
        meta = read_header(resume).get("meta", {})
        if meta.get("stage") != stage:
            return None, 0
        net, meta = load_checkpoint(resume)
        self.log(f"🔁 Resuming {stage} from step {meta.get('step', 0)} (optimizer moments restart)")
        return net, int(meta.get("step", 0))

    def _reuse(self, stage, suffix=""):
        path = self.find_final_checkpoint(stage, suffix)
        if path is None:
            return None
        self.log(f"♻️ Reusing finished {stage}{suffix} checkpoint {path.name}")
        net, _ = load_checkpoint(path)
        return self._to_device(net)

    def _require(self, stage, only_stage, suffix=""):
        net = self._reuse(stage, suffix)
        if net is None and only_stage is not None and only_stage != stage:
            raise CheckpointError(f"stage {only_stage} needs a finished {stage}{suffix} checkpoint; run it first")
        return net

    def run_pipeline(self, only_stage=None, resume=None):
        """
        Run every stage (or only `only_stage`, reusing finished earlier
        stages) and evaluate the final network.

        Degenerate paths: without matte data the student trains on raw
        coarse masks; without segmentation data the teacher is the final
        network.
        """
        cfg = self.config
        if only_stage is not None and only_stage not in STAGES:
            raise ConfigError(f"unknown stage '{only_stage}'", "stage")

        self.log(f"🚀 Starting pipeline in {self.output_dir}")
        seg_m, mat_m, backgrounds, data = self._manifests()
        has_seg, has_mat = seg_m is not None, mat_m is not None

        def wanted(stage):
            return only_stage is None or only_stage == stage

        base = self._to_device(build(cfg.teacher_network, cfg.seed))
        pretrained = None
        if has_seg:
            pretrained = self._reuse("seg_pretrain") if wanted("seg_pretrain") \
                else self._require("seg_pretrain", only_stage)
            if pretrained is None and wanted("seg_pretrain"):
                with self._stage("seg_pretrain"):
                    init, start = self._resume_point(resume, "seg_pretrain")
                    pretrained = self.pretrain_seg(base if init is None else init, seg_m,
                                                   cfg.stages.seg_pretrain, start)

        teacher = None
        if has_mat and (only_stage is None or STAGES.index(only_stage) >= 1):
            teacher = self._reuse("teacher_finetune") if wanted("teacher_finetune") \
                else self._require("teacher_finetune", only_stage)
            if teacher is None and wanted("teacher_finetune"):
                with self._stage("teacher_finetune"):
                    init, start = self._resume_point(resume, "teacher_finetune")
                    if init is None:
                        # without segmentation data the teacher starts from a fresh network
                        init = pretrained if pretrained is not None else base
                    teacher = self.train_teacher(init, mat_m, backgrounds, cfg.stages.teacher_finetune, start)

        if only_stage is not None and only_stage != "student_mlb":
            self._save_summary(only_stage, self.find_final_checkpoint(only_stage), {}, {},
                               filename=f"stage_{only_stage}_summary.json")
            return PipelineResult(only_stage, str(self.find_final_checkpoint(only_stage) or ""), {})

        final_stage = "student_mlb" if has_seg else "teacher_finetune"
        final_net = self._reuse("student_mlb") if has_seg else teacher
        if final_net is None:
            with self._stage("student_mlb"):
                student_init = self._student_init(pretrained, seg_m)
                init, start = self._resume_point(resume, "student_mlb")
                if init is not None:
                    student_init = init
                    ema_path = self.checkpoint_path("ema_teacher", start)
                    if teacher is not None and ema_path.exists():
                        teacher, _ = load_checkpoint(ema_path)
                final_net, teacher = self.train_student(student_init, teacher, seg_m,
                                                        cfg.stages.student_mlb, start)

        final_ckpt = self.find_final_checkpoint(final_stage)
        reports = self.evaluate(final_net, data.eval_sets, "student" if has_seg else "teacher")

        intermediate = {}
        if cfg.eval.evaluate_intermediate:
            if pretrained is not None:
                intermediate["seg_only"] = self.evaluate(pretrained, data.eval_sets, "seg_only")
            if has_mat and has_seg:
                finetuned = self._reuse("teacher_finetune")
                intermediate["teacher"] = self.evaluate(finetuned, data.eval_sets, "teacher")

        self._save_summary(final_stage, final_ckpt, reports, intermediate)
        self.log(f"🎉 Pipeline complete: final network from {final_stage}")
        return PipelineResult(final_stage, str(final_ckpt), reports, intermediate)

    def _student_init(self, pretrained, seg_m):
        """Student starts from segmentation-pretrained weights of its own architecture"""
        cfg = self.config
        if cfg.student_network == cfg.teacher_network:
            if pretrained is None:
                raise CheckpointError("student stage needs a finished seg_pretrain checkpoint")
            return pretrained

        suffix = "_student"
        net = self._reuse("seg_pretrain", suffix)
        if net is None:
            self.log("   student architecture differs: pretraining it on segmentation data")
            net = self.pretrain_seg(self._to_device(build(cfg.student_network, cfg.seed)), seg_m,
                                    cfg.stages.seg_pretrain, suffix=suffix)
        return net

    # ------------------------------------------------------------ evaluation

    def evaluate(self, net, eval_sets, label):
        reports = {}
        for name, root in eval_sets.items():
            try:
                manifest = load_manifest(root, "matte")
            except Exception as e:
                self.log(f"❌ Eval set {name} unavailable: {e}")
                raise StageError("evaluate", f"eval set {name}: {e}") from e
            report = evaluate_dataset(net, manifest, self.config.eval, dataset_id=name,
                                      device=self.device, log=self.log)
            reports[name] = report
            write_report(report, self.results_dir / f"report_{label}_{name}.json")
            append_summary_rows([report], self.results_dir / "metrics.csv", {"network": label})
            self.log(f"📊 {label} on {name}: MSE whole {report.mse_whole:.3f} "
                     f"boundary {report.mse_boundary if report.mse_boundary is None else round(report.mse_boundary, 3)}")
        return reports

    def _save_summary(self, final_stage, final_ckpt, reports, intermediate, filename="pipeline_summary.json"):
        self.log("💾 Saving pipeline summary...")
        elapsed = time.time() - self.start_time
        summary = {
            "analysis_date": time.strftime('%Y-%m-%d %H:%M:%S'),
            "pipeline_type": "matte_label_blending",
            "seed": self.config.seed,
            "seg_n": self.config.seg_n,
            "mat_n": self.config.mat_n,
            "final_stage": final_stage,
            "final_checkpoint": str(final_ckpt) if final_ckpt else None,
            "stage_seconds": self.stage_times,
            "stage_steps": self.stage_steps,
            "total_time_minutes": round(elapsed / 60, 2),
            "reports": {k: r.summary_row() for k, r in reports.items()},
            "intermediate_reports": {label: {k: r.summary_row() for k, r in rs.items()}
                                     for label, rs in intermediate.items()},
        }
        with open(self.results_dir / filename, "w") as f:
            json.dump(summary, f, indent=2)
