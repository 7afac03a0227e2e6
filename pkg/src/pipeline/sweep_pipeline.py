#!/usr/bin/env python3
"""
Sweep Pipeline - one full training run per (seg_n, mat_n) cell
Cells run sequentially or on a thread pool; finished cells are skipped
"""

import concurrent.futures
import copy
import csv
import json
import shutil
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from analysis.metrics import METRIC_FIELDS, read_report
from pipeline.train_pipeline import MattingPipeline
from utils.errors import ConfigError
from utils.run_log import RunLogger

SWEEP_FIELDS = ("seg_n", "mat_n", "eval_set") + METRIC_FIELDS + ("n_images", "n_boundary_skipped")
ABLATION_FIELDS = ("variant", "use_weak_strong", "use_ema", "lambda_boundary", "eval_set") \
    + METRIC_FIELDS + ("n_images", "n_boundary_skipped")

LAMBDA_GRID = (0.1, 0.01, 0.001)


def sweep_cells(seg_counts, mat_counts):
    """Every (seg_n, mat_n) pair except the one without any training data"""
    cells = [(s, m) for s in seg_counts for m in mat_counts if (s, m) != (0, 0)]
    if not cells:
        raise ConfigError("sweep has no cells with training data", "sweep")
    for s, m in cells:
        if s < 0 or m < 0:
            raise ConfigError("sweep counts must be >= 0", "sweep")
    return cells


def cell_seed(seed, seg_n, mat_n):
    return int(np.random.SeedSequence([seed, seg_n, mat_n]).generate_state(1)[0])


def report_label(cfg):
    return "student" if cfg.seg_n != 0 else "teacher"


def expected_reports(cfg):
    results = Path(cfg.output_dir) / "results"
    label = report_label(cfg)
    return {name: results / f"report_{label}_{name}.json" for name in cfg.data.resolved().eval_sets}


def is_complete(cfg):
    reports = expected_reports(cfg)
    return bool(reports) and all(p.exists() for p in reports.values())


@dataclass
class CellOutcome:
    name: str
    config: object
    status: str  # run | skipped | failed
    seconds: float = 0.0
    error: str = ""


class _GridRunner:
    kind = "grid"

    def __init__(self, config, output_dir=None, parallel_cells=1, quiet=False):
        self.config = config
        self.output_dir = Path(output_dir or config.output_dir)
        self.results_dir = self.output_dir / "results"
        self.logs_dir = self.output_dir / "logs"
        self.results_dir.mkdir(parents=True, exist_ok=True)
        self.logs_dir.mkdir(parents=True, exist_ok=True)

        self.parallel_cells = max(1, int(parallel_cells))
        self.quiet = quiet
        self.logger = RunLogger(self.logs_dir, self.kind, quiet=quiet)
        self.log = self.logger.log

        self.start_time = time.time()
        self.completed_count = 0
        self.total_count = 0
        self.progress_lock = threading.Lock()

    def run_cell(self, name, cfg):
        """Worker: one full pipeline run; failures are reported, never raised"""
        if is_complete(cfg):
            self.log(f"⏭️ {name}: reports present, skipping")
            return CellOutcome(name, cfg, "skipped")

        start = time.time()
        try:
            self.prepare_cell(name, cfg)
            MattingPipeline(cfg, quiet=True).run_pipeline()
            status, error = "run", ""
        except Exception as e:
            status, error = "failed", str(e)

        outcome = CellOutcome(name, cfg, status, round(time.time() - start, 2), error)
        with self.progress_lock:
            self.completed_count += 1
            if status == "failed":
                self.log(f"❌ {name} failed ({self.completed_count}/{self.total_count}): {error}")
            else:
                self.log(f"✅ {name} done ({self.completed_count}/{self.total_count}) in {outcome.seconds:.1f}s")
        return outcome

    def prepare_cell(self, name, cfg):
        pass

    def run_cells(self, cells):
        """cells: list of (name, config)"""
        self.total_count = len(cells)
        self.log(f"🚀 Starting {self.kind} over {len(cells)} cells ({self.parallel_cells} at a time)")

        if self.parallel_cells == 1:
            return [self.run_cell(name, cfg) for name, cfg in cells]

        outcomes = []
        with concurrent.futures.ThreadPoolExecutor(max_workers=self.parallel_cells) as executor:
            futures = [executor.submit(self.run_cell, name, cfg) for name, cfg in cells]
            for future in concurrent.futures.as_completed(futures):
                outcomes.append(future.result())
        order = {name: i for i, (name, _) in enumerate(cells)}
        return sorted(outcomes, key=lambda o: order[o.name])

    def collect_rows(self, outcomes, extra_fn):
        rows = []
        for outcome in outcomes:
            if outcome.status == "failed":
                continue
            for eval_set, path in expected_reports(outcome.config).items():
                if not path.exists():
                    continue
                report = read_report(path)
                row = {**extra_fn(outcome), "eval_set": eval_set}
                row.update({k: getattr(report, k) for k in METRIC_FIELDS})
                row.update(n_images=report.n_images, n_boundary_skipped=report.n_boundary_skipped)
                rows.append(row)
        return rows

    def save_results(self, outcomes, rows, fieldnames, csv_name):
        self.log(f"💾 Saving {self.kind} results...")
        csv_path = self.results_dir / csv_name
        with open(csv_path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=fieldnames)
            writer.writeheader()
            writer.writerows(rows)

        elapsed = time.time() - self.start_time
        failed = [o for o in outcomes if o.status == "failed"]
        summary = {
            "analysis_date": time.strftime('%Y-%m-%d %H:%M:%S'),
            "analysis_type": self.kind,
            "parallel_cells": self.parallel_cells,
            "total_cells": len(outcomes),
            "cells_run": sum(o.status == "run" for o in outcomes),
            "cells_skipped": sum(o.status == "skipped" for o in outcomes),
            "cells_failed": len(failed),
            "failures": {o.name: o.error for o in failed},
            "csv_rows": len(rows),
            "total_time_minutes": round(elapsed / 60, 2),
        }
        summary_path = self.results_dir / f"{self.kind}_summary.json"
        with open(summary_path, "w") as f:
            json.dump(summary, f, indent=2)

        self.log(f"🎉 {self.kind.capitalize()} completed!")
        self.log(f"   Cells run: {summary['cells_run']}, skipped: {summary['cells_skipped']}, "
                 f"failed: {summary['cells_failed']}")
        self.log(f"   Results: {csv_path}")
        return summary


class SweepRunner(_GridRunner):
    kind = "sweep"

    def cell_config(self, seg_n, mat_n):
        """Own output dir and training seed; subsets keep the base seed so they nest"""
        cfg = copy.deepcopy(self.config)
        cfg.seg_n, cfg.mat_n = seg_n, mat_n
        cfg.subset_seed = self.config.seed
        cfg.seed = cell_seed(self.config.seed, seg_n, mat_n)
        cfg.output_dir = str(self.output_dir / "cells" / f"seg{seg_n}_mat{mat_n}")
        return cfg.validate()

    def run_sweep(self, seg_counts, mat_counts):
        cells = [(f"seg{s}_mat{m}", self.cell_config(s, m)) for s, m in sweep_cells(seg_counts, mat_counts)]
        outcomes = self.run_cells(cells)
        rows = self.collect_rows(outcomes, lambda o: {"seg_n": o.config.seg_n, "mat_n": o.config.mat_n})
        summary = self.save_results(outcomes, rows, SWEEP_FIELDS, "sweep_results.csv")
        return outcomes, summary


class AblationRunner(_GridRunner):
    """
    Training-strategy ablation on one (seg_n, mat_n) cell: weak-strong
    augmentation x EMA, plus the boundary loss weight. Variants sharing a
    stage with an earlier variant start from its finished checkpoints.
    """

    kind = "ablation"

    def variants(self, lambdas=LAMBDA_GRID):
        base_lambda = self.config.loss.lambda_boundary
        grid = [(ws, ema, base_lambda) for ws in (True, False) for ema in (True, False)]
        grid += [(True, True, lam) for lam in lambdas if lam != base_lambda]
        return grid

    @staticmethod
    def variant_name(ws, ema, lam):
        return f"ws{int(ws)}_ema{int(ema)}_lambda{lam:g}"

    def variant_config(self, ws, ema, lam):
        cfg = copy.deepcopy(self.config)
        cfg.stages.student_mlb.use_weak_strong = ws
        cfg.stages.student_mlb.use_ema = ema
        cfg.loss.lambda_boundary = lam
        cfg.output_dir = str(self.output_dir / "variants" / self.variant_name(ws, ema, lam))
        return cfg.validate()

    def prepare_cell(self, name, cfg):
        if self.parallel_cells > 1:
            return
        ckpts = Path(cfg.output_dir) / "checkpoints"
        shared = ["seg_pretrain"]
        for other in (self.output_dir / "variants").glob("*/checkpoints"):
            if other == ckpts:
                continue
            same_lambda = other.parent.name.endswith(f"_lambda{cfg.loss.lambda_boundary:g}")
            for stage in shared + (["teacher_finetune"] if same_lambda else []):
                for src in other.glob(f"{stage}_*.ckpt"):
                    dst = ckpts / src.name
                    if not dst.exists():
                        ckpts.mkdir(parents=True, exist_ok=True)
                        shutil.copy2(src, dst)

    def run_ablation(self, lambdas=LAMBDA_GRID):
        grid = self.variants(lambdas)
        cells = [(self.variant_name(*v), self.variant_config(*v)) for v in grid]
        outcomes = self.run_cells(cells)

        def extra(o):
            st = o.config.stages.student_mlb
            return {"variant": o.name, "use_weak_strong": st.use_weak_strong, "use_ema": st.use_ema,
                    "lambda_boundary": o.config.loss.lambda_boundary}

        rows = self.collect_rows(outcomes, extra)
        summary = self.save_results(outcomes, rows, ABLATION_FIELDS, "ablation_results.csv")
        return outcomes, summary
