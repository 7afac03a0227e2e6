#!/usr/bin/env python3
"""
Tests for configuration loading and the command-line entry point
"""

import json
import os
import sys

from harness import cleanup, raises, run_tests, scratch_dir
from toy_fixture import FIXTURE_TOY, cli_args, release, toy_root

import run_pipeline
from pipeline.config import OUTPUT_ROOT_ENV, ExperimentConfig, apply_override, load_config, save_config
from utils.errors import ConfigError


def _exit_status(argv):
    """Run the CLI; argparse usage errors surface as SystemExit"""
    try:
        return run_pipeline.main(argv)
    except SystemExit as e:
        return e.code


def test_config_round_trip():
    for profile in ("toy", "paper"):
        cfg = load_config(None, [f"profile={profile}", "seg_n=5", "loss.lambda_boundary=0.1"], seed=4)
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
        assert cfg.seed == 4 and cfg.seg_n == 5

    out = scratch_dir("config_")
    try:
        cfg = load_config(None, ["stages.student_mlb.use_ema=false", "output_dir=" + str(out)])
        save_config(cfg, out / "cfg.yaml")
        assert load_config(out / "cfg.yaml") == cfg
    finally:
        cleanup(out)


def test_profiles():
    toy = load_config(None, [])
    paper = load_config(None, ["profile=paper"])
    assert toy.stages.seg_pretrain.iterations * 100 == paper.stages.seg_pretrain.iterations == 200_000
    assert paper.stages.teacher_finetune.lr == 5e-5
    assert paper.teacher_network.encoder_depth == "large"
    assert (paper.augment.crop_min, paper.augment.crop_max, paper.eval.edge) == (512, 768, 512)


def test_config_errors():
    try:
        load_config(None, ["stages.student_mlb.colour=1"])
        raise AssertionError("unknown key accepted")
    except ConfigError as e:
        assert "stages.student_mlb.colour" in str(e)
    try:
        load_config(None, ["seg_n=0", "mat_n=0"])
        raise AssertionError("empty training data accepted")
    except ConfigError as e:
        assert "no training data" in str(e)
    assert raises(ConfigError, load_config, None, ["profile=huge"])
    assert raises(ConfigError, load_config, None, ["student_network.width_multiplier=0.5"])
    assert raises(ConfigError, apply_override, {}, "no-equals-sign")


def test_output_root_env():
    previous = os.environ.get(OUTPUT_ROOT_ENV)
    os.environ[OUTPUT_ROOT_ENV] = "/tmp/blendmat_root"
    try:
        assert load_config(None, []).output_dir == "/tmp/blendmat_root/experiment"
    finally:
        if previous is None:
            os.environ.pop(OUTPUT_ROOT_ENV, None)
        else:
            os.environ[OUTPUT_ROOT_ENV] = previous


def test_cli_make_toy_data():
    out = scratch_dir("cli_toy_")
    try:
        sets = [f"toy.{k}={v}" for k, v in (("n_matte", 4), ("n_seg", 4), ("n_eval", 2),
                                            ("n_backgrounds", 2), ("image_size", 48))]
        argv = ["make-toy-data", "--set", f"data.toy_root={out / 'world'}", "--quiet"]
        for s in sets:
            argv += ["--set", s]
        assert _exit_status(argv) == 0
        for name in ("matte", "natural", "eval_matte", "eval_natural"):
            assert (out / "world" / name / "images").is_dir()
        assert _exit_status(argv) != 0
        assert _exit_status(argv + ["--overwrite"]) == 0
    finally:
        cleanup(out)


def test_cli_usage_and_config_errors():
    out = scratch_dir("cli_err_")
    try:
        assert _exit_status(["train", "polish"]) != 0
        assert _exit_status(["train", "all", "--set", "seg_n=0", "--set", "mat_n=0",
                             "--output-dir", str(out)]) == 1
    finally:
        cleanup(out)


def test_cli_train_evaluate_benchmark():
    out = scratch_dir("cli_train_")
    try:
        base = cli_args(out / "run", extra=["seg_n=6", "mat_n=3"])
        assert _exit_status(["train", "all", "--quiet"] + base) == 0
        ckpt = next((out / "run" / "checkpoints").glob("student_mlb_*.ckpt"))
        assert (out / "run" / "results" / "report_student_eval_natural.json").exists()

        eval_dir = toy_root() / "eval_natural"
        assert _exit_status(["evaluate", str(ckpt), "--eval-set", f"natural={eval_dir}",
                             "--report-dir", str(out / "eval")] + base) == 0
        report = json.loads((out / "eval" / f"report_{ckpt.stem}_natural.json").read_text())
        assert report["n_images"] == FIXTURE_TOY.n_eval

        bench = out / "bench.json"
        assert _exit_status(["benchmark", "--checkpoint", str(ckpt), "--edge", "64", "--iters", "10",
                             "--warmup", "2", "--hardware", "test-host", "--json", str(bench)]) == 0
        result = json.loads(bench.read_text())
        assert result["timed_iters"] == 10 and len(result["samples_ms"]) == 10
        assert result["warmup_iters"] == 2 and result["images_per_sec"] > 0
        assert result["hardware"] == "test-host"
        assert _exit_status(["benchmark", "--edge", "64"]) == 1
    finally:
        cleanup(out)


def test_cli_compose():
    out = scratch_dir("cli_compose_")
    try:
        root = toy_root()
        assert _exit_status(["compose", str(root / "matte"), str(root / "matte" / "backgrounds"),
                             str(out / "composed"), "--seed", "2"]) == 0
        assert len(list((out / "composed" / "images").glob("*.png"))) == FIXTURE_TOY.n_matte
        assert len(list((out / "composed" / "labels").glob("*.png"))) == FIXTURE_TOY.n_matte
    finally:
        cleanup(out)


def main():
    try:
        return run_tests("CONFIG + CLI TESTS", [
            ("config round trip", test_config_round_trip),
            ("profiles", test_profiles),
            ("config errors", test_config_errors),
            ("output root env", test_output_root_env),
            ("make-toy-data", test_cli_make_toy_data),
            ("usage and config errors", test_cli_usage_and_config_errors),
            ("train / evaluate / benchmark", test_cli_train_evaluate_benchmark),
            ("compose", test_cli_compose),
        ])
    finally:
        release()


if __name__ == "__main__":
    sys.exit(main())
