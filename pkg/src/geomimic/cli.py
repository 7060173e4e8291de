"""Command-line pipeline: demo-gen -> train -> select-eval -> servo.

Every command takes an optional JSON config (unknown keys rejected), a root
seed, and an output directory; the merged configuration is archived into the
output directory so any run can be reproduced bit-exactly. All randomness
derives from the root seed through numpy SeedSequence splits:

    scene of category i        SeedSequence([seed, 2, i])
    training                   TrainConfig.seed = seed
    fresh evaluation video v   generate_demo(seed=10_000 + v)
    servo trial t, category i  SeedSequence([seed, 5, i, t])

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import io as gio
from .evaluation import (
    SelectionEvalReport,
    accuracy,
    column_dispersion,
    consistency,
    correspondence_matrix,
    selected_error_series,
    success_rate,
)
from .exceptions import (
    ConfigError,
    DimensionMismatch,
    EmptyDataset,
    GeomimicError,
    InfeasibleGoal,
    MissingGroundTruth,
    NonFiniteLoss,
    SeriesTooShort,
    TooFewFeatures,
)
from .geometry import ConstraintType
from .model import load_model, save_model
from .servo import ServoConfig, ServoTrace, servo_loop
from .sim import HammerTemplate, TwistPlant, generate_demo, make_scene, sample_start_pose
from .training import DemoVideo, TrainConfig, covgs_il

logger = logging.getLogger(__name__)

SCENES_FORMAT = "geomimic-scenes"
SCENES_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

_DATA_ERRORS = (EmptyDataset, MissingGroundTruth, TooFewFeatures, SeriesTooShort, DimensionMismatch)
_NUMERIC_ERRORS = (NonFiniteLoss, InfeasibleGoal)


@dataclass
class SimParams:
    """Scale and noise of the generated demonstration set."""

    categories: int = 3
    holdout_categories: int = 1
    videos_per_category: int = 10
    holdout_videos: int = 5
    frames: int = 60
    distractors: int = 6
    descriptor_dim: int = 16
    prototype_seed: int = 7
    descriptor_noise: float = 0.06
    pixel_jitter: float = 0.5
    dropout: float = 0.02

    def __post_init__(self):
        if self.categories < 2:
            raise ConfigError("need at least 2 training categories")
        if self.frames < 2:
            raise ConfigError("frames must be >= 2")
        for name in ("videos_per_category", "holdout_videos", "descriptor_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")

    def template(self) -> HammerTemplate:
        return HammerTemplate(
            descriptor_dim=self.descriptor_dim,
            prototype_seed=self.prototype_seed,
            descriptor_noise=self.descriptor_noise,
            distractors=self.distractors,
        )


@dataclass
class RunConfig:
    """All pipeline parameters; every field is a documented default."""

    seed: int = 0
    constraints: tuple = ("pp", "ll")
    eval_videos: int = 5
    correspondence_steps: int = 16
    trials: int = 10
    sim: SimParams = field(default_factory=SimParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    servo: ServoConfig = field(default_factory=ServoConfig)

    def ctypes(self):
        return [ConstraintType.from_string(c) for c in self.constraints]


def _from_dict(cls, doc, path="config"):
    if not isinstance(doc, dict):
        raise ConfigError(f"{path} must be an object")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(doc) - set(names)
    if unknown:
        raise ConfigError(f"unknown {path} keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in doc.items():
        f = names[key]
        if dataclasses.is_dataclass(f.type) or f.name in ("sim", "train", "servo"):
            sub_cls = {"sim": SimParams, "train": TrainConfig, "servo": ServoConfig}[f.name]
            kwargs[key] = _from_dict(sub_cls, value, f"{path}.{key}")
        elif f.name == "constraints":
            kwargs[key] = tuple(value)
        elif f.name == "thresholds" and value is not None:
            kwargs[key] = {ConstraintType.from_string(k): float(v) for k, v in value.items()}
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {path}: {exc}") from exc


def load_config(path=None, seed=None) -> RunConfig:
    doc = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    config = _from_dict(RunConfig, doc)
    if seed is not None:
        config = dataclasses.replace(config, seed=seed)
        config.train = dataclasses.replace(config.train, seed=seed)
    return config


def _config_doc(config: RunConfig) -> dict:
    doc = dataclasses.asdict(config)
    thresholds = doc["servo"]["thresholds"]
    if thresholds:
        doc["servo"]["thresholds"] = {k.value: v for k, v in thresholds.items()}
    doc["constraints"] = list(doc["constraints"])
    return doc


def archive_config(config: RunConfig, out_dir):
    gio.atomic_write_text(
        os.path.join(out_dir, "config.json"),
        json.dumps(_config_doc(config), indent=1, sort_keys=True),
    )


# -- scene manifests ------------------------------------------------------------


def scene_manifest(config: RunConfig) -> dict:
    categories = []
    for i in range(config.sim.categories + config.sim.holdout_categories):
        categories.append(
            {
                "category_id": f"cat{i}",
                "category_seed": int(
                    np.random.SeedSequence([config.seed, 1, i]).generate_state(1)[0] % (2**31)
                ),
                "scene_seed": int(
                    np.random.SeedSequence([config.seed, 2, i]).generate_state(1)[0] % (2**31)
                ),
                "role": "train" if i < config.sim.categories else "holdout",
            }
        )
    return {
        "format": SCENES_FORMAT,
        "version": SCENES_VERSION,
        "template": {
            "descriptor_dim": config.sim.descriptor_dim,
            "prototype_seed": config.sim.prototype_seed,
            "descriptor_noise": config.sim.descriptor_noise,
            "distractors": config.sim.distractors,
        },
        "pixel_jitter": config.sim.pixel_jitter,
        "dropout": config.sim.dropout,
        "frames": config.sim.frames,
        "categories": categories,
    }


def load_scene_manifest(demos_dir) -> dict:
    path = os.path.join(demos_dir, "scenes.json")
    if not os.path.exists(path):
        raise ConfigError(f"no scene manifest at {path}")
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != SCENES_FORMAT or doc.get("version") != SCENES_VERSION:
        raise ConfigError(f"unsupported scene manifest at {path}")
    return doc


def scenes_from_manifest(manifest: dict) -> list:
    template = HammerTemplate(
        descriptor_dim=manifest["template"]["descriptor_dim"],
        prototype_seed=manifest["template"]["prototype_seed"],
        descriptor_noise=manifest["template"]["descriptor_noise"],
        distractors=manifest["template"]["distractors"],
    )
    scenes = []
    for entry in manifest["categories"]:
        scene = make_scene(
            entry["category_seed"],
            template,
            scene_seed=entry["scene_seed"],
            category_id=entry["category_id"],
            pixel_jitter=manifest["pixel_jitter"],
            dropout=manifest["dropout"],
        )
        scenes.append((entry["role"], scene))
    return scenes


# -- commands ---------------------------------------------------------------------


def cmd_demo_gen(args) -> int:
    config = load_config(args.config, args.seed)
    if args.videos_per_category is not None:
        config.sim.videos_per_category = args.videos_per_category
        config.sim.holdout_videos = min(config.sim.holdout_videos, args.videos_per_category)
    if args.frames is not None:
        config.sim.frames = args.frames
    out_dir = args.out
    demo_dir = os.path.join(out_dir, "demos")
    os.makedirs(demo_dir, exist_ok=True)
    archive_config(config, out_dir)
    manifest = scene_manifest(config)
    gio.atomic_write_text(
        os.path.join(out_dir, "scenes.json"), json.dumps(manifest, indent=1, sort_keys=True)
    )

    written = 0
    for role, scene in scenes_from_manifest(manifest):
        count = config.sim.videos_per_category if role == "train" else config.sim.holdout_videos
        for v in range(count):
            video = generate_demo(
                scene,
                n_frames=config.sim.frames,
                seed=v,
                video_id=f"{scene.tool.category_id}-v{v:02d}",
            )
            gio.write_demo_file(
                os.path.join(demo_dir, f"{video.video_id}.jsonl"), video
            )
            written += 1
    logger.info("wrote %d demo files to %s", written, demo_dir)
    print(f"demo-gen: {written} demo files in {demo_dir}")
    return EXIT_OK


def _load_demos(demos_dir):
    demo_dir = os.path.join(demos_dir, "demos")
    if not os.path.isdir(demo_dir):
        raise ConfigError(f"no demos directory under {demos_dir}")
    videos = gio.read_demo_dir(demo_dir)
    if not videos:
        raise EmptyDataset(f"no demo files under {demo_dir}")
    return videos


def cmd_train(args) -> int:
    config = load_config(args.config, args.seed)
    if args.n2 is not None:
        config.train = dataclasses.replace(config.train, sim_steps=args.n2)
    if args.outer_iters is not None:
        config.train = dataclasses.replace(config.train, outer_iters=args.outer_iters)
    if args.constraints is not None:
        config = dataclasses.replace(
            config, constraints=tuple(args.constraints.split(","))
        )
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    archive_config(config, out_dir)

    manifest = load_scene_manifest(args.demos)
    train_categories = {
        e["category_id"] for e in manifest["categories"] if e["role"] == "train"
    }
    videos = [v for v in _load_demos(args.demos) if v.category_id in train_categories]
    if not videos:
        raise EmptyDataset("no training-category demos found")

    models = {}
    for ctype in config.ctypes():
        result = covgs_il(videos, ctype, config.train)
        if result.aborted:
            raise NonFiniteLoss(f"{ctype.value} training aborted on a non-finite loss")
        models[ctype] = result.params
        gio.write_csv(
            os.path.join(out_dir, f"metrics_{ctype.value}.csv"),
            ["outer_iter", "temporal_loss", "sim_loss", "grad_norm", "wall_ms"],
            [
                [m["outer_iter"], repr(m["temporal_loss"]), repr(m["sim_loss"]),
                 repr(m["grad_norm"]), repr(m["wall_ms"])]
                for m in result.metrics
            ],
        )
        if result.checkpoints:
            ckpt_dir = os.path.join(out_dir, "checkpoints")
            os.makedirs(ckpt_dir, exist_ok=True)
            for outer, params in result.checkpoints:
                save_model(
                    os.path.join(ckpt_dir, f"model_{ctype.value}_{outer:04d}.json"),
                    {ctype: params},
                )
        logger.info("trained %s over %d videos", ctype.value, len(videos))
    save_model(os.path.join(out_dir, "model.json"), models)
    print(f"train: model.json and metrics in {out_dir}")
    return EXIT_OK


def _fresh_eval_videos(manifest, count, frames):
    videos = {}
    for role, scene in scenes_from_manifest(manifest):
        videos[scene.tool.category_id] = (
            role,
            [
                generate_demo(
                    scene,
                    n_frames=frames,
                    seed=10_000 + v,
                    video_id=f"{scene.tool.category_id}-eval{v:02d}",
                )
                for v in range(count)
            ],
        )
    return videos


def cmd_select_eval(args) -> int:
    config = load_config(args.config, args.seed)
    if args.eval_videos is not None:
        config = dataclasses.replace(config, eval_videos=args.eval_videos)
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    archive_config(config, out_dir)
    models = load_model(args.model)

    if args.eval_source == "files":
        by_category = {}
        for video in _load_demos(args.demos):
            by_category.setdefault(video.category_id, ("train", []))[1].append(video)
    else:
        manifest = load_scene_manifest(args.demos)
        by_category = _fresh_eval_videos(
            manifest, config.eval_videos, manifest.get("frames", config.sim.frames)
        )

    report = SelectionEvalReport()
    for category, (role, videos) in sorted(by_category.items()):
        block = "trained" if role == "train" else "extrapolation"
        for video in videos:
            for ctype in config.ctypes():
                if ctype not in models:
                    continue
                try:
                    series = selected_error_series(models[ctype], video, ctype)
                    conacc = consistency(series)
                except SeriesTooShort:
                    conacc = float("nan")
                try:
                    acc = accuracy(models[ctype], video, ctype)
                except MissingGroundTruth:
                    acc = float("nan")
                report.add(category, video.video_id, ctype, acc, conacc, block=block)

    gio.write_csv(
        os.path.join(out_dir, "report.csv"),
        ["block", "category", "video_id", "ctype", "acc", "conacc"],
        [
            [r["block"], r["category"], r["video_id"], r["ctype"], repr(r["acc"]), repr(r["conacc"])]
            for r in report.rows
        ],
    )
    gio.atomic_write_text(os.path.join(out_dir, "report.txt"), report.to_text() + "\n")

    # correspondence matrices: trained selector vs seeded random selector
    matrix_videos = {c: vids[0] for c, (role, vids) in sorted(by_category.items()) if vids}
    dispersions = {}
    for ctype in config.ctypes():
        if ctype not in models:
            continue
        for tag, selector in (("", "model"), ("_random", "random")):
            cats, matrix = correspondence_matrix(
                models[ctype],
                matrix_videos,
                ctype=ctype,
                steps=config.correspondence_steps,
                selector=selector,
                rng=np.random.default_rng(np.random.SeedSequence([config.seed, 4])),
            )
            gio.write_csv(
                os.path.join(out_dir, f"correspondence_{ctype.value}{tag}.csv"),
                ["category"] + [f"t{i}" for i in range(matrix.shape[1])],
                [[c] + [repr(x) for x in row] for c, row in zip(cats, matrix)],
            )
            dispersions[f"{ctype.value}{tag}"] = column_dispersion(matrix)
    gio.atomic_write_text(
        os.path.join(out_dir, "dispersion.json"),
        json.dumps(dispersions, indent=1, sort_keys=True),
    )
    print(report.to_text())
    print(f"select-eval: report and correspondence matrices in {out_dir}")
    return EXIT_OK


def cmd_servo(args) -> int:
    config = load_config(args.config, args.seed)
    if args.trials is not None:
        config = dataclasses.replace(config, trials=args.trials)
    if args.max_iters is not None:
        config.servo = dataclasses.replace(config.servo, max_iters=args.max_iters)
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    archive_config(config, out_dir)
    models = load_model(args.model)
    manifest = load_scene_manifest(args.scenes)

    selectors = ["model"] + (["random"] if args.baseline == "random" else [])
    summary_rows = []
    trace_dir = os.path.join(out_dir, "traces")
    os.makedirs(trace_dir, exist_ok=True)
    for ci, (role, scene) in enumerate(scenes_from_manifest(manifest)):
        traces = {name: [] for name in selectors}
        for trial in range(config.trials):
            rng = np.random.default_rng(np.random.SeedSequence([config.seed, 5, ci, trial]))
            goal = scene.goal_pose(yaw=rng.uniform(-np.pi, np.pi))
            try:
                start = sample_start_pose(scene, goal, rng, require_clean_path=False)
            except InfeasibleGoal:
                for name in selectors:
                    traces[name].append(ServoTrace())
                continue
            for name in selectors:
                plant = TwistPlant(scene, start.copy())
                try:
                    trace = servo_loop(
                        models,
                        plant,
                        config.servo,
                        selector=name,
                        rng=np.random.default_rng(
                            np.random.SeedSequence([config.seed, 6, ci, trial])
                        ),
                    )
                except GeomimicError as exc:
                    logger.warning("trial %d (%s) failed: %s", trial, name, exc)
                    trace = ServoTrace()
                    trace.status = "plant_fault"
                traces[name].append(trace)
                suffix = "" if name == "model" else f"_{name}"
                header, rows = trace.csv_rows()
                gio.write_csv(
                    os.path.join(
                        trace_dir, f"{scene.tool.category_id}_trial{trial:02d}{suffix}.csv"
                    ),
                    header,
                    rows,
                )
        for name in selectors:
            rate = success_rate(traces[name]) if traces[name] else float("nan")
            summary_rows.append(
                [scene.tool.category_id, role, name, len(traces[name]), repr(rate)]
            )
            print(
                f"servo: {scene.tool.category_id} ({role}) selector={name} "
                f"success={rate:.2f} over {len(traces[name])} trials"
            )
    gio.write_csv(
        os.path.join(out_dir, "summary.csv"),
        ["category", "role", "selector", "trials", "success_rate"],
        summary_rows,
    )
    print(f"servo: summary in {out_dir}")
    return EXIT_OK


# -- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geomimic",
        description="Geometric-constraint selection from demonstration videos "
        "with an uncalibrated visual-servoing controller.",
    )
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration", default=None)
    common.add_argument("--seed", type=int, default=None, help="root seed override")
    common.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("demo-gen", parents=[common], help="generate demonstration videos")
    p.add_argument("--videos-per-category", type=int, default=None)
    p.add_argument("--frames", type=int, default=None)
    p.set_defaults(func=cmd_demo_gen)

    p = sub.add_parser("train", parents=[common], help="train task functions on demos")
    p.add_argument("--demos", required=True, help="demo-gen output directory")
    p.add_argument("--n2", type=int, default=None, help="similarity steps per outer iteration")
    p.add_argument("--outer-iters", type=int, default=None)
    p.add_argument("--constraints", default=None, help="comma list, e.g. pp,ll")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("select-eval", parents=[common], help="selection accuracy report")
    p.add_argument("--model", required=True)
    p.add_argument("--demos", required=True, help="demo-gen output directory")
    p.add_argument("--eval-videos", type=int, default=None)
    p.add_argument(
        "--eval-source",
        choices=("generate", "files"),
        default="generate",
        help="evaluate on freshly generated held-out videos (default) or on the demo files",
    )
    p.set_defaults(func=cmd_select_eval)

    p = sub.add_parser("servo", parents=[common], help="closed-loop servo trials")
    p.add_argument("--model", required=True)
    p.add_argument("--scenes", required=True, help="directory holding scenes.json")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--baseline", choices=("random",), default=None)
    p.set_defaults(func=cmd_servo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except _NUMERIC_ERRORS as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
